use std::process::ExitCode;

fn main() -> ExitCode {
    lcassist::cli::main(std::env::args_os())
}
