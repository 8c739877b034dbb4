//! File formats, experiment harness, CLI and cockpit bridge around
//! [`lcassist_core`].

pub mod bridge;
pub mod cli;
pub mod error;
pub mod experiment;
pub mod logs;
pub mod model;
pub mod report;
pub mod scenario;

pub use error::{Error, Result};
