//! Core of an intention-based lane change assistance stack.
//!
//! Everything in this crate is pure computation over in-memory values and
//! builds without `std` (only `alloc` is required). File formats, the CLI
//! and the cockpit streaming bridge live in the companion `lcassist` crate.
//!
//! The pieces, in tick-loop order:
//!
//! * [`sim`] advances a three-lane highway at 20 Hz and answers six-direction
//!   neighbor queries.
//! * [`features`] turns a world snapshot into the 24-entry [`FeatureVector`].
//! * [`fuzzy`] builds trapezoidal membership functions with FN-DBSCAN and
//!   fuzzifies feature vectors.
//! * [`forest`] is a bagged decision-tree classifier over membership vectors.
//! * [`warning`] maps the predicted intention and TTCs to timed warnings and
//!   approvals.
//! * [`labeling`] and [`metrics`] are the offline side: automatic maneuver
//!   labels, TTC violation ratios and Welch t-tests.
//! * [`driver`] and [`session`] close the loop with a scripted driver.

#![no_std]
#![forbid(unsafe_code)]
// `!(x > 0.0)` also rejects NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod driver;
pub mod features;
pub mod forest;
pub mod fuzzy;
pub mod labeling;
pub mod metrics;
pub mod session;
pub mod sim;
pub mod types;
pub mod warning;

pub use features::FeatureVector;
pub use types::{Direction, Intention, Side, TICK_HZ, TICK_SECONDS};
