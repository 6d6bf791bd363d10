//! File formats, the sweep driver and the command-line front end for
//! `mpgps-core`.

// Negated float comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod output;
pub mod runner;
pub mod scenario;

pub use runner::{check_bounds, run_scenario, Failure};
pub use scenario::Scenario;
