#![allow(clippy::neg_cmp_op_on_partial_ord)]

//! Scenario files, experiment runs and their on-disk artifacts for the
//! `yosida` binary.

pub mod output;
pub mod run;
pub mod scenario;

pub use run::{run, Artifacts, Experiment};
pub use scenario::Scenario;
