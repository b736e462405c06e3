//! Experiment harness: specs, ground truth, trial execution and outputs.

mod output;
mod run;
mod spec;
mod truth;

pub use output::*;
pub use run::*;
pub use spec::*;
pub use truth::*;
