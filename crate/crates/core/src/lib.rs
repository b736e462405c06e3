// `!(x >= 0.0)` is used on purpose to reject NaN alongside negatives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anchor;
pub mod diagnostics;
pub mod error;
pub mod experiment;
pub mod linalg;
pub mod operator;
pub mod rng;
pub mod sketch;
pub mod solver;

pub use error::{Error, Result};
