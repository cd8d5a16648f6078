// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod akf;
pub mod architectures;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod hpo;
pub mod nn;
pub mod seeding;
pub mod signals;
pub mod simulator;

pub use error::{Error, Result};
