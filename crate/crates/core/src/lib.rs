// `!(x > 0.0)` is used deliberately so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod harness;
pub mod moments;
pub mod objectives;
pub mod optimizer;
pub mod rng;

pub use error::{Error, Result};
