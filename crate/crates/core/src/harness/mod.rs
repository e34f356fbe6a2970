//! Command-line experiments: the variance-of-the-mean study, optimizer
//! benchmarks, and the validation suites.

pub mod bench;
pub mod cli;
pub mod config;
pub mod fig2;
pub mod output;
pub mod validate;
