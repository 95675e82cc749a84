//! Command-line front end for the `hbdl` library: dataset generation,
//! training, prediction, posterior inspection and benchmark suites.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod model;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use model::ModelFile;
