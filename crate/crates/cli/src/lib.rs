//! Command-line front end for `drci-core`.
//!
//! Exit codes: 0 success, 1 output failure, 2 usage, 3 malformed input,
//! 4 numerically degenerate problem, 5 a simulated method failed in every
//! trial.

pub mod args;
pub mod commands;
pub mod error;
pub mod format;
pub mod input;

pub use commands::run;
pub use error::{CliError, CliResult};
