//! File formats and the command-line front end for `topoprune-core`.

pub mod arch;
pub mod checkpoint;
pub mod cli;
pub mod commands;
mod error;
pub mod npy;
pub mod report;

pub use error::CliError;
