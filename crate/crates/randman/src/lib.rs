//! File formats and the `randman` command-line tool.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod pgm;

pub use error::{CliError, CliResult};
