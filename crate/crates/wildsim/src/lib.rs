//! Command-line driver for `wildsim-core`: JSON configuration, CSV/JSON
//! output, a thread-pool executor and the built-in self test.

pub mod cli;
pub mod config;
pub mod error;
pub mod io;
pub mod par;
pub mod selftest;

pub use error::{CliError, CliResult};
