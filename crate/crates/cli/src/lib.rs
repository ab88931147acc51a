//! Command-line interface and local HTTP service over an abscreen project.

pub mod cli;
mod error;
pub mod server;
pub mod shared;
pub mod views;

pub use error::{CliError, CliResult};
