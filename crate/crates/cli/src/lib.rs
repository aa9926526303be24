//! Command-line surface for boundseg: dataset I/O, flat config files, the
//! synthetic corpus generator and the subcommands behind the `boundseg`
//! binary.

pub mod commands;
pub mod config;
pub mod corpus;
pub mod dataset;
pub mod error;

pub use commands::{run, Cli};
pub use error::CliError;
