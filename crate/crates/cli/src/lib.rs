//! Pipeline driver for the `npae` command-line tool.

pub mod config;
pub mod error;
pub mod pipeline;

pub use config::RunConfig;
pub use error::{CliError, CliResult};
pub use pipeline::{run, Command, Invocation, Layout};
