//! Configuration, task execution and CSV output for the `mdiqkd` binary.

pub mod config;
pub mod error;
pub mod run;

pub use config::RunConfig;
pub use error::{Category, CliError, ConfigError};
pub use run::{run, Log, Output, Task};
