//! Front end of the `collide` executable: configuration, commands and
//! report writers.

pub mod commands;
pub mod config;
pub mod error;
pub mod output;
pub mod verify;

pub use config::RunConfig;
pub use error::CliError;
