//! Command-line harness for the trajectory solver: phantom generation,
//! reconstruction, validation suites, metrics and plots.

pub mod commands;
pub mod config;
pub mod plot;

pub use commands::{run, Cli};
pub use config::RunConfig;
