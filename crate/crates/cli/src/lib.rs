//! Scenario-driven front end: budget tables, end-to-end simulation to
//! timestamp files, and the correlation, lifetime and conversion analyses.

pub mod commands;
pub mod error;
pub mod report;
pub mod scenario;

pub use error::{CliError, CliResult};
pub use report::Report;
pub use scenario::Scenario;
