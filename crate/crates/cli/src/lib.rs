//! Scenario runner for chanshape: declarative scenario files, seeded
//! ensembles, checksummed result directories and plot-ready tables.

pub mod audio;
pub mod commands;
pub mod error;
pub mod persist;
pub mod run;
pub mod scan;
pub mod scenario;
pub mod sweep;

pub use error::CliError;
