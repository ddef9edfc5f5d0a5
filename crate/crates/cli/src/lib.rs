//! Configuration, dispatch and reports behind the `regsynth` binary.

pub mod config;
pub mod dispatch;
pub mod error;
pub mod report;

pub use config::{load_config, prepare, Command, Job, RunConfig};
pub use dispatch::{dispatch, DispatchOptions, Outcome};
pub use error::CliError;
pub use report::FlatReport;
