//! Configuration, file formats, Monte Carlo harness and report emission for
//! [`bss_core`].

pub mod config;
pub mod error;
pub mod harness;
pub mod io;
pub mod report;
pub mod stats;

pub use config::ExperimentConfig;
pub use error::{ToolkitError, ToolkitResult};
pub use harness::run_experiment;
pub use report::ExperimentReport;
