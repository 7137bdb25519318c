//! File formats, configuration, parallel execution and the command-line
//! front end for `spinglass-core`.

pub mod config;
pub mod error;
pub mod exec;
pub mod output;
pub mod run;
pub mod verify;

pub use config::ExperimentConfig;
pub use error::{exit, LabError, Result};
pub use exec::PoolExecutor;
