//! Scenario-driven front end for `nlsred-core`: config files, pipelines,
//! CSV/JSON/SVG artifacts and a thread-pool executor.

pub mod artifacts;
pub mod config;
pub mod exec;
pub mod pipeline;
pub mod report;
pub mod svg;

pub use config::{Mode, ScenarioConfig};
pub use nlsred_core as core;
pub use pipeline::{run, RunOptions};
pub use report::{render, Check, Num, RunReport};

/// Failures of the front end, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    /// Invalid or unreadable configuration, missing or mixed artifacts.
    #[error("config error: {0}")]
    Config(String),
    /// A numerical stage failed; artifacts written so far are kept.
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 1,
        }
    }
}

impl From<nlsred_core::Error> for RunError {
    fn from(e: nlsred_core::Error) -> Self {
        RunError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for RunError {
    fn from(e: std::io::Error) -> Self {
        RunError::Io(e.to_string())
    }
}
