//! Experiment front end: configuration, run orchestration, artifacts,
//! comparison tables and plots.

pub mod compare;
pub mod config;
pub mod curves;
pub mod plot;
pub mod run;

use std::fmt;

pub use config::{Algorithm, ConfigLayers, ExperimentConfig};

#[derive(Debug)]
pub enum HarnessError {
    Config(String),
    Numeric(String),
    Io(String),
    Data(String),
}

impl HarnessError {
    /// Process exit code for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Numeric(_) => 3,
            HarnessError::Io(_) | HarnessError::Data(_) => 1,
        }
    }
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(m) => write!(f, "config error: {m}"),
            HarnessError::Numeric(m) => write!(f, "numeric failure: {m}"),
            HarnessError::Io(m) => write!(f, "i/o error: {m}"),
            HarnessError::Data(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for HarnessError {}

impl From<hasac_core::Error> for HarnessError {
    fn from(e: hasac_core::Error) -> Self {
        use hasac_core::Error as E;
        match e {
            E::Config(m) | E::Usage(m) => HarnessError::Config(m),
            E::Numeric(m) => HarnessError::Numeric(m),
            E::Checkpoint(m) => HarnessError::Data(format!("checkpoint: {m}")),
            E::Io(e) => HarnessError::Io(e.to_string()),
        }
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Data(format!("csv: {e}"))
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
