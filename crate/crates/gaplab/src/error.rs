//! Crate-wide error type with a stable mapping onto CLI exit codes.

use gaplab_core::gapmath::GapError;
use gaplab_core::synth::SynthError;
use gaplab_core::tasks::TaskError;
use gaplab_core::types::SpecError;
use gaplab_core::verify::VerifyError;
use gaplab_core::weights::WeightError;

use crate::backend::BackendError;

/// Top-level error for pipeline and report operations.
///
/// Variants are grouped by exit-code class: configuration problems (2),
/// backend failures (3), and data or storage problems (4).
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config: {0}")]
    Config(String),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("data: {0}")]
    Data(String),
}

impl Error {
    /// Process exit code for this error class (0 is reserved for success).
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Backend(_) => 3,
            Error::Data(_) => 4,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }
}

/// IO failures surface while reading or writing run directories.
impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Data(format!("io: {e}"))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Data(format!("json: {e}"))
    }
}

/// Spec validation errors are configuration mistakes, not data corruption.
impl From<SpecError> for Error {
    fn from(e: SpecError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<WeightError> for Error {
    fn from(e: WeightError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<GapError> for Error {
    fn from(e: GapError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<TaskError> for Error {
    fn from(e: TaskError) -> Self {
        Error::Data(e.to_string())
    }
}

impl From<SynthError> for Error {
    fn from(e: SynthError) -> Self {
        Error::Config(e.to_string())
    }
}

impl From<VerifyError> for Error {
    fn from(e: VerifyError) -> Self {
        Error::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
