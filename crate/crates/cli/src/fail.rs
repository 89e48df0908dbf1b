//! Error-to-exit-code policy.
//!
//! Usage errors (bad flags, contradictory configuration) exit 2 before any
//! side effect; runtime errors (missing files, corrupt data, training
//! failures) exit 1. Success is 0.

use lexforge_core::classify::ClassifyError;
use lexforge_core::config::ConfigError;
use lexforge_core::data::DataError;
use lexforge_core::eval::EvalError;
use lexforge_core::tokenizer::TokenizerError;
use lexforge_core::trainer::TrainError;

#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => m,
        }
    }
}

pub fn usage(message: impl Into<String>) -> Failure {
    Failure::Usage(message.into())
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ClassifyError> for Failure {
    fn from(e: ClassifyError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<TokenizerError> for Failure {
    fn from(e: TokenizerError) -> Self {
        Failure::Runtime(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        // A file that cannot be read is a runtime problem; everything else
        // in configuration space is the user contradicting themselves.
        match e {
            ConfigError::Io(io) => Failure::Runtime(io.to_string()),
            other => Failure::Usage(other.to_string()),
        }
    }
}

pub type CliResult = Result<(), Failure>;
