use thiserror::Error;

use crate::cohort::{IngestError, MappingError};
use crate::fairness_audit::AuditError;
use crate::ref_engine::TableSetError;
use crate::sdoh_calibration::CalibrationError;
use crate::synth::SynthError;

/// A failed command. The variant decides the exit status; `context` names
/// the module or stage that failed.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{context}: {message}")]
    Config { context: &'static str, message: String },
    #[error("{context}: {message}")]
    Data { context: &'static str, message: String },
    #[error("{context}: {message}")]
    Numerical { context: &'static str, message: String },
}

impl CliError {
    pub fn config(context: &'static str, message: impl Into<String>) -> Self {
        CliError::Config { context, message: message.into() }
    }

    pub fn data(context: &'static str, message: impl Into<String>) -> Self {
        CliError::Data { context, message: message.into() }
    }

    pub fn numerical(context: &'static str, message: impl Into<String>) -> Self {
        CliError::Numerical { context, message: message.into() }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Data { .. } => 3,
            CliError::Numerical { .. } => 4,
        }
    }
}

impl From<TableSetError> for CliError {
    fn from(e: TableSetError) -> Self {
        CliError::data("ref_engine", e.to_string())
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Schema(_) => CliError::config("cohort", e.to_string()),
            _ => CliError::data("cohort", e.to_string()),
        }
    }
}

impl From<MappingError> for CliError {
    fn from(e: MappingError) -> Self {
        match e {
            MappingError::Parse(_) => CliError::config("cohort", e.to_string()),
            MappingError::Unmapped(_) => CliError::data("cohort", e.to_string()),
        }
    }
}

impl From<CalibrationError> for CliError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::DegenerateGap { .. } | CalibrationError::Lms(_) => {
                CliError::numerical("sdoh_calibration", e.to_string())
            }
            CalibrationError::InvalidPhi(_) => CliError::config("sdoh_calibration", e.to_string()),
            _ => CliError::data("sdoh_calibration", e.to_string()),
        }
    }
}

impl From<AuditError> for CliError {
    fn from(e: AuditError) -> Self {
        match e {
            AuditError::NonFinite(_) => CliError::numerical("fairness_audit", e.to_string()),
            AuditError::SameGroup | AuditError::NoReplicates | AuditError::EmptyPanel => {
                CliError::config("fairness_audit", e.to_string())
            }
            _ => CliError::data("fairness_audit", e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        match e {
            SynthError::InvalidSpec(_) | SynthError::Impossible(_) => CliError::config("synth", e.to_string()),
            SynthError::ResampleExhausted { .. } => CliError::numerical("synth", e.to_string()),
            _ => CliError::data("synth", e.to_string()),
        }
    }
}
