//! Synthetic cohorts under `LF = LF* - D` with known ground truth, and
//! pooled coefficient tables.

mod generate;
mod pool;
mod spec;

use thiserror::Error;

pub use generate::{generate, SynthParticipant, SynthReport};
pub use pool::{build_interpolated_table, build_pooled_table, pool_table_set};
pub use spec::{
    builtin_tables, Demographics, GroupSpec, IdealPhysiology, OutcomeModel, OutcomeSpec, RiskFlags,
    SynthConfig, SynthSpec,
};

use crate::ref_engine::{PredictError, TableError};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("impossible synthetic spec: {0}")]
    Impossible(String),
    #[error("participant {ordinal}: no valid draw after repeated resampling")]
    ResampleExhausted { ordinal: usize },
    #[error("table pooling: {0}")]
    Pool(String),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error(transparent)]
    Predict(#[from] PredictError),
}
