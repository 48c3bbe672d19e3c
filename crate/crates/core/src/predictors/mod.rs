//! Learning-free predictors: per-operator LUT latency and energy, activation-aware memory, and
//! sensitivity-sum accuracy.

mod accuracy;
mod cost;
mod lut;
mod memory;

use crate::ir::IrError;
use crate::modspace::SpaceError;

pub use accuracy::{
    build_sensitivity_table, predict_accuracy, AccuracyOracle, FileOracle, SensitivityTable,
    SyntheticOracle, ACCURACY_HEADER, SENSITIVITY_HEADER,
};
pub use cost::{io_bytes, mult_adds, quantize, AnalyticalBackend, Cost, CostBackend, FileBackend};
pub use lut::{build_latency_lut, predict_energy, predict_latency, LatencyLut, LatencyPredictor, Provenance, LUT_HEADER};
pub use memory::{memory_of, param_bytes, predict_memory, MemoryEstimate};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PredictError {
    #[error("no LUT entry for `{0}`")]
    MissingKey(String),
    #[error("no energy value for `{0}`")]
    MissingEnergy(String),
    #[error("LUT incomplete: {} key(s) could not be measured, first `{}`", missing.len(), missing[0])]
    PartialLut { missing: Vec<String> },
    #[error("LUT was built for fusion ruleset {lut}, predictor uses {rules}")]
    RulesetMismatch { lut: String, rules: String },
    #[error("malformed LUT: {0}")]
    BadLut(String),
    #[error("malformed sensitivity table: {0}")]
    BadTable(String),
    #[error("bad accuracy oracle: {0}")]
    BadOracle(String),
    #[error("no accuracy recorded for `{0}`")]
    NoAccuracy(String),
    #[error("modification `{0}` is not covered by the sensitivity table")]
    Uncovered(String),
    #[error(transparent)]
    Space(#[from] SpaceError),
    #[error(transparent)]
    Ir(#[from] IrError),
}
