//! Benchmark harness for `smoothot`: seeded instance generation, solver
//! runs under a shared stop rule, and CSV/JSON reporting.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod experiment;
pub mod instance;

use smoothot::OtError;

pub use config::{CostKind, ExperimentConfig, InstanceKind, PointSpec, PRESETS, P_SWEEP};
pub use experiment::{run_experiment, run_on_instance, run_sweep, ExperimentSummary, SolverSummary};
pub use instance::{generate_instance, synthetic_stroke_image, write_instance, Instance};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("config error: {0}")]
    Config(String),
    #[error(transparent)]
    Ot(#[from] OtError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl BenchError {
    /// Process exit code: numerical failures inside a solve are reported
    /// through the summary (code 2); everything raised here is a setup
    /// problem (code 3).
    pub fn exit_code(&self) -> i32 {
        3
    }
}
