//! Iterative solvers and their per-iteration traces.
//!
//! Trace values are reported on the cost as originally built: when a solver
//! runs on a centered matrix (see [`CostMatrix::center`]) the shift is added
//! back, so `E`, `E_lambda` and `<P, C>` from a centered solve compare
//! directly with an exact cost on the raw matrix. Stopping rules use the same
//! uncentered values.

mod fista;
mod sinkhorn;

pub use fista::{fista_solve, theta_schedule, FistaConfig, FistaResult};
pub use sinkhorn::{sinkhorn_solve, SinkhornConfig, SinkhornResult};

use std::io::Write;

use serde::Serialize;

use crate::costs::CostMatrix;
use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    NumericalFailure { iteration: usize },
}

impl SolveStatus {
    pub fn is_failure(&self) -> bool {
        matches!(self, SolveStatus::NumericalFailure { .. })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: usize,
    /// `E(psi)`
    pub energy: f64,
    /// `E_lambda(psi)`
    pub smoothed_energy: f64,
    /// `<P, C>`
    pub plan_cost: f64,
    /// `D(P)`
    pub marginal_dev: f64,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolveTrace {
    records: Vec<TraceRecord>,
    status: SolveStatus,
}

pub const TRACE_HEADER: &str = "iter,E,E_lambda,plan_cost,marginal_dev,wall_ms";

impl SolveTrace {
    pub(crate) fn new() -> Self {
        Self { records: Vec::new(), status: SolveStatus::MaxIters }
    }

    pub(crate) fn push(&mut self, rec: TraceRecord) {
        debug_assert!(self.records.last().is_none_or(|r| r.iter < rec.iter));
        self.records.push(rec);
    }

    pub(crate) fn finish(&mut self, status: SolveStatus) {
        self.status = status;
    }

    pub fn records(&self) -> &[TraceRecord] {
        &self.records
    }

    pub fn status(&self) -> SolveStatus {
        self.status
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// CSV with header [`TRACE_HEADER`]. Floats use Rust's shortest
    /// round-trip formatting so identical runs give identical bytes apart
    /// from the `wall_ms` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{TRACE_HEADER}")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{:e},{:e},{:e},{:.3}",
                r.iter, r.energy, r.smoothed_energy, r.plan_cost, r.marginal_dev, r.wall_ms
            )?;
        }
        Ok(())
    }
}

/// `true` once `|new - old| / |old| < tol`; falls back to the absolute
/// difference when `|old| < 1e-300`.
pub(crate) fn relative_change_below(old: f64, new: f64, tol: f64) -> bool {
    let diff = (new - old).abs();
    if old.abs() < 1e-300 {
        diff < tol
    } else {
        diff / old.abs() < tol
    }
}

pub(crate) fn check_sizes(source: &DiscreteMeasure, target: &DiscreteMeasure, cost: &CostMatrix) -> Result<()> {
    let (m, n) = cost.shape();
    if source.len() != m {
        return Err(OtError::DimensionMismatch { expected: m, got: source.len() });
    }
    if target.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: target.len() });
    }
    Ok(())
}

/// Smallest `t` with `t >= sqrt(2 |psi*|^2 / (lambda eps))`: FISTA from
/// `psi = 0` is then within `eps` of the smoothed optimum.
pub fn corollary9_iteration_bound(psi_star_norm_sq: f64, lambda: f64, epsilon: f64) -> Result<usize> {
    if !(psi_star_norm_sq > 0.0 && lambda > 0.0 && epsilon > 0.0) {
        return Err(OtError::InvalidParameter(
            "iteration bound needs positive |psi*|^2, lambda and epsilon".into(),
        ));
    }
    Ok((2.0 * psi_star_norm_sq / (lambda * epsilon)).sqrt().ceil() as usize)
}

/// `C_max - lambda log nu_min`, an infinity-norm bound on the smoothed
/// optimal potential.
pub fn psi_infinity_bound(cost: &CostMatrix, target: &DiscreteMeasure, lambda: f64) -> Result<f64> {
    let nu_min = target.min_weight();
    if !(nu_min > 0.0) {
        return Err(OtError::InvalidParameter("target has a zero-weight atom".into()));
    }
    if !(lambda > 0.0) {
        return Err(OtError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    Ok(cost.max() - lambda * nu_min.ln())
}
