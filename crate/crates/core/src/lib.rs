//! Discrete optimal transport by Nesterov smoothing of the dual Kantorovich
//! functional.
//!
//! The c-transform `max_j (psi_j - c_ij)` is replaced by a Log-Sum-Exp with
//! scale `lambda`, which makes the dual energy `(1/lambda)`-smooth while
//! moving it by at most `lambda * log n`. The smoothed energy is minimized by
//! FISTA with a mean-zero projection. A log-domain Sinkhorn baseline and an
//! exact transportation simplex are included for comparison.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod costs;
pub mod dual;
mod error;
pub mod exact;
pub mod io;
pub mod measures;
pub mod metrics;
pub mod registry;
pub mod solvers;

pub use costs::CostMatrix;
pub use dual::{Potential, SmoothingParams, TransportPlan};
pub use error::{OtError, Result};
pub use exact::{brute_force_solve, exact_solve, ExactOptions};
pub use measures::DiscreteMeasure;
pub use metrics::{marginal_deviation, plan_cost, EvalReport};
pub use registry::{Problem, SolveOutcome, Solver, SolverRegistry, SolverSettings};
pub use solvers::{
    fista_solve, sinkhorn_solve, FistaConfig, FistaResult, SinkhornConfig, SinkhornResult,
    SolveStatus, SolveTrace, TraceRecord,
};
