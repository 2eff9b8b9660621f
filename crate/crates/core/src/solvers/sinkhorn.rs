//! Sinkhorn matrix scaling for the entropic problem with the same `lambda`.
//!
//! Kernel mode alternates `u = mu / (K v)`, `v = nu / (K^T u)` on
//! `K = e^{-C/lambda}` and the plan is `diag(u) K diag(v)`. The default log
//! mode carries `f = lambda log u`, `g = lambda log v` and evaluates every
//! sum with a max shift.

use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;

use crate::costs::CostMatrix;
use crate::dual::{Evaluation, SmoothedDual, TransportPlan};
use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;
use crate::metrics::marginal_deviation;

use super::{check_sizes, relative_change_below, SolveStatus, SolveTrace, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SinkhornConfig {
    pub max_iters: usize,
    pub stop_rel_tol: f64,
    pub trace_every: usize,
    pub evaluation: Evaluation,
}

impl Default for SinkhornConfig {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            stop_rel_tol: 1e-3,
            trace_every: 1,
            evaluation: Evaluation::LogDomain,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    pub trace: SinkhornTrace,
    pub iterations: usize,
    /// `lambda log u`
    pub row_potential: Vec<f64>,
    /// `lambda log v`; usable as a dual potential `psi`.
    pub col_potential: Vec<f64>,
    pub cost_shift: f64,
    /// `<P, C>` on the cost the solver was given.
    plan_cost_raw: f64,
}

type SinkhornTrace = SolveTrace;

impl SinkhornResult {
    pub fn status(&self) -> SolveStatus {
        self.trace.status()
    }

    /// `<P, C>` on the uncentered cost.
    pub fn plan_cost(&self) -> f64 {
        self.plan_cost_raw + self.cost_shift
    }
}

/// Scaling state in either representation.
enum Scaling {
    Log { f: Vec<f64>, g: Vec<f64> },
    Kernel { k: Vec<f64>, kt: Vec<f64>, u: Vec<f64>, v: Vec<f64> },
}

struct Problem<'a> {
    mu: &'a [f64],
    nu: &'a [f64],
    cost: &'a CostMatrix,
    cost_t: Vec<f64>,
    lambda: f64,
}

fn lse_shifted(vals: impl Iterator<Item = f64> + Clone, lambda: f64) -> f64 {
    let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let s: f64 = vals.map(|a| ((a - max) / lambda).exp()).sum();
    max + lambda * s.ln()
}

impl Problem<'_> {
    fn m(&self) -> usize {
        self.mu.len()
    }

    fn n(&self) -> usize {
        self.nu.len()
    }

    /// `f_i = lambda log mu_i - lambda LSE_j((g_j - c_ij)/lambda)`
    fn update_f(&self, g: &[f64]) -> Vec<f64> {
        (0..self.m())
            .into_par_iter()
            .map(|i| {
                let row = self.cost.row(i);
                let lse = lse_shifted(g.iter().zip(row).map(|(gj, c)| gj - c), self.lambda);
                self.lambda * self.mu[i].ln() - lse
            })
            .collect()
    }

    fn update_g(&self, f: &[f64]) -> Vec<f64> {
        let m = self.m();
        (0..self.n())
            .into_par_iter()
            .map(|j| {
                let col = &self.cost_t[j * m..(j + 1) * m];
                let lse = lse_shifted(f.iter().zip(col).map(|(fi, c)| fi - c), self.lambda);
                self.lambda * self.nu[j].ln() - lse
            })
            .collect()
    }

    /// `out = mu / (A x)` for a row-major `rows x cols` matrix `a`.
    fn scale(a: &[f64], x: &[f64], marginal: &[f64]) -> Vec<f64> {
        let cols = x.len();
        marginal
            .par_iter()
            .enumerate()
            .map(|(i, w)| {
                let ax: f64 = a[i * cols..(i + 1) * cols].iter().zip(x).map(|(k, v)| k * v).sum();
                w / ax
            })
            .collect()
    }

    fn plan(&self, state: &Scaling) -> TransportPlan {
        let (m, n) = (self.m(), self.n());
        let mut flat = vec![0.0; m * n];
        flat.par_chunks_mut(n).enumerate().for_each(|(i, row)| match state {
            Scaling::Log { f, g } => {
                for ((p, c), gj) in row.iter_mut().zip(self.cost.row(i)).zip(g) {
                    *p = ((f[i] + gj - c) / self.lambda).exp();
                }
            }
            Scaling::Kernel { k, u, v, .. } => {
                for ((p, kij), vj) in row.iter_mut().zip(&k[i * n..(i + 1) * n]).zip(v) {
                    *p = u[i] * kij * vj;
                }
            }
        });
        TransportPlan::from_array(Array2::from_shape_vec((m, n), flat).expect("m * n entries"))
    }

    fn col_potential(&self, state: &Scaling) -> Vec<f64> {
        match state {
            Scaling::Log { g, .. } => g.clone(),
            Scaling::Kernel { v, .. } => v.iter().map(|x| self.lambda * x.ln()).collect(),
        }
    }

    fn row_potential(&self, state: &Scaling) -> Vec<f64> {
        match state {
            Scaling::Log { f, .. } => f.clone(),
            Scaling::Kernel { u, .. } => u.iter().map(|x| self.lambda * x.ln()).collect(),
        }
    }
}

fn scalings_finite(state: &Scaling) -> bool {
    let ok = |x: &[f64]| x.iter().all(|v| v.is_finite());
    match state {
        Scaling::Log { f, g } => ok(f) && ok(g),
        Scaling::Kernel { u, v, .. } => ok(u) && ok(v),
    }
}

/// Runs Sinkhorn until the relative change of `<P, C>` between iterations
/// drops below `stop_rel_tol`.
///
/// Iteration 0 is the half step `f` from `g = 0`, whose plan has exact row
/// marginals; each later iteration updates `f` then `g`, leaving the column
/// marginals exact. Overflow or underflow of the scalings
/// (kernel mode at small `lambda`) ends the run with
/// [`SolveStatus::NumericalFailure`].
pub fn sinkhorn_solve(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    lambda: f64,
    config: &SinkhornConfig,
) -> Result<SinkhornResult> {
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(OtError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
    }
    if config.max_iters == 0 || config.trace_every == 0 || !(config.stop_rel_tol > 0.0) {
        return Err(OtError::InvalidParameter(
            "sinkhorn needs max_iters >= 1, trace_every >= 1 and stop_rel_tol > 0".into(),
        ));
    }
    check_sizes(source, target, cost)?;
    let (m, n) = cost.shape();
    let entries = cost.as_slice();
    let mut cost_t = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            cost_t[j * m + i] = entries[i * n + j];
        }
    }
    let prob = Problem {
        mu: source.weights(),
        nu: target.weights(),
        cost,
        cost_t,
        lambda,
    };
    let shift = cost.shift();
    // E and E_lambda of the column potential, for the trace only
    let dual = SmoothedDual::new(source, target, cost, lambda, Evaluation::LogDomain)?;
    let start = Instant::now();

    let mut state = match config.evaluation {
        Evaluation::LogDomain => {
            let g = vec![0.0; n];
            Scaling::Log { f: prob.update_f(&g), g }
        }
        Evaluation::Kernel => {
            let k: Vec<f64> = entries.iter().map(|c| (-c / lambda).exp()).collect();
            let kt: Vec<f64> = prob.cost_t.iter().map(|c| (-c / lambda).exp()).collect();
            let v = vec![1.0; n];
            let u = Problem::scale(&k, &v, prob.mu);
            Scaling::Kernel { k, kt, u, v }
        }
    };

    let mut trace = SolveTrace::new();
    let plan_of = |state: &Scaling| {
        let plan = prob.plan(state);
        let pc: f64 = plan.as_slice().iter().zip(entries).map(|(p, c)| p * c).sum();
        (plan, pc)
    };
    let record = |state: &Scaling, plan: &TransportPlan, pc: f64, iter: usize| {
        let g = prob.col_potential(state);
        let (e, el) = if g.iter().all(|x| x.is_finite()) {
            let ev = dual.evaluate(&g);
            (ev.energy, ev.smoothed_energy)
        } else {
            (f64::NAN, f64::NAN)
        };
        TraceRecord {
            iter,
            energy: e - shift,
            smoothed_energy: el - shift,
            plan_cost: pc + shift,
            marginal_dev: marginal_deviation(plan, source, target),
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
        }
    };

    let (mut plan, mut pc) = plan_of(&state);
    trace.push(record(&state, &plan, pc, 0));
    if !scalings_finite(&state) {
        trace.finish(SolveStatus::NumericalFailure { iteration: 0 });
        return Ok(finish(&prob, &state, plan, pc, trace, 0, shift));
    }

    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    for t in 1..=config.max_iters {
        let next = match &state {
            Scaling::Log { g, .. } => {
                let f = prob.update_f(g);
                let g = prob.update_g(&f);
                Scaling::Log { f, g }
            }
            Scaling::Kernel { k, kt, v, .. } => {
                let u = Problem::scale(k, v, prob.mu);
                let v = Problem::scale(kt, &u, prob.nu);
                Scaling::Kernel { k: k.clone(), kt: kt.clone(), u, v }
            }
        };
        let (next_plan, next_pc) = plan_of(&next);
        if !scalings_finite(&next) || !next_pc.is_finite() {
            trace.push(record(&next, &next_plan, next_pc, t));
            status = SolveStatus::NumericalFailure { iteration: t };
            break;
        }
        let done = relative_change_below(pc + shift, next_pc + shift, config.stop_rel_tol);
        state = next;
        plan = next_plan;
        pc = next_pc;
        iterations = t;
        if done || t % config.trace_every == 0 || t == config.max_iters {
            trace.push(record(&state, &plan, pc, t));
        }
        if done {
            status = SolveStatus::Converged;
            break;
        }
    }
    trace.finish(status);
    Ok(finish(&prob, &state, plan, pc, trace, iterations, shift))
}

fn finish(
    prob: &Problem<'_>,
    state: &Scaling,
    plan: TransportPlan,
    pc: f64,
    trace: SolveTrace,
    iterations: usize,
    shift: f64,
) -> SinkhornResult {
    SinkhornResult {
        plan,
        trace,
        iterations,
        row_potential: prob.row_potential(state),
        col_potential: prob.col_potential(state),
        cost_shift: shift,
        plan_cost_raw: pc,
    }
}
