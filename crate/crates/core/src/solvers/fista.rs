//! FISTA on the smoothed dual restricted to the mean-zero hyperplane.
//!
//! ```text
//! z^{t+1}     = Pi(psi^t - eta_t grad E_lambda(psi^t)),   eta_t = eta * lambda
//! theta_{t+1} = (1 + sqrt(1 + 4 theta_t^2)) / 2
//! psi^{t+1}   = z^{t+1} + (theta_t - 1) / theta_{t+1} (z^{t+1} - z^t)
//! ```
//!
//! starting from `psi^0 = z^0 = 0`, `theta_0 = 1`. Everything in the trace
//! is evaluated at `psi^t`, where the gradient is taken anyway.

use std::time::Instant;

use crate::costs::CostMatrix;
use crate::dual::{project_h, DualEval, Evaluation, Potential, SmoothedDual, TransportPlan};
use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;

use super::{check_sizes, relative_change_below, SolveStatus, SolveTrace, TraceRecord};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FistaConfig {
    /// Step multiplier; the step is `eta * lambda`.
    pub eta: f64,
    pub max_iters: usize,
    pub stop_rel_tol: f64,
    pub trace_every: usize,
    pub evaluation: Evaluation,
}

impl Default for FistaConfig {
    fn default() -> Self {
        Self {
            eta: 1.0,
            max_iters: 10_000,
            stop_rel_tol: 1e-3,
            trace_every: 1,
            evaluation: Evaluation::LogDomain,
        }
    }
}

impl FistaConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return Err(OtError::InvalidParameter(format!("eta must be > 0, got {}", self.eta)));
        }
        if self.max_iters == 0 {
            return Err(OtError::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.stop_rel_tol > 0.0) {
            return Err(OtError::InvalidParameter(format!(
                "stop_rel_tol must be > 0, got {}",
                self.stop_rel_tol
            )));
        }
        if self.trace_every == 0 {
            return Err(OtError::InvalidParameter("trace_every must be >= 1".into()));
        }
        Ok(())
    }
}

/// Momentum weights `theta_0 = 1, theta_1, ...`.
pub fn theta_schedule() -> impl Iterator<Item = f64> {
    std::iter::successors(Some(1.0f64), |t| Some(0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt())))
}

#[derive(Clone, Debug)]
pub struct FistaResult {
    /// Last finite extrapolated iterate `psi^t`, mean zero.
    pub potential: Potential,
    /// Last proximal iterate `z^t`, the sequence FISTA's rate applies to.
    pub prox_iterate: Potential,
    /// `P_lambda` recovered at `potential`.
    pub plan: TransportPlan,
    pub trace: SolveTrace,
    pub iterations: usize,
    /// Row-pass quantities at `potential`, on the cost the solver was given.
    pub eval: DualEval,
    /// Centering shift of the cost the solver was given.
    pub cost_shift: f64,
}

impl FistaResult {
    pub fn status(&self) -> SolveStatus {
        self.trace.status()
    }

    /// `-E(psi)` on the uncentered cost.
    pub fn ot_cost_estimate(&self) -> f64 {
        -self.eval.energy + self.cost_shift
    }

    /// `<P_lambda, C>` on the uncentered cost.
    pub fn plan_cost(&self) -> f64 {
        self.eval.plan_cost + self.cost_shift
    }
}

fn record(iter: usize, ev: &DualEval, shift: f64, start: &Instant) -> TraceRecord {
    TraceRecord {
        iter,
        energy: ev.energy - shift,
        smoothed_energy: ev.smoothed_energy - shift,
        plan_cost: ev.plan_cost + shift,
        marginal_dev: ev.marginal_dev(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    }
}

/// Minimizes `E_lambda` over `{sum psi = 0}`; stops when the relative change
/// of `E(psi)` between iterates drops below `stop_rel_tol`.
///
/// A non-finite evaluation ends the run with
/// [`SolveStatus::NumericalFailure`]; the returned potential and plan are
/// then those of the last finite iterate.
pub fn fista_solve(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    lambda: f64,
    config: &FistaConfig,
) -> Result<FistaResult> {
    config.validate()?;
    check_sizes(source, target, cost)?;
    let dual = SmoothedDual::new(source, target, cost, lambda, config.evaluation)?;
    let n = cost.cols();
    let shift = cost.shift();
    let step = config.eta * lambda;
    let start = Instant::now();
    let mut trace = SolveTrace::new();

    let mut psi = vec![0.0; n];
    let mut z_prev = vec![0.0; n];
    let mut theta = 1.0f64;
    let mut eval = dual.evaluate(&psi);
    if !eval.is_finite() {
        trace.push(record(0, &eval, shift, &start));
        trace.finish(SolveStatus::NumericalFailure { iteration: 0 });
        return Ok(FistaResult {
            plan: TransportPlan::zeros(cost.rows(), n),
            potential: Potential::zeros(n),
            prox_iterate: Potential::zeros(n),
            trace,
            iterations: 0,
            eval,
            cost_shift: shift,
        });
    }
    trace.push(record(0, &eval, shift, &start));

    let mut status = SolveStatus::MaxIters;
    let mut iterations = 0;
    for t in 1..=config.max_iters {
        let moved: Vec<f64> = psi.iter().zip(&eval.gradient).map(|(p, g)| p - step * g).collect();
        let z = project_h(&moved);
        let theta_next = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
        let momentum = (theta - 1.0) / theta_next;
        let next: Vec<f64> = z.iter().zip(&z_prev).map(|(a, b)| a + momentum * (a - b)).collect();

        let next_eval = dual.evaluate(&next);
        if !next_eval.is_finite() || next.iter().any(|v| !v.is_finite()) {
            trace.push(record(t, &next_eval, shift, &start));
            status = SolveStatus::NumericalFailure { iteration: t };
            break;
        }
        let old_energy = eval.energy - shift;
        psi = next;
        z_prev = z;
        theta = theta_next;
        eval = next_eval;
        iterations = t;

        let done = relative_change_below(old_energy, eval.energy - shift, config.stop_rel_tol);
        if done || t % config.trace_every == 0 || t == config.max_iters {
            trace.push(record(t, &eval, shift, &start));
        }
        if done {
            status = SolveStatus::Converged;
            break;
        }
    }
    trace.finish(status);

    let plan = dual.plan(&psi);
    Ok(FistaResult {
        potential: Potential::from_projected_unchecked(psi),
        prox_iterate: Potential::from_projected_unchecked(z_prev),
        plan,
        trace,
        iterations,
        eval,
        cost_shift: shift,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::squared_euclidean;
    use crate::exact::exact_solve;
    use crate::measures::{random_measure, stream_rng, PointDist, SOURCE_STREAM, TARGET_STREAM};

    fn sed_instance(seed: u64, n: usize) -> (DiscreteMeasure, DiscreteMeasure, CostMatrix) {
        let box01 = PointDist::UniformBox { lo: 0.0, hi: 1.0 };
        let a = random_measure(&mut stream_rng(seed, SOURCE_STREAM), n, 2, box01, false).unwrap();
        let b = random_measure(&mut stream_rng(seed, TARGET_STREAM), n, 2, box01, false).unwrap();
        let c = squared_euclidean(&a, &b).unwrap();
        (a, b, c)
    }

    #[test]
    fn theta_recurrence() {
        let th: Vec<f64> = theta_schedule().take(3).collect();
        assert_eq!(th[0], 1.0);
        assert!((th[1] - 1.618_033_988_749_895).abs() < 1e-15);
        assert!((th[2] - 2.193_527_085_331_054).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        let bad = [
            FistaConfig { eta: 0.0, ..Default::default() },
            FistaConfig { max_iters: 0, ..Default::default() },
            FistaConfig { stop_rel_tol: 0.0, ..Default::default() },
            FistaConfig { trace_every: 0, ..Default::default() },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err());
        }
    }

    #[test]
    fn matched_supports_converge_to_diagonal() {
        let pts: Vec<Vec<f64>> = (0..5).map(|i| vec![i as f64, (i * i) as f64 * 0.1]).collect();
        let mu = DiscreteMeasure::new(pts, vec![1.0, 2.0, 3.0, 2.0, 1.0]).unwrap();
        let c = squared_euclidean(&mu, &mu).unwrap();
        let cfg = FistaConfig { stop_rel_tol: 1e-12, max_iters: 20_000, ..Default::default() };
        let res = fista_solve(&mu, &mu, &c, 0.01, &cfg).unwrap();
        assert!(res.ot_cost_estimate().abs() < 1e-6, "{}", res.ot_cost_estimate());
        for i in 0..5 {
            assert!((res.plan.get(i, i) - mu.weights()[i]).abs() < 1e-6);
        }
    }

    #[test]
    fn iterates_stay_mean_zero_and_running_min_decreases() {
        let (a, b, c) = sed_instance(3, 20);
        let lambda = c.range() / 100.0;
        let cfg = FistaConfig { stop_rel_tol: 1e-9, max_iters: 2000, ..Default::default() };
        let res = fista_solve(&a, &b, &c, lambda, &cfg).unwrap();
        assert!(res.potential.iter().sum::<f64>().abs() < 1e-10 * 20.0);
        assert!(res.prox_iterate.iter().sum::<f64>().abs() < 1e-10 * 20.0);
        let mut best = f64::INFINITY;
        for r in res.trace.records() {
            let next = best.min(r.smoothed_energy);
            assert!(next <= best);
            best = next;
        }
        let iters: Vec<usize> = res.trace.records().iter().map(|r| r.iter).collect();
        assert!(iters.windows(2).all(|w| w[0] < w[1]));
        let walls: Vec<f64> = res.trace.records().iter().map(|r| r.wall_ms).collect();
        assert!(walls.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn smoothed_gap_within_bound_on_random_instance() {
        let (a, b, c) = sed_instance(11, 50);
        let lambda = c.range() / 500.0;
        let cfg = FistaConfig { stop_rel_tol: 1e-10, max_iters: 200_000, ..Default::default() };
        let res = fista_solve(&a, &b, &c, lambda, &cfg).unwrap();
        let (_, exact) = exact_solve(&a, &b, &c, &Default::default()).unwrap();
        let gap = -res.ot_cost_estimate() - (-exact);
        let bound = 2.0 * lambda * 50f64.ln();
        assert!(gap > 0.0 && gap < bound, "gap {gap} bound {bound}");
    }

    #[test]
    fn centering_leaves_iterates_unchanged() {
        let (a, b, c) = sed_instance(5, 15);
        let lambda = c.range() / 50.0;
        let cfg = FistaConfig { stop_rel_tol: 1e-6, ..Default::default() };
        let raw = fista_solve(&a, &b, &c, lambda, &cfg).unwrap();
        let cen = fista_solve(&a, &b, &c.center(), lambda, &cfg).unwrap();
        assert_eq!(raw.iterations, cen.iterations);
        assert!((raw.ot_cost_estimate() - cen.ot_cost_estimate()).abs() < 1e-10);
        for (x, y) in raw.potential.iter().zip(cen.potential.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn kernel_overflow_is_reported() {
        let (a, b, c) = sed_instance(9, 30);
        // every c_ij / lambda exceeds 800, so K underflows to zero
        let r = c.range();
        let c = CostMatrix::from_array(c.entries().mapv(|v| v + 800.0 * r)).unwrap();
        let lambda = r / 800.0;
        let cfg = FistaConfig { evaluation: Evaluation::Kernel, ..Default::default() };
        let res = fista_solve(&a, &b, &c, lambda, &cfg).unwrap();
        assert_eq!(res.status(), SolveStatus::NumericalFailure { iteration: 0 });
        let ok = fista_solve(&a, &b, &c, lambda, &FistaConfig::default()).unwrap();
        assert!(!ok.status().is_failure());
        assert!(res.potential.iter().all(|v| v.is_finite()));
    }
}
