//! Cost estimates, marginal deviation and the smoothing-error bound.

use serde::Serialize;

use crate::costs::CostMatrix;
use crate::dual::TransportPlan;
use crate::measures::DiscreteMeasure;

/// `<P, C> = sum_ij p_ij c_ij`
pub fn plan_cost(plan: &TransportPlan, cost: &CostMatrix) -> f64 {
    assert_eq!(plan.shape(), cost.shape(), "plan and cost shapes differ");
    plan.as_slice().iter().zip(cost.as_slice()).map(|(p, c)| p * c).sum()
}

/// `D(P) = |P 1 - mu|_1 + |P^T 1 - nu|_1`
pub fn marginal_deviation(plan: &TransportPlan, source: &DiscreteMeasure, target: &DiscreteMeasure) -> f64 {
    let (m, n) = plan.shape();
    assert_eq!((m, n), (source.len(), target.len()), "plan shape must match the measures");
    let rows: f64 = plan.row_sums().iter().zip(source.weights()).map(|(r, w)| (r - w).abs()).sum();
    let cols: f64 = plan.col_sums().iter().zip(target.weights()).map(|(c, w)| (c - w).abs()).sum();
    rows + cols
}

/// `2 lambda log n`
pub fn smoothing_bound(lambda: f64, n: usize) -> f64 {
    2.0 * lambda * (n as f64).ln()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SmoothingGap {
    /// `E(psi_final) - E(psi*)` with `E(psi*) = -oracle_cost`.
    pub gap: f64,
    pub bound: f64,
    pub within: bool,
}

/// Compares a dual estimate `-E(psi_final)` against the exact cost.
///
/// `within` requires `0 <= gap <= 2 lambda log n + solver_slack`; the slack
/// absorbs the solver's distance from the smoothed optimum.
pub fn theorem8_gap(
    ot_cost_estimate: f64,
    oracle_cost: f64,
    lambda: f64,
    n: usize,
    solver_slack: f64,
) -> SmoothingGap {
    let gap = oracle_cost - ot_cost_estimate;
    let bound = smoothing_bound(lambda, n);
    SmoothingGap { gap, bound, within: gap >= 0.0 && gap <= bound + solver_slack }
}

/// Per-solver summary written to the experiment JSON.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    /// `-E(psi)` for dual solvers, otherwise the plan cost.
    pub ot_cost_estimate: f64,
    pub plan_cost: f64,
    pub marginal_dev: f64,
    pub oracle_cost: Option<f64>,
    pub abs_error_vs_oracle: Option<f64>,
    pub gap: Option<f64>,
    #[serde(rename = "bound")]
    pub bound_2lambda_logn: f64,
    pub within: Option<bool>,
}

impl EvalReport {
    pub fn new(ot_cost_estimate: f64, plan_cost: f64, marginal_dev: f64, lambda: f64, n: usize) -> Self {
        Self {
            ot_cost_estimate,
            plan_cost,
            marginal_dev,
            oracle_cost: None,
            abs_error_vs_oracle: None,
            gap: None,
            bound_2lambda_logn: smoothing_bound(lambda, n),
            within: None,
        }
    }

    /// Fills the oracle-relative fields. `within` uses the gap of the cost
    /// estimate with no extra slack.
    pub fn with_oracle(mut self, oracle_cost: f64) -> Self {
        let gap = oracle_cost - self.ot_cost_estimate;
        self.oracle_cost = Some(oracle_cost);
        self.abs_error_vs_oracle = Some(gap.abs());
        self.gap = Some(gap);
        self.within = Some(gap >= 0.0 && gap <= self.bound_2lambda_logn);
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn measure(w: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new((0..w.len()).map(|i| vec![i as f64]).collect(), w.to_vec()).unwrap()
    }

    #[test]
    fn plan_cost_examples() {
        let mu = measure(&[0.2, 0.3, 0.5]);
        let diag = TransportPlan::from_array(Array2::from_diag(&ndarray::arr1(mu.weights())));
        let c = CostMatrix::from_rows(&[vec![0.0, 1.0, 2.0], vec![1.0, 0.0, 1.0], vec![2.0, 1.0, 0.0]]).unwrap();
        assert_eq!(plan_cost(&diag, &c), 0.0);

        let nu = measure(&[1.0, 3.0]);
        let outer = Array2::from_shape_fn((3, 2), |(i, j)| mu.weights()[i] * nu.weights()[j]);
        let k = CostMatrix::from_rows(&vec![vec![4.0; 2]; 3]).unwrap();
        assert!((plan_cost(&TransportPlan::from_array(outer), &k) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn plan_cost_matches_naive_loop() {
        let p = Array2::from_shape_fn((4, 5), |(i, j)| ((i * 5 + j) as f64 * 0.37).sin().abs());
        let c = Array2::from_shape_fn((4, 5), |(i, j)| ((i + 2 * j) as f64).sqrt());
        let mut naive = 0.0;
        for i in 0..4 {
            for j in 0..5 {
                naive += p[[i, j]] * c[[i, j]];
            }
        }
        let got = plan_cost(&TransportPlan::from_array(p), &CostMatrix::from_array(c).unwrap());
        assert_eq!(got, naive);
    }

    #[test]
    fn deviation_examples() {
        let mu = measure(&[0.5, 0.5]);
        let nu = measure(&[0.25, 0.75]);
        assert_eq!(marginal_deviation(&TransportPlan::zeros(2, 2), &mu, &nu), 2.0);
        let coupled = Array2::from_shape_fn((2, 2), |(i, j)| mu.weights()[i] * nu.weights()[j]);
        assert_eq!(marginal_deviation(&TransportPlan::from_array(coupled), &mu, &nu), 0.0);
    }

    #[test]
    fn gap_bound_examples() {
        let g = theorem8_gap(1.0, 1.2, 1.0, 2, 0.0);
        assert!((g.bound - 1.386_294_361_119_890_6).abs() < 1e-15);
        assert!(g.within);
        assert!(!theorem8_gap(1.3, 1.2, 1.0, 2, 0.0).within);
        assert_eq!(smoothing_bound(0.0, 100), 0.0);
    }

    #[test]
    fn report_json_keys() {
        let r = EvalReport::new(0.9, 1.1, 1e-3, 0.5, 4).with_oracle(1.0);
        let v = serde_json::to_value(&r).unwrap();
        for key in ["ot_cost_estimate", "plan_cost", "marginal_dev", "oracle_cost", "gap", "bound"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["bound"], serde_json::json!(2.0 * 0.5 * 4f64.ln()));
        assert_eq!(v["within"], serde_json::json!(true));
    }
}
