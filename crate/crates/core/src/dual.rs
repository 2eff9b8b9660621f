//! Dual Kantorovich functional and its Log-Sum-Exp smoothing.
//!
//! For a potential `psi` on the target atoms:
//!
//! ```text
//! E(psi)        = sum_i mu_i max_j (psi_j - c_ij)                    - <nu, psi>
//! E_lambda(psi) = sum_i mu_i lambda log sum_j e^{(psi_j - c_ij)/lambda} - <nu, psi> - lambda log n
//! ```
//!
//! `E_lambda <= E <= E_lambda + lambda log n`, and the gradient of
//! `E_lambda` is the column marginal of the softmax plan minus `nu`.
//! Rows are evaluated with a max shift so every `lambda > 0` is
//! representable; [`Evaluation::Kernel`] instead multiplies through
//! `K = e^{-C/lambda}` and `v = e^{psi/lambda}` and will overflow for small
//! `lambda`.
//!
//! Row loops run in parallel over fixed-size chunks and the partial column
//! sums are combined in chunk order, so results do not depend on the
//! thread count.

use ndarray::Array2;
use rayon::prelude::*;
use std::ops::Deref;

use crate::costs::CostMatrix;
use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;

const ROW_CHUNK: usize = 16;

/// Dual variable on the target atoms.
#[derive(Clone, Debug, PartialEq)]
pub struct Potential {
    values: Vec<f64>,
    normalized: bool,
}

impl Potential {
    pub fn zeros(n: usize) -> Self {
        Self { values: vec![0.0; n], normalized: true }
    }

    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(OtError::NonFinite(i));
        }
        Ok(Self { values, normalized: false })
    }

    /// Projects onto `H = {sum psi = 0}`.
    pub fn projected(values: Vec<f64>) -> Result<Self> {
        let mut p = Self::new(values)?;
        p.values = project_h(&p.values);
        p.normalized = true;
        Ok(p)
    }

    pub(crate) fn from_projected_unchecked(values: Vec<f64>) -> Self {
        Self { values, normalized: true }
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `psi + k 1`
    pub fn shifted(&self, k: f64) -> Self {
        Self {
            values: self.values.iter().map(|v| v + k).collect(),
            normalized: k == 0.0 && self.normalized,
        }
    }

    pub fn norm_squared(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |a, v| a.max(v.abs()))
    }
}

impl Deref for Potential {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.values
    }
}

/// Smoothing scale, given directly or as `lambda = R / T`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothingParams {
    lambda: f64,
    divisor: Option<f64>,
}

impl SmoothingParams {
    pub fn from_lambda(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(OtError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        Ok(Self { lambda, divisor: None })
    }

    /// `lambda = R / t` with `R` the range of `cost`.
    pub fn from_divisor(cost: &CostMatrix, t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(OtError::InvalidParameter(format!("T must be > 0, got {t}")));
        }
        let lambda = cost.range() / t;
        if !(lambda > 0.0) {
            return Err(OtError::InvalidParameter("cost range is zero; set lambda directly".into()));
        }
        Ok(Self { lambda, divisor: Some(t) })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn divisor(&self) -> Option<f64> {
        self.divisor
    }
}

/// Dense coupling between source rows and target columns.
#[derive(Clone, Debug, PartialEq)]
pub struct TransportPlan {
    entries: Array2<f64>,
}

impl TransportPlan {
    pub fn from_array(entries: Array2<f64>) -> Self {
        Self { entries: entries.as_standard_layout().into_owned() }
    }

    pub fn zeros(m: usize, n: usize) -> Self {
        Self { entries: Array2::zeros((m, n)) }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.entries.dim()
    }

    pub fn entries(&self) -> &Array2<f64> {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[[i, j]]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.entries.as_slice().expect("standard layout")
    }

    pub fn row_sums(&self) -> Vec<f64> {
        self.entries.rows().into_iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        let (_, n) = self.shape();
        let mut out = vec![0.0; n];
        for row in self.entries.rows() {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }

    pub fn total_mass(&self) -> f64 {
        self.as_slice().iter().sum()
    }

    pub fn is_finite(&self) -> bool {
        self.as_slice().iter().all(|p| p.is_finite())
    }
}

/// `Pi(z) = z - mean(z)`
pub fn project_h(z: &[f64]) -> Vec<f64> {
    if z.is_empty() {
        return Vec::new();
    }
    let mean = z.iter().sum::<f64>() / z.len() as f64;
    z.iter().map(|v| v - mean).collect()
}

/// `psi^c(x_i) = max_j (psi_j - c_ij)`
pub fn c_transform(psi: &[f64], cost: &CostMatrix, i: usize) -> f64 {
    row_max(psi, cost.row(i))
}

/// Indices achieving the c-transform maximum, ascending. The first entry is
/// the tie-broken argmax.
pub fn c_transform_argmax(psi: &[f64], cost: &CostMatrix, i: usize) -> Vec<usize> {
    let best = c_transform(psi, cost, i);
    cost.row(i)
        .iter()
        .zip(psi)
        .enumerate()
        .filter(|(_, (c, p))| *p - *c == best)
        .map(|(j, _)| j)
        .collect()
}

/// `lambda log sum_j e^{(psi_j - c_ij)/lambda} - lambda log n`, max-shifted.
pub fn smoothed_c_transform(psi: &[f64], cost: &CostMatrix, lambda: f64, i: usize) -> f64 {
    let row = cost.row(i);
    row_lse(psi, row, lambda) - lambda * (row.len() as f64).ln()
}

fn row_max(psi: &[f64], row: &[f64]) -> f64 {
    psi.iter().zip(row).fold(f64::NEG_INFINITY, |m, (p, c)| m.max(p - c))
}

fn row_lse(psi: &[f64], row: &[f64], lambda: f64) -> f64 {
    let max = row_max(psi, row);
    let s: f64 = psi.iter().zip(row).map(|(p, c)| ((p - c - max) / lambda).exp()).sum();
    max + lambda * s.ln()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// How the exponentials of the smoothed functional are formed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Evaluation {
    /// Per-row max shift; finite for any `lambda > 0`.
    #[default]
    LogDomain,
    /// Products of `K = e^{-C/lambda}` and `v = e^{psi/lambda}`.
    Kernel,
}

/// Everything one pass over the rows yields at a given potential.
#[derive(Clone, Debug)]
pub struct DualEval {
    pub energy: f64,
    pub smoothed_energy: f64,
    /// `P_lambda^T 1 - nu`
    pub gradient: Vec<f64>,
    /// `<P_lambda, C>`
    pub plan_cost: f64,
}

impl DualEval {
    pub fn is_finite(&self) -> bool {
        self.energy.is_finite()
            && self.smoothed_energy.is_finite()
            && self.plan_cost.is_finite()
            && self.gradient.iter().all(|g| g.is_finite())
    }

    /// `D(P_lambda)`; row marginals of the softmax plan are exact.
    pub fn marginal_dev(&self) -> f64 {
        self.gradient.iter().map(|g| g.abs()).sum()
    }
}

/// The smoothed dual problem for fixed measures, cost and `lambda`.
pub struct SmoothedDual<'a> {
    source: &'a DiscreteMeasure,
    target: &'a DiscreteMeasure,
    cost: &'a CostMatrix,
    lambda: f64,
    kernel: Option<Vec<f64>>,
}

struct RowOut {
    max: f64,
    lse: f64,
    plan_cost: f64,
}

impl<'a> SmoothedDual<'a> {
    pub fn new(
        source: &'a DiscreteMeasure,
        target: &'a DiscreteMeasure,
        cost: &'a CostMatrix,
        lambda: f64,
        mode: Evaluation,
    ) -> Result<Self> {
        let (m, n) = cost.shape();
        if source.len() != m {
            return Err(OtError::DimensionMismatch { expected: m, got: source.len() });
        }
        if target.len() != n {
            return Err(OtError::DimensionMismatch { expected: n, got: target.len() });
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(OtError::InvalidParameter(format!("lambda must be > 0, got {lambda}")));
        }
        let kernel = match mode {
            Evaluation::LogDomain => None,
            Evaluation::Kernel => Some(cost.as_slice().iter().map(|c| (-c / lambda).exp()).collect()),
        };
        Ok(Self { source, target, cost, lambda, kernel })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn cost(&self) -> &CostMatrix {
        self.cost
    }

    pub fn source(&self) -> &DiscreteMeasure {
        self.source
    }

    pub fn target(&self) -> &DiscreteMeasure {
        self.target
    }

    pub fn mode(&self) -> Evaluation {
        if self.kernel.is_some() {
            Evaluation::Kernel
        } else {
            Evaluation::LogDomain
        }
    }

    fn check_len(&self, psi: &[f64]) {
        assert_eq!(psi.len(), self.cost.cols(), "potential length must match cost columns");
    }

    /// Fills `w` with the softmax row `s_i` and returns `(max, lse)`, where
    /// `max` is the c-transform and `lse = lambda log sum_j e^{(psi_j - c_ij)/lambda}`.
    fn softmax_row(&self, psi: &[f64], i: usize, w: &mut [f64], exp_v: Option<&[f64]>) -> (f64, f64) {
        let row = self.cost.row(i);
        let max = row_max(psi, row);
        match (&self.kernel, exp_v) {
            (Some(k), Some(v)) => {
                let n = row.len();
                let k = &k[i * n..(i + 1) * n];
                let mut s = 0.0;
                for ((wj, kj), vj) in w.iter_mut().zip(k).zip(v) {
                    *wj = kj * vj;
                    s += *wj;
                }
                w.iter_mut().for_each(|x| *x /= s);
                (max, self.lambda * s.ln())
            }
            _ => {
                let mut s = 0.0;
                for ((wj, p), c) in w.iter_mut().zip(psi).zip(row) {
                    *wj = ((p - c - max) / self.lambda).exp();
                    s += *wj;
                }
                w.iter_mut().for_each(|x| *x /= s);
                (max, max + self.lambda * s.ln())
            }
        }
    }

    fn exp_potential(&self, psi: &[f64]) -> Option<Vec<f64>> {
        self.kernel.as_ref().map(|_| psi.iter().map(|p| (p / self.lambda).exp()).collect())
    }

    /// Runs `row_fn(i, softmax_row, max, lse, col_acc)` over all rows and
    /// returns the combined column accumulator and per-row outputs in order.
    fn fold_rows<S: Send>(
        &self,
        psi: &[f64],
        row_fn: impl Fn(usize, &[f64], f64, f64, &mut [f64]) -> S + Sync,
    ) -> (Vec<f64>, Vec<S>) {
        let (m, n) = self.cost.shape();
        let exp_v = self.exp_potential(psi);
        let starts: Vec<usize> = (0..m).step_by(ROW_CHUNK).collect();
        let chunks: Vec<(Vec<f64>, Vec<S>)> = starts
            .into_par_iter()
            .map(|start| {
                let mut cols = vec![0.0; n];
                let mut w = vec![0.0; n];
                let outs = (start..(start + ROW_CHUNK).min(m))
                    .map(|i| {
                        let (max, lse) = self.softmax_row(psi, i, &mut w, exp_v.as_deref());
                        row_fn(i, &w, max, lse, &mut cols)
                    })
                    .collect();
                (cols, outs)
            })
            .collect();
        let mut cols = vec![0.0; n];
        let mut outs = Vec::with_capacity(m);
        for (c, o) in chunks {
            cols.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
            outs.extend(o);
        }
        (cols, outs)
    }

    /// Energy, smoothed energy, gradient and plan cost in one pass.
    pub fn evaluate(&self, psi: &[f64]) -> DualEval {
        self.check_len(psi);
        let mu = self.source.weights();
        let (cols, rows) = self.fold_rows(psi, |i, s, max, lse, acc| {
            let c = self.cost.row(i);
            let mut pc = 0.0;
            for ((a, sj), cj) in acc.iter_mut().zip(s).zip(c) {
                let p = mu[i] * sj;
                *a += p;
                pc += p * cj;
            }
            RowOut { max, lse, plan_cost: pc }
        });
        let nu = self.target.weights();
        let linear = dot(nu, psi);
        let n = psi.len() as f64;
        let mut e = 0.0;
        let mut el = 0.0;
        let mut pc = 0.0;
        for (r, mi) in rows.iter().zip(mu) {
            e += mi * r.max;
            el += mi * r.lse;
            pc += r.plan_cost;
        }
        DualEval {
            energy: e - linear,
            smoothed_energy: el - linear - self.lambda * n.ln(),
            gradient: cols.iter().zip(nu).map(|(c, v)| c - v).collect(),
            plan_cost: pc,
        }
    }

    /// `E(psi)`; does not depend on `lambda`.
    pub fn energy(&self, psi: &[f64]) -> f64 {
        energy(psi, self.source, self.target, self.cost)
    }

    pub fn smoothed_energy(&self, psi: &[f64]) -> f64 {
        self.evaluate(psi).smoothed_energy
    }

    pub fn gradient(&self, psi: &[f64]) -> Vec<f64> {
        self.evaluate(psi).gradient
    }

    /// `(nabla^2 E_lambda) d = (1/lambda) sum_i mu_i (s_i * d - s_i <s_i, d>)`
    /// with `s_i` the softmax row, without forming any `n x n` matrix.
    pub fn hessian_apply(&self, psi: &[f64], direction: &[f64]) -> Vec<f64> {
        self.check_len(psi);
        assert_eq!(direction.len(), psi.len());
        let mu = self.source.weights();
        let (cols, _) = self.fold_rows(psi, |i, s, _, _, acc| {
            let sd = dot(s, direction);
            for ((a, sj), dj) in acc.iter_mut().zip(s).zip(direction) {
                *a += mu[i] * sj * (dj - sd);
            }
        });
        cols.into_iter().map(|c| c / self.lambda).collect()
    }

    /// `(P_lambda)_ij = mu_i softmax_j((psi_j - c_ij)/lambda)`
    pub fn plan(&self, psi: &[f64]) -> TransportPlan {
        self.check_len(psi);
        let (m, n) = self.cost.shape();
        let mu = self.source.weights();
        let exp_v = self.exp_potential(psi);
        let mut flat = vec![0.0; m * n];
        flat.par_chunks_mut(n).enumerate().for_each(|(i, row)| {
            self.softmax_row(psi, i, row, exp_v.as_deref());
            row.iter_mut().for_each(|p| *p *= mu[i]);
        });
        TransportPlan::from_array(Array2::from_shape_vec((m, n), flat).expect("m * n entries"))
    }
}

/// `E(psi) = sum_i mu_i psi^c(x_i) - <nu, psi>`
pub fn energy(psi: &[f64], source: &DiscreteMeasure, target: &DiscreteMeasure, cost: &CostMatrix) -> f64 {
    let maxes: Vec<f64> = (0..cost.rows()).into_par_iter().map(|i| c_transform(psi, cost, i)).collect();
    let e: f64 = maxes.iter().zip(source.weights()).map(|(a, m)| a * m).sum();
    e - dot(target.weights(), psi)
}

fn log_domain<'a>(
    source: &'a DiscreteMeasure,
    target: &'a DiscreteMeasure,
    cost: &'a CostMatrix,
    lambda: f64,
) -> SmoothedDual<'a> {
    SmoothedDual::new(source, target, cost, lambda, Evaluation::LogDomain)
        .expect("measure sizes must match the cost matrix and lambda must be > 0")
}

/// `E_lambda(psi)`. Panics on inconsistent sizes or `lambda <= 0`.
pub fn smoothed_energy(
    psi: &[f64],
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    lambda: f64,
) -> f64 {
    log_domain(source, target, cost, lambda).smoothed_energy(psi)
}

pub fn smoothed_gradient(
    psi: &[f64],
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    lambda: f64,
) -> Vec<f64> {
    log_domain(source, target, cost, lambda).gradient(psi)
}

pub fn hessian_apply(
    psi: &[f64],
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    lambda: f64,
    direction: &[f64],
) -> Vec<f64> {
    log_domain(source, target, cost, lambda).hessian_apply(psi, direction)
}

pub fn recover_plan(
    psi: &[f64],
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    lambda: f64,
) -> TransportPlan {
    log_domain(source, target, cost, lambda).plan(psi)
}
