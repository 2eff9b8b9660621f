//! Exact discrete OT by the transportation simplex.
//!
//! The basis is a spanning tree of the bipartite row/column graph with
//! `m + n - 1` cells, initialized by the northwest-corner rule. Each pivot
//! computes the duals `u_i + v_j = c_ij` on the tree, brings in the
//! lowest-index cell with negative reduced cost, and removes the
//! lowest-index blocking cell of the cycle it closes (Bland's rule).
//! Degenerate zero-flow basic cells are kept as is.

use std::collections::VecDeque;

use ndarray::Array2;

use crate::costs::CostMatrix;
use crate::dual::TransportPlan;
use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;

/// Largest `m * n` the exact oracle accepts by default.
pub const DEFAULT_MAX_CELLS: usize = 1_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ExactOptions {
    pub max_cells: usize,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self { max_cells: DEFAULT_MAX_CELLS }
    }
}

/// Optimal basis with its plan and dual certificate.
#[derive(Clone, Debug)]
pub struct BasisState {
    /// Basic cells `(i, j)`; always `m + n - 1` of them, forming a tree.
    pub cells: Vec<(usize, usize)>,
    pub flows: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub pivots: usize,
    shape: (usize, usize),
}

impl BasisState {
    pub fn plan(&self) -> TransportPlan {
        let mut p = Array2::zeros(self.shape);
        for (&(i, j), &f) in self.cells.iter().zip(&self.flows) {
            p[[i, j]] = f;
        }
        TransportPlan::from_array(p)
    }

    pub fn cost(&self, cost: &CostMatrix) -> f64 {
        self.cells.iter().zip(&self.flows).map(|(&(i, j), f)| f * cost.get(i, j)).sum()
    }

    /// `min_ij c_ij - u_i - v_j`; nonnegative (up to rounding) at optimality.
    pub fn min_reduced_cost(&self, cost: &CostMatrix) -> f64 {
        let (m, n) = self.shape;
        let mut lo = f64::INFINITY;
        for (i, ui) in self.u.iter().enumerate().take(m) {
            for (c, vj) in cost.row(i).iter().zip(&self.v).take(n) {
                lo = lo.min(c - ui - vj);
            }
        }
        lo
    }
}

struct Tableau<'a> {
    m: usize,
    n: usize,
    cost: &'a CostMatrix,
    cells: Vec<(usize, usize)>,
    flows: Vec<f64>,
    /// basic slot of each cell, `usize::MAX` when non-basic
    slot: Vec<usize>,
    /// basic slots touching each node; rows are `0..m`, columns `m..m+n`
    adj: Vec<Vec<usize>>,
}

const NONBASIC: usize = usize::MAX;

impl<'a> Tableau<'a> {
    fn northwest(supply: &[f64], demand: &[f64], cost: &'a CostMatrix) -> Self {
        let (m, n) = (supply.len(), demand.len());
        let mut t = Tableau {
            m,
            n,
            cost,
            cells: Vec::with_capacity(m + n - 1),
            flows: Vec::with_capacity(m + n - 1),
            slot: vec![NONBASIC; m * n],
            adj: vec![Vec::new(); m + n],
        };
        let mut s = supply.to_vec();
        let mut d = demand.to_vec();
        let (mut i, mut j) = (0, 0);
        loop {
            let x = s[i].min(d[j]).max(0.0);
            s[i] -= x;
            d[j] -= x;
            t.add(i, j, x);
            if i == m - 1 && j == n - 1 {
                break;
            }
            // move down when the row is spent, right otherwise; the staircase
            // always has m + n - 1 cells and no cycle
            if j == n - 1 || (i < m - 1 && s[i] <= d[j]) {
                i += 1;
            } else {
                j += 1;
            }
        }
        t
    }

    fn add(&mut self, i: usize, j: usize, flow: f64) {
        let k = self.cells.len();
        self.cells.push((i, j));
        self.flows.push(flow);
        self.slot[i * self.n + j] = k;
        self.adj[i].push(k);
        self.adj[self.m + j].push(k);
    }

    fn other_end(&self, k: usize, node: usize) -> usize {
        let (i, j) = self.cells[k];
        if node == i {
            self.m + j
        } else {
            i
        }
    }

    fn duals(&self) -> (Vec<f64>, Vec<f64>) {
        let (m, n) = (self.m, self.n);
        let mut pot = vec![f64::NAN; m + n];
        pot[0] = 0.0;
        let mut queue = VecDeque::from([0usize]);
        while let Some(node) = queue.pop_front() {
            for &k in &self.adj[node] {
                let other = self.other_end(k, node);
                if pot[other].is_nan() {
                    let (i, j) = self.cells[k];
                    let c = self.cost.get(i, j);
                    // u_i + v_j = c_ij
                    pot[other] = c - pot[node];
                    queue.push_back(other);
                }
            }
        }
        let v = pot.split_off(m);
        (pot, v)
    }

    /// Basic slots on the tree path from column node `m + j` back to row `i`.
    fn path(&self, i: usize, j: usize) -> Vec<usize> {
        let total = self.m + self.n;
        let mut via = vec![NONBASIC; total];
        let mut seen = vec![false; total];
        seen[i] = true;
        let mut queue = VecDeque::from([i]);
        let goal = self.m + j;
        while let Some(node) = queue.pop_front() {
            if node == goal {
                break;
            }
            for &k in &self.adj[node] {
                let other = self.other_end(k, node);
                if !seen[other] {
                    seen[other] = true;
                    via[other] = k;
                    queue.push_back(other);
                }
            }
        }
        let mut out = Vec::new();
        let mut node = goal;
        while node != i {
            let k = via[node];
            out.push(k);
            node = self.other_end(k, node);
        }
        out
    }

    fn pivot(&mut self, i: usize, j: usize) {
        let path = self.path(i, j);
        // path[0] touches column j and loses flow, then signs alternate
        let idx = |k: usize| {
            let (a, b) = self.cells[k];
            a * self.n + b
        };
        let mut leave = path[0];
        for &k in path.iter().step_by(2) {
            let (fk, fl) = (self.flows[k], self.flows[leave]);
            if fk < fl || (fk == fl && idx(k) < idx(leave)) {
                leave = k;
            }
        }
        let theta = self.flows[leave];
        for (pos, &k) in path.iter().enumerate() {
            if pos % 2 == 0 {
                self.flows[k] -= theta;
            } else {
                self.flows[k] += theta;
            }
        }
        self.flows[leave] = 0.0;

        let (li, lj) = self.cells[leave];
        self.slot[li * self.n + lj] = NONBASIC;
        self.adj[li].retain(|&k| k != leave);
        self.adj[self.m + lj].retain(|&k| k != leave);
        self.cells[leave] = (i, j);
        self.flows[leave] = theta;
        self.slot[i * self.n + j] = leave;
        self.adj[i].push(leave);
        self.adj[self.m + j].push(leave);
    }
}

fn check_problem(source: &DiscreteMeasure, target: &DiscreteMeasure, cost: &CostMatrix) -> Result<()> {
    let (m, n) = cost.shape();
    if source.len() != m {
        return Err(OtError::DimensionMismatch { expected: m, got: source.len() });
    }
    if target.len() != n {
        return Err(OtError::DimensionMismatch { expected: n, got: target.len() });
    }
    Ok(())
}

/// Runs the transportation simplex to optimality.
pub fn transportation_simplex(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    options: &ExactOptions,
) -> Result<BasisState> {
    check_problem(source, target, cost)?;
    let (m, n) = cost.shape();
    if m * n > options.max_cells {
        return Err(OtError::TooLarge { cells: m * n, cap: options.max_cells });
    }
    let scale = cost.min().abs().max(cost.max().abs()).max(1.0);
    let tol = 1e-12 * scale;
    let max_pivots = 100 * m * n + 1000;

    let mut tab = Tableau::northwest(source.weights(), target.weights(), cost);
    let mut pivots = 0;
    loop {
        let (u, v) = tab.duals();
        let mut entering = None;
        'scan: for (i, ui) in u.iter().enumerate() {
            for (j, (c, vj)) in cost.row(i).iter().zip(&v).enumerate() {
                if tab.slot[i * n + j] == NONBASIC && c - ui - vj < -tol {
                    entering = Some((i, j));
                    break 'scan;
                }
            }
        }
        let Some((i, j)) = entering else {
            return Ok(BasisState {
                cells: tab.cells,
                flows: tab.flows,
                u,
                v,
                pivots,
                shape: (m, n),
            });
        };
        if pivots == max_pivots {
            return Err(OtError::NoConvergence(format!("transportation simplex exceeded {max_pivots} pivots")));
        }
        tab.pivot(i, j);
        pivots += 1;
    }
}

/// Optimal plan and cost.
pub fn exact_solve(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
    options: &ExactOptions,
) -> Result<(TransportPlan, f64)> {
    let basis = transportation_simplex(source, target, cost, options)?;
    Ok((basis.plan(), basis.cost(cost)))
}

/// Enumerates every spanning-tree basis of the tableau and keeps the
/// cheapest feasible one. Only for instances up to 5 x 5.
pub fn brute_force_solve(
    source: &DiscreteMeasure,
    target: &DiscreteMeasure,
    cost: &CostMatrix,
) -> Result<(TransportPlan, f64)> {
    check_problem(source, target, cost)?;
    let (m, n) = cost.shape();
    if m > 5 || n > 5 {
        return Err(OtError::TooLarge { cells: m * n, cap: 25 });
    }
    let mut search = TreeSearch {
        m,
        n,
        supply: source.weights(),
        demand: target.weights(),
        cost,
        parent: (0..m + n).collect(),
        chosen: Vec::with_capacity(m + n - 1),
        best: None,
    };
    search.recurse(0);
    let (flows, cells, best) = search.best.ok_or_else(|| OtError::NoConvergence("no feasible basis".into()))?;
    let mut p = Array2::zeros((m, n));
    for ((i, j), f) in cells.into_iter().zip(flows) {
        p[[i, j]] = f;
    }
    Ok((TransportPlan::from_array(p), best))
}

type Candidate = (Vec<f64>, Vec<(usize, usize)>, f64);

struct TreeSearch<'a> {
    m: usize,
    n: usize,
    supply: &'a [f64],
    demand: &'a [f64],
    cost: &'a CostMatrix,
    parent: Vec<usize>,
    chosen: Vec<(usize, usize)>,
    best: Option<Candidate>,
}

impl TreeSearch<'_> {
    fn find(&self, mut x: usize) -> usize {
        while self.parent[x] != x {
            x = self.parent[x];
        }
        x
    }

    fn recurse(&mut self, next: usize) {
        let need = self.m + self.n - 1;
        if self.chosen.len() == need {
            self.evaluate();
            return;
        }
        let total = self.m * self.n;
        if total - next < need - self.chosen.len() {
            return;
        }
        let (i, j) = (next / self.n, next % self.n);
        let (ri, rj) = (self.find(i), self.find(self.m + j));
        if ri != rj {
            // union without compression so it can be undone
            self.parent[ri] = rj;
            self.chosen.push((i, j));
            self.recurse(next + 1);
            self.chosen.pop();
            self.parent[ri] = ri;
        }
        self.recurse(next + 1);
    }

    /// Solves the tree's flows by peeling leaves.
    fn evaluate(&mut self) {
        let (m, n) = (self.m, self.n);
        let mut residual: Vec<f64> = self.supply.iter().chain(self.demand).copied().collect();
        let mut degree = vec![0usize; m + n];
        for &(i, j) in &self.chosen {
            degree[i] += 1;
            degree[m + j] += 1;
        }
        let mut flows = vec![f64::NAN; self.chosen.len()];
        let mut done = vec![false; self.chosen.len()];
        for _ in 0..self.chosen.len() {
            let Some((k, leaf)) = self.chosen.iter().enumerate().find_map(|(k, &(i, j))| {
                if done[k] {
                    None
                } else if degree[i] == 1 {
                    Some((k, i))
                } else if degree[m + j] == 1 {
                    Some((k, m + j))
                } else {
                    None
                }
            }) else {
                return;
            };
            let (i, j) = self.chosen[k];
            let other = if leaf == i { m + j } else { i };
            let f = residual[leaf];
            flows[k] = f;
            residual[leaf] = 0.0;
            residual[other] -= f;
            degree[i] -= 1;
            degree[m + j] -= 1;
            done[k] = true;
        }
        if flows.iter().any(|&f| !(f >= -1e-12)) {
            return;
        }
        let total: f64 = self.chosen.iter().zip(&flows).map(|(&(i, j), f)| f * self.cost.get(i, j)).sum();
        if self.best.as_ref().is_none_or(|b| total < b.2) {
            self.best = Some((flows, self.chosen.clone(), total));
        }
    }
}
