//! Name-keyed registry of interchangeable transport solvers.
//!
//! ```
//! use smoothot::{SolverRegistry, SolverSettings};
//! let registry = SolverRegistry::with_builtins();
//! assert_eq!(registry.names(), ["fista", "sinkhorn", "exact"]);
//! let solver = registry.create("sinkhorn", &SolverSettings::default()).unwrap();
//! assert_eq!(solver.name(), "sinkhorn");
//! ```

use std::time::Instant;

use crate::costs::CostMatrix;
use crate::dual::{Evaluation, Potential, TransportPlan};
use crate::error::{OtError, Result};
use crate::exact::{transportation_simplex, ExactOptions};
use crate::measures::DiscreteMeasure;
use crate::metrics::marginal_deviation;
use crate::solvers::{
    fista_solve, sinkhorn_solve, FistaConfig, SinkhornConfig, SolveStatus, SolveTrace,
};

/// One OT instance. `cost` may be centered; reported costs undo the shift.
#[derive(Clone, Copy)]
pub struct Problem<'a> {
    pub source: &'a DiscreteMeasure,
    pub target: &'a DiscreteMeasure,
    pub cost: &'a CostMatrix,
    pub lambda: f64,
}

/// Knobs shared by every registered solver; each reads what it needs.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverSettings {
    pub eta: f64,
    pub max_iters: usize,
    pub stop_rel_tol: f64,
    pub trace_every: usize,
    pub evaluation: Evaluation,
    pub exact: ExactOptions,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let f = FistaConfig::default();
        Self {
            eta: f.eta,
            max_iters: f.max_iters,
            stop_rel_tol: f.stop_rel_tol,
            trace_every: f.trace_every,
            evaluation: Evaluation::LogDomain,
            exact: ExactOptions::default(),
        }
    }
}

impl SolverSettings {
    pub fn fista(&self) -> FistaConfig {
        FistaConfig {
            eta: self.eta,
            max_iters: self.max_iters,
            stop_rel_tol: self.stop_rel_tol,
            trace_every: self.trace_every,
            evaluation: self.evaluation,
        }
    }

    pub fn sinkhorn(&self) -> SinkhornConfig {
        SinkhornConfig {
            max_iters: self.max_iters,
            stop_rel_tol: self.stop_rel_tol,
            trace_every: self.trace_every,
            evaluation: self.evaluation,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub solver: String,
    pub plan: TransportPlan,
    pub potential: Option<Potential>,
    pub trace: Option<SolveTrace>,
    pub status: SolveStatus,
    pub iterations: usize,
    /// `-E(psi)` for dual methods, `<P, C>` otherwise; uncentered units.
    pub ot_cost_estimate: f64,
    /// `<P, C>` in uncentered units.
    pub plan_cost: f64,
    pub marginal_dev: f64,
    pub wall_ms: f64,
}

pub trait Solver: Send + Sync {
    fn name(&self) -> &str;
    fn solve(&self, problem: &Problem<'_>) -> Result<SolveOutcome>;
}

pub struct FistaSolver(pub FistaConfig);

impl Solver for FistaSolver {
    fn name(&self) -> &str {
        "fista"
    }

    fn solve(&self, p: &Problem<'_>) -> Result<SolveOutcome> {
        let start = Instant::now();
        let res = fista_solve(p.source, p.target, p.cost, p.lambda, &self.0)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        Ok(SolveOutcome {
            solver: self.name().into(),
            ot_cost_estimate: res.ot_cost_estimate(),
            plan_cost: res.plan_cost(),
            marginal_dev: marginal_deviation(&res.plan, p.source, p.target),
            status: res.status(),
            iterations: res.iterations,
            plan: res.plan,
            potential: Some(res.potential),
            trace: Some(res.trace),
            wall_ms,
        })
    }
}

pub struct SinkhornSolver(pub SinkhornConfig);

impl Solver for SinkhornSolver {
    fn name(&self) -> &str {
        "sinkhorn"
    }

    fn solve(&self, p: &Problem<'_>) -> Result<SolveOutcome> {
        let start = Instant::now();
        let res = sinkhorn_solve(p.source, p.target, p.cost, p.lambda, &self.0)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let potential = Potential::new(res.col_potential.clone()).ok();
        Ok(SolveOutcome {
            solver: self.name().into(),
            ot_cost_estimate: res.plan_cost(),
            plan_cost: res.plan_cost(),
            marginal_dev: marginal_deviation(&res.plan, p.source, p.target),
            status: res.status(),
            iterations: res.iterations,
            plan: res.plan,
            potential,
            trace: Some(res.trace),
            wall_ms,
        })
    }
}

pub struct ExactSolver(pub ExactOptions);

impl Solver for ExactSolver {
    fn name(&self) -> &str {
        "exact"
    }

    fn solve(&self, p: &Problem<'_>) -> Result<SolveOutcome> {
        let start = Instant::now();
        let basis = transportation_simplex(p.source, p.target, p.cost, &self.0)?;
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        let plan = basis.plan();
        // total mass is one, so the centering shift adds straight back
        let cost = basis.cost(p.cost) + p.cost.shift();
        Ok(SolveOutcome {
            solver: self.name().into(),
            marginal_dev: marginal_deviation(&plan, p.source, p.target),
            plan,
            potential: None,
            trace: None,
            status: SolveStatus::Converged,
            iterations: basis.pivots,
            ot_cost_estimate: cost,
            plan_cost: cost,
            wall_ms,
        })
    }
}

type Factory = Box<dyn Fn(&SolverSettings) -> Box<dyn Solver> + Send + Sync>;

#[derive(Default)]
pub struct SolverRegistry {
    entries: Vec<(String, Factory)>,
}

impl SolverRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_builtins() -> Self {
        let mut r = Self::new();
        r.register("fista", |s| Box::new(FistaSolver(s.fista())));
        r.register("sinkhorn", |s| Box::new(SinkhornSolver(s.sinkhorn())));
        r.register("exact", |s| Box::new(ExactSolver(s.exact)));
        r
    }

    /// Adds or replaces a solver under `name`.
    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&SolverSettings) -> Box<dyn Solver> + Send + Sync + 'static,
    {
        if let Some(slot) = self.entries.iter_mut().find(|(n, _)| n == name) {
            slot.1 = Box::new(factory);
        } else {
            self.entries.push((name.to_string(), Box::new(factory)));
        }
    }

    pub fn names(&self) -> Vec<&str> {
        self.entries.iter().map(|(n, _)| n.as_str()).collect()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.iter().any(|(n, _)| n == name)
    }

    pub fn create(&self, name: &str, settings: &SolverSettings) -> Result<Box<dyn Solver>> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, f)| f(settings))
            .ok_or_else(|| OtError::UnknownSolver(name.to_string()))
    }
}
