//! Runs the selected solvers on one instance and writes traces + summary.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use smoothot::dual::Evaluation;
use smoothot::metrics::smoothing_bound;
use smoothot::solvers::TRACE_HEADER;
use smoothot::{EvalReport, Problem, SmoothingParams, SolveOutcome, SolveStatus, SolverRegistry, SolverSettings};

use crate::config::{CostKind, ExperimentConfig, P_SWEEP};
use crate::instance::{generate_instance, Instance};
use crate::BenchError;

pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Clone, Debug, Serialize)]
pub struct SolverSummary {
    pub solver: String,
    #[serde(flatten)]
    pub status: SolveStatus,
    pub iterations: usize,
    pub wall_ms: f64,
    pub report: EvalReport,
    pub trace_csv: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentSummary {
    pub cost: String,
    pub seed: u64,
    pub m: usize,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: f64,
    pub eta: f64,
    pub stop_rel_tol: f64,
    pub max_iters: usize,
    pub centered: bool,
    pub kernel_mode: bool,
    /// `C_max - C_min` of the original cost.
    pub cost_range: f64,
    pub cost_shift: f64,
    pub lambda: f64,
    /// `2 lambda log n`
    pub bound: f64,
    pub oracle_cost: Option<f64>,
    pub solvers: Vec<SolverSummary>,
}

impl ExperimentSummary {
    pub fn solver(&self, name: &str) -> Option<&SolverSummary> {
        self.solvers.iter().find(|s| s.solver == name)
    }

    pub fn any_failure(&self) -> bool {
        self.solvers.iter().any(|s| s.status.is_failure())
    }

    /// 0 on success, 2 if any solver hit a numerical failure.
    pub fn exit_code(&self) -> i32 {
        if self.any_failure() {
            2
        } else {
            0
        }
    }
}

/// Generates the configured instance and runs it; see [`run_on_instance`].
pub fn run_experiment(config: &ExperimentConfig, registry: &SolverRegistry) -> Result<ExperimentSummary, BenchError> {
    config.validate(&registry.names())?;
    let instance = generate_instance(config)?;
    run_on_instance(config, registry, &instance)
}

/// Centers the cost (unless disabled), sets `lambda = R / T`, runs each
/// solver in order, and writes `<solver>_trace.csv` plus `summary.json`
/// into `config.out`. Numerical failures are recorded, not raised.
pub fn run_on_instance(
    config: &ExperimentConfig,
    registry: &SolverRegistry,
    instance: &Instance,
) -> Result<ExperimentSummary, BenchError> {
    config.validate(&registry.names())?;
    let (m, n) = instance.cost.shape();
    if config.solvers.iter().any(|s| s == "exact") && m * n > config.exact.max_cells {
        return Err(BenchError::Config(format!(
            "exact solver refused: {m}x{n} = {} cells exceeds the cap of {}",
            m * n,
            config.exact.max_cells
        )));
    }
    let cost = if config.center { instance.cost.center() } else { instance.cost.clone() };
    let lambda = SmoothingParams::from_divisor(&cost, config.t)?.lambda();
    let settings = SolverSettings {
        eta: config.eta,
        max_iters: config.max_iters,
        stop_rel_tol: config.stop_rel_tol,
        trace_every: config.trace_every,
        evaluation: if config.kernel_mode { Evaluation::Kernel } else { Evaluation::LogDomain },
        exact: config.exact,
    };
    let problem = Problem { source: &instance.source, target: &instance.target, cost: &cost, lambda };

    std::fs::create_dir_all(&config.out)?;
    let mut outcomes = Vec::with_capacity(config.solvers.len());
    for name in &config.solvers {
        let solver = registry.create(name, &settings)?;
        let outcome = solver.solve(&problem)?;
        let csv = config.out.join(format!("{name}_trace.csv"));
        write_trace(&outcome, &csv)?;
        outcomes.push((outcome, csv));
    }

    let oracle_cost = outcomes
        .iter()
        .find(|(o, _)| o.solver == "exact")
        .map(|(o, _)| o.ot_cost_estimate);
    let solvers = outcomes
        .into_iter()
        .map(|(o, csv)| {
            let mut report = EvalReport::new(o.ot_cost_estimate, o.plan_cost, o.marginal_dev, lambda, n);
            if let Some(gt) = oracle_cost {
                report = report.with_oracle(gt);
            }
            SolverSummary {
                solver: o.solver,
                status: o.status,
                iterations: o.iterations,
                wall_ms: o.wall_ms,
                report,
                trace_csv: csv.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
            }
        })
        .collect();

    let summary = ExperimentSummary {
        cost: config.cost.to_string(),
        seed: config.seed,
        m,
        n,
        t: config.t,
        eta: config.eta,
        stop_rel_tol: config.stop_rel_tol,
        max_iters: config.max_iters,
        centered: config.center,
        kernel_mode: config.kernel_mode,
        cost_range: instance.cost.range(),
        cost_shift: cost.shift(),
        lambda,
        bound: smoothing_bound(lambda, n),
        oracle_cost,
        solvers,
    };
    let mut w = BufWriter::new(File::create(config.out.join(SUMMARY_FILE))?);
    serde_json::to_writer_pretty(&mut w, &summary)?;
    writeln!(w)?;
    w.flush()?;
    Ok(summary)
}

/// Runs the configuration once per exponent, each into `out/p=<p>/`.
/// Non-power costs run once, unchanged.
pub fn run_sweep(
    config: &ExperimentConfig,
    exponents: &[f64],
    registry: &SolverRegistry,
) -> Result<Vec<ExperimentSummary>, BenchError> {
    if !matches!(config.cost, CostKind::Power(_)) {
        return Ok(vec![run_experiment(config, registry)?]);
    }
    exponents
        .iter()
        .map(|&p| {
            let cfg = ExperimentConfig {
                cost: CostKind::Power(p),
                out: sweep_dir(&config.out, p),
                ..config.clone()
            };
            run_experiment(&cfg, registry)
        })
        .collect()
}

/// Default exponents for [`run_sweep`].
pub fn default_exponents() -> &'static [f64] {
    &P_SWEEP
}

pub fn sweep_dir(out: &Path, p: f64) -> PathBuf {
    out.join(format!("p={p}"))
}

/// Iterative solvers write their trace; the exact solver writes a single
/// row with `E = -cost` (strong duality) and `E_lambda = NaN`.
fn write_trace(outcome: &SolveOutcome, path: &Path) -> Result<(), BenchError> {
    let mut w = BufWriter::new(File::create(path)?);
    match &outcome.trace {
        Some(trace) => trace.write_csv(&mut w)?,
        None => {
            writeln!(w, "{TRACE_HEADER}")?;
            writeln!(
                w,
                "{},{:e},{:e},{:e},{:e},{:.3}",
                outcome.iterations,
                -outcome.ot_cost_estimate,
                f64::NAN,
                outcome.plan_cost,
                outcome.marginal_dev,
                outcome.wall_ms
            )?;
        }
    }
    w.flush()?;
    Ok(())
}
