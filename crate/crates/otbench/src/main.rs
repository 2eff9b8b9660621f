use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otbench::config::read_config;
use otbench::{generate_instance, run_sweep, write_instance, BenchError, CostKind, ExperimentConfig, P_SWEEP};
use smoothot::SolverRegistry;

/// Smoothed-dual optimal transport benchmark harness.
#[derive(Parser)]
#[command(name = "otbench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run solvers on one instance (or one per exponent for `--p a,b,..`).
    Run(RunArgs),
    /// Write source/target measures and the cost matrix without solving.
    Generate(InstanceArgs),
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    instance: InstanceArgs,
    /// Smoothing divisor: lambda = R / T.
    #[arg(long = "T", short = 'T')]
    t: Option<f64>,
    /// FISTA step multiplier (step = eta * lambda).
    #[arg(long)]
    eta: Option<f64>,
    /// Comma-separated subset of fista, sinkhorn, exact.
    #[arg(long, alias = "solver")]
    solvers: Option<String>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Relative change of the cost estimate that stops a solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    trace_every: Option<usize>,
    /// Run on the raw cost instead of the midpoint-centered one.
    #[arg(long)]
    no_center: bool,
    /// Evaluate with the exponentiated kernel instead of log-sum-exp.
    #[arg(long)]
    kernel_mode: bool,
    /// Largest m*n accepted by the exact solver.
    #[arg(long)]
    max_cells: Option<usize>,
}

#[derive(Args)]
struct InstanceArgs {
    /// Flat key=value file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// sed-paper, sphere-paper or p-sweep; applied before the config file.
    #[arg(long)]
    preset: Option<String>,
    /// sqeuclidean, power or spherical.
    #[arg(long)]
    cost: Option<String>,
    /// Exponent of the power cost; a comma list runs a sweep.
    #[arg(long)]
    p: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    /// gaussian:<mean> or uniform:<lo>:<hi>, optional :sphere suffix.
    #[arg(long)]
    source_dist: Option<String>,
    #[arg(long)]
    target_dist: Option<String>,
    /// Grayscale image for the source measure.
    #[arg(long)]
    source_image: Option<PathBuf>,
    #[arg(long)]
    target_image: Option<PathBuf>,
    /// Mass given to zero pixels before normalizing.
    #[arg(long)]
    noise: Option<f64>,
    /// Side of the synthetic images.
    #[arg(long)]
    size: Option<usize>,
    /// Source measure in text format (as written by `generate`).
    #[arg(long)]
    source_file: Option<PathBuf>,
    #[arg(long)]
    target_file: Option<PathBuf>,
    /// Cost matrix file (.bin binary, otherwise text).
    #[arg(long)]
    cost_file: Option<PathBuf>,
}

impl InstanceArgs {
    /// Returns the config plus the exponent list when `--p` names several.
    fn build(&self) -> Result<(ExperimentConfig, Vec<f64>), BenchError> {
        let mut cfg = ExperimentConfig::default();
        if let Some(name) = &self.preset {
            cfg.set("preset", name)?;
        }
        if let Some(path) = &self.config {
            cfg.apply_text(&read_config(path)?)?;
        }
        let mut set = |k: &str, v: Option<String>| match v {
            Some(v) => cfg.set(k, &v),
            None => Ok(()),
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string());
        set("cost", self.cost.clone())?;
        set("seed", self.seed.map(|v| v.to_string()))?;
        set("out", path(&self.out))?;
        set("m", self.m.map(|v| v.to_string()))?;
        set("n", self.n.map(|v| v.to_string()))?;
        set("d", self.d.map(|v| v.to_string()))?;
        set("source_dist", self.source_dist.clone())?;
        set("target_dist", self.target_dist.clone())?;
        set("source_image", path(&self.source_image))?;
        set("target_image", path(&self.target_image))?;
        set("size", self.size.map(|v| v.to_string()))?;
        set("noise", self.noise.map(|v| v.to_string()))?;
        set("source_file", path(&self.source_file))?;
        set("target_file", path(&self.target_file))?;
        set("cost_file", path(&self.cost_file))?;

        let mut exponents = Vec::new();
        if let Some(list) = &self.p {
            for item in list.split(',') {
                cfg.set("p", item)?;
                if let CostKind::Power(p) = cfg.cost {
                    exponents.push(p);
                }
            }
        } else if self.preset.as_deref() == Some("p-sweep") && self.cost.is_none() {
            exponents.extend(P_SWEEP);
        }
        Ok((cfg, exponents))
    }
}

fn run(args: &RunArgs) -> Result<i32, BenchError> {
    let (mut cfg, exponents) = args.instance.build()?;
    let mut set = |k: &str, v: Option<String>| match v {
        Some(v) => cfg.set(k, &v),
        None => Ok(()),
    };
    set("T", args.t.map(|v| v.to_string()))?;
    set("eta", args.eta.map(|v| v.to_string()))?;
    set("solvers", args.solvers.clone())?;
    set("max_iters", args.max_iters.map(|v| v.to_string()))?;
    set("tol", args.tol.map(|v| v.to_string()))?;
    set("trace_every", args.trace_every.map(|v| v.to_string()))?;
    set("max_cells", args.max_cells.map(|v| v.to_string()))?;
    if args.no_center {
        cfg.center = false;
    }
    if args.kernel_mode {
        cfg.kernel_mode = true;
    }

    let registry = SolverRegistry::with_builtins();
    let summaries = if exponents.len() > 1 {
        run_sweep(&cfg, &exponents, &registry)?
    } else {
        vec![otbench::run_experiment(&cfg, &registry)?]
    };
    for s in &summaries {
        println!("# cost={} seed={} m={} n={} lambda={:e} bound={:e}", s.cost, s.seed, s.m, s.n, s.lambda, s.bound);
        for r in &s.solvers {
            let status = serde_json::to_value(r.status)?;
            println!(
                "{:<8} {:<17} iters={:<6} estimate={:.12e} plan_cost={:.12e} marginal_dev={:.3e} wall_ms={:.1}",
                r.solver,
                status["status"].as_str().unwrap_or("?"),
                r.iterations,
                r.report.ot_cost_estimate,
                r.report.plan_cost,
                r.report.marginal_dev,
                r.wall_ms,
            );
        }
    }
    Ok(summaries.iter().map(|s| s.exit_code()).max().unwrap_or(0))
}

fn generate(args: &InstanceArgs) -> Result<i32, BenchError> {
    let (cfg, exponents) = args.build()?;
    let jobs: Vec<ExperimentConfig> = if exponents.len() > 1 {
        exponents
            .iter()
            .map(|&p| ExperimentConfig {
                cost: CostKind::Power(p),
                out: otbench::experiment::sweep_dir(&cfg.out, p),
                ..cfg.clone()
            })
            .collect()
    } else {
        vec![cfg]
    };
    for job in &jobs {
        let instance = generate_instance(job)?;
        let files = write_instance(&instance, &job.out)?;
        println!(
            "{} {} {} ({}x{}, cost range {:e})",
            files.source.display(),
            files.target.display(),
            files.cost.display(),
            instance.source.len(),
            instance.target.len(),
            instance.cost.range()
        );
    }
    Ok(0)
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors, which is our numerical-failure code
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => run(args),
        Command::Generate(args) => generate(args),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("otbench: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
