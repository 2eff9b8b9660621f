//! Experiment configuration: presets, `key=value` files and validation.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use smoothot::measures::PointDist;
use smoothot::ExactOptions;

use crate::BenchError;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum CostKind {
    SqEuclidean,
    /// `|x - y|^p`
    Power(f64),
    Spherical,
}

impl fmt::Display for CostKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CostKind::SqEuclidean => write!(f, "sqeuclidean"),
            CostKind::Power(p) => write!(f, "power({p})"),
            CostKind::Spherical => write!(f, "spherical"),
        }
    }
}

/// A point distribution plus whether samples are projected onto the sphere.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PointSpec {
    pub dist: PointDist,
    pub sphere: bool,
}

impl FromStr for PointSpec {
    type Err = BenchError;

    /// `gaussian:<mean>` or `uniform:<lo>:<hi>`, with an optional `:sphere` suffix.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut parts: Vec<&str> = s.split(':').map(str::trim).collect();
        let sphere = parts.last() == Some(&"sphere");
        if sphere {
            parts.pop();
        }
        let num = |t: &str| parse_f64("distribution parameter", t);
        let dist = match parts.as_slice() {
            ["gaussian", mean] => PointDist::Gaussian { mean: num(mean)? },
            ["uniform", lo, hi] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if !(lo < hi) {
                    return Err(BenchError::Config(format!("uniform box needs lo < hi, got {s}")));
                }
                PointDist::UniformBox { lo, hi }
            }
            _ => return Err(BenchError::Config(format!("unknown point distribution '{s}'"))),
        };
        Ok(Self { dist, sphere })
    }
}

impl fmt::Display for PointSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.dist {
            PointDist::Gaussian { mean } => write!(f, "gaussian:{mean}")?,
            PointDist::UniformBox { lo, hi } => write!(f, "uniform:{lo}:{hi}")?,
        }
        if self.sphere {
            write!(f, ":sphere")?;
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum InstanceKind {
    /// Two grayscale images (PGM or any format the `image` crate decodes).
    ImagePair { source: PathBuf, target: PathBuf, noise: f64 },
    /// Two seeded stroke images of `size x size` pixels.
    SyntheticImage { size: usize, noise: f64 },
    RandomPoints { m: usize, n: usize, d: usize, source: PointSpec, target: PointSpec },
    /// Measures in the text format written by `otbench generate`; the cost
    /// is read from `cost` (`.bin` binary, otherwise text) or built from
    /// the configured cost kind.
    Files { source: PathBuf, target: PathBuf, cost: Option<PathBuf> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub cost: CostKind,
    pub instance: InstanceKind,
    pub seed: u64,
    /// Smoothing divisor: `lambda = R / t`.
    pub t: f64,
    pub eta: f64,
    pub solvers: Vec<String>,
    pub max_iters: usize,
    pub stop_rel_tol: f64,
    pub trace_every: usize,
    pub center: bool,
    pub kernel_mode: bool,
    pub exact: ExactOptions,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            cost: CostKind::SqEuclidean,
            instance: InstanceKind::RandomPoints {
                m: 50,
                n: 50,
                d: 2,
                source: PointSpec { dist: PointDist::UniformBox { lo: 0.0, hi: 1.0 }, sphere: false },
                target: PointSpec { dist: PointDist::UniformBox { lo: 0.0, hi: 1.0 }, sphere: false },
            },
            seed: 0,
            t: 500.0,
            eta: 1.0,
            solvers: vec!["fista".into(), "sinkhorn".into()],
            max_iters: 10_000,
            stop_rel_tol: 1e-3,
            trace_every: 1,
            center: true,
            kernel_mode: false,
            exact: ExactOptions::default(),
            out: PathBuf::from("otbench-out"),
        }
    }
}

pub const PRESETS: [&str; 3] = ["sed-paper", "sphere-paper", "p-sweep"];

/// Exponents swept by the `p-sweep` preset.
pub const P_SWEEP: [f64; 4] = [1.5, 2.0, 3.0, 4.0];

impl ExperimentConfig {
    /// Named reproduction setups. `p-sweep` starts at `p = 2`; use
    /// [`crate::run_sweep`] to cover all of [`P_SWEEP`].
    pub fn preset(name: &str) -> Result<Self, BenchError> {
        let base = Self::default();
        let cfg = match name {
            "sed-paper" => Self {
                cost: CostKind::SqEuclidean,
                instance: InstanceKind::SyntheticImage { size: 28, noise: 0.01 },
                t: 700.0,
                eta: 50.0,
                solvers: vec!["fista".into(), "sinkhorn".into()],
                ..base
            },
            "sphere-paper" => Self {
                cost: CostKind::Spherical,
                instance: InstanceKind::RandomPoints {
                    m: 500,
                    n: 500,
                    d: 3,
                    source: PointSpec { dist: PointDist::Gaussian { mean: 3.0 }, sphere: true },
                    target: PointSpec { dist: PointDist::UniformBox { lo: 0.0, hi: 1.0 }, sphere: true },
                },
                t: 700.0,
                eta: 0.02,
                solvers: vec!["fista".into(), "sinkhorn".into()],
                ..base
            },
            "p-sweep" => Self {
                cost: CostKind::Power(2.0),
                instance: p_sweep_instance(),
                t: 500.0,
                // squared-Euclidean-like family: the step tuned for SED, run
                // to a tight tolerance so both dual values are converged
                eta: 50.0,
                stop_rel_tol: 1e-10,
                max_iters: 100_000,
                solvers: vec!["fista".into(), "sinkhorn".into(), "exact".into()],
                ..base
            },
            other => {
                return Err(BenchError::Config(format!(
                    "unknown preset '{other}' (known: {})",
                    PRESETS.join(", ")
                )))
            }
        };
        Ok(cfg)
    }

    /// Applies one `key=value` setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), BenchError> {
        let value = value.trim();
        match key.trim() {
            "preset" => *self = Self { out: self.out.clone(), ..Self::preset(value)? },
            "cost" => {
                let p = match self.cost {
                    CostKind::Power(p) => p,
                    _ => 2.0,
                };
                self.cost = match value {
                    "sqeuclidean" => CostKind::SqEuclidean,
                    "power" => CostKind::Power(p),
                    "spherical" => CostKind::Spherical,
                    other => return Err(BenchError::Config(format!("unknown cost '{other}'"))),
                }
            }
            "p" => self.cost = CostKind::Power(parse_f64("p", value)?),
            "T" | "t" => self.t = parse_f64("T", value)?,
            "eta" => self.eta = parse_f64("eta", value)?,
            "solvers" => {
                self.solvers = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(String::from)
                    .collect()
            }
            "seed" => self.seed = parse_num("seed", value)?,
            "max_iters" | "max-iters" => self.max_iters = parse_num("max_iters", value)?,
            "tol" | "stop_rel_tol" => self.stop_rel_tol = parse_f64("tol", value)?,
            "trace_every" | "trace-every" => self.trace_every = parse_num("trace_every", value)?,
            "center" => self.center = parse_bool("center", value)?,
            "kernel_mode" | "kernel-mode" => self.kernel_mode = parse_bool("kernel_mode", value)?,
            "max_cells" | "max-cells" => self.exact.max_cells = parse_num("max_cells", value)?,
            "out" => self.out = PathBuf::from(value),
            "instance" => {
                self.instance = match value {
                    "synthetic_image" => InstanceKind::SyntheticImage { size: 28, noise: 0.01 },
                    "random_points" => Self::default().instance,
                    "image_pair" => InstanceKind::ImagePair {
                        source: PathBuf::new(),
                        target: PathBuf::new(),
                        noise: 0.01,
                    },
                    other => return Err(BenchError::Config(format!("unknown instance kind '{other}'"))),
                }
            }
            "size" => match &mut self.instance {
                InstanceKind::SyntheticImage { size, .. } => *size = parse_num("size", value)?,
                _ => return Err(instance_key("size", "synthetic_image")),
            },
            "noise" => match &mut self.instance {
                InstanceKind::SyntheticImage { noise, .. } | InstanceKind::ImagePair { noise, .. } => {
                    *noise = parse_f64("noise", value)?
                }
                _ => return Err(instance_key("noise", "synthetic_image or image_pair")),
            },
            k @ ("source_image" | "target_image") => {
                if !matches!(self.instance, InstanceKind::ImagePair { .. }) {
                    self.instance = InstanceKind::ImagePair {
                        source: PathBuf::new(),
                        target: PathBuf::new(),
                        noise: 0.01,
                    };
                }
                if let InstanceKind::ImagePair { source, target, .. } = &mut self.instance {
                    let slot = if k == "source_image" { source } else { target };
                    *slot = PathBuf::from(value);
                }
            }
            k @ ("source_file" | "target_file" | "cost_file") => {
                if !matches!(self.instance, InstanceKind::Files { .. }) {
                    self.instance =
                        InstanceKind::Files { source: PathBuf::new(), target: PathBuf::new(), cost: None };
                }
                if let InstanceKind::Files { source, target, cost } = &mut self.instance {
                    match k {
                        "source_file" => *source = PathBuf::from(value),
                        "target_file" => *target = PathBuf::from(value),
                        _ => *cost = Some(PathBuf::from(value)),
                    }
                }
            }
            k @ ("m" | "n" | "d" | "source_dist" | "target_dist") => {
                let InstanceKind::RandomPoints { m, n, d, source, target } = &mut self.instance else {
                    return Err(instance_key(k, "random_points"));
                };
                match k {
                    "m" => *m = parse_num("m", value)?,
                    "n" => *n = parse_num("n", value)?,
                    "d" => *d = parse_num("d", value)?,
                    "source_dist" => *source = value.parse()?,
                    _ => *target = value.parse()?,
                }
            }
            other => return Err(BenchError::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Parses flat `key=value` text; `#` starts a comment. A `preset` line
    /// resets everything set before it, so put it first.
    pub fn parse(text: &str) -> Result<Self, BenchError> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Applies `key=value` lines on top of the current settings.
    pub fn apply_text(&mut self, text: &str) -> Result<(), BenchError> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                BenchError::Config(format!("line {}: expected key=value, got '{line}'", lineno + 1))
            })?;
            self.set(k, v)
                .map_err(|e| BenchError::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, BenchError> {
        Self::parse(&read_config(path)?)
    }

    /// Problem size `(m, n)` when it is known without reading files.
    pub fn size_hint(&self) -> Option<(usize, usize)> {
        match &self.instance {
            InstanceKind::SyntheticImage { size, .. } => Some((size * size, size * size)),
            InstanceKind::RandomPoints { m, n, .. } => Some((*m, *n)),
            InstanceKind::ImagePair { .. } | InstanceKind::Files { .. } => None,
        }
    }

    pub fn validate(&self, known_solvers: &[&str]) -> Result<(), BenchError> {
        let bad = |msg: String| Err(BenchError::Config(msg));
        if !(self.t > 0.0) || !self.t.is_finite() {
            return bad(format!("T must be > 0, got {}", self.t));
        }
        if !(self.eta > 0.0) || !self.eta.is_finite() {
            return bad(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.stop_rel_tol > 0.0) {
            return bad(format!("tol must be > 0, got {}", self.stop_rel_tol));
        }
        if self.max_iters == 0 || self.trace_every == 0 {
            return bad("max_iters and trace_every must be >= 1".into());
        }
        if self.solvers.is_empty() {
            return bad("select at least one solver".into());
        }
        for (i, s) in self.solvers.iter().enumerate() {
            if !known_solvers.contains(&s.as_str()) {
                return bad(format!("unknown solver '{s}' (known: {})", known_solvers.join(", ")));
            }
            if self.solvers[..i].contains(s) {
                return bad(format!("solver '{s}' listed twice"));
            }
        }
        if let CostKind::Power(p) = self.cost {
            if !(p > 0.0) {
                return bad(format!("p must be > 0, got {p}"));
            }
        }
        match &self.instance {
            InstanceKind::SyntheticImage { size, noise } => {
                if *size < 2 {
                    return bad("synthetic image size must be >= 2".into());
                }
                if !(*noise > 0.0) {
                    return bad("synthetic images need noise > 0 so every pixel keeps mass".into());
                }
            }
            InstanceKind::ImagePair { source, target, noise } => {
                if source.as_os_str().is_empty() || target.as_os_str().is_empty() {
                    return bad("image_pair needs source_image and target_image".into());
                }
                if !(*noise >= 0.0) {
                    return bad(format!("noise must be >= 0, got {noise}"));
                }
            }
            InstanceKind::RandomPoints { m, n, d, .. } => {
                if *m == 0 || *n == 0 || *d == 0 {
                    return bad("m, n and d must be >= 1".into());
                }
            }
            InstanceKind::Files { source, target, .. } => {
                if source.as_os_str().is_empty() || target.as_os_str().is_empty() {
                    return bad("file instances need source_file and target_file".into());
                }
            }
        }
        if self.cost == CostKind::Spherical && matches!(self.instance, InstanceKind::SyntheticImage { .. } | InstanceKind::ImagePair { .. }) {
            return bad("the spherical cost needs sphere-projected random points".into());
        }
        if self.solvers.iter().any(|s| s == "exact") {
            if let Some((m, n)) = self.size_hint() {
                let cells = m * n;
                if cells > self.exact.max_cells {
                    return bad(format!(
                        "exact solver refused: {m}x{n} = {cells} cells exceeds the cap of {}",
                        self.exact.max_cells
                    ));
                }
            }
        }
        Ok(())
    }
}

fn p_sweep_instance() -> InstanceKind {
    InstanceKind::RandomPoints {
        m: 100,
        n: 100,
        d: 5,
        source: PointSpec { dist: PointDist::Gaussian { mean: 3.0 }, sphere: false },
        target: PointSpec { dist: PointDist::UniformBox { lo: -5.0, hi: -4.0 }, sphere: false },
    }
}

pub fn read_config(path: &Path) -> Result<String, BenchError> {
    std::fs::read_to_string(path)
        .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", path.display())))
}

fn instance_key(key: &str, kind: &str) -> BenchError {
    BenchError::Config(format!("'{key}' only applies to {kind} instances; set instance= first"))
}

fn parse_f64(key: &str, v: &str) -> Result<f64, BenchError> {
    v.parse::<f64>()
        .map_err(|_| BenchError::Config(format!("{key}: '{v}' is not a number")))
}

fn parse_num<T: FromStr>(key: &str, v: &str) -> Result<T, BenchError> {
    v.parse::<T>()
        .map_err(|_| BenchError::Config(format!("{key}: '{v}' is not a non-negative integer")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool, BenchError> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(BenchError::Config(format!("{key}: '{v}' is not a boolean"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const KNOWN: [&str; 3] = ["fista", "sinkhorn", "exact"];

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let cfg = ExperimentConfig::preset(name).unwrap();
            cfg.validate(&KNOWN).unwrap();
        }
        let sed = ExperimentConfig::preset("sed-paper").unwrap();
        assert_eq!((sed.t, sed.eta), (700.0, 50.0));
        let sph = ExperimentConfig::preset("sphere-paper").unwrap();
        assert_eq!((sph.t, sph.eta, sph.cost), (700.0, 0.02, CostKind::Spherical));
        assert!(ExperimentConfig::preset("mnist").is_err());
    }

    #[test]
    fn parses_key_value_text() {
        let cfg = ExperimentConfig::parse(
            "# comment\npreset = p-sweep\np=3\nseed=7  # trailing\nsolvers=fista, exact\ntol=1e-8\ncenter=false\n",
        )
        .unwrap();
        assert_eq!(cfg.cost, CostKind::Power(3.0));
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.solvers, ["fista", "exact"]);
        assert_eq!(cfg.stop_rel_tol, 1e-8);
        assert!(!cfg.center);
        assert_eq!(cfg.t, 500.0);
    }

    #[test]
    fn random_point_keys() {
        let mut cfg = ExperimentConfig::default();
        cfg.set("source_dist", "gaussian:3:sphere").unwrap();
        cfg.set("target_dist", "uniform:-5:-4").unwrap();
        cfg.set("m", "12").unwrap();
        let InstanceKind::RandomPoints { m, source, target, .. } = cfg.instance else { panic!() };
        assert_eq!(m, 12);
        assert_eq!(source, PointSpec { dist: PointDist::Gaussian { mean: 3.0 }, sphere: true });
        assert_eq!(target.to_string(), "uniform:-5:-4");
        assert!("uniform:1:0".parse::<PointSpec>().is_err());
        assert!("cauchy:1".parse::<PointSpec>().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        let err = |text: &str| {
            let cfg = ExperimentConfig::parse(text)?;
            cfg.validate(&KNOWN)
        };
        assert!(err("T=0").is_err());
        assert!(err("T=-3").is_err());
        assert!(err("solvers=").is_err());
        assert!(err("solvers=fista,fista").is_err());
        assert!(err("solvers=newton").is_err());
        assert!(err("bogus=1").is_err());
        assert!(err("seed=abc").is_err());
        assert!(err("m").is_err());
        assert!(err("preset=sed-paper\nm=3").is_err());
        assert!(err("instance=image_pair").is_err());
        // 784 x 784 fits the default cap; a tighter cap must refuse it
        assert!(err("preset=sed-paper\nsolvers=exact").is_ok());
        assert!(err("preset=sed-paper\nsolvers=exact\nmax_cells=1000").is_err());
    }
}
