//! Seeded instance generation and the on-disk instance layout.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use smoothot::costs::{power_cost, spherical, squared_euclidean};
use smoothot::io::{read_cost_binary, read_cost_text, read_measure, write_cost_binary, write_measure};
use smoothot::measures::{random_measure, stream_rng, SOURCE_STREAM, TARGET_STREAM};
use smoothot::{CostMatrix, DiscreteMeasure};

use crate::config::{CostKind, ExperimentConfig, InstanceKind};
use crate::BenchError;

/// RNG streams for the two synthetic images, disjoint from the point streams.
const SOURCE_IMAGE_STREAM: u64 = 3;
const TARGET_IMAGE_STREAM: u64 = 4;

/// Source, target and uncentered cost.
#[derive(Clone, Debug)]
pub struct Instance {
    pub source: DiscreteMeasure,
    pub target: DiscreteMeasure,
    pub cost: CostMatrix,
}

/// A handwriting-like grayscale image in `[0, 1]`: two or three quadratic
/// Bezier strokes inside the central `20/28` box, drawn with a saturated
/// pen core and a one-pixel antialiased edge, quantized to 8 bits on a black
/// background (the look of a scanned digit). Deterministic in `rng`.
pub fn synthetic_stroke_image<R: Rng + ?Sized>(rng: &mut R, size: usize) -> Vec<Vec<f64>> {
    let s = size as f64;
    let (lo, hi) = (s * 4.0 / 28.0, s * 24.0 / 28.0);
    let scale = s / 28.0;
    let (core, edge) = (0.9 * scale, scale.max(0.5));
    let strokes = rng.random_range(2..=3);
    let mut samples: Vec<(f64, f64)> = Vec::new();
    for _ in 0..strokes {
        let mut pt = || (rng.random_range(lo..hi), rng.random_range(lo..hi));
        let (a, b, c) = (pt(), pt(), pt());
        let steps = 4 * size;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let (u, w) = ((1.0 - t) * (1.0 - t), t * t);
            let v = 2.0 * t * (1.0 - t);
            samples.push((u * a.0 + v * b.0 + w * c.0, u * a.1 + v * b.1 + w * c.1));
        }
    }
    (0..size)
        .map(|r| {
            (0..size)
                .map(|c| {
                    let d = samples
                        .iter()
                        .map(|&(y, x)| (y - r as f64).powi(2) + (x - c as f64).powi(2))
                        .fold(f64::INFINITY, f64::min)
                        .sqrt();
                    let v = (1.0 - (d - core) / edge).clamp(0.0, 1.0);
                    (v * 255.0).round() / 255.0
                })
                .collect()
        })
        .collect()
}

pub fn build_cost(kind: CostKind, source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<CostMatrix, BenchError> {
    Ok(match kind {
        CostKind::SqEuclidean => squared_euclidean(source, target)?,
        CostKind::Power(p) => power_cost(source, target, p)?,
        CostKind::Spherical => spherical(source, target)?,
    })
}

/// Builds the instance described by `config`; same config, same instance.
pub fn generate_instance(config: &ExperimentConfig) -> Result<Instance, BenchError> {
    let (source, target) = match &config.instance {
        InstanceKind::ImagePair { source, target, noise } => (
            DiscreteMeasure::from_pgm(source, *noise)?,
            DiscreteMeasure::from_pgm(target, *noise)?,
        ),
        InstanceKind::SyntheticImage { size, noise } => {
            let a = synthetic_stroke_image(&mut stream_rng(config.seed, SOURCE_IMAGE_STREAM), *size);
            let b = synthetic_stroke_image(&mut stream_rng(config.seed, TARGET_IMAGE_STREAM), *size);
            (
                DiscreteMeasure::from_image_grid(&a, *noise)?,
                DiscreteMeasure::from_image_grid(&b, *noise)?,
            )
        }
        InstanceKind::RandomPoints { m, n, d, source, target } => (
            random_measure(&mut stream_rng(config.seed, SOURCE_STREAM), *m, *d, source.dist, source.sphere)?,
            random_measure(&mut stream_rng(config.seed, TARGET_STREAM), *n, *d, target.dist, target.sphere)?,
        ),
        InstanceKind::Files { source, target, cost } => {
            let open = |p: &Path| -> Result<BufReader<File>, BenchError> {
                File::open(p)
                    .map(BufReader::new)
                    .map_err(|e| BenchError::Config(format!("cannot read {}: {e}", p.display())))
            };
            let (s, t) = (read_measure(open(source)?)?, read_measure(open(target)?)?);
            if let Some(path) = cost {
                let c = if path.extension().is_some_and(|e| e == "bin") {
                    read_cost_binary(open(path)?)?
                } else {
                    read_cost_text(open(path)?)?
                };
                if c.shape() != (s.len(), t.len()) {
                    return Err(BenchError::Config(format!(
                        "cost is {:?} but the measures have {} and {} atoms",
                        c.shape(),
                        s.len(),
                        t.len()
                    )));
                }
                return Ok(Instance { source: s, target: t, cost: c });
            }
            (s, t)
        }
    };
    let cost = build_cost(config.cost, &source, &target)?;
    Ok(Instance { source, target, cost })
}

/// Files written by [`write_instance`].
#[derive(Clone, Debug)]
pub struct InstanceFiles {
    pub source: PathBuf,
    pub target: PathBuf,
    pub cost: PathBuf,
}

/// Writes `source.txt`, `target.txt` (measure text format) and `cost.bin`
/// (little-endian binary) into `dir`.
pub fn write_instance(instance: &Instance, dir: &Path) -> Result<InstanceFiles, BenchError> {
    std::fs::create_dir_all(dir)?;
    let files = InstanceFiles {
        source: dir.join("source.txt"),
        target: dir.join("target.txt"),
        cost: dir.join("cost.bin"),
    };
    let create = |p: &Path| -> Result<BufWriter<File>, BenchError> { Ok(BufWriter::new(File::create(p)?)) };
    let mut w = create(&files.source)?;
    write_measure(&instance.source, &mut w)?;
    w.flush()?;
    let mut w = create(&files.target)?;
    write_measure(&instance.target, &mut w)?;
    w.flush()?;
    let mut w = create(&files.cost)?;
    write_cost_binary(&instance.cost, &mut w)?;
    w.flush()?;
    Ok(files)
}
