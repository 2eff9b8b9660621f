//! Discrete probability measures `sum_i w_i delta(x - x_i)`.

use std::path::Path;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Open01, Uniform};

use crate::error::{OtError, Result};

/// Slack on `sum w = 1` after normalization.
pub const MASS_TOL: f64 = 1e-12;

/// RNG stream used for source measures drawn from a seed.
pub const SOURCE_STREAM: u64 = 1;
/// RNG stream used for target measures drawn from a seed.
pub const TARGET_STREAM: u64 = 2;

/// Seeded ChaCha8 generator on a given stream.
///
/// Source and target draws for one seed use [`SOURCE_STREAM`] and
/// [`TARGET_STREAM`], so resizing one side never perturbs the other.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// What to do with atoms whose weight is exactly zero.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroPolicy {
    #[default]
    Reject,
    Drop,
}

/// Weighted point cloud whose weights are strictly positive and sum to one.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure {
    dim: usize,
    coords: Vec<f64>,
    weights: Vec<f64>,
}

/// Scales nonnegative masses to sum to one.
pub fn normalize(raw: &[f64]) -> Result<Vec<f64>> {
    for (index, &value) in raw.iter().enumerate() {
        if !value.is_finite() {
            return Err(OtError::NonFinite(index));
        }
        if value < 0.0 {
            return Err(OtError::NegativeMass { index, value });
        }
    }
    let total: f64 = raw.iter().sum();
    if total <= 0.0 {
        return Err(OtError::DegenerateMeasure);
    }
    Ok(raw.iter().map(|w| w / total).collect())
}

impl DiscreteMeasure {
    /// Builds a measure from points and raw (unnormalized) weights, rejecting
    /// zero-weight atoms.
    pub fn new(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        Self::with_policy(points, weights, ZeroPolicy::Reject)
    }

    pub fn with_policy(
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
        policy: ZeroPolicy,
    ) -> Result<Self> {
        if points.is_empty() {
            return Err(OtError::Empty);
        }
        if points.len() != weights.len() {
            return Err(OtError::DimensionMismatch {
                expected: points.len(),
                got: weights.len(),
            });
        }
        let dim = points[0].len();
        if dim == 0 {
            return Err(OtError::InvalidParameter("points must have dimension >= 1".into()));
        }
        let mut weights = normalize(&weights)?;
        let mut coords = Vec::with_capacity(points.len() * dim);
        for (i, p) in points.iter().enumerate() {
            if p.len() != dim {
                return Err(OtError::DimensionMismatch { expected: dim, got: p.len() });
            }
            if p.iter().any(|x| !x.is_finite()) {
                return Err(OtError::NonFinite(i));
            }
            coords.extend_from_slice(p);
        }
        if let Some(idx) = weights.iter().position(|&w| w == 0.0) {
            match policy {
                ZeroPolicy::Reject => return Err(OtError::ZeroWeight(idx)),
                ZeroPolicy::Drop => {
                    let keep: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
                    coords = keep
                        .iter()
                        .flat_map(|&i| coords[i * dim..(i + 1) * dim].to_vec())
                        .collect();
                    weights = keep.iter().map(|&i| weights[i]).collect();
                }
            }
        }
        Ok(Self { dim, coords, weights })
    }

    /// Uniform weights over the given points.
    pub fn uniform(points: Vec<Vec<f64>>) -> Result<Self> {
        let w = vec![1.0; points.len()];
        Self::new(points, w)
    }

    /// One atom per pixel at its `(row, col)` coordinate, origin top-left.
    /// Zero-intensity pixels receive `background_noise` before normalization.
    pub fn from_image_grid(grid: &[Vec<f64>], background_noise: f64) -> Result<Self> {
        if grid.is_empty() || grid[0].is_empty() {
            return Err(OtError::Empty);
        }
        if !(background_noise >= 0.0) {
            return Err(OtError::InvalidParameter(format!(
                "background noise must be >= 0, got {background_noise}"
            )));
        }
        let cols = grid[0].len();
        let mut points = Vec::with_capacity(grid.len() * cols);
        let mut weights = Vec::with_capacity(grid.len() * cols);
        for (r, row) in grid.iter().enumerate() {
            if row.len() != cols {
                return Err(OtError::DimensionMismatch { expected: cols, got: row.len() });
            }
            for (c, &v) in row.iter().enumerate() {
                points.push(vec![r as f64, c as f64]);
                weights.push(if v == 0.0 { background_noise } else { v });
            }
        }
        Self::new(points, weights)
    }

    /// Reads a P2/P5 grayscale image and converts it with [`Self::from_image_grid`].
    pub fn from_pgm(path: impl AsRef<Path>, background_noise: f64) -> Result<Self> {
        let img = image::ImageReader::open(path)?
            .with_guessed_format()?
            .decode()?
            .into_luma16();
        let (w, h) = img.dimensions();
        let max = f64::from(u16::MAX);
        let grid: Vec<Vec<f64>> = (0..h)
            .map(|r| (0..w).map(|c| f64::from(img.get_pixel(c, r).0[0]) / max).collect())
            .collect();
        Self::from_image_grid(&grid, background_noise)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn min_weight(&self) -> f64 {
        self.weights.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Support distribution for [`random_measure`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum PointDist {
    /// `N(mean * 1_d, I_d)`
    Gaussian { mean: f64 },
    /// `Uni([lo, hi]^d)`
    UniformBox { lo: f64, hi: f64 },
}

/// Draws `m` points from `dist` (optionally projected onto the unit sphere)
/// with weights from `Uni(0, 1)`, then normalizes.
pub fn random_measure<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    dim: usize,
    dist: PointDist,
    on_sphere: bool,
) -> Result<DiscreteMeasure> {
    if m == 0 {
        return Err(OtError::Empty);
    }
    if dim == 0 {
        return Err(OtError::InvalidParameter("dimension must be >= 1".into()));
    }
    let mut points = Vec::with_capacity(m);
    for _ in 0..m {
        let mut p: Vec<f64> = match dist {
            PointDist::Gaussian { mean } => {
                let normal = Normal::new(mean, 1.0).expect("unit variance");
                (0..dim).map(|_| normal.sample(rng)).collect()
            }
            PointDist::UniformBox { lo, hi } => {
                let uni = Uniform::new_inclusive(lo, hi)
                    .map_err(|e| OtError::InvalidParameter(e.to_string()))?;
                (0..dim).map(|_| uni.sample(rng)).collect()
            }
        };
        if on_sphere {
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(OtError::InvalidParameter("cannot project the origin onto the sphere".into()));
            }
            p.iter_mut().for_each(|x| *x /= norm);
        }
        points.push(p);
    }
    let weights: Vec<f64> = (0..m).map(|_| Open01.sample(rng)).collect();
    DiscreteMeasure::new(points, weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize(&[2.0, 3.0]).unwrap(), vec![0.4, 0.6]);
        assert_eq!(normalize(&[1.0; 4]).unwrap(), vec![0.25; 4]);
        assert!(matches!(normalize(&[0.0, 0.0]), Err(OtError::DegenerateMeasure)));
        assert!(matches!(normalize(&[1.0, -0.5]), Err(OtError::NegativeMass { index: 1, .. })));
    }

    #[test]
    fn image_grid_noise_then_normalize() {
        let m = DiscreteMeasure::from_image_grid(&[vec![0.0, 1.0]], 0.01).unwrap();
        assert_eq!(m.point(0), &[0.0, 0.0]);
        assert_eq!(m.point(1), &[0.0, 1.0]);
        assert!((m.weights()[0] - 0.01 / 1.01).abs() < 1e-15);
        assert!((m.weights()[1] - 1.0 / 1.01).abs() < 1e-15);

        let u = DiscreteMeasure::from_image_grid(&[vec![1.0, 1.0], vec![1.0, 1.0]], 0.01).unwrap();
        assert_eq!(u.weights(), &[0.25; 4]);
    }

    #[test]
    fn zero_grid_without_noise_is_degenerate() {
        let err = DiscreteMeasure::from_image_grid(&[vec![0.0, 0.0]], 0.0).unwrap_err();
        assert!(matches!(err, OtError::DegenerateMeasure));
    }

    #[test]
    fn zero_weights_rejected_or_dropped() {
        let pts = vec![vec![0.0], vec![1.0], vec![2.0]];
        let w = vec![1.0, 0.0, 3.0];
        assert!(matches!(
            DiscreteMeasure::new(pts.clone(), w.clone()),
            Err(OtError::ZeroWeight(1))
        ));
        let m = DiscreteMeasure::with_policy(pts, w, ZeroPolicy::Drop).unwrap();
        assert_eq!(m.len(), 2);
        assert_eq!(m.point(1), &[2.0]);
        assert_eq!(m.weights(), &[0.25, 0.75]);
    }

    #[test]
    fn mixed_dimensions_rejected() {
        let err = DiscreteMeasure::uniform(vec![vec![0.0, 1.0], vec![1.0]]).unwrap_err();
        assert!(matches!(err, OtError::DimensionMismatch { .. }));
    }

    #[test]
    fn sphere_projected_gaussian_has_unit_norms() {
        let mut rng = stream_rng(7, SOURCE_STREAM);
        let m = random_measure(&mut rng, 500, 3, PointDist::Gaussian { mean: 3.0 }, true).unwrap();
        for p in m.points() {
            let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - 1.0).abs() < 1e-12);
        }
        assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < MASS_TOL);
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let draw = |seed| {
            let mut rng = stream_rng(seed, TARGET_STREAM);
            random_measure(&mut rng, 40, 5, PointDist::UniformBox { lo: -5.0, hi: -4.0 }, false)
                .unwrap()
        };
        assert_eq!(draw(11), draw(11));
        assert_ne!(draw(11), draw(12));
    }

    #[test]
    fn random_measure_rejects_zero_count() {
        let mut rng = stream_rng(0, SOURCE_STREAM);
        assert!(random_measure(&mut rng, 0, 2, PointDist::Gaussian { mean: 0.0 }, false).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.pgm");
        std::fs::write(&path, "P2\n3 2\n255\n0 255 0\n51 0 102\n").unwrap();
        let m = DiscreteMeasure::from_pgm(&path, 0.0).unwrap_err();
        assert!(matches!(m, OtError::ZeroWeight(_)));
        let m = DiscreteMeasure::from_pgm(&path, 0.01).unwrap();
        assert_eq!(m.len(), 6);
        // pixel (0,1) is full intensity, (1,0) is 0.2
        assert!((m.weights()[1] / m.weights()[3] - 5.0).abs() < 1e-9);
        assert_eq!(m.point(4), &[1.0, 1.0]);
    }

    proptest! {
        #[test]
        fn image_measures_sum_to_one(grid in prop::collection::vec(prop::collection::vec(0.0f64..1.0, 28), 28)) {
            let m = DiscreteMeasure::from_image_grid(&grid, 0.01).unwrap();
            prop_assert_eq!(m.len(), 784);
            prop_assert!((m.weights().iter().sum::<f64>() - 1.0).abs() < MASS_TOL);
            prop_assert!(m.weights().iter().all(|&w| w > 0.0));
        }

        #[test]
        fn zero_noise_on_positive_grid_matches_normalize(grid in prop::collection::vec(prop::collection::vec(0.01f64..5.0, 4), 3)) {
            let m = DiscreteMeasure::from_image_grid(&grid, 0.0).unwrap();
            let flat: Vec<f64> = grid.concat();
            let direct = normalize(&flat).unwrap();
            prop_assert_eq!(m.weights(), direct.as_slice());
        }
    }
}
