//! Dense cost matrices `c_ij = c(x_i, y_j)`, rows indexed by source atoms.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;

/// Unit-norm tolerance for [`spherical`].
pub const SPHERE_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct CostMatrix {
    entries: Array2<f64>,
    c_min: f64,
    c_max: f64,
    /// Total amount subtracted from the entries by [`CostMatrix::center`].
    shift: f64,
}

impl CostMatrix {
    pub fn from_array(entries: Array2<f64>) -> Result<Self> {
        let (m, n) = entries.dim();
        if m == 0 || n == 0 {
            return Err(OtError::Empty);
        }
        // force row-major so `row` can hand out slices
        let entries = entries.as_standard_layout().into_owned();
        if let Some(idx) = entries.iter().position(|c| !c.is_finite()) {
            return Err(OtError::NonFinite(idx));
        }
        let (c_min, c_max) = entries
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &c| (lo.min(c), hi.max(c)));
        Ok(Self { entries, c_min, c_max, shift: 0.0 })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let m = rows.len();
        let n = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(OtError::DimensionMismatch { expected: n, got: bad.len() });
        }
        let flat: Vec<f64> = rows.concat();
        Self::from_array(Array2::from_shape_vec((m, n), flat).expect("shape checked"))
    }

    fn from_row_fn(m: usize, n: usize, f: impl Fn(usize, &mut [f64]) + Sync) -> Result<Self> {
        let mut flat = vec![0.0; m * n];
        flat.par_chunks_mut(n).enumerate().for_each(|(i, row)| f(i, row));
        Self::from_array(Array2::from_shape_vec((m, n), flat).expect("m * n entries"))
    }

    pub fn rows(&self) -> usize {
        self.entries.nrows()
    }

    pub fn cols(&self) -> usize {
        self.entries.ncols()
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

    pub fn row(&self, i: usize) -> &[f64] {
        let n = self.cols();
        &self.entries.as_slice().expect("standard layout")[i * n..(i + 1) * n]
    }

    pub fn as_slice(&self) -> &[f64] {
        self.entries.as_slice().expect("standard layout")
    }

    pub fn min(&self) -> f64 {
        self.c_min
    }

    pub fn max(&self) -> f64 {
        self.c_max
    }

    /// `R = c_max - c_min`
    pub fn range(&self) -> f64 {
        self.c_max - self.c_min
    }

    /// Constant subtracted from every entry relative to the matrix as built.
    /// A transport cost `x` measured on this matrix is `x + shift` on the
    /// original one.
    pub fn shift(&self) -> f64 {
        self.shift
    }

    /// `C - (max(C) + min(C)) / 2`: same optimal plans, symmetric range.
    pub fn center(&self) -> Self {
        let mid = 0.5 * (self.c_max + self.c_min);
        let mut centered = Self::from_array(self.entries.mapv(|c| c - mid))
            .expect("finite entries stay finite");
        centered.shift = self.shift + mid;
        centered
    }
}

fn check_dims(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<()> {
    if source.dim() != target.dim() {
        return Err(OtError::DimensionMismatch { expected: source.dim(), got: target.dim() });
    }
    Ok(())
}

fn sq_dist(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// `c_ij = |x_i - y_j|^2`
pub fn squared_euclidean(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<CostMatrix> {
    check_dims(source, target)?;
    CostMatrix::from_row_fn(source.len(), target.len(), |i, row| {
        let x = source.point(i);
        for (j, c) in row.iter_mut().enumerate() {
            *c = sq_dist(x, target.point(j));
        }
    })
}

/// `c_ij = |x_i - y_j|^p` for a real exponent `p > 0`.
pub fn power_cost(source: &DiscreteMeasure, target: &DiscreteMeasure, p: f64) -> Result<CostMatrix> {
    if !(p > 0.0) || !p.is_finite() {
        return Err(OtError::InvalidParameter(format!("cost exponent must be > 0, got {p}")));
    }
    check_dims(source, target)?;
    let half = p / 2.0;
    CostMatrix::from_row_fn(source.len(), target.len(), |i, row| {
        let x = source.point(i);
        for (j, c) in row.iter_mut().enumerate() {
            let d2 = sq_dist(x, target.point(j));
            *c = if half == 1.0 { d2 } else { d2.powf(half) };
        }
    })
}

fn check_unit(m: &DiscreteMeasure) -> Result<()> {
    for (index, p) in m.points().enumerate() {
        let norm = p.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > SPHERE_TOL {
            return Err(OtError::NotOnSphere { index, norm });
        }
    }
    Ok(())
}

/// Geodesic distance `arccos <x_i, y_j>` between unit vectors.
pub fn spherical(source: &DiscreteMeasure, target: &DiscreteMeasure) -> Result<CostMatrix> {
    check_dims(source, target)?;
    check_unit(source)?;
    check_unit(target)?;
    CostMatrix::from_row_fn(source.len(), target.len(), |i, row| {
        let x = source.point(i);
        for (j, c) in row.iter_mut().enumerate() {
            let dot: f64 = x.iter().zip(target.point(j)).map(|(a, b)| a * b).sum();
            *c = dot.clamp(-1.0, 1.0).acos();
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{random_measure, stream_rng, PointDist, SOURCE_STREAM, TARGET_STREAM};
    use proptest::prelude::*;

    fn single(p: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::uniform(vec![p.to_vec()]).unwrap()
    }

    fn pair(seed: u64, m: usize, n: usize, d: usize) -> (DiscreteMeasure, DiscreteMeasure) {
        let a = random_measure(&mut stream_rng(seed, SOURCE_STREAM), m, d, PointDist::Gaussian { mean: 0.0 }, false).unwrap();
        let b = random_measure(&mut stream_rng(seed, TARGET_STREAM), n, d, PointDist::UniformBox { lo: 0.0, hi: 1.0 }, false).unwrap();
        (a, b)
    }

    #[test]
    fn squared_euclidean_examples() {
        let c = squared_euclidean(&single(&[0.0, 0.0]), &single(&[3.0, 4.0])).unwrap();
        assert_eq!(c.get(0, 0), 25.0);
        let x = single(&[1.5, -2.0]);
        assert_eq!(squared_euclidean(&x, &x).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn squared_euclidean_matches_naive_loop() {
        let (a, b) = pair(3, 10, 10, 3);
        let c = squared_euclidean(&a, &b).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                let mut s = 0.0;
                for k in 0..3 {
                    let d = a.point(i)[k] - b.point(j)[k];
                    s += d * d;
                }
                assert_eq!(c.get(i, j), s);
            }
        }
        let sym = squared_euclidean(&a, &a).unwrap();
        assert_eq!(sym.entries(), &sym.entries().t());
    }

    #[test]
    fn power_cost_examples() {
        let c = power_cost(&single(&[0.0, 0.0]), &single(&[3.0, 4.0]), 1.5).unwrap();
        assert!((c.get(0, 0) - 11.180_339_887_498_949).abs() < 1e-12);
        assert!(power_cost(&single(&[0.0]), &single(&[1.0]), 0.0).is_err());
        assert!(power_cost(&single(&[0.0]), &single(&[1.0]), -1.0).is_err());

        let (a, b) = pair(5, 7, 9, 4);
        let p2 = power_cost(&a, &b, 2.0).unwrap();
        let sq = squared_euclidean(&a, &b).unwrap();
        for (x, y) in p2.as_slice().iter().zip(sq.as_slice()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        assert!(squared_euclidean(&single(&[0.0]), &single(&[0.0, 1.0])).is_err());
    }

    #[test]
    fn spherical_examples() {
        let x = single(&[1.0, 0.0, 0.0]);
        let y = single(&[0.0, 1.0, 0.0]);
        let c = spherical(&x, &y).unwrap();
        assert!((c.get(0, 0) - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
        assert_eq!(spherical(&x, &x).unwrap().get(0, 0), 0.0);
        let off = single(&[2.0, 0.0, 0.0]);
        assert!(matches!(spherical(&off, &x), Err(OtError::NotOnSphere { .. })));
    }

    #[test]
    fn spherical_clamps_rounding() {
        // norm^2 lands slightly above one; acos must not produce NaN
        let v = [0.6, 0.8 + 4e-13, 0.0];
        let x = single(&v);
        let c = spherical(&x, &x).unwrap();
        assert_eq!(c.get(0, 0), 0.0);
        let mut rng = stream_rng(1, SOURCE_STREAM);
        let s = random_measure(&mut rng, 30, 4, PointDist::Gaussian { mean: 3.0 }, true).unwrap();
        let c = spherical(&s, &s).unwrap();
        assert!(c.as_slice().iter().all(|v| (0.0..=std::f64::consts::PI).contains(v)));
    }

    #[test]
    fn center_examples() {
        let c = CostMatrix::from_rows(&[vec![0.0, 4.0], vec![2.0, 2.0]]).unwrap();
        let cc = c.center();
        assert_eq!(cc.as_slice(), &[-2.0, 2.0, 0.0, 0.0]);
        assert_eq!(cc.shift(), 2.0);
        assert_eq!(cc.range(), 4.0);

        let k = CostMatrix::from_rows(&[vec![3.0, 3.0], vec![3.0, 3.0]]).unwrap().center();
        assert!(k.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_non_finite_entries() {
        assert!(CostMatrix::from_rows(&[vec![0.0, f64::NAN]]).is_err());
        assert!(CostMatrix::from_rows(&[vec![0.0, 1.0], vec![1.0]]).is_err());
    }

    proptest! {
        #[test]
        fn cached_extrema_and_centering(vals in prop::collection::vec(-1e3f64..1e3, 12)) {
            let c = CostMatrix::from_array(Array2::from_shape_vec((3, 4), vals).unwrap()).unwrap();
            let lo = c.as_slice().iter().copied().fold(f64::INFINITY, f64::min);
            let hi = c.as_slice().iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!((lo, hi), (c.min(), c.max()));

            let once = c.center();
            prop_assert!((once.range() - c.range()).abs() <= 1e-12);
            prop_assert!((once.max() + once.min()).abs() <= 1e-12);
            let twice = once.center();
            for (a, b) in once.as_slice().iter().zip(twice.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-15 * (1.0 + a.abs()) * 1e3);
            }
        }

        #[test]
        fn row_argmax_unchanged_by_centering(
            vals in prop::collection::vec(0.0f64..10.0, 20),
            psi in prop::collection::vec(-5.0f64..5.0, 5),
        ) {
            let c = CostMatrix::from_array(Array2::from_shape_vec((4, 5), vals).unwrap()).unwrap();
            let cc = c.center();
            let argmax = |m: &CostMatrix, i: usize| {
                let row = m.row(i);
                let mut best = 0;
                for j in 1..row.len() {
                    if psi[j] - row[j] > psi[best] - row[best] { best = j; }
                }
                best
            };
            for i in 0..4 {
                prop_assert_eq!(argmax(&c, i), argmax(&cc, i));
            }
        }
    }
}
