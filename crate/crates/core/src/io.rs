//! Text and binary file formats.
//!
//! * measure: header `d m`, then `m` lines `w x_1 ... x_d`
//! * cost (text): header `m n`, then `m` rows of `n` values
//! * cost (binary): `m`, `n` as little-endian `u32`, then `m * n`
//!   little-endian `f64` in row-major order
//! * plan: same text layout as the cost, or CSV triples `i,j,p_ij`
//!
//! Floats are written with Rust's shortest round-trip formatting, so
//! reading a file back yields bit-identical values. Measure weights are
//! renormalized on read, which may move them by an ulp.

use std::io::{BufRead, Read, Write};

use ndarray::Array2;

use crate::costs::CostMatrix;
use crate::dual::TransportPlan;
use crate::error::{OtError, Result};
use crate::measures::DiscreteMeasure;

fn parse_err(msg: impl Into<String>) -> OtError {
    OtError::Parse(msg.into())
}

fn numbers<R: BufRead>(reader: R) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in reader.lines() {
        out.extend(line?.split_whitespace().map(str::to_owned));
    }
    Ok(out)
}

fn take<T: std::str::FromStr>(tokens: &mut impl Iterator<Item = String>, what: &str) -> Result<T> {
    let tok = tokens.next().ok_or_else(|| parse_err(format!("unexpected end of input reading {what}")))?;
    tok.parse().map_err(|_| parse_err(format!("invalid {what}: `{tok}`")))
}

pub fn write_measure<W: Write>(measure: &DiscreteMeasure, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", measure.dim(), measure.len())?;
    for (p, w) in measure.points().zip(measure.weights()) {
        write!(out, "{w:?}")?;
        for x in p {
            write!(out, " {x:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

pub fn read_measure<R: BufRead>(reader: R) -> Result<DiscreteMeasure> {
    let mut tokens = numbers(reader)?.into_iter();
    let d: usize = take(&mut tokens, "dimension")?;
    let m: usize = take(&mut tokens, "atom count")?;
    let mut points = Vec::with_capacity(m);
    let mut weights = Vec::with_capacity(m);
    for _ in 0..m {
        weights.push(take(&mut tokens, "weight")?);
        points.push((0..d).map(|_| take(&mut tokens, "coordinate")).collect::<Result<Vec<f64>>>()?);
    }
    if tokens.next().is_some() {
        return Err(parse_err("trailing data after measure"));
    }
    DiscreteMeasure::new(points, weights)
}

fn write_matrix<W: Write>(rows: usize, cols: usize, data: &[f64], mut out: W) -> Result<()> {
    writeln!(out, "{rows} {cols}")?;
    for row in data.chunks_exact(cols) {
        let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
        writeln!(out, "{}", line.join(" "))?;
    }
    Ok(())
}

fn read_matrix<R: BufRead>(reader: R) -> Result<Array2<f64>> {
    let mut tokens = numbers(reader)?.into_iter();
    let m: usize = take(&mut tokens, "row count")?;
    let n: usize = take(&mut tokens, "column count")?;
    let data = (0..m * n).map(|_| take(&mut tokens, "entry")).collect::<Result<Vec<f64>>>()?;
    if tokens.next().is_some() {
        return Err(parse_err("trailing data after matrix"));
    }
    Ok(Array2::from_shape_vec((m, n), data).expect("m * n entries"))
}

pub fn write_cost_text<W: Write>(cost: &CostMatrix, out: W) -> Result<()> {
    write_matrix(cost.rows(), cost.cols(), cost.as_slice(), out)
}

pub fn read_cost_text<R: BufRead>(reader: R) -> Result<CostMatrix> {
    CostMatrix::from_array(read_matrix(reader)?)
}

pub fn write_cost_binary<W: Write>(cost: &CostMatrix, mut out: W) -> Result<()> {
    let dims = |v: usize| u32::try_from(v).map_err(|_| parse_err("dimension exceeds u32"));
    out.write_all(&dims(cost.rows())?.to_le_bytes())?;
    out.write_all(&dims(cost.cols())?.to_le_bytes())?;
    for v in cost.as_slice() {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub fn read_cost_binary<R: Read>(mut reader: R) -> Result<CostMatrix> {
    let mut word = [0u8; 4];
    reader.read_exact(&mut word)?;
    let m = u32::from_le_bytes(word) as usize;
    reader.read_exact(&mut word)?;
    let n = u32::from_le_bytes(word) as usize;
    let mut bytes = Vec::new();
    reader.read_to_end(&mut bytes)?;
    if bytes.len() != m * n * 8 {
        return Err(parse_err(format!("expected {} payload bytes, found {}", m * n * 8, bytes.len())));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    CostMatrix::from_array(Array2::from_shape_vec((m, n), data).expect("m * n entries"))
}

pub fn write_plan_text<W: Write>(plan: &TransportPlan, out: W) -> Result<()> {
    let (m, n) = plan.shape();
    write_matrix(m, n, plan.as_slice(), out)
}

pub fn read_plan_text<R: BufRead>(reader: R) -> Result<TransportPlan> {
    Ok(TransportPlan::from_array(read_matrix(reader)?))
}

/// CSV triples `i,j,p_ij` for entries strictly above `threshold`.
pub fn write_plan_triples<W: Write>(plan: &TransportPlan, threshold: f64, mut out: W) -> Result<()> {
    writeln!(out, "i,j,p")?;
    let (_, n) = plan.shape();
    for (k, &p) in plan.as_slice().iter().enumerate() {
        if p > threshold {
            writeln!(out, "{},{},{p:?}", k / n, k % n)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::{random_measure, stream_rng, PointDist};
    use proptest::prelude::*;

    #[test]
    fn measure_round_trip() {
        let mut rng = stream_rng(3, 1);
        let m = random_measure(&mut rng, 12, 3, PointDist::Gaussian { mean: 3.0 }, true).unwrap();
        let mut buf = Vec::new();
        write_measure(&m, &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("3 12\n"));
        let back = read_measure(buf.as_slice()).unwrap();
        assert_eq!(back.dim(), 3);
        for (a, b) in back.weights().iter().zip(m.weights()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(back.point(5), m.point(5));
    }

    #[test]
    fn measure_parse_errors() {
        assert!(read_measure("2 2\n0.5 1 2\n".as_bytes()).is_err());
        assert!(read_measure("1 1\n1 x\n".as_bytes()).is_err());
        assert!(read_measure("1 1\n1 0\n9\n".as_bytes()).is_err());
    }

    #[test]
    fn cost_text_layout() {
        let c = CostMatrix::from_rows(&[vec![0.0, 1.5], vec![2.25, -3.0]]).unwrap();
        let mut buf = Vec::new();
        write_cost_text(&c, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "2 2\n0.0 1.5\n2.25 -3.0\n");
        assert_eq!(read_cost_text(buf.as_slice()).unwrap(), c);
    }

    #[test]
    fn cost_binary_layout() {
        let c = CostMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        let mut buf = Vec::new();
        write_cost_binary(&c, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 + 24);
        assert_eq!(&buf[..8], &[1, 0, 0, 0, 3, 0, 0, 0]);
        assert_eq!(&buf[8..16], &1.0f64.to_le_bytes());
        assert_eq!(read_cost_binary(buf.as_slice()).unwrap(), c);
        assert!(read_cost_binary(&buf[..20]).is_err());
    }

    #[test]
    fn plan_triples_respect_threshold() {
        let p = TransportPlan::from_array(ndarray::array![[0.5, 1e-9], [0.0, 0.25]]);
        let mut buf = Vec::new();
        write_plan_triples(&p, 1e-6, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "i,j,p\n0,0,0.5\n1,1,0.25\n");
        let mut buf = Vec::new();
        write_plan_text(&p, &mut buf).unwrap();
        assert_eq!(read_plan_text(buf.as_slice()).unwrap(), p);
    }

    proptest! {
        #[test]
        fn cost_formats_are_lossless(vals in prop::collection::vec(-1e300f64..1e300, 1..30), cols in 1usize..4) {
            let rows = vals.len() / cols;
            prop_assume!(rows > 0);
            let data = vals[..rows * cols].to_vec();
            let c = CostMatrix::from_array(Array2::from_shape_vec((rows, cols), data).unwrap()).unwrap();
            let mut text = Vec::new();
            write_cost_text(&c, &mut text).unwrap();
            prop_assert_eq!(&read_cost_text(text.as_slice()).unwrap(), &c);
            let mut bin = Vec::new();
            write_cost_binary(&c, &mut bin).unwrap();
            prop_assert_eq!(&read_cost_binary(bin.as_slice()).unwrap(), &c);
        }
    }
}
