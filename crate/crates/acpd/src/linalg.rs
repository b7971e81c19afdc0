//! Vectors, linear maps with forward/adjoint application, and coordinate boxes.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// Dense real vector used for every iterate.
pub type RealVector = DVector<f64>;

/// Fails with `NonFinite` if any entry is NaN or infinite.
pub fn ensure_finite(v: &RealVector, context: &'static str) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(context))
    }
}

/// Sparse matrix in coordinate form. Duplicate coordinates are summed on construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplets {
    rows: usize,
    cols: usize,
    entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(rows: usize, cols: usize, mut raw: Vec<(usize, usize, f64)>) -> Result<Self> {
        for &(i, j, v) in &raw {
            if i >= rows || j >= cols {
                return Err(Error::InvalidConfig(format!(
                    "triplet ({i}, {j}) outside a {rows}x{cols} map"
                )));
            }
            if !v.is_finite() {
                return Err(Error::NonFinite("sparse entry"));
            }
        }
        raw.sort_by_key(|&(i, j, _)| (i, j));
        let mut entries: Vec<(usize, usize, f64)> = Vec::with_capacity(raw.len());
        for (i, j, v) in raw {
            match entries.last_mut() {
                Some(last) if last.0 == i && last.1 == j => last.2 += v,
                _ => entries.push((i, j, v)),
            }
        }
        Ok(Self {
            rows,
            cols,
            entries,
        })
    }

    pub fn entries(&self) -> &[(usize, usize, f64)] {
        &self.entries
    }
}

/// A linear map `R^cols -> R^rows`.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearMap {
    Dense(DMatrix<f64>),
    Sparse(Triplets),
    Identity(usize),
    /// `scale * inner`
    Scaled { scale: f64, inner: Box<LinearMap> },
    /// `outer ∘ inner`
    Compose {
        outer: Box<LinearMap>,
        inner: Box<LinearMap>,
    },
}

impl LinearMap {
    pub fn dense(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::InvalidConfig("linear map with an empty side".into()));
        }
        if !m.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite("dense matrix"));
        }
        Ok(LinearMap::Dense(m))
    }

    pub fn from_row_slice(rows: usize, cols: usize, data: &[f64]) -> Result<Self> {
        check_dim("dense matrix data", rows * cols, data.len())?;
        Self::dense(DMatrix::from_row_slice(rows, cols, data))
    }

    pub fn diagonal(d: &[f64]) -> Result<Self> {
        Self::dense(DMatrix::from_diagonal(&DVector::from_column_slice(d)))
    }

    pub fn sparse(rows: usize, cols: usize, entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidConfig("linear map with an empty side".into()));
        }
        Ok(LinearMap::Sparse(Triplets::new(rows, cols, entries)?))
    }

    pub fn identity(n: usize) -> Self {
        LinearMap::Identity(n)
    }

    pub fn zero(rows: usize, cols: usize) -> Self {
        LinearMap::Sparse(Triplets {
            rows,
            cols,
            entries: Vec::new(),
        })
    }

    pub fn scaled(self, scale: f64) -> Self {
        LinearMap::Scaled {
            scale,
            inner: Box::new(self),
        }
    }

    /// `self ∘ inner`, i.e. apply `inner` first.
    pub fn compose(self, inner: LinearMap) -> Result<Self> {
        check_dim("composition", self.cols(), inner.rows())?;
        Ok(LinearMap::Compose {
            outer: Box::new(self),
            inner: Box::new(inner),
        })
    }

    pub fn rows(&self) -> usize {
        match self {
            LinearMap::Dense(m) => m.nrows(),
            LinearMap::Sparse(t) => t.rows,
            LinearMap::Identity(n) => *n,
            LinearMap::Scaled { inner, .. } => inner.rows(),
            LinearMap::Compose { outer, .. } => outer.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            LinearMap::Dense(m) => m.ncols(),
            LinearMap::Sparse(t) => t.cols,
            LinearMap::Identity(n) => *n,
            LinearMap::Scaled { inner, .. } => inner.cols(),
            LinearMap::Compose { inner, .. } => inner.cols(),
        }
    }

    /// `op * x`
    pub fn forward(&self, x: &RealVector) -> Result<RealVector> {
        check_dim("forward", self.cols(), x.len())?;
        Ok(self.forward_unchecked(x))
    }

    /// `op^T * y`
    pub fn adjoint(&self, y: &RealVector) -> Result<RealVector> {
        check_dim("adjoint", self.rows(), y.len())?;
        Ok(self.adjoint_unchecked(y))
    }

    fn forward_unchecked(&self, x: &RealVector) -> RealVector {
        match self {
            LinearMap::Dense(m) => m * x,
            LinearMap::Sparse(t) => {
                let mut out = RealVector::zeros(t.rows);
                for &(i, j, v) in &t.entries {
                    out[i] += v * x[j];
                }
                out
            }
            LinearMap::Identity(_) => x.clone(),
            LinearMap::Scaled { scale, inner } => inner.forward_unchecked(x) * *scale,
            LinearMap::Compose { outer, inner } => {
                outer.forward_unchecked(&inner.forward_unchecked(x))
            }
        }
    }

    fn adjoint_unchecked(&self, y: &RealVector) -> RealVector {
        match self {
            LinearMap::Dense(m) => m.tr_mul(y),
            LinearMap::Sparse(t) => {
                let mut out = RealVector::zeros(t.cols);
                for &(i, j, v) in &t.entries {
                    out[j] += v * y[i];
                }
                out
            }
            LinearMap::Identity(_) => y.clone(),
            LinearMap::Scaled { scale, inner } => inner.adjoint_unchecked(y) * *scale,
            LinearMap::Compose { outer, inner } => {
                inner.adjoint_unchecked(&outer.adjoint_unchecked(y))
            }
        }
    }

    /// Materializes the map as a dense matrix.
    pub fn to_dense(&self) -> DMatrix<f64> {
        match self {
            LinearMap::Dense(m) => m.clone(),
            LinearMap::Sparse(t) => {
                let mut m = DMatrix::zeros(t.rows, t.cols);
                for &(i, j, v) in &t.entries {
                    m[(i, j)] += v;
                }
                m
            }
            LinearMap::Identity(n) => DMatrix::identity(*n, *n),
            LinearMap::Scaled { scale, inner } => inner.to_dense() * *scale,
            LinearMap::Compose { outer, inner } => outer.to_dense() * inner.to_dense(),
        }
    }

    /// Returns `c` when the map is structurally `c * I`.
    pub fn as_scaled_identity(&self) -> Option<f64> {
        match self {
            LinearMap::Identity(_) => Some(1.0),
            LinearMap::Scaled { scale, inner } => inner.as_scaled_identity().map(|c| c * scale),
            LinearMap::Compose { outer, inner } => {
                Some(outer.as_scaled_identity()? * inner.as_scaled_identity()?)
            }
            LinearMap::Dense(m) => {
                if m.nrows() != m.ncols() {
                    return None;
                }
                let c = m[(0, 0)];
                let ok = m.iter().enumerate().all(|(idx, &v)| {
                    let (i, j) = (idx % m.nrows(), idx / m.nrows());
                    if i == j {
                        v == c
                    } else {
                        v == 0.0
                    }
                });
                ok.then_some(c)
            }
            LinearMap::Sparse(_) => None,
        }
    }
}

/// Power-method estimate of the largest singular value.
///
/// Test-side reference only. Returns the running maximum of `‖A v_k‖` over unit
/// iterates, so the estimate never decreases with more iterations.
pub fn spectral_norm_reference(op: &LinearMap, iters: usize) -> Result<f64> {
    if iters == 0 {
        return Err(Error::InvalidConfig("power method needs iters >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x9e37_79b9_7f4a_7c15);
    let mut v = RealVector::from_fn(op.cols(), |_, _| StandardNormal.sample(&mut rng));
    v /= v.norm();
    let mut best = 0.0_f64;
    for _ in 0..iters {
        let u = op.forward_unchecked(&v);
        best = best.max(u.norm());
        let w = op.adjoint_unchecked(&u);
        let nw = w.norm();
        if nw == 0.0 {
            break;
        }
        v = w / nw;
    }
    Ok(best)
}

/// Product of closed intervals; bounds may be infinite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSet {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSet {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        check_dim("box bounds", lower.len(), upper.len())?;
        for (l, u) in lower.iter().zip(&upper) {
            if l.is_nan() || u.is_nan() || l > u || *l == f64::INFINITY || *u == f64::NEG_INFINITY
            {
                return Err(Error::InvalidConfig(format!("invalid interval [{l}, {u}]")));
            }
        }
        Ok(Self { lower, upper })
    }

    pub fn free(n: usize) -> Self {
        Self {
            lower: vec![f64::NEG_INFINITY; n],
            upper: vec![f64::INFINITY; n],
        }
    }

    pub fn uniform(n: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo; n], vec![hi; n])
    }

    /// The single point `p`.
    pub fn singleton(p: &RealVector) -> Result<Self> {
        ensure_finite(p, "singleton box")?;
        Self::new(p.iter().copied().collect(), p.iter().copied().collect())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn is_free(&self) -> bool {
        self.lower.iter().all(|l| *l == f64::NEG_INFINITY)
            && self.upper.iter().all(|u| *u == f64::INFINITY)
    }

    pub fn is_bounded(&self) -> bool {
        self.lower.iter().chain(&self.upper).all(|b| b.is_finite())
    }

    #[inline]
    pub fn clamp_coord(&self, i: usize, v: f64) -> f64 {
        v.max(self.lower[i]).min(self.upper[i])
    }

    pub fn project(&self, v: &RealVector) -> RealVector {
        RealVector::from_fn(v.len(), |i, _| self.clamp_coord(i, v[i]))
    }

    pub fn contains(&self, v: &RealVector, tol: f64) -> bool {
        v.len() == self.dim()
            && v.iter()
                .enumerate()
                .all(|(i, x)| *x >= self.lower[i] - tol && *x <= self.upper[i] + tol)
    }

    /// `max_{x,x' in box} ‖x − x'‖`, `None` if unbounded.
    pub fn diameter(&self) -> Option<f64> {
        if !self.is_bounded() {
            return None;
        }
        Some(
            self.lower
                .iter()
                .zip(&self.upper)
                .map(|(l, u)| (u - l) * (u - l))
                .sum::<f64>()
                .sqrt(),
        )
    }

    /// `max_{x in box} ‖x − center‖`, `None` if unbounded.
    pub fn radius_from(&self, center: &RealVector) -> Option<f64> {
        if !self.is_bounded() || center.len() != self.dim() {
            return None;
        }
        Some(
            (0..self.dim())
                .map(|i| {
                    let r = (self.upper[i] - center[i])
                        .abs()
                        .max((center[i] - self.lower[i]).abs());
                    r * r
                })
                .sum::<f64>()
                .sqrt(),
        )
    }

    /// The box `{x / c : x in self}` for `c > 0`.
    pub fn shrunk_by(&self, c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(Error::InvalidConfig(format!("box scaling must be positive, got {c}")));
        }
        Self::new(
            self.lower.iter().map(|l| l / c).collect(),
            self.upper.iter().map(|u| u / c).collect(),
        )
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| Error::Io(e.to_string()))
}

/// Loads a dense matrix from a header-free, row-major CSV file.
pub fn load_dense_csv(path: &Path) -> Result<LinearMap> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        let row = rec
            .iter()
            .map(|f| f.parse::<f64>().map_err(|e| Error::Parse(format!("{f:?}: {e}"))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    let m = rows.len();
    let n = rows.first().map_or(0, Vec::len);
    if let Some(bad) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::DimensionMismatch {
            context: "csv row length",
            expected: n,
            got: bad.len(),
        });
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    LinearMap::from_row_slice(m, n, &flat)
}

/// Loads a sparse matrix from `i,j,value` lines (zero-based indices).
///
/// When `shape` is `None` the dimensions are the largest indices plus one.
pub fn load_triplets_csv(path: &Path, shape: Option<(usize, usize)>) -> Result<LinearMap> {
    let mut entries = Vec::new();
    for rec in csv_reader(path)?.records() {
        let rec = rec.map_err(|e| Error::Parse(e.to_string()))?;
        if rec.iter().all(|f| f.is_empty()) {
            continue;
        }
        if rec.len() != 3 {
            return Err(Error::Parse(format!("expected i,j,value, got {} fields", rec.len())));
        }
        let idx = |k: usize| {
            rec[k]
                .parse::<usize>()
                .map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[k])))
        };
        let v = rec[2]
            .parse::<f64>()
            .map_err(|e| Error::Parse(format!("{:?}: {e}", &rec[2])))?;
        entries.push((idx(0)?, idx(1)?, v));
    }
    let (rows, cols) = shape.unwrap_or_else(|| {
        entries.iter().fold((0, 0), |(r, c), &(i, j, _)| (r.max(i + 1), c.max(j + 1)))
    });
    LinearMap::sparse(rows, cols, entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> RealVector {
        RealVector::from_column_slice(x)
    }

    #[test]
    fn identity_and_diagonal_apply() {
        let id = LinearMap::identity(2);
        assert_eq!(id.forward(&v(&[1.0, 2.0])).unwrap(), v(&[1.0, 2.0]));
        assert_eq!(id.adjoint(&v(&[3.0, 4.0])).unwrap(), v(&[3.0, 4.0]));
        let d = LinearMap::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]).unwrap();
        assert_eq!(d.forward(&v(&[1.0, 0.0])).unwrap(), v(&[2.0, 0.0]));
        assert_eq!(d.adjoint(&v(&[0.0, 1.0])).unwrap(), v(&[0.0, 3.0]));
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let d = LinearMap::zero(3, 2);
        assert!(matches!(d.forward(&v(&[1.0])), Err(Error::DimensionMismatch { .. })));
        assert!(matches!(d.adjoint(&v(&[1.0])), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn duplicate_triplets_sum() {
        let s = LinearMap::sparse(2, 2, vec![(0, 1, 1.5), (0, 1, 2.5), (1, 0, -1.0)]).unwrap();
        assert_eq!(s.forward(&v(&[1.0, 1.0])).unwrap(), v(&[4.0, -1.0]));
        assert!(LinearMap::sparse(2, 2, vec![(2, 0, 1.0)]).is_err());
    }

    #[test]
    fn scaled_identity_detection() {
        assert_eq!(LinearMap::identity(3).scaled(2.0).as_scaled_identity(), Some(2.0));
        assert_eq!(LinearMap::diagonal(&[5.0, 5.0]).unwrap().as_scaled_identity(), Some(5.0));
        assert_eq!(LinearMap::diagonal(&[5.0, 4.0]).unwrap().as_scaled_identity(), None);
    }

    #[test]
    fn power_method_reference_values() {
        let d = LinearMap::diagonal(&[2.0, 3.0]).unwrap();
        assert!((spectral_norm_reference(&d, 50).unwrap() - 3.0).abs() <= 1e-8);
        let id = LinearMap::identity(6);
        assert!((spectral_norm_reference(&id, 5).unwrap() - 1.0).abs() <= 1e-15);
        assert_eq!(spectral_norm_reference(&LinearMap::zero(3, 3), 10).unwrap(), 0.0);
    }

    #[test]
    fn box_geometry() {
        let b = BoxSet::new(vec![0.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!((b.diameter().unwrap() - 5f64.sqrt()).abs() < 1e-15);
        assert_eq!(b.radius_from(&v(&[0.0, 0.0])).unwrap(), 2f64.sqrt());
        assert_eq!(b.project(&v(&[2.0, -3.0])), v(&[1.0, -1.0]));
        assert!(BoxSet::free(2).diameter().is_none());
        assert!(BoxSet::new(vec![1.0], vec![0.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let dense = dir.path().join("a.csv");
        std::fs::write(&dense, "1, 2, 3\n4,5,6\n").unwrap();
        let a = load_dense_csv(&dense).unwrap();
        assert_eq!(a.to_dense(), DMatrix::from_row_slice(2, 3, &[1., 2., 3., 4., 5., 6.]));
        let sp = dir.path().join("s.csv");
        std::fs::write(&sp, "0,0,1.0\n1,2,-2\n1,2,0.5\n").unwrap();
        let s = load_triplets_csv(&sp, None).unwrap();
        assert_eq!((s.rows(), s.cols()), (2, 3));
        assert_eq!(s.to_dense()[(1, 2)], -1.5);
        let ragged = dir.path().join("r.csv");
        std::fs::write(&ragged, "1,2\n3\n").unwrap();
        assert!(load_dense_csv(&ragged).is_err());
    }
}
