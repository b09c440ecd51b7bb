//! Small dense linear algebra, a reproducible PRNG, uniform box sampling and
//! the brute-force grid oracle used to certify low-dimensional solves.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Dense row-major matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_row_major(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entry"));
        }
        Ok(Mat { rows, cols, data })
    }

    pub fn identity(size: usize) -> Self {
        let mut m = Mat::zeros(size, size);
        for i in 0..size {
            m.data[i * size + i] = 1.0;
        }
        m
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `out = self · v`
    pub fn matvec_into(&self, v: &[f64], out: &mut [f64]) {
        debug_assert_eq!(v.len(), self.cols);
        debug_assert_eq!(out.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate() {
            *o = dot(self.row(r), v);
        }
    }

    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.rows];
        self.matvec_into(v, &mut out);
        out
    }
}

/// Inner product with four independent partial sums.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    let mut acc = [0.0; 4];
    for (p, q) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += p[k] * q[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Axis-aligned box `lower <= u <= upper`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxDomain {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                what: "box bounds",
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidArgument("box must have at least one axis".into()));
        }
        for (j, (lo, hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo >= hi {
                return Err(Error::InvalidArgument(format!(
                    "box axis {j}: need finite lower < upper, got [{lo}, {hi}]"
                )));
            }
        }
        Ok(BoxDomain { lower, upper })
    }

    /// The hypercube `[lo, hi]^dim`.
    pub fn cube(dim: usize, lo: f64, hi: f64) -> Result<Self> {
        BoxDomain::new(vec![lo; dim], vec![hi; dim])
    }

    /// `[-1, 1]^dim`, the decision space used throughout the experiments.
    pub fn symmetric_unit(dim: usize) -> Self {
        BoxDomain::cube(dim, -1.0, 1.0).expect("dim >= 1")
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(lo, hi)| 0.5 * (lo + hi))
            .collect()
    }

    pub fn contains(&self, u: &[f64]) -> bool {
        u.len() == self.dim()
            && u
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (lo, hi))| *lo <= *v && *v <= *hi)
    }
}

/// SplitMix64 (Steele, Lea & Flood, 2014).
///
/// State update is `s += 0x9E3779B97F4A7C15`; the output is `s` passed
/// through the finalizer
///
/// ```text
/// z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
/// z = (z ^ (z >> 27)) * 0x94D049BB133111EB
/// z =  z ^ (z >> 31)
/// ```
///
/// with wrapping 64-bit arithmetic. Floats in `[0, 1)` take the top 53 bits:
/// `(next_u64() >> 11) * 2^-53`. Bounded integers in `[0, k)` use the
/// multiply-high reduction `(next_u64() as u128 * k as u128) >> 64`. The
/// stream is identical on every platform and easy to port.
#[derive(Clone, Debug)]
pub struct Rng {
    state: u64,
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl Rng {
    pub fn new(seed: u64) -> Self {
        Rng { state: seed }
    }

    /// Seed for an independent sub-stream identified by `tag`.
    ///
    /// Used to give each experiment cell, network and data split its own
    /// reproducible stream without threading one generator through everything.
    pub fn derive_seed(seed: u64, tag: u64) -> u64 {
        mix64(mix64(seed.wrapping_add(GOLDEN_GAMMA)) ^ tag.wrapping_mul(GOLDEN_GAMMA))
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(GOLDEN_GAMMA);
        mix64(self.state)
    }

    /// Uniform in `[0, 1)`.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`, clamped into `[lo, hi]` against rounding.
    #[inline]
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        (lo + (hi - lo) * self.next_f64()).clamp(lo, hi)
    }

    /// Uniform integer in `[0, k)`. `k` must be positive.
    #[inline]
    pub fn below(&mut self, k: usize) -> usize {
        debug_assert!(k > 0);
        ((self.next_u64() as u128 * k as u128) >> 64) as usize
    }

    /// Fisher–Yates shuffle, last element first.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i + 1);
            items.swap(i, j);
        }
    }
}

/// `count` points drawn uniformly from `domain`, one coordinate at a time.
pub fn sample_uniform_box(domain: &BoxDomain, count: usize, rng: &mut Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            domain
                .lower()
                .iter()
                .zip(domain.upper())
                .map(|(lo, hi)| rng.uniform(*lo, *hi))
                .collect()
        })
        .collect()
}

/// Largest box dimension the grid oracle accepts.
pub const GRID_MAX_DIM: usize = 4;

/// Exhaustive minimization of `f` over a uniform lattice on `domain`.
///
/// Nodes are visited in lexicographic index order (last axis fastest); the
/// first node attaining the minimum wins. Endpoints of each axis are always
/// nodes.
pub fn grid_minimize<F>(f: F, domain: &BoxDomain, points_per_axis: usize) -> Result<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> f64,
{
    let dim = domain.dim();
    if dim > GRID_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim,
            max: GRID_MAX_DIM,
        });
    }
    if points_per_axis < 2 {
        return Err(Error::InvalidArgument(
            "grid needs at least 2 points per axis".into(),
        ));
    }
    let axes: Vec<Vec<f64>> = (0..dim)
        .map(|j| grid_axis(domain.lower()[j], domain.upper()[j], points_per_axis))
        .collect();

    let mut index = vec![0usize; dim];
    let mut point: Vec<f64> = axes.iter().map(|a| a[0]).collect();
    let mut best_point = point.clone();
    let mut best_value = f64::INFINITY;
    loop {
        let v = f(&point);
        if v < best_value {
            best_value = v;
            best_point.copy_from_slice(&point);
        }
        // odometer increment, last axis fastest
        let mut axis = dim;
        loop {
            if axis == 0 {
                return Ok((best_point, best_value));
            }
            axis -= 1;
            index[axis] += 1;
            if index[axis] < points_per_axis {
                point[axis] = axes[axis][index[axis]];
                break;
            }
            index[axis] = 0;
            point[axis] = axes[axis][0];
        }
    }
}

/// `points` evenly spaced nodes from `lo` to `hi` inclusive.
pub fn grid_axis(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    let last = (points - 1) as f64;
    (0..points)
        .map(|k| {
            if k + 1 == points {
                hi
            } else {
                lo + (hi - lo) * (k as f64 / last)
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 0 from the reference C implementation.
        let mut rng = Rng::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn sample_box_containment_and_determinism() {
        let dom = BoxDomain::symmetric_unit(2);
        let a = sample_uniform_box(&dom, 3, &mut Rng::new(7));
        assert_eq!(a.len(), 3);
        assert!(a.iter().all(|p| dom.contains(p)));
        let b = sample_uniform_box(&dom, 3, &mut Rng::new(7));
        assert_eq!(a, b);

        let thin = BoxDomain::new(vec![0.0], vec![1e-9]).unwrap();
        let p = sample_uniform_box(&thin, 1, &mut Rng::new(1));
        assert!(p[0][0] >= 0.0 && p[0][0] <= 1e-9);
    }

    #[test]
    fn sample_box_mean_is_centered() {
        let dom = BoxDomain::symmetric_unit(3);
        let pts = sample_uniform_box(&dom, 100_000, &mut Rng::new(2024));
        for j in 0..3 {
            let mean = pts.iter().map(|p| p[j]).sum::<f64>() / pts.len() as f64;
            assert!(mean.abs() <= 0.02, "axis {j} mean {mean}");
        }
    }

    #[test]
    fn box_rejects_bad_bounds() {
        assert!(BoxDomain::new(vec![1.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![0.0, 0.0], vec![1.0]).is_err());
        assert!(BoxDomain::new(vec![], vec![]).is_err());
    }

    #[test]
    fn grid_quadratic_and_linear() {
        let dom = BoxDomain::symmetric_unit(1);
        let (u, v) = grid_minimize(|u| u[0] * u[0], &dom, 201).unwrap();
        assert_eq!(u, vec![0.0]);
        assert_eq!(v, 0.0);

        let (u, v) = grid_minimize(|u| u[0], &dom, 11).unwrap();
        assert_eq!(u, vec![-1.0]);
        assert_eq!(v, -1.0);
    }

    #[test]
    fn grid_offset_quadratic_2d() {
        let dom = BoxDomain::symmetric_unit(2);
        let f = |u: &[f64]| (u[0] - 0.3).powi(2) + (u[1] + 0.4).powi(2);
        let (u, v) = grid_minimize(f, &dom, 401).unwrap();
        // half-step is 0.0025; both offsets are lattice-aligned up to rounding
        assert!(v >= 0.0 && v <= 2.0 * 0.0025f64.powi(2), "value {v}");
        assert!((u[0] - 0.3).abs() <= 0.0025 && (u[1] + 0.4).abs() <= 0.0025);
    }

    #[test]
    fn grid_ties_take_first_index() {
        let dom = BoxDomain::symmetric_unit(2);
        let (u, _) = grid_minimize(|_| 1.0, &dom, 5).unwrap();
        assert_eq!(u, vec![-1.0, -1.0]);
        // |u0|: minimum along u0 = 0, ties on u1 broken toward u1 = -1
        let (u, _) = grid_minimize(|u| u[0].abs(), &dom, 5).unwrap();
        assert_eq!(u, vec![0.0, -1.0]);
    }

    #[test]
    fn grid_dimension_cap() {
        let dom = BoxDomain::symmetric_unit(5);
        assert!(matches!(
            grid_minimize(|_| 0.0, &dom, 2),
            Err(Error::DimensionTooLarge { dim: 5, .. })
        ));
        assert!(grid_minimize(|_| 0.0, &BoxDomain::symmetric_unit(1), 1).is_err());
    }

    #[test]
    fn grid_value_bounds_every_node() {
        let dom = BoxDomain::symmetric_unit(2);
        let f = |u: &[f64]| (3.0 * u[0]).sin() + u[1] * u[1] - 0.5 * u[0] * u[1];
        let (_, best) = grid_minimize(f, &dom, 21).unwrap();
        for a in grid_axis(-1.0, 1.0, 21) {
            for b in grid_axis(-1.0, 1.0, 21) {
                assert!(best <= f(&[a, b]));
            }
        }
    }

    #[test]
    fn shuffle_is_permutation() {
        let mut v: Vec<usize> = (0..100).collect();
        Rng::new(3).shuffle(&mut v);
        let mut s = v.clone();
        s.sort();
        assert_eq!(s, (0..100).collect::<Vec<_>>());
        assert_ne!(v, s);
    }
}
