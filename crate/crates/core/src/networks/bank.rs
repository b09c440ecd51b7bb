use crate::numerics::{dot, Mat};
use crate::{Error, Result};

/// A family of `I` affine functions `v ↦ ⟨a_i, v⟩ + b_i`; row `i` of `a` is `a_i`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineBank {
    pub a: Mat,
    pub b: Vec<f64>,
}

/// Coefficients `A(x)`, `b(x)` of a parameterized network at a fixed condition.
pub type CoeffMatrices = AffineBank;

impl AffineBank {
    pub fn new(a: Mat, b: Vec<f64>) -> Result<Self> {
        if a.rows() == 0 {
            return Err(Error::InvalidArgument("affine bank needs I >= 1".into()));
        }
        if b.len() != a.rows() {
            return Err(Error::DimensionMismatch {
                what: "bank offsets",
                expected: a.rows(),
                got: b.len(),
            });
        }
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("bank offset"));
        }
        Ok(AffineBank { a, b })
    }

    /// Bank from rows `a_i` and offsets `b_i`.
    pub fn from_rows(rows: &[Vec<f64>], b: Vec<f64>) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let data: Vec<f64> = rows.iter().flatten().copied().collect();
        AffineBank::new(Mat::from_row_major(rows.len(), cols, data)?, b)
    }

    /// Splits a flat vector of length `(m + 1)·I`: the first `I·m` entries
    /// fill `A` row-major, the last `I` entries are `b`.
    pub fn from_flat(flat: &[f64], planes: usize, m: usize) -> Result<Self> {
        let want = (m + 1) * planes;
        if flat.len() != want {
            return Err(Error::DimensionMismatch {
                what: "embedded network output",
                expected: want,
                got: flat.len(),
            });
        }
        let (a, b) = flat.split_at(planes * m);
        Ok(AffineBank {
            a: Mat::from_row_major(planes, m, a.to_vec())?,
            b: b.to_vec(),
        })
    }

    #[inline]
    pub fn planes(&self) -> usize {
        self.b.len()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.a.cols()
    }

    pub fn plane_values_into(&self, v: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = dot(self.a.row(i), v) + self.b[i];
        }
    }

    pub fn plane_values(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.planes()];
        self.plane_values_into(v, &mut out);
        out
    }

    /// Index and value of the highest plane at `v`, lowest index on ties.
    pub fn max_plane(&self, v: &[f64]) -> (usize, f64) {
        argmax(&self.plane_values(v))
    }

    pub fn max_affine(&self, v: &[f64]) -> f64 {
        self.max_plane(v).1
    }

    pub fn log_sum_exp(&self, v: &[f64], temperature: f64) -> f64 {
        log_sum_exp(&self.plane_values(v), temperature)
    }

    /// Smooth value and its gradient `Σ σ_i a_i`.
    pub fn log_sum_exp_grad(&self, v: &[f64], temperature: f64) -> (f64, Vec<f64>) {
        let mut w = self.plane_values(v);
        let value = softmax_in_place(&mut w, temperature);
        let mut grad = vec![0.0; self.dim()];
        for (i, wi) in w.iter().enumerate() {
            for (g, a) in grad.iter_mut().zip(self.a.row(i)) {
                *g += wi * a;
            }
        }
        (value, grad)
    }

    /// Largest row norm, a Lipschitz constant of both smooth and max forms.
    pub fn max_slope_norm(&self) -> f64 {
        (0..self.planes())
            .map(|i| dot(self.a.row(i), self.a.row(i)).sqrt())
            .fold(0.0, f64::max)
    }
}

/// First index of the maximum.
pub fn argmax(values: &[f64]) -> (usize, f64) {
    let mut best = (0, values[0]);
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > best.1 {
            best = (i, *v);
        }
    }
    best
}

/// `T · log Σ exp(z_i / T)`, shifted by the maximum before exponentiation.
pub fn log_sum_exp(values: &[f64], temperature: f64) -> f64 {
    let (_, top) = argmax(values);
    let s: f64 = values.iter().map(|z| ((z - top) / temperature).exp()).sum();
    top + temperature * s.ln()
}

/// Overwrites `values` with the softmax weights at temperature `T` and
/// returns the log-sum-exp value.
pub fn softmax_in_place(values: &mut [f64], temperature: f64) -> f64 {
    let (_, top) = argmax(values);
    let inv_t = 1.0 / temperature;
    let mut s = 0.0;
    for z in values.iter_mut() {
        *z = ((*z - top) * inv_t).exp();
        s += *z;
    }
    let inv_s = 1.0 / s;
    for z in values.iter_mut() {
        *z *= inv_s;
    }
    top + temperature * s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_layout() {
        let bank = AffineBank::from_flat(&[2.0, 3.0], 1, 1).unwrap();
        assert_eq!(bank.a.row(0), &[2.0]);
        assert_eq!(bank.b, vec![3.0]);

        let bank = AffineBank::from_flat(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2, 2).unwrap();
        assert_eq!(bank.a.row(0), &[1.0, 2.0]);
        assert_eq!(bank.a.row(1), &[3.0, 4.0]);
        assert_eq!(bank.b, vec![5.0, 6.0]);

        assert!(AffineBank::from_flat(&[1.0, 2.0, 3.0], 2, 2).is_err());
    }

    #[test]
    fn max_affine_ties_lowest_index() {
        let bank = AffineBank::from_rows(&[vec![1.0], vec![1.0]], vec![0.0, 0.0]).unwrap();
        assert_eq!(bank.max_plane(&[0.3]).0, 0);
    }

    #[test]
    fn lse_large_magnitudes_stay_finite() {
        let z = [1e3, -1e3, 999.5];
        let v = log_sum_exp(&z, 1e-3);
        assert!(v.is_finite());
        assert!((v - 1e3).abs() < 1e-9);
        let v = log_sum_exp(&[-1e3, -1e3 + 1e-4], 1e-3);
        assert!(v.is_finite());
    }

    #[test]
    fn equal_planes_give_t_log_i() {
        for planes in [2usize, 30] {
            let vals = vec![0.7; planes];
            let gap = log_sum_exp(&vals, 0.1) - 0.7;
            assert!((gap - 0.1 * (planes as f64).ln()).abs() <= 1e-12);
        }
    }
}
