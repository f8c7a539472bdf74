//! Symmetric tridiagonal matrices and Sturm-sequence bisection.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SymTridiag {
    pub diag: Vec<f64>,
    /// `off[i]` couples rows `i` and `i + 1`.
    pub off: Vec<f64>,
}

impl SymTridiag {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Result<Self> {
        if diag.is_empty() || off.len() + 1 != diag.len() {
            return Err(Error::InvalidGrid(format!("{} diagonal and {} off-diagonal entries", diag.len(), off.len())));
        }
        if diag.iter().chain(&off).any(|v| !v.is_finite()) {
            return Err(Error::InvalidGrid("non-finite matrix entry".into()));
        }
        Ok(SymTridiag { diag, off })
    }

    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    /// Number of eigenvalues strictly below `x`.
    pub fn count_below(&self, x: f64) -> usize {
        let mut count = 0;
        let mut q = 1.0;
        for i in 0..self.diag.len() {
            let coupling = if i == 0 { 0.0 } else { self.off[i - 1] * self.off[i - 1] / q };
            q = self.diag[i] - x - coupling;
            if q == 0.0 {
                q = -f64::EPSILON * (self.diag[i].abs() + x.abs()).max(f64::MIN_POSITIVE);
            }
            if q < 0.0 {
                count += 1;
            }
        }
        count
    }

    /// Gershgorin interval.
    pub fn bounds(&self) -> (f64, f64) {
        let n = self.diag.len();
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..n {
            let r = if i > 0 { self.off[i - 1].abs() } else { 0.0 } + if i + 1 < n { self.off[i].abs() } else { 0.0 };
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    /// The `k` lowest eigenvalues, ascending, by bisection.
    pub fn lowest_eigenvalues(&self, k: usize) -> Result<Vec<f64>> {
        if k > self.len() {
            return Err(Error::Eigen(format!("asked for {k} eigenvalues of a {}x{} matrix", self.len(), self.len())));
        }
        let (lo, hi) = self.bounds();
        let mut out = Vec::with_capacity(k);
        for i in 0..k {
            let (mut a, mut b) = (out.last().copied().unwrap_or(lo), hi);
            let mut iter = 0;
            while b - a > 4.0 * f64::EPSILON * a.abs().max(b.abs()).max(f64::MIN_POSITIVE) {
                let m = 0.5 * (a + b);
                if m <= a || m >= b {
                    break;
                }
                if self.count_below(m) > i {
                    b = m;
                } else {
                    a = m;
                }
                iter += 1;
                if iter > 2000 {
                    return Err(Error::Eigen(format!("bisection for level {i} stalled on [{a}, {b}]")));
                }
            }
            out.push(0.5 * (a + b));
        }
        Ok(out)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off[i] * v[i + 1];
                }
                s
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn discrete_laplacian_spectrum() {
        let n = 50;
        let m = SymTridiag::new(vec![2.0; n], vec![-1.0; n - 1]).unwrap();
        let ev = m.lowest_eigenvalues(5).unwrap();
        for (k, v) in ev.iter().enumerate() {
            let exact = 2.0 - 2.0 * ((k + 1) as f64 * PI / (n + 1) as f64).cos();
            assert!((v - exact).abs() < 1e-13, "{v} vs {exact}");
        }
    }

    #[test]
    fn sturm_count_brackets() {
        let m = SymTridiag::new(vec![1.0, 3.0, -2.0], vec![0.5, 0.25]).unwrap();
        let (lo, hi) = m.bounds();
        assert_eq!(m.count_below(lo), 0);
        assert_eq!(m.count_below(hi + 1e-12), 3);
        let ev = m.lowest_eigenvalues(3).unwrap();
        assert!(ev.windows(2).all(|w| w[0] < w[1]));
        // Trace and determinant.
        assert!((ev.iter().sum::<f64>() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(SymTridiag::new(vec![1.0, 2.0], vec![]).is_err());
        assert!(SymTridiag::new(vec![f64::NAN], vec![]).is_err());
        assert!(SymTridiag::new(vec![1.0], vec![]).unwrap().lowest_eigenvalues(2).is_err());
    }
}
