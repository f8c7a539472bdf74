//! Functions and sampled fields on the punctured plane.
//!
//! [`PlaneFunction`] is the analytic side (symbols `u(q)`, test functions,
//! states); [`SampledField`] holds quantum amplitudes on a log-polar grid
//! `r_i = e^{t_i}`, `theta_j = 2 pi j / n_theta`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{Decay, LargeDecay};
use crate::sim2::PlaneVector;

/// A complex-valued function on the punctured plane.
pub trait PlaneFunction: Send + Sync {
    fn eval(&self, x: PlaneVector) -> Complex64;

    /// True when the value depends on `|x|` only.
    fn is_radial(&self) -> bool {
        false
    }

    /// Declared behaviour at `0` and `inf`, used to gate convolutions.
    fn decay(&self) -> Option<Decay> {
        None
    }
}

pub type SharedFunction = Arc<dyn PlaneFunction>;

/// A closure with optional radial and decay declarations.
pub struct FnField<F> {
    f: F,
    radial: bool,
    decay: Option<Decay>,
}

impl<F> FnField<F>
where
    F: Fn(PlaneVector) -> Complex64 + Send + Sync,
{
    pub fn new(f: F) -> Self {
        FnField { f, radial: false, decay: None }
    }

    pub fn radial(f: F) -> Self {
        FnField { f, radial: true, decay: None }
    }

    pub fn with_decay(mut self, decay: Decay) -> Self {
        self.decay = Some(decay);
        self
    }
}

impl<F> PlaneFunction for FnField<F>
where
    F: Fn(PlaneVector) -> Complex64 + Send + Sync,
{
    fn eval(&self, x: PlaneVector) -> Complex64 {
        (self.f)(x)
    }
    fn is_radial(&self) -> bool {
        self.radial
    }
    fn decay(&self) -> Option<Decay> {
        self.decay
    }
}

impl fmt::Debug for dyn PlaneFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PlaneFunction(radial = {})", self.is_radial())
    }
}

/// The constant function.
#[derive(Debug, Clone, Copy)]
pub struct Constant(pub Complex64);

impl PlaneFunction for Constant {
    fn eval(&self, _: PlaneVector) -> Complex64 {
        self.0
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn decay(&self) -> Option<Decay> {
        Some(Decay::new(0.0, LargeDecay::Power { exponent: 0.0 }))
    }
}

/// `u(x) = |x|^beta`.
#[derive(Debug, Clone, Copy)]
pub struct RadialPower {
    pub beta: f64,
}

impl PlaneFunction for RadialPower {
    fn eval(&self, x: PlaneVector) -> Complex64 {
        Complex64::new(x.norm().powf(self.beta), 0.0)
    }
    fn is_radial(&self) -> bool {
        true
    }
    fn decay(&self) -> Option<Decay> {
        Some(Decay::new(self.beta, LargeDecay::Power { exponent: -self.beta }))
    }
}

/// `u(x) = x_1` (`index = 0`) or `x_2` (`index = 1`).
#[derive(Debug, Clone, Copy)]
pub struct Coordinate {
    pub index: usize,
}

impl PlaneFunction for Coordinate {
    fn eval(&self, x: PlaneVector) -> Complex64 {
        Complex64::new(if self.index == 0 { x.c1 } else { x.c2 }, 0.0)
    }
    fn decay(&self) -> Option<Decay> {
        Some(Decay::new(1.0, LargeDecay::Power { exponent: -1.0 }))
    }
}

/// `x -> u(x / q0)`, the transported symbol of a position function.
pub struct Dilated {
    inner: SharedFunction,
    q0_inv: PlaneVector,
}

impl Dilated {
    pub fn new(inner: SharedFunction, q0: PlaneVector) -> Result<Self> {
        Ok(Dilated { inner, q0_inv: q0.inv()? })
    }
}

impl PlaneFunction for Dilated {
    fn eval(&self, x: PlaneVector) -> Complex64 {
        self.inner.eval(x * self.q0_inv)
    }
    fn is_radial(&self) -> bool {
        self.inner.is_radial()
    }
    fn decay(&self) -> Option<Decay> {
        self.inner.decay()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    /// Catmull-Rom in both directions.
    Bicubic,
}

/// Uniform grid in `(ln r, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogPolarGrid {
    pub t_min: f64,
    pub t_max: f64,
    pub n_r: usize,
    pub n_theta: usize,
}

impl LogPolarGrid {
    pub fn new(r_min: f64, r_max: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(r_min > 0.0 && r_max > r_min && r_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("need 0 < r_min < r_max, got [{r_min}, {r_max}]")));
        }
        if n_r < 4 || n_theta < 4 {
            return Err(Error::InvalidGrid(format!("grid {n_r}x{n_theta} too small")));
        }
        Ok(LogPolarGrid { t_min: r_min.ln(), t_max: r_max.ln(), n_r, n_theta })
    }

    /// Grid with log-step `dt`, starting at `t_min`.
    pub fn with_step(t_min: f64, dt: f64, n_r: usize, n_theta: usize) -> Result<Self> {
        if !(dt > 0.0) || n_r < 4 || n_theta < 4 {
            return Err(Error::InvalidGrid("need dt > 0 and at least 4x4 nodes".into()));
        }
        Ok(LogPolarGrid { t_min, t_max: t_min + dt * (n_r - 1) as f64, n_r, n_theta })
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.n_r - 1) as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.n_theta as f64
    }

    pub fn t(&self, i: usize) -> f64 {
        self.t_min + i as f64 * self.dt()
    }

    pub fn r(&self, i: usize) -> f64 {
        self.t(i).exp()
    }

    pub fn theta(&self, j: usize) -> f64 {
        j as f64 * self.dtheta()
    }

    pub fn point(&self, i: usize, j: usize) -> PlaneVector {
        PlaneVector::from_polar(self.r(i), self.theta(j))
    }

    pub fn len(&self) -> usize {
        self.n_r * self.n_theta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn r_min(&self) -> f64 {
        self.t_min.exp()
    }

    pub fn r_max(&self) -> f64 {
        self.t_max.exp()
    }
}

/// Amplitudes sampled on a [`LogPolarGrid`], row-major in `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledField {
    pub grid: LogPolarGrid,
    pub values: Vec<Complex64>,
}

impl SampledField {
    pub fn from_fn<F>(grid: LogPolarGrid, f: F) -> Self
    where
        F: Fn(PlaneVector) -> Complex64 + Sync,
    {
        let values = (0..grid.len())
            .into_par_iter()
            .map(|k| f(grid.point(k / grid.n_theta, k % grid.n_theta)))
            .collect();
        SampledField { grid, values }
    }

    pub fn zeros(grid: LogPolarGrid) -> Self {
        SampledField { grid, values: vec![Complex64::new(0.0, 0.0); grid.len()] }
    }

    pub fn at(&self, i: usize, j: usize) -> Complex64 {
        self.values[i * self.grid.n_theta + j]
    }

    /// `int conj(a) b d^2x`, trapezoid in `t` (half weights at the ends),
    /// periodic in `theta`.
    pub fn inner(&self, other: &SampledField) -> Result<Complex64> {
        self.check_same_grid(other)?;
        let g = self.grid;
        let mut s = Complex64::new(0.0, 0.0);
        for i in 0..g.n_r {
            let w = if i == 0 || i + 1 == g.n_r { 0.5 } else { 1.0 };
            let r2 = g.r(i) * g.r(i);
            let mut row = Complex64::new(0.0, 0.0);
            for j in 0..g.n_theta {
                row += self.at(i, j).conj() * other.at(i, j);
            }
            s += row * (w * r2);
        }
        Ok(s * (g.dt() * g.dtheta()))
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner(self).map(|v| v.re.max(0.0).sqrt()).unwrap_or(f64::NAN)
    }

    /// `||self - other|| / ||other||`.
    pub fn relative_l2_diff(&self, other: &SampledField) -> Result<f64> {
        self.check_same_grid(other)?;
        let diff = SampledField {
            grid: self.grid,
            values: self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect(),
        };
        let n = other.norm_l2();
        if n == 0.0 {
            return Ok(diff.norm_l2());
        }
        Ok(diff.norm_l2() / n)
    }

    /// Pointwise product with a multiplier sampled on the same grid.
    pub fn pointwise<F>(&self, f: F) -> SampledField
    where
        F: Fn(usize, usize, Complex64) -> Complex64 + Sync,
    {
        let n_theta = self.grid.n_theta;
        let values = self
            .values
            .par_iter()
            .enumerate()
            .map(|(k, &v)| f(k / n_theta, k % n_theta, v))
            .collect();
        SampledField { grid: self.grid, values }
    }

    fn check_same_grid(&self, other: &SampledField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::InvalidGrid("fields live on different grids".into()));
        }
        Ok(())
    }

    /// Value at an arbitrary point.
    ///
    /// Outside `[r_min, r_max]` this is `0` when `zero_pad`, an
    /// [`Error::Extrapolation`] otherwise.
    pub fn interpolate(&self, x: PlaneVector, mode: Interpolation, zero_pad: bool) -> Result<Complex64> {
        let g = self.grid;
        let r = x.norm();
        if !(r > 0.0) {
            return Err(Error::domain("interpolation at the origin"));
        }
        let t = r.ln();
        let span = 1e-12 * (1.0 + g.t_max.abs().max(g.t_min.abs()));
        if t < g.t_min - span || t > g.t_max + span {
            if zero_pad {
                return Ok(Complex64::new(0.0, 0.0));
            }
            return Err(Error::Extrapolation { r, r_min: g.r_min(), r_max: g.r_max() });
        }
        let u = ((t - g.t_min) / g.dt()).clamp(0.0, (g.n_r - 1) as f64);
        let mut th = x.arg();
        if th < 0.0 {
            th += 2.0 * PI;
        }
        let v = th / g.dtheta();
        let i0 = (u.floor() as usize).min(g.n_r - 2);
        let fu = u - i0 as f64;
        let vf = v.floor();
        let fv = v - vf;
        let j0 = (vf as i64).rem_euclid(g.n_theta as i64) as usize;
        let col = |j: i64| j.rem_euclid(g.n_theta as i64) as usize;
        let row = |i: i64| -> Option<usize> {
            if i < 0 || i >= g.n_r as i64 {
                None
            } else {
                Some(i as usize)
            }
        };
        match mode {
            Interpolation::Bilinear => {
                let j1 = col(j0 as i64 + 1);
                let a = self.at(i0, j0) * (1.0 - fv) + self.at(i0, j1) * fv;
                let b = self.at(i0 + 1, j0) * (1.0 - fv) + self.at(i0 + 1, j1) * fv;
                Ok(a * (1.0 - fu) + b * fu)
            }
            Interpolation::Bicubic => {
                let wu = catmull_rom(fu);
                let wv = catmull_rom(fv);
                let mut s = Complex64::new(0.0, 0.0);
                for (di, &wi) in wu.iter().enumerate() {
                    // Rows beyond the grid are treated as zero.
                    let Some(ii) = row(i0 as i64 + di as i64 - 1) else { continue };
                    let mut acc = Complex64::new(0.0, 0.0);
                    for (dj, &wj) in wv.iter().enumerate() {
                        acc += self.at(ii, col(j0 as i64 + dj as i64 - 1)) * wj;
                    }
                    s += acc * wi;
                }
                Ok(s)
            }
        }
    }

    /// Rows of `r, theta, re, im`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("r,theta,re,im\n");
        for i in 0..self.grid.n_r {
            for j in 0..self.grid.n_theta {
                let v = self.at(i, j);
                out.push_str(&format!("{},{},{},{}\n", self.grid.r(i), self.grid.theta(j), v.re, v.im));
            }
        }
        out
    }
}

fn catmull_rom(s: f64) -> [f64; 4] {
    let s2 = s * s;
    let s3 = s2 * s;
    [
        0.5 * (-s3 + 2.0 * s2 - s),
        0.5 * (3.0 * s3 - 5.0 * s2 + 2.0),
        0.5 * (-3.0 * s3 + 4.0 * s2 + s),
        0.5 * (s3 - s2),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bump(x: PlaneVector) -> Complex64 {
        let t = x.norm().ln();
        Complex64::new((-(t * t) / 0.5).exp() * (1.0 + 0.3 * x.arg().cos()), 0.2 * (-(t * t)).exp() * x.arg().sin())
    }

    #[test]
    fn grid_geometry() {
        let g = LogPolarGrid::new(0.01, 100.0, 65, 32).unwrap();
        assert!((g.r(0) - 0.01).abs() < 1e-15);
        assert!((g.r(64) - 100.0).abs() < 1e-11);
        assert!(LogPolarGrid::new(0.0, 1.0, 8, 8).is_err());
        assert!(LogPolarGrid::new(1.0, 1.0, 8, 8).is_err());
    }

    #[test]
    fn norm_of_gaussian() {
        // int e^{-x^2} d^2x = pi.
        let g = LogPolarGrid::new(1e-4, 10.0, 800, 16).unwrap();
        let f = SampledField::from_fn(g, |x| Complex64::new((-x.norm_sqr() / 2.0).exp(), 0.0));
        assert!((f.norm_l2().powi(2) - PI).abs() < 1e-5);
    }

    #[test]
    fn interpolation_reproduces_nodes() {
        let g = LogPolarGrid::new(0.05, 20.0, 64, 32).unwrap();
        let f = SampledField::from_fn(g, bump);
        for mode in [Interpolation::Bilinear, Interpolation::Bicubic] {
            for &(i, j) in &[(3usize, 0usize), (10, 31), (40, 7)] {
                let v = f.interpolate(g.point(i, j), mode, false).unwrap();
                assert!((v - f.at(i, j)).norm() < 1e-12, "{mode:?} {i} {j}");
            }
        }
    }

    #[test]
    fn bicubic_beats_bilinear_between_nodes() {
        let g = LogPolarGrid::new(0.05, 20.0, 128, 64).unwrap();
        let f = SampledField::from_fn(g, bump);
        let mut e_lin: f64 = 0.0;
        let mut e_cub: f64 = 0.0;
        for k in 0..50 {
            let x = PlaneVector::from_polar((-1.5 + 0.06 * k as f64 + 0.013).exp(), 0.37 * k as f64);
            let exact = bump(x);
            e_lin = e_lin.max((f.interpolate(x, Interpolation::Bilinear, false).unwrap() - exact).norm());
            e_cub = e_cub.max((f.interpolate(x, Interpolation::Bicubic, false).unwrap() - exact).norm());
        }
        assert!(e_cub < e_lin / 5.0, "{e_cub} vs {e_lin}");
        assert!(e_cub < 1e-3);
    }

    #[test]
    fn outside_support() {
        let g = LogPolarGrid::new(0.1, 10.0, 16, 8).unwrap();
        let f = SampledField::from_fn(g, bump);
        let far = PlaneVector::new(50.0, 0.0);
        assert!(matches!(f.interpolate(far, Interpolation::Bilinear, false), Err(Error::Extrapolation { .. })));
        assert_eq!(f.interpolate(far, Interpolation::Bilinear, true).unwrap(), Complex64::new(0.0, 0.0));
    }

    #[test]
    fn dilated_symbol() {
        let u: SharedFunction = Arc::new(RadialPower { beta: 1.0 });
        let d = Dilated::new(u, PlaneVector::new(2.0, 0.0)).unwrap();
        assert!((d.eval(PlaneVector::new(3.0, 4.0)).re - 2.5).abs() < 1e-15);
        assert!(d.is_radial());
    }
}
