//! Aharonov-Bohm structures carried by the quantized kinetic energy,
//!
//! ```text
//! Op_{p^2} = (P - q A)^2 + K / Q^2,   q A = (hbar Phi_0 q / 2 pi hbar) (-Q2, Q1) / Q^2,
//! ```
//!
//! extracted from `grad Omega(1)` and `Delta Omega(1)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::moments::{omega_outcome, omega_on_mesh, HatSign, MomentKey, MomentTable};
use crate::quantizer::quantize_kinetic;
use crate::sim2::{ComplexPlaneVector, PlaneVector};
use crate::weights::{AlphaSpec, WeightSpec};

type C = Complex64;

/// Tolerance on `|d1 ln Omega(1) + 2|` below which a flux is extracted.
pub const GAUGE_TOL: f64 = 1e-6;

/// Physical scales: reduced Planck constant and the fictive charge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub hbar: f64,
    pub charge: f64,
}

impl Default for Units {
    fn default() -> Self {
        Units { hbar: 1.0, charge: 1.0 }
    }
}

impl Units {
    /// `2 pi hbar / charge`, one flux quantum.
    pub fn flux_quantum(&self) -> f64 {
        2.0 * PI * self.hbar / self.charge
    }
}

/// `|e1 . grad Omega(1) / Omega(1) + 2|`.
pub fn check_gauge_condition(m: &MomentTable) -> Result<f64> {
    Ok((m.log_grad()?.c1 + 2.0).norm())
}

/// `Phi_0 = -i (2 pi hbar / charge) e2 . grad Omega(1) / Omega(1)`, refused
/// when the gauge condition fails by more than `tol`.
pub fn flux(m: &MomentTable, units: Units, tol: f64) -> Result<C> {
    let residual = check_gauge_condition(m)?;
    if !(residual <= tol) {
        return Err(Error::GaugeCondition { residual, tol });
    }
    Ok(-C::i() * units.flux_quantum() * m.log_grad()?.c2)
}

/// `K = hbar^2 (grad Omega . grad Omega - Omega Delta Omega) / Omega^2`, bilinear dot.
pub fn scalar_strength(m: &MomentTable, hbar: f64) -> Result<C> {
    let g = m.grad()?;
    let o = m.omega0();
    Ok((g.dot(g) - o * m.lap()?) / (o * o) * (hbar * hbar))
}

/// `hbar^2 (2 nu + alpha'(0)^2 - alpha''(0))` for the example family.
pub fn k_from_alpha(nu: f64, alpha: &AlphaSpec, hbar: f64) -> C {
    let a1 = alpha.d1();
    (a1 * a1 - alpha.d2() + 2.0 * nu) * (hbar * hbar)
}

/// The closed form `2 hbar^2 nu^2` stated for the exponential profile.
pub fn k_printed_exponential(nu: f64, hbar: f64) -> f64 {
    2.0 * hbar * hbar * nu * nu
}

/// `q A(x)` in matrix form, `i [[-2 - a, b], [-b, -2 - a]] x / x^2` with
/// `(a, b) = grad Omega(1) / Omega(1)`; defined without the gauge condition.
pub fn vector_potential_matrix_at(m: &MomentTable, x: PlaneVector) -> Result<ComplexPlaneVector> {
    let r2 = x.norm_sqr();
    if !(r2 > 0.0) {
        return Err(Error::domain("vector potential at x = 0"));
    }
    let lg = m.log_grad()?;
    let (d, b) = (-lg.c1 - 2.0, lg.c2);
    let i = C::i();
    Ok(ComplexPlaneVector::new(i * (d * x.c1 + b * x.c2) / r2, i * (-b * x.c1 + d * x.c2) / r2))
}

/// `q A(x) = -(i / x*) (2 e1 + grad Omega(1) / Omega(1))`, the plane-product form.
pub fn vector_potential_plane_at(m: &MomentTable, x: PlaneVector) -> Result<ComplexPlaneVector> {
    let r2 = x.norm_sqr();
    if !(r2 > 0.0) {
        return Err(Error::domain("vector potential at x = 0"));
    }
    let v = m.log_grad()?.add_real(PlaneVector::new(2.0, 0.0));
    Ok(v.plane_mul_real(x.scale(1.0 / r2)).scale(-C::i()))
}

/// Gauge content of a weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaugeData {
    pub flux: C,
    /// `Phi_0 / (2 pi hbar / charge)`.
    pub flux_quanta: C,
    #[serde(rename = "K")]
    pub k: C,
    pub gauge_residual: f64,
    pub units: Units,
}

impl GaugeData {
    pub fn from_moments(m: &MomentTable, units: Units, tol: f64) -> Result<Self> {
        let f = flux(m, units, tol)?;
        Ok(GaugeData {
            flux: f,
            flux_quanta: f / units.flux_quantum(),
            k: scalar_strength(m, units.hbar)?,
            gauge_residual: check_gauge_condition(m)?,
            units,
        })
    }

    /// `A(x) = (Phi_0 / 2 pi) (-x2, x1) / x^2`; needs a real flux.
    pub fn vector_potential(&self, x: PlaneVector) -> Result<PlaneVector> {
        vector_potential_field(self, x)
    }
}

pub fn vector_potential_field(g: &GaugeData, x: PlaneVector) -> Result<PlaneVector> {
    let r2 = x.norm_sqr();
    if !(r2 > 0.0) {
        return Err(Error::domain("vector potential at x = 0"));
    }
    if g.flux.im.abs() > 1e-8 * g.flux.norm().max(1e-300) && g.flux.im.abs() > 1e-12 {
        return Err(Error::domain(format!("flux {} is not real", g.flux)));
    }
    Ok(PlaneVector::new(-x.c2, x.c1).scale(g.flux.re / (2.0 * PI * r2)))
}

/// `oint A . dl` along `gamma(s)`, `s in [0, 1)`, by the periodic trapezoid
/// rule with `n` nodes and a centred-difference tangent.
pub fn line_integral<G>(g: &GaugeData, gamma: G, n: usize) -> Result<f64>
where
    G: Fn(f64) -> PlaneVector,
{
    if n < 8 {
        return Err(Error::domain("line integral needs at least 8 nodes"));
    }
    let h = 1.0 / n as f64;
    let mut s = 0.0;
    for k in 0..n {
        let t = k as f64 * h;
        let x = gamma(t);
        // Fourth-order centred difference of a periodic curve.
        let d = (gamma(t - 2.0 * h) - gamma(t - h).scale(8.0) + gamma(t + h).scale(8.0) - gamma(t + 2.0 * h)).scale(1.0 / (12.0 * h));
        s += g.vector_potential(x)?.dot(d) * h;
    }
    Ok(s)
}

/// `c_invQ2` of the kinetic operator against its completed-square form
/// `-[(2 + a)^2 + b^2] + K`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CompletedSquare {
    pub c_inv_q2: C,
    pub completed: C,
    pub residual: f64,
}

pub fn completed_square_check(m: &MomentTable) -> Result<CompletedSquare> {
    let c = quantize_kinetic(m)?.c_inv_q2;
    let lg = m.log_grad()?;
    let (a, b) = (lg.c1, lg.c2);
    let completed = -((a + 2.0) * (a + 2.0) + b * b) + scalar_strength(m, 1.0)?;
    Ok(CompletedSquare { c_inv_q2: c, completed, residual: (c - completed).norm() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PullbackPoint {
    pub q: PlaneVector,
    /// Residuals of `grad F . Q`, `grad F . P`, `Delta F`, each scaled by `|Omega(1)|`.
    pub residuals: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PullbackReport {
    pub points: Vec<PullbackPoint>,
    pub max_residual: f64,
}

/// Checks, with `F(x') = Omega(Q / x')` differentiated at `x' = Q`:
///
/// ```text
/// grad F . Q = -d1 Omega(1)
/// grad F . P = -(Q.P / Q^2) d1 Omega(1) + ((Q2 P1 - Q1 P2) / Q^2) d2 Omega(1)
/// Delta F    = Delta Omega(1) / Q^2
/// ```
///
/// `P` is `Q` rotated by a quarter turn plus a radial part, so both
/// derivative components enter.
pub fn pullback_identity_check(m: &MomentTable, w: &WeightSpec, samples: &[PlaneVector], tol: f64) -> Result<PullbackReport> {
    let g = m.grad()?;
    let lap = m.lap()?;
    let o1 = m.omega0().norm();
    let key = MomentKey::beta(0.0);
    let base = omega_outcome(w, key, PlaneVector::E1, tol, HatSign::Minus)?;
    let mut points = Vec::with_capacity(samples.len());
    for &q in samples {
        let f = |xp: PlaneVector| -> Result<C> { omega_on_mesh(w, key, q.div(xp)?, HatSign::Minus, &base.mesh) };
        let h0 = 1e-3 * q.norm();
        let grad_at = |h: f64| -> Result<(C, C)> {
            let d1 = (f(q + PlaneVector::new(h, 0.0))? - f(q - PlaneVector::new(h, 0.0))?) / (2.0 * h);
            let d2 = (f(q + PlaneVector::new(0.0, h))? - f(q - PlaneVector::new(0.0, h))?) / (2.0 * h);
            Ok((d1, d2))
        };
        let centre = f(q)?;
        let lap_at = |h: f64| -> Result<C> {
            let s = f(q + PlaneVector::new(h, 0.0))? + f(q - PlaneVector::new(h, 0.0))? + f(q + PlaneVector::new(0.0, h))? + f(q - PlaneVector::new(0.0, h))?;
            Ok((s - centre * 4.0) / (h * h))
        };
        let (c1, c2) = grad_at(h0)?;
        let (f1, f2) = grad_at(h0 / 2.0)?;
        let (d1, d2) = ((f1 * 4.0 - c1) / 3.0, (f2 * 4.0 - c2) / 3.0);
        let dd = (lap_at(h0 / 2.0)? * 4.0 - lap_at(h0)?) / 3.0;

        let q2 = q.norm_sqr();
        let p = PlaneVector::new(-q.c2, q.c1) + q.scale(0.5);
        let lhs_q = d1 * q.c1 + d2 * q.c2;
        let lhs_p = d1 * p.c1 + d2 * p.c2;
        let rhs_q = -g.c1;
        let rhs_p = -g.c1 * (q.dot(p) / q2) + g.c2 * ((q.c2 * p.c1 - q.c1 * p.c2) / q2);
        let rhs_lap = lap / q2;
        let residuals = [
            (lhs_q - rhs_q).norm() / o1,
            (lhs_p - rhs_p).norm() * q.norm() / (p.norm() * o1),
            (dd - rhs_lap).norm() * q2 / o1,
        ];
        points.push(PullbackPoint { q, residuals });
    }
    let max_residual = points.iter().flat_map(|p| p.residuals).fold(0.0, f64::max);
    Ok(PullbackReport { points, max_residual })
}
