//! Rank-one weights built from a single state `psi(x) = g(|x|) e^{i mu arg x}`.
//!
//! ```text
//! w_psi(q, p)     = (1/q^2) int d^2x e^{-i p.x} conj(psi(x/q)) psi(x)
//! w_hat_psi(u, v) = (2 pi / u^2) psi(-v) conj(psi(-v/u))
//! Omega(q)        = (2 pi / q^2) int d^2x / x^2 psi(x) conj(psi(x/q))
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gauge::{self, GaugeData, Units};
use crate::moments::{MomentRequest, MomentTable};
use crate::quadrature::{integrate_interval, integrate_log_polar, Decay, Estimate, LargeDecay, QuadOptions};
use crate::sim2::{ComplexPlaneVector, PlaneVector};
use crate::weights::{HatDerivatives, Trap, WeightModel, WeightSpec};

type C = Complex64;

/// Default tolerance on `| ||psi|| - 1 |` below which a state is rescaled.
pub const NORM_TOL: f64 = 1e-3;

/// `g(r)`, `g'(r)`, `g''(r)`.
pub type RadialFn = dyn Fn(f64) -> [f64; 3] + Send + Sync;

/// A radial profile given in code.
#[derive(Clone)]
pub struct CustomProfile {
    pub label: String,
    pub f: Arc<RadialFn>,
    /// Radii outside which `g` is negligible.
    pub support: (f64, f64),
    /// `g(r) ~ r^small_power` as `r -> 0`; must be positive.
    pub small_power: f64,
}

/// Radial part `g` of a state, up to normalization.
#[derive(Clone)]
pub enum RadialProfile {
    /// `exp(-(r - center)^2 / 2 width^2)`.
    GaussianRing { center: f64, width: f64 },
    /// `r^n exp(-r^2 / 2 s^2)`.
    PowerGaussian { n: u32, s: f64 },
    Custom(CustomProfile),
}

impl fmt::Debug for RadialProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RadialProfile::GaussianRing { center, width } => write!(f, "GaussianRing {{ center: {center}, width: {width} }}"),
            RadialProfile::PowerGaussian { n, s } => write!(f, "PowerGaussian {{ n: {n}, s: {s} }}"),
            RadialProfile::Custom(c) => write!(f, "Custom({})", c.label),
        }
    }
}

impl RadialProfile {
    fn eval(&self, r: f64) -> [f64; 3] {
        match self {
            RadialProfile::GaussianRing { center, width } => {
                let u = (r - center) / (width * width);
                let g = (-(r - center) * (r - center) / (2.0 * width * width)).exp();
                [g, -u * g, (u * u - 1.0 / (width * width)) * g]
            }
            RadialProfile::PowerGaussian { n, s } => {
                let n = *n as f64;
                let g = r.powf(n) * (-r * r / (2.0 * s * s)).exp();
                let l = n / r - r / (s * s);
                [g, l * g, (l * l - n / (r * r) - 1.0 / (s * s)) * g]
            }
            RadialProfile::Custom(c) => (c.f)(r),
        }
    }

    /// `(r_lo, r_hi)` carrying all but a negligible part of every radial integral.
    fn support(&self) -> (f64, f64) {
        match self {
            RadialProfile::GaussianRing { center, width } => ((center - 14.0 * width).max(1e-3 * center), center + 14.0 * width),
            RadialProfile::PowerGaussian { n, s } => (s * (-20.0 / *n as f64).exp(), s * ((*n as f64).sqrt() + 12.0)),
            RadialProfile::Custom(c) => c.support,
        }
    }

    /// Power of `g` at the origin. A ring is treated as vanishing there,
    /// its value `exp(-center^2 / 2 width^2)` being below double precision.
    fn small_power(&self) -> f64 {
        match self {
            RadialProfile::GaussianRing { .. } => 1.0,
            RadialProfile::PowerGaussian { n, .. } => *n as f64,
            RadialProfile::Custom(c) => c.small_power,
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            RadialProfile::GaussianRing { center, width } => {
                if !(*center > 0.0 && *width > 0.0 && center.is_finite() && width.is_finite()) {
                    return Err(Error::domain("ring needs positive finite center and width"));
                }
                if center / width < 8.0 {
                    return Err(Error::domain(format!(
                        "ring with center/width = {} does not vanish at the origin; int |g|^2 / x^2 diverges",
                        center / width
                    )));
                }
            }
            RadialProfile::PowerGaussian { n, s } => {
                if *n == 0 {
                    return Err(Error::domain("power-Gaussian with n = 0 is not square integrable against d^2x / x^2"));
                }
                if !(*s > 0.0 && s.is_finite()) {
                    return Err(Error::domain("power-Gaussian width must be positive"));
                }
            }
            RadialProfile::Custom(c) => {
                let (a, b) = c.support;
                if !(a > 0.0 && b > a && b.is_finite()) {
                    return Err(Error::domain("custom profile support must satisfy 0 < lo < hi"));
                }
                if !(c.small_power > 0.0) {
                    return Err(Error::domain("custom profile must vanish at the origin"));
                }
            }
        }
        Ok(())
    }

    fn label(&self) -> String {
        match self {
            RadialProfile::GaussianRing { center, width } => format!("gaussian_ring(center={center}, width={width})"),
            RadialProfile::PowerGaussian { n, s } => format!("power_gaussian(n={n}, s={s})"),
            RadialProfile::Custom(c) => c.label.clone(),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ProfileJson {
    GaussianRing { center: f64, width: f64 },
    PowerGaussian { n: u32, s: f64 },
    Custom { label: String },
}

impl Serialize for RadialProfile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            RadialProfile::GaussianRing { center, width } => ProfileJson::GaussianRing { center: *center, width: *width },
            RadialProfile::PowerGaussian { n, s } => ProfileJson::PowerGaussian { n: *n, s: *s },
            RadialProfile::Custom(c) => ProfileJson::Custom { label: c.label.clone() },
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RadialProfile {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match ProfileJson::deserialize(d)? {
            ProfileJson::GaussianRing { center, width } => Ok(RadialProfile::GaussianRing { center, width }),
            ProfileJson::PowerGaussian { n, s } => Ok(RadialProfile::PowerGaussian { n, s }),
            ProfileJson::Custom { .. } => Err(serde::de::Error::custom("a custom profile cannot be read from a document; construct it in code")),
        }
    }
}

/// A unit-norm state `psi(x) = amplitude * g(|x|) e^{i mu arg x}`.
#[derive(Debug, Clone)]
pub struct StateSpec {
    pub g: RadialProfile,
    /// Phase winding; an integer so that `psi` is single valued.
    pub mu: f64,
    amplitude: f64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateJson {
    g: RadialProfile,
    #[serde(default)]
    mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    amplitude: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    norm_tol: Option<f64>,
}

impl Serialize for StateSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        StateJson { g: self.g.clone(), mu: self.mu, amplitude: Some(self.amplitude), norm_tol: None }.serialize(s)
    }
}

impl<'de> Deserialize<'de> for StateSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = StateJson::deserialize(d)?;
        let r = match j.amplitude {
            None => StateSpec::new(j.g, j.mu),
            Some(a) => StateSpec::with_amplitude(j.g, j.mu, a, j.norm_tol.unwrap_or(NORM_TOL)),
        };
        r.map_err(serde::de::Error::custom)
    }
}

const RADIAL_TOL: f64 = 1e-13;

/// `int_{lo}^{hi} f(r) dr`, in `t = ln r`.
fn radial_integral<F: Fn(f64) -> f64 + Sync>((lo, hi): (f64, f64), f: F) -> Result<f64> {
    let (a, b) = (lo.ln(), hi.ln());
    let n = (((b - a) / 0.05).ceil() as usize).clamp(1, 4000);
    let mut s = 0.0;
    for i in 0..n {
        let t0 = a + (b - a) * i as f64 / n as f64;
        let t1 = a + (b - a) * (i + 1) as f64 / n as f64;
        let e = integrate_interval(
            |t: f64| {
                let r = t.exp();
                C::new(f(r) * r, 0.0)
            },
            t0,
            t1,
            RADIAL_TOL / n as f64,
            1e-13,
            1_000_000,
        )?;
        s += e.value.re;
    }
    Ok(s)
}

fn unscaled_norm(g: &RadialProfile) -> Result<f64> {
    Ok((2.0 * PI * radial_integral(g.support(), |r| g.eval(r)[0].powi(2) * r)?).sqrt())
}

impl StateSpec {
    /// Normalizes `g` by quadrature.
    pub fn new(g: RadialProfile, mu: f64) -> Result<Self> {
        Self::check(&g, mu)?;
        let n = unscaled_norm(&g)?;
        if !(n > 0.0 && n.is_finite()) {
            return Err(Error::Normalization { norm: n });
        }
        Ok(StateSpec { g, mu, amplitude: 1.0 / n })
    }

    /// Takes a user amplitude, rescaling when `||psi||` is within `norm_tol` of 1.
    pub fn with_amplitude(g: RadialProfile, mu: f64, amplitude: f64, norm_tol: f64) -> Result<Self> {
        Self::check(&g, mu)?;
        let n = unscaled_norm(&g)? * amplitude.abs();
        if !((n - 1.0).abs() <= norm_tol) {
            return Err(Error::Normalization { norm: n });
        }
        Ok(StateSpec { g, mu, amplitude: amplitude / n })
    }

    fn check(g: &RadialProfile, mu: f64) -> Result<()> {
        g.validate()?;
        if !(mu.is_finite() && mu.fract() == 0.0) {
            return Err(Error::domain(format!("phase winding mu = {mu} must be an integer for a single-valued state")));
        }
        Ok(())
    }

    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    /// The same radial profile with no phase.
    pub fn radial_part(&self) -> StateSpec {
        StateSpec { mu: 0.0, ..self.clone() }
    }

    pub fn label(&self) -> String {
        format!("coherent({}, mu={})", self.g.label(), self.mu)
    }

    /// `amplitude * (g, g', g'')` at `r`.
    pub fn radial(&self, r: f64) -> [f64; 3] {
        self.g.eval(r).map(|v| v * self.amplitude)
    }

    pub fn psi(&self, x: PlaneVector) -> C {
        let (r, th) = x.to_polar();
        if r == 0.0 {
            return C::new(0.0, 0.0);
        }
        C::from_polar(self.radial(r)[0], self.mu * th)
    }

    /// `grad psi = e^{i mu theta} (g' e_r + i mu g / r e_theta)`.
    pub fn grad_psi(&self, x: PlaneVector) -> ComplexPlaneVector {
        let (r, th) = x.to_polar();
        let [g, g1, _] = self.radial(r);
        let ph = C::from_polar(1.0, self.mu * th);
        let (c, s) = (th.cos(), th.sin());
        let ang = C::new(0.0, self.mu * g / r);
        ComplexPlaneVector::new(ph * (g1 * c - ang * s), ph * (g1 * s + ang * c))
    }

    /// Declared decay of `w_hat_psi(q, .)`.
    pub fn hat_decay(&self) -> Decay {
        let large = match &self.g {
            RadialProfile::Custom(_) => LargeDecay::Power { exponent: 40.0 },
            _ => LargeDecay::Gaussian,
        };
        Decay::new(2.0 * self.g.small_power(), large)
    }

    fn log_polar_opts(&self, tol: f64) -> QuadOptions {
        let (lo, hi) = self.g.support();
        QuadOptions { t_min: lo.ln() - 2.0, t_max: hi.ln() + 2.0, scan_step: 0.05, ..QuadOptions::with_tol(tol) }
    }
}

/// The rank-one weight of a state.
#[derive(Debug, Clone)]
pub struct CoherentWeight {
    pub state: StateSpec,
    pub tol: f64,
}

impl CoherentWeight {
    /// `(1/q^2) int d^2x e^{-i p.x} conj(psi(x/q)) psi(x)`.
    pub fn overlap(&self, q: PlaneVector, p: PlaneVector) -> Result<Estimate> {
        let s = &self.state;
        let qi = q.inv()?;
        let q2 = q.norm_sqr();
        let integrand = |t: f64, phi: f64| {
            let rho = t.exp();
            let x = PlaneVector::from_polar(rho, phi);
            s.psi(x) * s.psi(x.mul(qi)).conj() * C::from_polar(rho * rho / q2, -p.dot(x))
        };
        let mut opts = s.log_polar_opts(self.tol);
        let (lo, hi) = s.g.support();
        let r = q.norm();
        opts.t_min = opts.t_min.min((lo * r).ln() - 2.0);
        opts.t_max = opts.t_max.max((hi * r).ln() + 2.0);
        Ok(integrate_log_polar(integrand, &opts)?.estimate())
    }
}

impl WeightModel for CoherentWeight {
    fn label(&self) -> String {
        self.state.label()
    }

    fn weight(&self, q: PlaneVector, p: PlaneVector) -> Option<Result<C>> {
        Some(self.overlap(q, p).map(|e| e.value))
    }

    fn weight_hat(&self, u: PlaneVector, v: PlaneVector) -> Option<Result<C>> {
        let s = &self.state;
        Some(u.inv().map(|ui| s.psi(-v) * s.psi((-v).mul(ui)).conj() * (2.0 * PI / u.norm_sqr())))
    }

    fn hat_radial_at_identity(&self) -> bool {
        true
    }

    fn document(&self) -> Option<(String, serde_json::Value)> {
        let state = serde_json::to_value(&self.state).ok()?;
        Some(("coherent".into(), serde_json::json!({ "state": state })))
    }

    fn hat_derivatives_at_identity(&self, x: PlaneVector) -> Option<HatDerivatives> {
        // w_hat(q, x) = 2 pi g(rho) s(|q|) e^{i mu arg q}, s(r) = g(rho / r) / r^2.
        let rho = x.norm();
        let [g, g1, g2] = self.state.radial(rho);
        let s1 = -2.0 * g - rho * g1;
        let s2 = 6.0 * g + 6.0 * rho * g1 + rho * rho * g2;
        let mu = self.state.mu;
        let k = 2.0 * PI * g;
        Some(HatDerivatives {
            d1: C::new(k * s1, 0.0),
            d2: C::new(0.0, k * mu * g),
            lap: C::new(k * (s2 + s1 - mu * mu * g), 0.0),
        })
    }
}

/// The weight `w_psi` with overlap quadrature at tolerance `1e-10`.
pub fn weight_from_state(s: &StateSpec) -> WeightSpec {
    WeightSpec::from_model(Arc::new(CoherentWeight { state: s.clone(), tol: 1e-10 }), s.hat_decay())
}

/// `Omega(q) = (2 pi / q^2) int d^2x / x^2 psi(x) conj(psi(x/q))`.
pub fn omega_from_state(s: &StateSpec, q: PlaneVector, tol: f64) -> Result<Estimate> {
    let qi = q.inv()?;
    let k = 2.0 * PI / q.norm_sqr();
    let integrand = |t: f64, phi: f64| {
        let x = PlaneVector::from_polar(t.exp(), phi);
        s.psi(x) * s.psi(x.mul(qi)).conj() * k
    };
    let mut opts = s.log_polar_opts(tol);
    let r = q.norm();
    opts.t_min = opts.t_min.min(opts.t_min + r.ln());
    opts.t_max = opts.t_max.max(opts.t_max + r.ln());
    Ok(integrate_log_polar(integrand, &opts)?.estimate())
}

/// `Omega^g(q) = (2 pi / q^2) 2 pi int g(rho) g(rho / |q|) d rho / rho`, the phase-free factor.
pub fn omega_radial(s: &StateSpec, q: PlaneVector) -> Result<f64> {
    let r = q.norm();
    if !(r > 0.0) {
        return Err(Error::domain("Omega at q = 0"));
    }
    let (a, b) = s.g.support();
    let v = radial_integral((a.min(a * r), b.max(b * r)), |rho| s.radial(rho)[0] * s.radial(rho / r)[0] / rho)?;
    Ok(4.0 * PI * PI * v / (r * r))
}

/// Mean values of the state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanValues {
    /// `||psi||^2`.
    pub norm2: f64,
    /// `<Q^-2>`.
    pub inv_q2: f64,
    /// `<P^2>`.
    pub p2: f64,
    /// `||grad g||^2`.
    pub grad_g2: f64,
    /// `<Q^-1 P>`, plane product of `1/x` with `-i grad`.
    pub inv_q_p: ComplexPlaneVector,
}

pub fn mean_values(s: &StateSpec, tol: f64) -> Result<MeanValues> {
    let two_pi = 2.0 * PI;
    let norm2 = two_pi * radial_integral(s.g.support(), |r| s.radial(r)[0].powi(2) * r)?;
    let inv_q2 = two_pi * radial_integral(s.g.support(), |r| s.radial(r)[0].powi(2) / r)?;
    let grad_g2 = two_pi * radial_integral(s.g.support(), |r| s.radial(r)[1].powi(2) * r)?;
    let mu2 = s.mu * s.mu;
    let p2 = two_pi
        * radial_integral(s.g.support(), |r| {
            let [g, g1, _] = s.radial(r);
            (g1 * g1 + mu2 * g * g / (r * r)) * r
        })?;
    let component = |k: usize| -> Result<C> {
        let trap = Trap::new();
        let integrand = |t: f64, phi: f64| {
            let rho = t.exp();
            let x = PlaneVector::from_polar(rho, phi);
            let xi = trap.catch(x.inv().map(|v| C::new(v.c1, v.c2)));
            let xi = PlaneVector::new(xi.re, xi.im);
            let v = s.grad_psi(x).scale(-C::i()).plane_mul_real(xi);
            let c = if k == 0 { v.c1 } else { v.c2 };
            s.psi(x).conj() * c * (rho * rho)
        };
        let out = integrate_log_polar(integrand, &s.log_polar_opts(tol));
        trap.finish(out.map(|o| o.value))
    };
    let inv_q_p = ComplexPlaneVector::new(component(0)?, component(1)?);
    Ok(MeanValues { norm2, inv_q2, p2, grad_g2, inv_q_p })
}

/// Gauge content of a rank-one weight through the generic moment route
/// and through the state's mean values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateGauge {
    pub means: MeanValues,
    /// `2 pi <Q^-2>`.
    pub omega1: f64,
    /// Moment route.
    pub gauge: GaugeData,
    /// `|2 e1 + grad Omega(1) / Omega(1)|` from `<Q^-1 P>`.
    pub potential_norm: f64,
    /// `-i (2 pi hbar / charge) d2 ln Omega(1)` from the moment table.
    pub flux_generic: C,
    /// `2 pi hbar mu Omega^g(1) / charge`.
    pub flux_state: C,
    /// `flux_state / flux_generic`; absent without a phase.
    pub flux_ratio: Option<C>,
    pub flux_routes_agree: bool,
    /// `K` from the moment table.
    pub k_moments: C,
    /// `hbar^2 (<P^2> / <Q^-2> - <Q^-1 P>.<Q^-1 P> / <Q^-2>^2)`.
    pub k_mean_values: C,
    /// `hbar^2 (4 + 2 mu^2 + 2 pi (||grad g||^2 - 4 ||g/Q||^2) / ||g||^2)`.
    pub k_closed_form: f64,
    pub k_closed_form_agrees: bool,
}

pub fn gauge_from_state(s: &StateSpec, units: Units, tol: f64) -> Result<StateGauge> {
    let means = mean_values(s, tol)?;
    let omega1 = 2.0 * PI * means.inv_q2;
    let m = means.inv_q_p;
    let conj_m = ComplexPlaneVector::new(m.c1.conj(), m.c2.conj());
    let shift = conj_m.scale(C::new(0.0, 2.0 * PI / omega1));
    let potential_norm = shift.norm();

    let table = MomentTable::build(&weight_from_state(s), &MomentRequest::default(), tol)?;
    let gauge = GaugeData::from_moments(&table, units, gauge::GAUGE_TOL)?;
    let flux_generic = gauge.flux;
    let omega_g = omega_radial(&s.radial_part(), PlaneVector::E1)?;
    let flux_state = C::new(units.flux_quantum() * s.mu * omega_g, 0.0);
    let flux_ratio = (s.mu != 0.0).then(|| flux_state / flux_generic);
    let flux_routes_agree = (flux_state - flux_generic).norm() <= 1e-6 * flux_generic.norm().max(flux_state.norm()).max(1e-12);

    let h2 = units.hbar * units.hbar;
    let k_mean_values = (C::new(means.p2 / means.inv_q2, 0.0) - m.dot(m) / (means.inv_q2 * means.inv_q2)) * h2;
    let g_over_q2 = means.inv_q2;
    let k_closed_form = h2 * (4.0 + 2.0 * s.mu * s.mu + 2.0 * PI * (means.grad_g2 - 4.0 * g_over_q2) / means.norm2);
    let k_closed_form_agrees = (k_closed_form - gauge.k.re).abs() <= 1e-5 * k_closed_form.abs().max(1.0);
    Ok(StateGauge {
        means,
        omega1,
        k_moments: gauge.k,
        gauge,
        potential_norm,
        flux_generic,
        flux_state,
        flux_ratio,
        flux_routes_agree,
        k_mean_values,
        k_closed_form,
        k_closed_form_agrees,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moments::{grad_omega_gen_at_1, laplacian_omega_gen_at_1, omega, DerivativeRoute, MomentKey};
    use crate::weights::{eval_weight, eval_weight_hat, inverse_partial_fourier};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn ring(mu: f64, width: f64) -> StateSpec {
        StateSpec::new(RadialProfile::GaussianRing { center: 1.0, width }, mu).unwrap()
    }

    fn pg(n: u32, s: f64, mu: f64) -> StateSpec {
        StateSpec::new(RadialProfile::PowerGaussian { n, s }, mu).unwrap()
    }

    #[test]
    fn normalization_by_quadrature() {
        let st = pg(2, 1.3, 1.0);
        // pi N^2 s^{2n+2} Gamma(n+1) = 1.
        let expected = 1.0 / (PI * 1.3f64.powi(6) * 2.0).sqrt();
        assert!((st.amplitude() - expected).abs() < 1e-12 * expected);
        let m = mean_values(&st, 1e-11).unwrap();
        assert!((m.norm2 - 1.0).abs() < 1e-12);

        let g = RadialProfile::PowerGaussian { n: 2, s: 1.3 };
        let ok = StateSpec::with_amplitude(g.clone(), 0.0, expected * 1.0005, NORM_TOL).unwrap();
        assert!((ok.amplitude() - expected).abs() < 1e-12 * expected);
        assert!(matches!(StateSpec::with_amplitude(g, 0.0, expected * 1.01, NORM_TOL), Err(Error::Normalization { .. })));
    }

    #[test]
    fn refuses_states_outside_weighted_space() {
        assert!(StateSpec::new(RadialProfile::PowerGaussian { n: 0, s: 1.0 }, 0.0).is_err());
        assert!(StateSpec::new(RadialProfile::GaussianRing { center: 1.0, width: 0.5 }, 0.0).is_err());
        assert!(StateSpec::new(RadialProfile::GaussianRing { center: 1.0, width: 0.1 }, 0.5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let st: StateSpec = serde_json::from_str(r#"{"g":{"kind":"gaussian_ring","center":1.0,"width":0.1},"mu":1}"#).unwrap();
        let back: StateSpec = serde_json::from_str(&serde_json::to_string(&st).unwrap()).unwrap();
        assert!((back.amplitude() - st.amplitude()).abs() < 1e-14 * st.amplitude());
        assert!(serde_json::from_str::<StateSpec>(r#"{"g":{"kind":"power_gaussian","n":1,"s":1.0},"nu":1}"#).is_err());
        assert!(serde_json::from_str::<StateSpec>(r#"{"g":{"kind":"power_gaussian","n":1,"s":1.0},"amplitude":5.0}"#).is_err());

        let w: WeightSpec = serde_json::from_str(r#"{"family":"coherent","state":{"g":{"kind":"power_gaussian","n":2,"s":0.5},"mu":-1}}"#).unwrap();
        let text = serde_json::to_string(&w).unwrap();
        let again: WeightSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), text);
        let x = PlaneVector::new(0.3, 0.4);
        assert_eq!(eval_weight_hat(&w, PlaneVector::E1, x).unwrap(), eval_weight_hat(&again, PlaneVector::E1, x).unwrap());
        assert!(serde_json::from_str::<WeightSpec>(r#"{"family":"coherent","nu":1,"state":{"g":{"kind":"power_gaussian","n":2,"s":0.5}}}"#).is_err());
    }

    #[test]
    fn unit_trace_and_hat_at_origin() {
        let w = weight_from_state(&pg(1, 1.0, 1.0));
        let v = eval_weight(&w, PlaneVector::E1, PlaneVector::ZERO).unwrap();
        assert!((v - 1.0).norm() < 1e-9, "{v}");
        assert_eq!(eval_weight_hat(&w, PlaneVector::new(0.3, 2.0), PlaneVector::ZERO).unwrap(), C::new(0.0, 0.0));
    }

    #[test]
    fn overlap_matches_inverse_fourier_of_hat() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let w = weight_from_state(&pg(1, 1.0, 1.0));
        for _ in 0..20 {
            let q = PlaneVector::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(-PI..PI));
            let p = PlaneVector::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let a = eval_weight(&w, q, p).unwrap();
            let b = inverse_partial_fourier(&w, q, p, 1e-10).unwrap().value;
            assert!((a - b).norm() < 1e-6, "{q:?} {p:?}: {a} vs {b}");
        }
        let w = weight_from_state(&ring(2.0, 0.12));
        for (q, p) in [(PlaneVector::from_polar(1.1, 0.4), PlaneVector::new(0.5, -1.0)), (PlaneVector::E1, PlaneVector::new(2.0, 1.0))] {
            let a = eval_weight(&w, q, p).unwrap();
            let b = inverse_partial_fourier(&w, q, p, 1e-10).unwrap().value;
            assert!((a - b).norm() < 1e-6, "{a} vs {b}");
        }
    }

    #[test]
    fn omega_at_identity_is_mean_inverse_square() {
        for st in [ring(0.0, 0.1), pg(2, 0.7, 0.0)] {
            let o = omega_from_state(&st, PlaneVector::E1, 1e-11).unwrap().value;
            let m = mean_values(&st, 1e-11).unwrap();
            assert!((o.re - 2.0 * PI * m.inv_q2).abs() < 1e-8 && o.im.abs() < 1e-12);
            assert!(o.re > 0.0);
        }
        // <Q^-2> = Gamma(n) / (s^2 Gamma(n+1)) = 1 / (n s^2) for power-Gaussians.
        let m = mean_values(&pg(3, 0.8, 0.0), 1e-11).unwrap();
        assert!((m.inv_q2 - 1.0 / (3.0 * 0.64)).abs() < 1e-10);
    }

    #[test]
    fn phase_factorizes_out_of_omega() {
        let st = pg(1, 1.0, 2.0);
        let g = st.radial_part();
        for th in [0.4, -1.3, 2.9] {
            for r in [1.0, 1.7] {
                let q = PlaneVector::from_polar(r, th);
                let a = omega_from_state(&st, q, 1e-12).unwrap().value;
                let b = omega_from_state(&g, q, 1e-12).unwrap().value;
                let ratio = a / b;
                assert!((ratio - C::from_polar(1.0, 2.0 * th)).norm() < 1e-8, "{ratio}");
                assert!((b.re - omega_radial(&g, q).unwrap()).abs() < 1e-9 * b.re);
            }
        }
    }

    #[test]
    fn moment_path_matches_direct_omega() {
        for st in [ring(1.0, 0.1), pg(2, 1.2, -1.0)] {
            let w = weight_from_state(&st);
            for q in [PlaneVector::E1, PlaneVector::from_polar(1.4, 0.6)] {
                let a = omega(&w, 0.0, 0, 0, q, 1e-11).unwrap().value;
                let b = omega_from_state(&st, q, 1e-11).unwrap().value;
                assert!((a - b).norm() < 1e-6, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn analytic_hat_derivatives_match_finite_differences() {
        let w = weight_from_state(&pg(2, 1.1, 1.0));
        let k = MomentKey::beta(0.0);
        let a = grad_omega_gen_at_1(&w, k, 1e-11, DerivativeRoute::Analytic).unwrap().value;
        let f = grad_omega_gen_at_1(&w, k, 1e-11, DerivativeRoute::FiniteDifference).unwrap().value;
        assert!((a - f).norm() < 1e-6);
        let a = laplacian_omega_gen_at_1(&w, k, 1e-11, DerivativeRoute::Analytic).unwrap().value;
        let f = laplacian_omega_gen_at_1(&w, k, 1e-11, DerivativeRoute::FiniteDifference).unwrap().value;
        assert!((a - f).norm() < 1e-6);
    }

    #[test]
    fn real_state_has_no_vector_potential() {
        let st = ring(0.0, 0.1);
        let g = gauge_from_state(&st, Units::default(), 1e-11).unwrap();
        assert!(g.potential_norm < 1e-10);
        assert!(g.gauge.gauge_residual < 1e-8);
        assert!(g.flux_generic.norm() < 1e-10);
        assert!((g.k_moments - g.k_mean_values).norm() < 1e-6 * g.k_mean_values.norm());
        assert!((g.k_mean_values.re - g.means.p2 / g.means.inv_q2).abs() < 1e-12);
        assert!(g.flux_ratio.is_none());
    }

    #[test]
    fn phase_state_flux_routes() {
        let st = pg(1, 1.0, 1.0);
        let g = gauge_from_state(&st, Units::default(), 1e-11).unwrap();
        assert!((g.flux_generic.re - 2.0 * PI).abs() < 1e-6 && g.flux_generic.im.abs() < 1e-10);
        assert!((g.means.inv_q_p.c2.re - g.means.inv_q2).abs() < 1e-9 && g.means.inv_q_p.c1.norm() < 1e-10);
        let ratio = g.flux_ratio.unwrap();
        assert!((ratio.re - g.omega1).abs() < 1e-6 && ratio.im.abs() < 1e-6);
        assert!(!g.flux_routes_agree);
        // Power-Gaussian profiles have K = n regardless of the winding.
        assert!((g.k_moments.re - 1.0).abs() < 1e-6);
        assert!((g.k_mean_values - g.k_moments).norm() < 1e-6);
    }
}
