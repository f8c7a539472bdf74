//! Weight functions `w(q, p)` on phase space and their partial Fourier
//! transforms `w_hat(q, x) = (1/2 pi) int d^2p e^{-i p.x} w(q, p)`.
//!
//! The built-in family is
//!
//! ```text
//! w(q, p) = e^{2 nu - nu (|q| + 1/|q|)} / |q| * alpha(arg q)
//!           * (1 - |q| p^2 / 2 sigma^2) e^{-|q| p^2 / 2 sigma^2},
//! ```
//!
//! which is normalized, symmetric and concentrates at the group identity as
//! `nu` grows. Other weights plug in through [`WeightModel`].

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_log_polar, Decay, Estimate, LargeDecay, QuadOptions};
use crate::sim2::PlaneVector;

type AngleFn = Arc<dyn Fn(f64) -> Complex64 + Send + Sync>;

/// Angular profile `alpha(theta)` of a weight, with `alpha(0) = 1` and
/// `conj(alpha(theta)) = alpha(-theta)`.
#[derive(Clone)]
pub enum AlphaSpec {
    /// `alpha(theta) = e^{i mu theta}`.
    Exponential { mu: f64 },
    Tabulated(TabulatedAlpha),
}

/// A user-supplied `alpha` with optionally declared `alpha'(0)`, `alpha''(0)`.
#[derive(Clone)]
pub struct TabulatedAlpha {
    f: AngleFn,
    d1: Option<Complex64>,
    d2: Option<Complex64>,
}

impl TabulatedAlpha {
    pub fn new<F>(f: F, d1: Option<Complex64>, d2: Option<Complex64>) -> Self
    where
        F: Fn(f64) -> Complex64 + Send + Sync + 'static,
    {
        TabulatedAlpha { f: Arc::new(f), d1, d2 }
    }
}

impl fmt::Debug for AlphaSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlphaSpec::Exponential { mu } => write!(f, "Exponential {{ mu: {mu} }}"),
            AlphaSpec::Tabulated(t) => write!(f, "Tabulated {{ d1: {:?}, d2: {:?} }}", t.d1, t.d2),
        }
    }
}

const ALPHA_STEP: f64 = 1e-5;

impl AlphaSpec {
    pub fn eval(&self, theta: f64) -> Complex64 {
        match self {
            AlphaSpec::Exponential { mu } => Complex64::from_polar(1.0, mu * theta),
            AlphaSpec::Tabulated(t) => (t.f)(theta),
        }
    }

    /// `alpha'(0)`: exact, declared, or Richardson-extrapolated central differences.
    pub fn d1(&self) -> Complex64 {
        match self {
            AlphaSpec::Exponential { mu } => Complex64::new(0.0, *mu),
            AlphaSpec::Tabulated(t) => t.d1.unwrap_or_else(|| {
                let d = |h: f64| ((t.f)(h) - (t.f)(-h)) / (2.0 * h);
                (d(ALPHA_STEP / 2.0) * 4.0 - d(ALPHA_STEP)) / 3.0
            }),
        }
    }

    /// `alpha''(0)`, same sources as [`AlphaSpec::d1`].
    pub fn d2(&self) -> Complex64 {
        match self {
            AlphaSpec::Exponential { mu } => Complex64::new(-mu * mu, 0.0),
            AlphaSpec::Tabulated(t) => t.d2.unwrap_or_else(|| {
                let s = |h: f64| ((t.f)(h) - (t.f)(0.0) * 2.0 + (t.f)(-h)) / (h * h);
                (s(ALPHA_STEP / 2.0) * 4.0 - s(ALPHA_STEP)) / 3.0
            }),
        }
    }

    /// Checks `alpha(0) = 1` and the conjugation symmetry at 64 angles.
    pub fn validate(&self) -> Result<()> {
        let a0 = self.eval(0.0);
        if (a0 - 1.0).norm() > 1e-12 {
            return Err(Error::InvalidWeight(format!("alpha(0) = {a0}, expected 1")));
        }
        for k in 0..64 {
            let th = -PI + (k as f64 + 0.5) * 2.0 * PI / 64.0;
            let v = (self.eval(th).conj() - self.eval(-th)).norm();
            if v > 1e-12 {
                return Err(Error::InvalidWeight(format!("conj(alpha({th})) != alpha(-{th}), off by {v:.3e}")));
            }
            if !self.eval(th).is_finite() {
                return Err(Error::InvalidWeight(format!("alpha({th}) is not finite")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum AlphaJson {
    Exponential { mu: f64 },
    Tabulated {
        #[serde(default)]
        alpha_prime_0: Option<Complex64>,
        #[serde(default)]
        alpha_second_0: Option<Complex64>,
    },
}

impl Serialize for AlphaSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            AlphaSpec::Exponential { mu } => AlphaJson::Exponential { mu: *mu }.serialize(s),
            AlphaSpec::Tabulated(t) => AlphaJson::Tabulated { alpha_prime_0: t.d1, alpha_second_0: t.d2 }.serialize(s),
        }
    }
}

impl<'de> Deserialize<'de> for AlphaSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match AlphaJson::deserialize(d)? {
            AlphaJson::Exponential { mu } => Ok(AlphaSpec::Exponential { mu }),
            AlphaJson::Tabulated { .. } => Err(serde::de::Error::custom("a tabulated alpha cannot be read from a document; construct it in code")),
        }
    }
}

/// `q`-derivatives of `w_hat(q, x)` at `q = (1, 0)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HatDerivatives {
    pub d1: Complex64,
    pub d2: Complex64,
    pub lap: Complex64,
}

/// A weight supplied from outside the built-in family.
///
/// At least one of [`WeightModel::weight`] and [`WeightModel::weight_hat`]
/// must return `Some`; the other side is then obtained by Fourier quadrature.
pub trait WeightModel: Send + Sync {
    fn label(&self) -> String;

    fn weight(&self, _q: PlaneVector, _p: PlaneVector) -> Option<Result<Complex64>> {
        None
    }

    fn weight_hat(&self, _q: PlaneVector, _x: PlaneVector) -> Option<Result<Complex64>> {
        None
    }

    fn hat_derivatives_at_identity(&self, _x: PlaneVector) -> Option<HatDerivatives> {
        None
    }

    /// True when `w_hat(1, x)` depends on `|x|` only.
    fn hat_radial_at_identity(&self) -> bool {
        false
    }

    /// Decay of `w(q, .)` in `p`, used by the inverse-direction quadrature.
    fn momentum_decay(&self) -> Decay {
        Decay::new(0.0, LargeDecay::Gaussian)
    }

    /// Fields written next to `family` when the weight is serialized; `None`
    /// for weights that exist only in code.
    fn document(&self) -> Option<(String, serde_json::Value)> {
        None
    }
}

/// Parameters of the built-in family.
#[derive(Debug, Clone)]
pub struct ExampleWeight {
    pub nu: f64,
    pub sigma: f64,
    pub alpha: AlphaSpec,
}

impl ExampleWeight {
    /// `e^{2 nu - nu (r + 1/r)} / r`, computed in one exponential.
    fn radial_prefactor(&self, r: f64) -> f64 {
        (2.0 * self.nu - self.nu * (r + 1.0 / r)).exp() / r
    }

    pub fn weight(&self, q: PlaneVector, p: PlaneVector) -> Complex64 {
        let (r, th) = q.to_polar();
        let a = r * p.norm_sqr() / (2.0 * self.sigma * self.sigma);
        self.alpha.eval(th) * (self.radial_prefactor(r) * (1.0 - a) * (-a).exp())
    }

    pub fn weight_hat(&self, q: PlaneVector, x: PlaneVector) -> Complex64 {
        let (r, th) = q.to_polar();
        let s2 = self.sigma * self.sigma;
        let x2 = x.norm_sqr();
        let radial = s2 * s2 * x2 / (2.0 * r * r) * (-s2 * x2 / (2.0 * r)).exp();
        self.alpha.eval(th) * (self.radial_prefactor(r) * radial)
    }

    pub fn hat_derivatives(&self, x: PlaneVector) -> HatDerivatives {
        let s2 = self.sigma * self.sigma;
        let s = s2 * x.norm_sqr() / 2.0;
        let f = s2 * s * (-s).exp();
        // d ln F / dr and d^2 ln F / dr^2 at r = 1.
        let l1 = s - 3.0;
        let l2 = 3.0 - 2.0 * self.nu - 2.0 * s;
        let a1 = self.alpha.d1();
        let a2 = self.alpha.d2();
        HatDerivatives {
            d1: Complex64::new(f * l1, 0.0),
            d2: a1 * f,
            lap: Complex64::new(f * (l2 + l1 * l1) + f * l1, 0.0) + a2 * f,
        }
    }
}

#[derive(Clone)]
pub enum WeightKind {
    Example(ExampleWeight),
    Model(Arc<dyn WeightModel>),
}

/// A weight together with the declared decay of `w_hat(q, .)`.
#[derive(Clone)]
pub struct WeightSpec {
    pub kind: WeightKind,
    pub decay: Decay,
}

impl fmt::Debug for WeightSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            WeightKind::Example(e) => write!(f, "WeightSpec::Example({e:?}, {:?})", self.decay),
            WeightKind::Model(m) => write!(f, "WeightSpec::Model({}, {:?})", m.label(), self.decay),
        }
    }
}

/// `w_hat` of the example family is `~ |x|^2` at `0` and Gaussian at infinity.
pub const EXAMPLE_DECAY: Decay = Decay { small_power: 2.0, large: LargeDecay::Gaussian };

impl WeightSpec {
    pub fn example(nu: f64, sigma: f64, alpha: AlphaSpec) -> Result<Self> {
        let w = WeightSpec { kind: WeightKind::Example(ExampleWeight { nu, sigma, alpha }), decay: EXAMPLE_DECAY };
        w.validate()?;
        Ok(w)
    }

    pub fn example_exponential(nu: f64, sigma: f64, mu: f64) -> Result<Self> {
        WeightSpec::example(nu, sigma, AlphaSpec::Exponential { mu })
    }

    pub fn from_model(model: Arc<dyn WeightModel>, decay: Decay) -> Self {
        WeightSpec { kind: WeightKind::Model(model), decay }
    }

    pub fn as_example(&self) -> Option<&ExampleWeight> {
        match &self.kind {
            WeightKind::Example(e) => Some(e),
            WeightKind::Model(_) => None,
        }
    }

    pub fn label(&self) -> String {
        match &self.kind {
            WeightKind::Example(_) => "example".into(),
            WeightKind::Model(m) => m.label(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let WeightKind::Example(e) = &self.kind {
            if !(e.nu > 0.0 && e.nu.is_finite()) {
                return Err(Error::InvalidWeight(format!("nu must be positive, got {}", e.nu)));
            }
            if !(e.sigma > 0.0 && e.sigma.is_finite()) {
                return Err(Error::InvalidWeight(format!("sigma must be positive, got {}", e.sigma)));
            }
            e.alpha.validate()?;
        }
        if !(self.decay.small_power > 0.0) {
            return Err(Error::InvalidWeight(format!(
                "w_hat(q, x) must vanish at x = 0; declared small-|x| power {}",
                self.decay.small_power
            )));
        }
        Ok(())
    }

    /// True when `w_hat(1, x)` depends on `|x|` only.
    pub fn hat_radial_at_identity(&self) -> bool {
        match &self.kind {
            WeightKind::Example(_) => true,
            WeightKind::Model(m) => m.hat_radial_at_identity(),
        }
    }

    /// Analytic `q`-derivatives of `w_hat` at the identity, when known.
    pub fn hat_derivatives_at_identity(&self, x: PlaneVector) -> Option<HatDerivatives> {
        match &self.kind {
            WeightKind::Example(e) => Some(e.hat_derivatives(x)),
            WeightKind::Model(m) => m.hat_derivatives_at_identity(x),
        }
    }
}

fn nonzero_q(q: PlaneVector) -> Result<()> {
    if !(q.norm() > 0.0) {
        return Err(Error::domain("weight evaluated at q = 0"));
    }
    Ok(())
}

const FOURIER_TOL: f64 = 1e-11;

/// `w(q, p)`.
pub fn eval_weight(w: &WeightSpec, q: PlaneVector, p: PlaneVector) -> Result<Complex64> {
    nonzero_q(q)?;
    match &w.kind {
        WeightKind::Example(e) => Ok(e.weight(q, p)),
        WeightKind::Model(m) => match m.weight(q, p) {
            Some(v) => v,
            None => inverse_partial_fourier(w, q, p, FOURIER_TOL).map(|e| e.value),
        },
    }
}

/// `w_hat(q, x)`.
pub fn eval_weight_hat(w: &WeightSpec, q: PlaneVector, x: PlaneVector) -> Result<Complex64> {
    nonzero_q(q)?;
    match &w.kind {
        WeightKind::Example(e) => Ok(e.weight_hat(q, x)),
        WeightKind::Model(m) => match m.weight_hat(q, x) {
            Some(v) => v,
            None => partial_fourier(w, q, x, FOURIER_TOL).map(|e| e.value),
        },
    }
}

fn model_weight(w: &WeightSpec, q: PlaneVector, p: PlaneVector) -> Result<Complex64> {
    match &w.kind {
        WeightKind::Example(e) => Ok(e.weight(q, p)),
        WeightKind::Model(m) => m
            .weight(q, p)
            .unwrap_or_else(|| Err(Error::InvalidWeight(format!("{} provides neither w nor w_hat", m.label())))),
    }
}

fn model_weight_hat(w: &WeightSpec, q: PlaneVector, x: PlaneVector) -> Result<Complex64> {
    match &w.kind {
        WeightKind::Example(e) => Ok(e.weight_hat(q, x)),
        WeightKind::Model(m) => m
            .weight_hat(q, x)
            .unwrap_or_else(|| Err(Error::InvalidWeight(format!("{} provides neither w nor w_hat", m.label())))),
    }
}

/// Integrand wrapper that remembers the first evaluation error.
pub(crate) struct Trap {
    err: std::sync::Mutex<Option<Error>>,
}

impl Trap {
    pub(crate) fn new() -> Self {
        Trap { err: std::sync::Mutex::new(None) }
    }

    pub(crate) fn catch(&self, r: Result<Complex64>) -> Complex64 {
        match r {
            Ok(v) => v,
            Err(e) => {
                let mut g = self.err.lock().unwrap_or_else(|p| p.into_inner());
                if g.is_none() {
                    *g = Some(e);
                }
                Complex64::new(0.0, 0.0)
            }
        }
    }

    pub(crate) fn finish<T>(self, r: Result<T>) -> Result<T> {
        match self.err.into_inner().unwrap_or_else(|p| p.into_inner()) {
            Some(e) => Err(e),
            None => r,
        }
    }
}

/// Numerical `w_hat(q, x) = (1/2 pi) int d^2p e^{-i p.x} w(q, p)`.
pub fn partial_fourier(w: &WeightSpec, q: PlaneVector, x: PlaneVector, tol: f64) -> Result<Estimate> {
    nonzero_q(q)?;
    let decay = match &w.kind {
        WeightKind::Example(_) => Decay::new(0.0, LargeDecay::Gaussian),
        WeightKind::Model(m) => m.momentum_decay(),
    };
    let trap = Trap::new();
    let integrand = |t: f64, phi: f64| {
        let rho = t.exp();
        let p = PlaneVector::from_polar(rho, phi);
        let v = trap.catch(model_weight(w, q, p));
        v * Complex64::from_polar(rho * rho / (2.0 * PI), -p.dot(x))
    };
    let opts = QuadOptions::with_tol(tol).rates(Some(2.0 + decay.small_power), None);
    let out = integrate_log_polar(integrand, &opts);
    trap.finish(out.map(|o| o.estimate()))
}

/// Numerical `w(q, p) = (1/2 pi) int d^2x e^{i p.x} w_hat(q, x)`.
pub fn inverse_partial_fourier(w: &WeightSpec, q: PlaneVector, p: PlaneVector, tol: f64) -> Result<Estimate> {
    nonzero_q(q)?;
    let trap = Trap::new();
    let integrand = |t: f64, phi: f64| {
        let rho = t.exp();
        let x = PlaneVector::from_polar(rho, phi);
        let v = trap.catch(model_weight_hat(w, q, x));
        v * Complex64::from_polar(rho * rho / (2.0 * PI), p.dot(x))
    };
    let high = match w.decay.large {
        LargeDecay::Gaussian => None,
        LargeDecay::Power { exponent } => Some(exponent - 2.0),
    };
    let opts = QuadOptions::with_tol(tol).rates(Some(2.0 + w.decay.small_power), high);
    let out = integrate_log_polar(integrand, &opts);
    trap.finish(out.map(|o| o.estimate()))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SymmetryReport {
    pub max_violation: f64,
    pub worst_q: PlaneVector,
    pub worst_p: PlaneVector,
    pub samples: usize,
}

/// Samples `|w(q, p) - conj(w(q^-1, -q* p)) / |q|^2|` at `n_samples` points.
///
/// `|q|` is log-uniform in `[0.1, 10]`, `arg q` uniform, `p` uniform in `[-5, 5]^2`.
pub fn check_symmetry(w: &WeightSpec, n_samples: usize, seed: u64) -> Result<SymmetryReport> {
    if n_samples == 0 {
        return Err(Error::domain("check_symmetry needs at least one sample"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points: Vec<(PlaneVector, PlaneVector)> = (0..n_samples)
        .map(|_| {
            let r = 10f64.powf(rng.gen_range(-1.0..1.0));
            let th = rng.gen_range(-PI..PI);
            let p = PlaneVector::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0));
            (PlaneVector::from_polar(r, th), p)
        })
        .collect();
    let mut report = SymmetryReport { max_violation: 0.0, worst_q: PlaneVector::E1, worst_p: PlaneVector::ZERO, samples: n_samples };
    for (q, p) in points {
        let lhs = eval_weight(w, q, p)?;
        let rhs = eval_weight(w, q.inv()?, -(q.conj() * p))?.conj() / q.norm_sqr();
        let v = (lhs - rhs).norm();
        if v > report.max_violation || v.is_nan() {
            report.max_violation = v;
            report.worst_q = q;
            report.worst_p = p;
        }
    }
    Ok(report)
}

/// Grid for [`localization_profile`]: `q = q_max i / n_q` for `i = 1..=n_q`
/// on the positive real axis, `p_k = p_max j / n_p` for `j = -n_p..=n_p`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationGrid {
    pub q_max: f64,
    pub n_q: usize,
    pub p_max: f64,
    pub n_p: usize,
}

impl Default for LocalizationGrid {
    fn default() -> Self {
        LocalizationGrid { q_max: 4.0, n_q: 80, p_max: 10.5, n_p: 21 }
    }
}

impl LocalizationGrid {
    pub fn q_values(&self) -> Vec<f64> {
        (1..=self.n_q).map(|i| self.q_max * i as f64 / self.n_q as f64).collect()
    }

    pub fn p_values(&self) -> Vec<f64> {
        let n = self.n_p as i64;
        (-n..=n).map(|j| self.p_max * j as f64 / self.n_p as f64).collect()
    }

    pub fn q_step(&self) -> f64 {
        self.q_max / self.n_q as f64
    }

    pub fn p_step(&self) -> f64 {
        self.p_max / self.n_p as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizationProfile {
    pub grid: LocalizationGrid,
    /// `|w|/max|w|`, indexed `[iq][ip1][ip2]` flattened.
    pub values: Vec<f64>,
    /// `(q1, q2, p1, p2)` of the maximum.
    pub argmax: [f64; 4],
    pub max_abs: f64,
}

impl LocalizationProfile {
    /// Number of grid cells with normalized value at least `level`.
    pub fn level_count(&self, level: f64) -> usize {
        self.values.iter().filter(|&&v| v >= level).count()
    }

    /// Rows `q1,q2,p1,p2,value`.
    pub fn to_csv(&self) -> String {
        let qs = self.grid.q_values();
        let ps = self.grid.p_values();
        let mut out = String::from("q1,q2,p1,p2,value\n");
        let mut k = 0;
        for &q in &qs {
            for &p1 in &ps {
                for &p2 in &ps {
                    out.push_str(&format!("{q},0,{p1},{p2},{}\n", self.values[k]));
                    k += 1;
                }
            }
        }
        out
    }
}

/// `|w(q, p)|` on a grid with `arg q = 0`, normalized by its maximum.
pub fn localization_profile(w: &WeightSpec, grid: LocalizationGrid) -> Result<LocalizationProfile> {
    if grid.n_q == 0 || !(grid.q_max > 0.0) || !(grid.p_max >= 0.0) {
        return Err(Error::InvalidGrid("localization grid needs q_max > 0, n_q >= 1".into()));
    }
    let qs = grid.q_values();
    let ps = grid.p_values();
    let rows: Result<Vec<Vec<f64>>> = qs
        .par_iter()
        .map(|&q| {
            let mut row = Vec::with_capacity(ps.len() * ps.len());
            for &p1 in &ps {
                for &p2 in &ps {
                    row.push(eval_weight(w, PlaneVector::new(q, 0.0), PlaneVector::new(p1, p2))?.norm());
                }
            }
            Ok(row)
        })
        .collect();
    let raw: Vec<f64> = rows?.into_iter().flatten().collect();
    let (mut best, mut max_abs) = (0usize, f64::NEG_INFINITY);
    for (k, &v) in raw.iter().enumerate() {
        if v > max_abs {
            max_abs = v;
            best = k;
        }
    }
    if !(max_abs > 0.0 && max_abs.is_finite()) {
        return Err(Error::InvalidWeight(format!("|w| has no positive finite maximum on the grid ({max_abs})")));
    }
    let np = ps.len();
    let argmax = [qs[best / (np * np)], 0.0, ps[(best / np) % np], ps[best % np]];
    Ok(LocalizationProfile { grid, values: raw.iter().map(|v| v / max_abs).collect(), argmax, max_abs })
}

/// Weight given through its transform,
/// `w_hat(q, -y) = e^{2 nu - nu (|q| + 1/|q|)} / |q|^2 * e^{i mu arg q} * h(y)` with
/// `h(y) = (a |y|^2 + b |y|^4 y1) e^{-|y|^2 / 2}`.
///
/// The `b` term is odd in `y`, so the position moments `Omega_(2,1,0)` are
/// non-zero; `a = b = 1/2` makes the position matrix the identity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeparableWeight {
    pub nu: f64,
    pub mu: f64,
    pub a: f64,
    pub b: f64,
}

impl SeparableWeight {
    pub fn spec(self) -> WeightSpec {
        WeightSpec::from_model(Arc::new(self), EXAMPLE_DECAY)
    }

    fn profile(&self, y: PlaneVector) -> f64 {
        let y2 = y.norm_sqr();
        (self.a * y2 + self.b * y2 * y2 * y.c1) * (-y2 / 2.0).exp()
    }

    fn factor(&self, q: PlaneVector) -> Complex64 {
        let (r, th) = q.to_polar();
        Complex64::from_polar((2.0 * self.nu - self.nu * (r + 1.0 / r)).exp() / (r * r), self.mu * th)
    }
}

impl WeightModel for SeparableWeight {
    fn label(&self) -> String {
        format!("separable(nu={}, mu={}, a={}, b={})", self.nu, self.mu, self.a, self.b)
    }

    fn weight_hat(&self, q: PlaneVector, x: PlaneVector) -> Option<Result<Complex64>> {
        Some(Ok(self.factor(q) * self.profile(-x)))
    }

    fn hat_radial_at_identity(&self) -> bool {
        self.b == 0.0
    }

    fn hat_derivatives_at_identity(&self, x: PlaneVector) -> Option<HatDerivatives> {
        let h = self.profile(-x);
        Some(HatDerivatives {
            d1: Complex64::new(-2.0 * h, 0.0),
            d2: Complex64::new(0.0, self.mu * h),
            lap: Complex64::new((4.0 - 2.0 * self.nu - self.mu * self.mu) * h, 0.0),
        })
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WeightSpecJson {
    family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    alpha: Option<AlphaSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    state: Option<crate::coherent::StateSpec>,
    #[serde(default)]
    decay: Option<Decay>,
}

impl Serialize for WeightSpec {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match &self.kind {
            WeightKind::Example(e) => WeightSpecJson {
                family: "example".into(),
                nu: Some(e.nu),
                sigma: Some(e.sigma),
                alpha: Some(e.alpha.clone()),
                state: None,
                decay: Some(self.decay),
            }
            .serialize(s),
            WeightKind::Model(m) => {
                use serde::ser::SerializeMap;
                let mut st = s.serialize_map(None)?;
                match m.document() {
                    Some((family, body)) => {
                        st.serialize_entry("family", &family)?;
                        if let serde_json::Value::Object(fields) = body {
                            for (k, v) in fields {
                                st.serialize_entry(&k, &v)?;
                            }
                        }
                    }
                    None => st.serialize_entry("family", &m.label())?,
                }
                st.serialize_entry("decay", &self.decay)?;
                st.end()
            }
        }
    }
}

impl<'de> Deserialize<'de> for WeightSpec {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let j = WeightSpecJson::deserialize(d)?;
        match j.family.as_str() {
            "example" => {
                if j.state.is_some() {
                    return Err(D::Error::custom("`state` belongs to the coherent family"));
                }
                let (Some(nu), Some(sigma), Some(alpha)) = (j.nu, j.sigma, j.alpha) else {
                    return Err(D::Error::custom("example family needs `nu`, `sigma` and `alpha`"));
                };
                let w = WeightSpec { kind: WeightKind::Example(ExampleWeight { nu, sigma, alpha }), decay: j.decay.unwrap_or(EXAMPLE_DECAY) };
                w.validate().map_err(D::Error::custom)?;
                Ok(w)
            }
            "coherent" => {
                if j.nu.is_some() || j.sigma.is_some() || j.alpha.is_some() {
                    return Err(D::Error::custom("coherent family takes only `state`"));
                }
                let state = j.state.ok_or_else(|| D::Error::custom("coherent family needs `state`"))?;
                let mut w = crate::coherent::weight_from_state(&state);
                if let Some(decay) = j.decay {
                    w.decay = decay;
                }
                Ok(w)
            }
            other => Err(D::Error::custom(format!("unknown weight family `{other}` (expected `example` or `coherent`)"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop_assert, prop_assert_eq, proptest};

    fn ex(nu: f64, sigma: f64, mu: f64) -> WeightSpec {
        WeightSpec::example_exponential(nu, sigma, mu).unwrap()
    }

    #[test]
    fn unit_trace_point_is_exact() {
        for &(nu, sigma, mu) in &[(1.0, 3.5, 0.0), (16.0, 3.5, 1.0), (64.0, 1.0, 2.5), (0.3, 0.2, -1.0)] {
            let v = eval_weight(&ex(nu, sigma, mu), PlaneVector::E1, PlaneVector::ZERO).unwrap();
            assert_eq!(v, Complex64::new(1.0, 0.0));
        }
    }

    #[test]
    fn weight_examples() {
        let p = PlaneVector::new(1.0, 1.0);
        assert_eq!(eval_weight(&ex(1.0, 1.0, 0.0), PlaneVector::E1, p).unwrap().norm(), 0.0);
        let v = eval_weight(&ex(1.0, 1.0, 1.0), PlaneVector::from_polar(2.0, PI / 2.0), PlaneVector::ZERO).unwrap();
        let expected = Complex64::new(0.0, (2.0f64).exp() / 2.0 * (-2.5f64).exp());
        assert!((v - expected).norm() < 1e-15);
        assert!(eval_weight(&ex(1.0, 1.0, 0.0), PlaneVector::ZERO, p).is_err());
    }

    #[test]
    fn hat_examples() {
        let w = ex(1.0, 1.0, 0.0);
        assert_eq!(eval_weight_hat(&w, PlaneVector::new(1.3, 0.2), PlaneVector::ZERO).unwrap().norm(), 0.0);
        let v = eval_weight_hat(&w, PlaneVector::E1, PlaneVector::new(0.6, 0.8)).unwrap();
        assert!((v.re - 0.5 * (-0.5f64).exp()).abs() < 1e-15 && v.im == 0.0);
    }

    #[test]
    fn closed_form_hat_matches_fourier_quadrature() {
        // The closed form is validated against the defining transform at 100 points.
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for k in 0..100 {
            let nu = [0.5, 1.0, 4.0][k % 3];
            let sigma = [0.7, 1.5, 3.5][(k / 3) % 3];
            let mu = [0.0, 1.0, 2.0][(k / 9) % 3];
            let w = ex(nu, sigma, mu);
            let q = PlaneVector::from_polar(10f64.powf(rng.gen_range(-0.5..0.5)), rng.gen_range(-PI..PI));
            // |x| in the bulk of w_hat: sigma |x| / sqrt(|q|) in [0.3, 3].
            let scale = q.norm().sqrt() / sigma;
            let x = PlaneVector::from_polar(scale * rng.gen_range(0.3..3.0), rng.gen_range(-PI..PI));
            let closed = eval_weight_hat(&w, q, x).unwrap();
            let numeric = partial_fourier(&w, q, x, 1e-13).unwrap();
            let rel = (closed - numeric.value).norm() / closed.norm();
            assert!(rel < 1e-7, "k={k} q={q:?} x={x:?}: closed {closed} numeric {} rel {rel:.2e}", numeric.value);
        }
    }

    #[test]
    fn inverse_transform_recovers_weight() {
        let w = ex(2.0, 1.5, 1.0);
        for &(q, p) in &[(PlaneVector::new(0.8, 0.3), PlaneVector::new(0.4, -0.9)), (PlaneVector::E1, PlaneVector::ZERO)] {
            let back = inverse_partial_fourier(&w, q, p, 1e-12).unwrap().value;
            let direct = eval_weight(&w, q, p).unwrap();
            assert!((back - direct).norm() < 1e-9, "{back} vs {direct}");
        }
    }

    #[test]
    fn hat_derivatives_match_finite_differences() {
        let w = ex(3.0, 1.2, 1.5);
        let e = w.as_example().unwrap();
        let h = 1e-4;
        for &x in &[PlaneVector::new(0.3, 0.5), PlaneVector::new(-1.1, 0.2)] {
            let f = |q: PlaneVector| e.weight_hat(q, x);
            let d = e.hat_derivatives(x);
            let d1 = (f(PlaneVector::new(1.0 + h, 0.0)) - f(PlaneVector::new(1.0 - h, 0.0))) / (2.0 * h);
            let d2 = (f(PlaneVector::new(1.0, h)) - f(PlaneVector::new(1.0, -h))) / (2.0 * h);
            let c = f(PlaneVector::E1);
            let lap = (f(PlaneVector::new(1.0 + h, 0.0)) + f(PlaneVector::new(1.0 - h, 0.0)) + f(PlaneVector::new(1.0, h)) + f(PlaneVector::new(1.0, -h)) - c * 4.0) / (h * h);
            assert!((d.d1 - d1).norm() < 1e-6 * (1.0 + d1.norm()));
            assert!((d.d2 - d2).norm() < 1e-6 * (1.0 + d2.norm()));
            assert!((d.lap - lap).norm() < 1e-4 * (1.0 + lap.norm()), "{} vs {lap}", d.lap);
        }
    }

    #[test]
    fn symmetry_examples() {
        for mu in [0.0, 2.0] {
            let r = check_symmetry(&ex(1.0, 3.5, mu), 100, 1).unwrap();
            assert!(r.max_violation < 1e-10, "{r:?}");
        }
        let w = ex(1.0, 3.5, 0.7);
        for p in [PlaneVector::ZERO, PlaneVector::new(0.3, -2.0)] {
            let a = eval_weight(&w, PlaneVector::E1, p).unwrap();
            let b = eval_weight(&w, PlaneVector::E1, -p).unwrap().conj();
            assert!((a - b).norm() < 1e-15);
        }
    }

    #[test]
    fn alpha_validation() {
        assert!(AlphaSpec::Exponential { mu: 1.7 }.validate().is_ok());
        let bad = AlphaSpec::Tabulated(TabulatedAlpha::new(|t: f64| Complex64::new(1.0, t), None, None));
        assert!(bad.validate().is_ok());
        let odd = AlphaSpec::Tabulated(TabulatedAlpha::new(|t: f64| Complex64::new(1.0 + t, 0.0), None, None));
        assert!(odd.validate().is_err());
        let off = AlphaSpec::Tabulated(TabulatedAlpha::new(|_| Complex64::new(2.0, 0.0), None, None));
        assert!(off.validate().is_err());
    }

    #[test]
    fn tabulated_alpha_derivatives_by_differences() {
        let a = AlphaSpec::Tabulated(TabulatedAlpha::new(|t: f64| Complex64::from_polar(1.0 + 0.1 * (t.cos() - 1.0), 0.7 * t), None, None));
        assert!((a.d1() - Complex64::new(0.0, 0.7)).norm() < 1e-9);
        assert!((a.d2() - Complex64::new(-0.49 - 0.1, 0.0)).norm() < 1e-5);
    }

    #[test]
    fn localization_peaks_near_identity() {
        let prof = localization_profile(&ex(64.0, 3.5, 0.0), LocalizationGrid::default()).unwrap();
        assert_eq!(prof.argmax, [1.0, 0.0, 0.0, 0.0]);
        assert_eq!(prof.values.iter().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn json_round_trip() {
        let text = r#"{"family":"example","nu":1.0,"sigma":3.5,"alpha":{"kind":"exponential","mu":1.0}}"#;
        let w: WeightSpec = serde_json::from_str(text).unwrap();
        assert_eq!(w.decay, EXAMPLE_DECAY);
        let back = serde_json::to_string(&w).unwrap();
        let again: WeightSpec = serde_json::from_str(&back).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), back);
        assert!(serde_json::from_str::<WeightSpec>(r#"{"family":"example","nu":1,"sigma":1,"alpha":{"kind":"exponential","mu":0},"extra":1}"#).is_err());
        assert!(serde_json::from_str::<WeightSpec>(r#"{"family":"example","nu":-1,"sigma":1,"alpha":{"kind":"exponential","mu":0}}"#).is_err());
    }

    proptest! {
        #[test]
        fn hat_is_even_in_x(nu in 0.1f64..20.0, sigma in 0.2f64..5.0, mu in -3.0f64..3.0,
                            r in 0.2f64..5.0, th in -PI..PI, x1 in -3.0f64..3.0, x2 in -3.0f64..3.0) {
            let w = ex(nu, sigma, mu);
            let q = PlaneVector::from_polar(r, th);
            let x = PlaneVector::new(x1, x2);
            prop_assert_eq!(eval_weight_hat(&w, q, x).unwrap(), eval_weight_hat(&w, q, -x).unwrap());
        }

        #[test]
        fn symmetry_holds_pointwise(nu in 0.1f64..30.0, sigma in 0.2f64..5.0, mu in -3.0f64..3.0,
                                    r in 0.1f64..10.0, th in -3.1f64..3.1, p1 in -5.0f64..5.0, p2 in -5.0f64..5.0) {
            let w = ex(nu, sigma, mu);
            let q = PlaneVector::from_polar(r, th);
            let p = PlaneVector::new(p1, p2);
            let lhs = eval_weight(&w, q, p).unwrap();
            let rhs = eval_weight(&w, q.inv().unwrap(), -(q.conj() * p)).unwrap().conj() / q.norm_sqr();
            prop_assert!((lhs - rhs).norm() <= 1e-12 * (1.0 + lhs.norm()));
        }
    }
}
