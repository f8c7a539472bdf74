//! Moment integrals of the partial Fourier transform,
//!
//! ```text
//! Omega_(beta,n1,n2)(q) = int d^2y |y|^-(beta+2) w_hat(q, -y) y1^n1 y2^n2,
//! ```
//!
//! and the `q`-derivatives at the identity that enter the quantized operators.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_log_polar, integrate_on_mesh, Estimate, LargeDecay, Mesh, QuadOptions, QuadOutcome};
use crate::sim2::{ComplexPlaneVector, PlaneVector};
use crate::weights::{eval_weight_hat, AlphaSpec, Trap, WeightSpec};

pub const DEFAULT_TOL: f64 = 1e-9;
const GRAD_STEP: f64 = 1e-4;
const LAP_STEP: f64 = 1e-3;

/// Index `(beta, n1, n2)` of a moment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentKey {
    pub beta: f64,
    pub nu1: u32,
    pub nu2: u32,
}

impl MomentKey {
    pub const fn new(beta: f64, nu1: u32, nu2: u32) -> Self {
        MomentKey { beta, nu1, nu2 }
    }

    pub const fn beta(beta: f64) -> Self {
        MomentKey { beta, nu1: 0, nu2: 0 }
    }

    /// The order `n1 + n2 - beta` of the integrand's power of `|y|`.
    fn power(&self) -> f64 {
        (self.nu1 + self.nu2) as f64 - self.beta
    }

    fn missing(&self) -> Error {
        Error::MissingMoment { beta: self.beta, nu1: self.nu1, nu2: self.nu2 }
    }

    fn missing_gradient(&self) -> Error {
        Error::MissingMomentGradient { beta: self.beta, nu1: self.nu1, nu2: self.nu2 }
    }
}

/// Which argument of `w_hat` enters the moment: `w_hat(q, -y)` or `w_hat(q, +y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HatSign {
    #[default]
    Minus,
    Plus,
}

impl HatSign {
    fn apply(self, y: PlaneVector) -> PlaneVector {
        match self {
            HatSign::Minus => -y,
            HatSign::Plus => y,
        }
    }
}

/// How `q`-derivatives at the identity are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeRoute {
    /// Analytic when the weight provides it, else finite differences.
    #[default]
    Auto,
    Analytic,
    FiniteDifference,
}

/// Quadrature rates for a moment, or a refusal when the declared decay
/// does not make the integral converge.
fn rates(w: &WeightSpec, key: MomentKey) -> Result<(f64, Option<f64>)> {
    let low = w.decay.small_power + key.power();
    if !(low > 0.0) {
        return Err(Error::Refused(format!(
            "Omega_({},{},{}) diverges at y = 0: w_hat ~ |y|^{} gives integrand power {low} in log-radius",
            key.beta, key.nu1, key.nu2, w.decay.small_power
        )));
    }
    let high = match w.decay.large {
        LargeDecay::Gaussian => None,
        LargeDecay::Power { exponent } => {
            let r = exponent - key.power();
            if !(r > 0.0) {
                return Err(Error::Refused(format!(
                    "Omega_({},{},{}) diverges at infinity: w_hat ~ |y|^-{exponent}",
                    key.beta, key.nu1, key.nu2
                )));
            }
            Some(r)
        }
    };
    Ok((low, high))
}

fn monomial(key: MomentKey, t: f64, phi: f64) -> f64 {
    let (s, c) = phi.sin_cos();
    (key.power() * t).exp() * c.powi(key.nu1 as i32) * s.powi(key.nu2 as i32)
}

/// Adaptive quadrature of a moment, returning the mesh it settled on.
pub fn omega_outcome(w: &WeightSpec, key: MomentKey, q: PlaneVector, tol: f64, sign: HatSign) -> Result<QuadOutcome> {
    if !(tol > 0.0) {
        return Err(Error::domain("moment tolerance must be positive"));
    }
    let (low, high) = rates(w, key)?;
    let trap = Trap::new();
    let f = |t: f64, phi: f64| {
        let y = PlaneVector::from_polar(t.exp(), phi);
        trap.catch(eval_weight_hat(w, q, sign.apply(y))) * monomial(key, t, phi)
    };
    let out = integrate_log_polar(f, &QuadOptions::with_tol(tol).rates(Some(low), high));
    trap.finish(out)
}

/// `Omega_(beta,n1,n2)(q)` with the `-y` convention.
pub fn omega(w: &WeightSpec, beta: f64, nu1: u32, nu2: u32, q: PlaneVector, tol: f64) -> Result<Estimate> {
    omega_outcome(w, MomentKey::new(beta, nu1, nu2), q, tol, HatSign::Minus).map(|o| o.estimate())
}

/// The same moment re-evaluated on a frozen mesh.
pub fn omega_on_mesh(w: &WeightSpec, key: MomentKey, q: PlaneVector, sign: HatSign, mesh: &Mesh) -> Result<Complex64> {
    let trap = Trap::new();
    let f = |t: f64, phi: f64| {
        let y = PlaneVector::from_polar(t.exp(), phi);
        trap.catch(eval_weight_hat(w, q, sign.apply(y))) * monomial(key, t, phi)
    };
    let v = integrate_on_mesh(f, mesh);
    trap.finish(Ok(v))
}

/// `pi sigma^2 e^{2 nu - nu (|q| + 1/|q|)} / |q|^2 * alpha(arg q)`.
pub fn omega_closed_form_example(nu: f64, sigma: f64, alpha: &AlphaSpec, q: PlaneVector) -> Result<Complex64> {
    let (r, th) = q.to_polar();
    if !(r > 0.0) {
        return Err(Error::domain("Omega evaluated at q = 0"));
    }
    Ok(alpha.eval(th) * (PI * sigma * sigma * (2.0 * nu - nu * (r + 1.0 / r)).exp() / (r * r)))
}

/// `2 pi Omega(1)`.
pub fn c_constant(w: &WeightSpec, tol: f64) -> Result<Complex64> {
    Ok(omega(w, 0.0, 0, 0, PlaneVector::E1, tol)?.value * (2.0 * PI))
}

/// Gradient together with an absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientEstimate {
    pub value: ComplexPlaneVector,
    pub abs_err: f64,
}

fn analytic_available(w: &WeightSpec) -> bool {
    w.hat_derivatives_at_identity(PlaneVector::new(0.6, 0.3)).is_some()
}

fn use_analytic(w: &WeightSpec, route: DerivativeRoute) -> Result<bool> {
    match route {
        DerivativeRoute::Auto => Ok(analytic_available(w)),
        DerivativeRoute::FiniteDifference => Ok(false),
        DerivativeRoute::Analytic => {
            if analytic_available(w) {
                Ok(true)
            } else {
                Err(Error::InvalidWeight(format!("{} provides no analytic q-derivatives", w.label())))
            }
        }
    }
}

/// Integrates `D w_hat(1, -y)` against the moment monomial, where `D` picks
/// one of the analytic derivatives.
fn analytic_moment<D>(w: &WeightSpec, key: MomentKey, tol: f64, sign: HatSign, pick: D) -> Result<Estimate>
where
    D: Fn(&crate::weights::HatDerivatives) -> Complex64 + Sync,
{
    let (low, high) = rates(w, key)?;
    let trap = Trap::new();
    let f = |t: f64, phi: f64| {
        let y = PlaneVector::from_polar(t.exp(), phi);
        let d = w
            .hat_derivatives_at_identity(sign.apply(y))
            .ok_or_else(|| Error::InvalidWeight("analytic q-derivatives unavailable".into()));
        trap.catch(d.map(|d| pick(&d))) * monomial(key, t, phi)
    };
    let out = integrate_log_polar(f, &QuadOptions::with_tol(tol).rates(Some(low), high));
    trap.finish(out).map(|o| o.estimate())
}

/// `grad_q Omega_key(q)` at `q = (1, 0)`.
pub fn grad_omega_gen_at_1(w: &WeightSpec, key: MomentKey, tol: f64, route: DerivativeRoute) -> Result<GradientEstimate> {
    if use_analytic(w, route)? {
        let g1 = analytic_moment(w, key, tol, HatSign::Minus, |d| d.d1)?;
        let g2 = analytic_moment(w, key, tol, HatSign::Minus, |d| d.d2)?;
        return Ok(GradientEstimate { value: ComplexPlaneVector::new(g1.value, g2.value), abs_err: g1.abs_err.max(g2.abs_err) });
    }
    let base = omega_outcome(w, key, PlaneVector::E1, tol, HatSign::Minus)?;
    let at = |dq: PlaneVector| omega_on_mesh(w, key, PlaneVector::E1 + dq, HatSign::Minus, &base.mesh);
    let central = |h: f64, dir: PlaneVector| -> Result<Complex64> { Ok((at(dir.scale(h))? - at(dir.scale(-h))?) / (2.0 * h)) };
    let mut comps = [Complex64::new(0.0, 0.0); 2];
    let mut err: f64 = 0.0;
    for (k, dir) in [PlaneVector::E1, PlaneVector::E2].into_iter().enumerate() {
        let coarse = central(GRAD_STEP, dir)?;
        let fine = central(GRAD_STEP / 2.0, dir)?;
        comps[k] = (fine * 4.0 - coarse) / 3.0;
        err = err.max((comps[k] - fine).norm() + base.abs_err / GRAD_STEP);
    }
    Ok(GradientEstimate { value: ComplexPlaneVector::new(comps[0], comps[1]), abs_err: err })
}

/// `Delta_q Omega_key(q)` at `q = (1, 0)`.
pub fn laplacian_omega_gen_at_1(w: &WeightSpec, key: MomentKey, tol: f64, route: DerivativeRoute) -> Result<Estimate> {
    if use_analytic(w, route)? {
        return analytic_moment(w, key, tol, HatSign::Minus, |d| d.lap);
    }
    let base = omega_outcome(w, key, PlaneVector::E1, tol, HatSign::Minus)?;
    let at = |dq: PlaneVector| omega_on_mesh(w, key, PlaneVector::E1 + dq, HatSign::Minus, &base.mesh);
    let centre = at(PlaneVector::ZERO)?;
    let stencil = |h: f64| -> Result<Complex64> {
        let s = at(PlaneVector::new(h, 0.0))? + at(PlaneVector::new(-h, 0.0))? + at(PlaneVector::new(0.0, h))? + at(PlaneVector::new(0.0, -h))?;
        Ok((s - centre * 4.0) / (h * h))
    };
    let coarse = stencil(LAP_STEP)?;
    let fine = stencil(LAP_STEP / 2.0)?;
    let value = (fine * 4.0 - coarse) / 3.0;
    Ok(Estimate::new(value, (value - fine).norm() + base.abs_err / (LAP_STEP * LAP_STEP)))
}

/// `grad Omega(1)`.
pub fn grad_omega_at_1(w: &WeightSpec, tol: f64) -> Result<ComplexPlaneVector> {
    grad_omega_gen_at_1(w, MomentKey::beta(0.0), tol, DerivativeRoute::Auto).map(|g| g.value)
}

/// `Delta Omega(1)`.
pub fn laplacian_omega_at_1(w: &WeightSpec, tol: f64) -> Result<Complex64> {
    laplacian_omega_gen_at_1(w, MomentKey::beta(0.0), tol, DerivativeRoute::Auto).map(|e| e.value)
}

/// One tabulated moment, in the exported JSON shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MomentEntry {
    pub beta: f64,
    pub nu1: u32,
    pub nu2: u32,
    pub q: PlaneVector,
    pub value: Complex64,
    pub abs_err: f64,
}

impl MomentEntry {
    pub fn key(&self) -> MomentKey {
        MomentKey::new(self.beta, self.nu1, self.nu2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientEntry {
    pub key: MomentKey,
    pub value: ComplexPlaneVector,
    pub abs_err: f64,
}

/// Which moments [`MomentTable::build`] computes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MomentRequest {
    pub betas: Vec<f64>,
    pub general: Vec<MomentKey>,
    pub general_gradients: Vec<MomentKey>,
    pub derivatives: bool,
    pub route: DerivativeRoute,
}

pub const POSITION_KEYS: [MomentKey; 2] = [MomentKey::new(2.0, 1, 0), MomentKey::new(2.0, 0, 1)];

impl Default for MomentRequest {
    fn default() -> Self {
        MomentRequest { betas: Vec::new(), general: Vec::new(), general_gradients: Vec::new(), derivatives: true, route: DerivativeRoute::Auto }
    }
}

impl MomentRequest {
    /// Everything the built-in observables need.
    pub fn standard() -> Self {
        MomentRequest {
            betas: vec![-2.0, -1.0, 1.0],
            general: POSITION_KEYS.to_vec(),
            general_gradients: POSITION_KEYS.to_vec(),
            ..Default::default()
        }
    }
}

/// Moments at `q = (1, 0)` of one weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentTable {
    pub weight: String,
    pub omega0: Estimate,
    pub omega_beta: Vec<MomentEntry>,
    pub omega_gen: Vec<MomentEntry>,
    pub grad: Option<GradientEstimate>,
    pub lap: Option<Estimate>,
    pub gen_grad: Vec<GradientEntry>,
    /// Moments whose value flips between the `-y` and `+y` conventions.
    pub sign_sensitive: Vec<MomentKey>,
}

fn check_omega0(v: Complex64) -> Result<()> {
    let n = v.norm();
    if !(n > 0.0 && n.is_finite()) {
        return Err(Error::InvalidWeight(format!("Omega(1) = {v} must be finite and non-zero")));
    }
    Ok(())
}

impl MomentTable {
    /// A table holding only `Omega(1)`; entries are added with the `insert_*` methods.
    pub fn new(weight: impl Into<String>, omega0: Estimate) -> Result<Self> {
        check_omega0(omega0.value)?;
        Ok(MomentTable {
            weight: weight.into(),
            omega0,
            omega_beta: Vec::new(),
            omega_gen: Vec::new(),
            grad: None,
            lap: None,
            gen_grad: Vec::new(),
            sign_sensitive: Vec::new(),
        })
    }

    pub fn build(w: &WeightSpec, req: &MomentRequest, tol: f64) -> Result<Self> {
        let omega0 = omega(w, 0.0, 0, 0, PlaneVector::E1, tol)?;
        let mut t = MomentTable::new(w.label(), omega0)?;
        for &b in &req.betas {
            if b != 0.0 {
                let e = omega(w, b, 0, 0, PlaneVector::E1, tol)?;
                t.insert(MomentKey::beta(b), e);
            }
        }
        for &k in &req.general {
            let e = omega(w, k.beta, k.nu1, k.nu2, PlaneVector::E1, tol)?;
            t.insert(k, e);
            if (k.nu1 + k.nu2) % 2 == 1 && 2.0 * e.value.norm() > tol.max(2.0 * e.abs_err) {
                t.sign_sensitive.push(k);
            }
        }
        if req.derivatives {
            t.grad = Some(grad_omega_gen_at_1(w, MomentKey::beta(0.0), tol, req.route)?);
            t.lap = Some(laplacian_omega_gen_at_1(w, MomentKey::beta(0.0), tol, req.route)?);
        }
        for &k in &req.general_gradients {
            let g = grad_omega_gen_at_1(w, k, tol, req.route)?;
            t.gen_grad.push(GradientEntry { key: k, value: g.value, abs_err: g.abs_err });
        }
        Ok(t)
    }

    pub fn insert(&mut self, key: MomentKey, value: Estimate) {
        let entry = MomentEntry { beta: key.beta, nu1: key.nu1, nu2: key.nu2, q: PlaneVector::E1, value: value.value, abs_err: value.abs_err };
        let list = if key.nu1 == 0 && key.nu2 == 0 { &mut self.omega_beta } else { &mut self.omega_gen };
        list.retain(|e| e.key() != key);
        list.push(entry);
    }

    pub fn insert_gradient(&mut self, key: MomentKey, value: ComplexPlaneVector) {
        self.gen_grad.retain(|g| g.key != key);
        self.gen_grad.push(GradientEntry { key, value, abs_err: 0.0 });
    }

    pub fn omega0(&self) -> Complex64 {
        self.omega0.value
    }

    /// `2 pi Omega(1)`.
    pub fn c_constant(&self) -> Complex64 {
        self.omega0.value * (2.0 * PI)
    }

    pub fn omega_beta(&self, beta: f64) -> Result<Complex64> {
        self.get(MomentKey::beta(beta))
    }

    pub fn get(&self, key: MomentKey) -> Result<Complex64> {
        if key == MomentKey::beta(0.0) {
            return Ok(self.omega0.value);
        }
        self.omega_beta
            .iter()
            .chain(self.omega_gen.iter())
            .find(|e| e.key() == key)
            .map(|e| e.value)
            .ok_or_else(|| key.missing())
    }

    pub fn grad(&self) -> Result<ComplexPlaneVector> {
        self.grad.map(|g| g.value).ok_or_else(|| MomentKey::beta(0.0).missing_gradient())
    }

    pub fn lap(&self) -> Result<Complex64> {
        self.lap.map(|e| e.value).ok_or_else(|| MomentKey::beta(0.0).missing_gradient())
    }

    pub fn gen_grad(&self, key: MomentKey) -> Result<ComplexPlaneVector> {
        if key == MomentKey::beta(0.0) {
            return self.grad();
        }
        self.gen_grad.iter().find(|g| g.key == key).map(|g| g.value).ok_or_else(|| key.missing_gradient())
    }

    /// `grad Omega(1) / Omega(1)`.
    pub fn log_grad(&self) -> Result<ComplexPlaneVector> {
        Ok(self.grad()? / self.omega0.value)
    }

    /// `Delta Omega(1) / Omega(1)`.
    pub fn log_lap_ratio(&self) -> Result<Complex64> {
        Ok(self.lap()? / self.omega0.value)
    }

    /// All scalar moments in the export shape, `Omega(1)` first.
    pub fn entries(&self) -> Vec<MomentEntry> {
        let mut out = vec![MomentEntry { beta: 0.0, nu1: 0, nu2: 0, q: PlaneVector::E1, value: self.omega0.value, abs_err: self.omega0.abs_err }];
        out.extend(self.omega_beta.iter().copied());
        out.extend(self.omega_gen.iter().copied());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::weights::SeparableWeight;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use statrs::function::gamma::gamma;

    fn ex(nu: f64, sigma: f64, mu: f64) -> WeightSpec {
        WeightSpec::example_exponential(nu, sigma, mu).unwrap()
    }

    fn close(a: Complex64, b: Complex64, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn omega_examples() {
        let w = ex(1.0, 3.5, 0.0);
        let o = omega(&w, 0.0, 0, 0, PlaneVector::E1, 1e-9).unwrap();
        assert!(close(o.value, Complex64::new(PI * 3.5 * 3.5, 0.0), 1e-8), "{o:?}");
        assert!((o.value.re - 38.484_510_006_474_96).abs() < 1e-8);
        let t = omega(&w, -2.0, 0, 0, PlaneVector::E1, 1e-9).unwrap();
        assert!(close(t.value, Complex64::new(2.0 * PI, 0.0), 1e-8), "{t:?}");
        let odd = omega(&w, 0.0, 0, 1, PlaneVector::E1, 1e-9).unwrap();
        assert!(odd.value.norm() < 1e-9);
    }

    #[test]
    fn closed_form_agrees_with_quadrature() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let (nu, sigma, mu) = (1.5, 2.0, 1.3);
        let w = ex(nu, sigma, mu);
        let alpha = AlphaSpec::Exponential { mu };
        for _ in 0..20 {
            let r = (rng.gen_range(0.2f64.ln()..5f64.ln())).exp();
            let th = rng.gen_range(-PI..PI);
            let q = PlaneVector::from_polar(r, th);
            let quad = omega(&w, 0.0, 0, 0, q, 1e-9).unwrap();
            let exact = omega_closed_form_example(nu, sigma, &alpha, q).unwrap();
            assert!(close(quad.value, exact, 1e-8), "q={q:?}: {} vs {exact}", quad.value);
        }
        let far = omega_closed_form_example(nu, sigma, &alpha, PlaneVector::new(1e3, 0.0)).unwrap();
        assert!(far.norm() < 1e-300);
        let on_circle = omega_closed_form_example(nu, sigma, &alpha, PlaneVector::from_polar(1.0, 0.4)).unwrap();
        assert!(close(on_circle, Complex64::from_polar(PI * 4.0, 1.3 * 0.4), 1e-12));
    }

    #[test]
    fn beta_ratio_follows_gaussian_moments() {
        // int d^2y |y|^-(beta+2) (s^2 y^2/2) s^2 e^{-s^2 y^2/2} = 2 pi Gamma(1 - beta/2) (s^2/2)^(beta/2)
        for &sigma in &[0.8, 3.5] {
            let w = ex(2.0, sigma, 0.5);
            let o0 = omega(&w, 0.0, 0, 0, PlaneVector::E1, 1e-10).unwrap().value;
            for &beta in &[-2.0, -1.0, 0.0, 0.5, 1.0] {
                let ob = omega(&w, beta, 0, 0, PlaneVector::E1, 1e-10).unwrap().value;
                let expected = gamma(1.0 - beta / 2.0) * (sigma * sigma / 2.0).powf(beta / 2.0);
                assert!(((ob / o0).re - expected).abs() < 1e-9, "sigma={sigma} beta={beta}: {} vs {expected}", ob / o0);
            }
        }
    }

    #[test]
    fn divergent_moments_are_refused() {
        let w = ex(1.0, 1.0, 0.0);
        assert!(matches!(omega(&w, 2.0, 0, 0, PlaneVector::E1, 1e-9), Err(Error::Refused(_))));
        assert!(matches!(omega(&w, 3.0, 1, 0, PlaneVector::E1, 1e-9), Err(Error::Refused(_))));
        assert!(omega(&w, 1.9, 0, 0, PlaneVector::E1, 1e-6).is_ok());
    }

    #[test]
    fn derivatives_analytic_and_finite_difference_agree() {
        for &(nu, sigma, mu) in &[(1.0, 3.5, 1.0), (3.0, 1.2, 0.0), (0.7, 2.0, -2.0)] {
            let w = ex(nu, sigma, mu);
            let o = PI * sigma * sigma;
            let key = MomentKey::beta(0.0);
            let ga = grad_omega_gen_at_1(&w, key, 1e-10, DerivativeRoute::Analytic).unwrap().value;
            let gf = grad_omega_gen_at_1(&w, key, 1e-10, DerivativeRoute::FiniteDifference).unwrap().value;
            let la = laplacian_omega_gen_at_1(&w, key, 1e-10, DerivativeRoute::Analytic).unwrap().value;
            let lf = laplacian_omega_gen_at_1(&w, key, 1e-10, DerivativeRoute::FiniteDifference).unwrap().value;
            assert!((ga - gf).norm() < 1e-6, "{ga:?} vs {gf:?}");
            assert!((la - lf).norm() < 1e-6, "{la} vs {lf}");
            assert!(close(ga.c1, Complex64::new(-2.0 * o, 0.0), 1e-7));
            assert!(close(ga.c2, Complex64::new(0.0, mu * o), 1e-7));
            assert!(close(la, Complex64::new((4.0 - 2.0 * nu - mu * mu) * o, 0.0), 1e-7), "{la}");
        }
        let flat = ex(2.0, 1.0, 0.0);
        assert!(laplacian_omega_at_1(&flat, 1e-10).unwrap().norm() < 1e-8);
        assert!(grad_omega_at_1(&flat, 1e-10).unwrap().c2.norm() < 1e-12);
    }

    #[test]
    fn sign_convention_only_matters_for_odd_moments() {
        let w = SeparableWeight { nu: 1.0, mu: 0.5, a: 0.5, b: 0.5 }.spec();
        for key in [MomentKey::beta(0.0), MomentKey::beta(-1.0), MomentKey::new(2.0, 1, 0), MomentKey::new(1.0, 1, 1)] {
            let m = omega_outcome(&w, key, PlaneVector::E1, 1e-10, HatSign::Minus).unwrap().value;
            let p = omega_outcome(&w, key, PlaneVector::E1, 1e-10, HatSign::Plus).unwrap().value;
            let parity = if (key.nu1 + key.nu2) % 2 == 1 { -1.0 } else { 1.0 };
            assert!(close(p, m * parity, 1e-9), "{key:?}: {m} {p}");
        }
        let t = MomentTable::build(&w, &MomentRequest::standard(), 1e-9).unwrap();
        assert_eq!(t.sign_sensitive, vec![MomentKey::new(2.0, 1, 0)]);
        let e = MomentTable::build(&ex(1.0, 1.0, 0.0), &MomentRequest::standard(), 1e-9).unwrap();
        assert!(e.sign_sensitive.is_empty());
    }

    #[test]
    fn separable_weight_moments() {
        let w = SeparableWeight { nu: 1.0, mu: 0.5, a: 0.5, b: 0.5 }.spec();
        let t = MomentTable::build(&w, &MomentRequest::standard(), 1e-10).unwrap();
        assert!(close(t.omega0(), Complex64::new(PI, 0.0), 1e-9));
        assert!(close(t.get(MomentKey::new(2.0, 1, 0)).unwrap(), Complex64::new(PI, 0.0), 1e-9));
        assert!(t.get(MomentKey::new(2.0, 0, 1)).unwrap().norm() < 1e-10);
        let fd = grad_omega_gen_at_1(&w, MomentKey::new(2.0, 1, 0), 1e-10, DerivativeRoute::FiniteDifference).unwrap().value;
        assert!((t.gen_grad(MomentKey::new(2.0, 1, 0)).unwrap() - fd).norm() < 1e-6);
    }

    #[test]
    fn table_lookups_name_missing_entries() {
        let t = MomentTable::new("manual", Estimate::exact(Complex64::new(2.0, 0.0))).unwrap();
        assert_eq!(t.omega_beta(0.0).unwrap(), Complex64::new(2.0, 0.0));
        assert!(matches!(t.omega_beta(1.0), Err(Error::MissingMoment { beta, .. }) if beta == 1.0));
        assert!(matches!(t.gen_grad(MomentKey::new(2.0, 1, 0)), Err(Error::MissingMomentGradient { nu1: 1, .. })));
        assert!(matches!(t.grad(), Err(Error::MissingMomentGradient { .. })));
        assert!(MomentTable::new("zero", Estimate::exact(Complex64::new(0.0, 0.0))).is_err());
        assert!((t.c_constant().re - 4.0 * PI).abs() < 1e-15);
        let c = c_constant(&ex(1.0, 3.5, 0.0), 1e-9).unwrap();
        assert!((c.re - 2.0 * PI * PI * 3.5 * 3.5).abs() < 1e-7);
    }

    #[test]
    fn quadrature_is_independent_of_thread_count() {
        let w = ex(1.0, 3.5, 1.0);
        let run = |n: usize| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .unwrap()
                .install(|| omega(&w, 0.5, 1, 1, PlaneVector::new(0.7, 0.4), 1e-9).unwrap())
        };
        let a = run(1);
        let b = run(3);
        assert_eq!(a.value.re.to_bits(), b.value.re.to_bits());
        assert_eq!(a.value.im.to_bits(), b.value.im.to_bits());
    }

    #[test]
    fn table_serializes_entries() {
        let t = MomentTable::build(&ex(1.0, 3.5, 0.0), &MomentRequest { betas: vec![-2.0], derivatives: false, ..Default::default() }, 1e-9).unwrap();
        let json = serde_json::to_value(t.entries()).unwrap();
        assert_eq!(json[1]["beta"], -2.0);
        assert!(json[0]["value"].is_array());
        let back: MomentTable = serde_json::from_str(&serde_json::to_string(&t).unwrap()).unwrap();
        assert_eq!(back, t);
    }
}
