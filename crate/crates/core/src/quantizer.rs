//! Quantized observables.
//!
//! Every built-in observable quantizes into the span of
//! `P^2, P, (1/Q*).P, Q.P, Q^P, Q^beta, Q, 1/Q^2, 1`, held by
//! [`OperatorDescriptor`]. Position-dependent symbols `u(q)` act by
//! multiplication with `(1/Omega(1)) int d^2x'/x'^2 w_hat(1, -x') u(x/x')`;
//! separable symbols `u(q) v(p)` act through an integral kernel.

use std::f64::consts::PI;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Dilated, PlaneFunction, SampledField, SharedFunction};
use crate::moments::{MomentKey, MomentTable, POSITION_KEYS};
use crate::quadrature::{integrate_log_polar, Decay, Estimate, LargeDecay, QuadOptions};
use crate::sim2::{apply_unitary, ComplexPlaneVector, GroupElement, PlaneVector, UnitaryOptions};
use crate::weights::{eval_weight_hat, WeightSpec};

type C = Complex64;

const ZERO: C = C::new(0.0, 0.0);
const I: C = C::new(0.0, 1.0);

fn re(x: f64) -> C {
    C::new(x, 0.0)
}

/// Whether a descriptor is a scalar operator or a plane-vector operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorRank {
    #[default]
    Scalar,
    Vector,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTerm {
    pub beta: f64,
    pub value: C,
}

/// Coefficients of a quantized observable in the fixed operator basis.
///
/// Scalar operators read
/// `c_P2 P^2 + ((1/Q*) c_invQstarP).P + c_QdotP Q.P + c_QwedgeP Q^P
///  + sum c_mult[beta] Q^beta + c_invQ2 / Q^2 + c_const`.
///
/// Vector operators read `c_P P + (1/Q*) c_invQstarP + c_position Q`, the
/// product `(1/Q*) v` being the plane product taken componentwise in the
/// quantum amplitudes.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OperatorDescriptor {
    pub rank: OperatorRank,
    #[serde(rename = "P^2")]
    pub c_p2: C,
    #[serde(rename = "P")]
    pub c_p: C,
    #[serde(rename = "(1/Q*)")]
    pub c_inv_qstar_p: ComplexPlaneVector,
    #[serde(rename = "Q.P")]
    pub c_qdotp: C,
    #[serde(rename = "Q^P")]
    pub c_qwedgep: C,
    #[serde(rename = "Q^beta")]
    pub c_mult: Vec<PowerTerm>,
    #[serde(rename = "Q")]
    pub c_position: [[C; 2]; 2],
    #[serde(rename = "1/Q^2")]
    pub c_inv_q2: C,
    #[serde(rename = "1")]
    pub c_const: C,
}

impl OperatorDescriptor {
    pub fn zero(rank: OperatorRank) -> Self {
        OperatorDescriptor { rank, ..Default::default() }
    }

    /// The identity operator: `c_mult[0] = 1` and nothing else.
    pub fn identity() -> Self {
        OperatorDescriptor { c_mult: vec![PowerTerm { beta: 0.0, value: re(1.0) }], ..Default::default() }
    }

    pub fn mult(&self, beta: f64) -> C {
        self.c_mult.iter().find(|t| t.beta == beta).map_or(ZERO, |t| t.value)
    }

    pub fn is_finite(&self) -> bool {
        let scalars = [self.c_p2, self.c_p, self.c_qdotp, self.c_qwedgep, self.c_inv_q2, self.c_const];
        scalars.iter().all(|c| c.is_finite())
            && self.c_inv_qstar_p.is_finite()
            && self.c_mult.iter().all(|t| t.value.is_finite() && t.beta.is_finite())
            && self.c_position.iter().flatten().all(|c| c.is_finite())
    }

    /// `sum a_k D_k`; all descriptors must share a rank.
    pub fn combine(terms: &[(C, &OperatorDescriptor)]) -> Result<Self> {
        let Some((_, first)) = terms.first() else {
            return Err(Error::domain("empty linear combination"));
        };
        let rank = first.rank;
        let mut out = OperatorDescriptor::zero(rank);
        for (a, d) in terms {
            if d.rank != rank {
                return Err(Error::domain("cannot combine scalar and vector operators"));
            }
            let a = *a;
            out.c_p2 += a * d.c_p2;
            out.c_p += a * d.c_p;
            out.c_inv_qstar_p = out.c_inv_qstar_p + d.c_inv_qstar_p.scale(a);
            out.c_qdotp += a * d.c_qdotp;
            out.c_qwedgep += a * d.c_qwedgep;
            for t in &d.c_mult {
                match out.c_mult.iter_mut().find(|s| s.beta == t.beta) {
                    Some(s) => s.value += a * t.value,
                    None => out.c_mult.push(PowerTerm { beta: t.beta, value: a * t.value }),
                }
            }
            for i in 0..2 {
                for j in 0..2 {
                    out.c_position[i][j] += a * d.c_position[i][j];
                }
            }
            out.c_inv_q2 += a * d.c_inv_q2;
            out.c_const += a * d.c_const;
        }
        Ok(out)
    }

    fn has_derivatives(&self) -> bool {
        self.c_p2 != ZERO || self.c_p != ZERO || self.c_qdotp != ZERO || self.c_qwedgep != ZERO || self.c_inv_qstar_p != ComplexPlaneVector::ZERO
    }

    /// Value of a multiplication-only descriptor at `x`; `component` picks
    /// the row of a vector operator.
    pub fn multiplier_at(&self, x: PlaneVector, component: Option<usize>) -> Result<C> {
        if self.has_derivatives() {
            return Err(Error::domain("descriptor contains derivative terms; use the kernel path"));
        }
        match (self.rank, component) {
            (OperatorRank::Scalar, None) => {
                let r = x.norm();
                let mut v = self.c_const + self.c_inv_q2 / (r * r);
                for t in &self.c_mult {
                    v += t.value * r.powf(t.beta);
                }
                Ok(v)
            }
            (OperatorRank::Vector, Some(i)) if i < 2 => Ok(self.c_position[i][0] * x.c1 + self.c_position[i][1] * x.c2),
            _ => Err(Error::domain("component index must be given exactly for vector operators (0 or 1)")),
        }
    }

    /// Applies a multiplication-only descriptor to a sampled field.
    pub fn apply_to_field(&self, phi: &SampledField, component: Option<usize>) -> Result<SampledField> {
        self.multiplier_at(PlaneVector::E1, component)?;
        let g = phi.grid;
        Ok(phi.pointwise(|i, j, v| v * self.multiplier_at(g.point(i, j), component).unwrap_or(ZERO)))
    }
}

/// `Q^beta -> (Omega_beta(1)/Omega(1)) Q^beta`.
pub fn quantize_power_q(m: &MomentTable, beta: f64) -> Result<OperatorDescriptor> {
    if beta == 0.0 {
        return Ok(OperatorDescriptor::identity());
    }
    let v = m.omega_beta(beta)? / m.omega0();
    Ok(OperatorDescriptor { c_mult: vec![PowerTerm { beta, value: v }], ..Default::default() })
}

fn position_scale(m: &MomentTable) -> C {
    re(2.0 * PI) / m.c_constant()
}

/// `q -> (2 pi / c) [[O_210, O_201], [-O_201, O_210]] Q`.
pub fn quantize_position(m: &MomentTable) -> Result<OperatorDescriptor> {
    let s = position_scale(m);
    let a = m.get(POSITION_KEYS[0])? * s;
    let b = m.get(POSITION_KEYS[1])? * s;
    Ok(OperatorDescriptor { rank: OperatorRank::Vector, c_position: [[a, b], [-b, a]], ..Default::default() })
}

/// `p -> P + (i/Q*)(2 e1 + grad Omega(1)/Omega(1))`.
pub fn quantize_momentum(m: &MomentTable) -> Result<OperatorDescriptor> {
    let g = m.log_grad()?.add_real(PlaneVector::new(2.0, 0.0));
    Ok(OperatorDescriptor { rank: OperatorRank::Vector, c_p: re(1.0), c_inv_qstar_p: g.scale(I), ..Default::default() })
}

/// `p^2 -> P^2 + (2i/Q*)(2 e1 + grad Omega/Omega).P - [4 + 4 d1 Omega/Omega + Delta Omega/Omega] / Q^2`.
pub fn quantize_kinetic(m: &MomentTable) -> Result<OperatorDescriptor> {
    let lg = m.log_grad()?;
    let d = m.log_lap_ratio()?;
    Ok(OperatorDescriptor {
        c_p2: re(1.0),
        c_inv_qstar_p: lg.add_real(PlaneVector::new(2.0, 0.0)).scale(C::new(0.0, 2.0)),
        c_inv_q2: -(re(4.0) + lg.c1 * 4.0 + d),
        ..Default::default()
    })
}

/// `q.p`, the generator of dilations.
pub fn quantize_dilation(m: &MomentTable) -> Result<OperatorDescriptor> {
    let s = position_scale(m);
    let (o210, o201) = (m.get(POSITION_KEYS[0])?, m.get(POSITION_KEYS[1])?);
    let (g210, g201) = (m.gen_grad(POSITION_KEYS[0])?, m.gen_grad(POSITION_KEYS[1])?);
    Ok(OperatorDescriptor {
        c_qdotp: s * o210,
        c_qwedgep: -s * o201,
        c_const: s * (I * 2.0 * o210 + I * (g210.c1 - g201.c2)),
        ..Default::default()
    })
}

/// `q ^ p`, the angular momentum.
pub fn quantize_angular_momentum(m: &MomentTable) -> Result<OperatorDescriptor> {
    let s = position_scale(m);
    let (o210, o201) = (m.get(POSITION_KEYS[0])?, m.get(POSITION_KEYS[1])?);
    let (g210, g201) = (m.gen_grad(POSITION_KEYS[0])?, m.gen_grad(POSITION_KEYS[1])?);
    Ok(OperatorDescriptor {
        c_qwedgep: s * o210,
        c_qdotp: s * o201,
        c_const: s * (I * 2.0 * o201 + I * (g201.c1 + g210.c2)),
        ..Default::default()
    })
}

/// The observables with closed-form quantizations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    PowerQ(f64),
    Position,
    Momentum,
    Kinetic,
    Dilation,
    AngularMomentum,
    Combination(Vec<(C, Observable)>),
}

impl Observable {
    /// Moments that must be present in the table.
    pub fn required_moments(&self) -> (Vec<f64>, Vec<MomentKey>, bool) {
        match self {
            Observable::PowerQ(b) => (vec![*b], vec![], false),
            Observable::Position => (vec![], POSITION_KEYS.to_vec(), false),
            Observable::Momentum | Observable::Kinetic => (vec![], vec![], true),
            Observable::Dilation | Observable::AngularMomentum => (vec![], POSITION_KEYS.to_vec(), false),
            Observable::Combination(ts) => {
                let mut out = (vec![], vec![], false);
                for (_, o) in ts {
                    let (b, k, d) = o.required_moments();
                    out.0.extend(b);
                    out.1.extend(k);
                    out.2 |= d;
                }
                out
            }
        }
    }
}

pub fn quantize(m: &MomentTable, obs: &Observable) -> Result<OperatorDescriptor> {
    match obs {
        Observable::PowerQ(b) => quantize_power_q(m, *b),
        Observable::Position => quantize_position(m),
        Observable::Momentum => quantize_momentum(m),
        Observable::Kinetic => quantize_kinetic(m),
        Observable::Dilation => quantize_dilation(m),
        Observable::AngularMomentum => quantize_angular_momentum(m),
        Observable::Combination(ts) => {
            let parts: Result<Vec<(C, OperatorDescriptor)>> = ts.iter().map(|(a, o)| Ok((*a, quantize(m, o)?))).collect();
            let parts = parts?;
            let refs: Vec<(C, &OperatorDescriptor)> = parts.iter().map(|(a, d)| (*a, d)).collect();
            OperatorDescriptor::combine(&refs)
        }
    }
}

/// `x -> w_hat(q, -x)` as a plane function.
pub struct WeightProfile {
    w: WeightSpec,
    q: PlaneVector,
}

impl WeightProfile {
    pub fn at_identity(w: &WeightSpec) -> Self {
        WeightProfile { w: w.clone(), q: PlaneVector::E1 }
    }

    pub fn at(w: &WeightSpec, q: PlaneVector) -> Result<Self> {
        if !(q.norm() > 0.0) {
            return Err(Error::domain("weight profile at q = 0"));
        }
        Ok(WeightProfile { w: w.clone(), q })
    }
}

impl PlaneFunction for WeightProfile {
    fn eval(&self, x: PlaneVector) -> C {
        eval_weight_hat(&self.w, self.q, -x).unwrap_or(C::new(f64::NAN, f64::NAN))
    }
    fn is_radial(&self) -> bool {
        self.q == PlaneVector::E1 && self.w.hat_radial_at_identity()
    }
    fn decay(&self) -> Option<Decay> {
        Some(self.w.decay)
    }
}

fn exponent_at_infinity(d: &Decay) -> Option<f64> {
    match d.large {
        LargeDecay::Gaussian => None,
        LargeDecay::Power { exponent } => Some(exponent),
    }
}

/// Quadrature rates of `t -> f1(e^t) f2(x e^-t)`, refusing declared divergence.
fn convolution_rates(f1: &dyn PlaneFunction, f2: &dyn PlaneFunction) -> Result<(Option<f64>, Option<f64>)> {
    let (Some(d1), Some(d2)) = (f1.decay(), f2.decay()) else {
        return Ok((None, None));
    };
    let low = exponent_at_infinity(&d2).map(|l2| d1.small_power + l2);
    let high = exponent_at_infinity(&d1).map(|l1| l1 + d2.small_power);
    for (r, end) in [(low, "x' -> 0"), (high, "x' -> inf")] {
        if let Some(r) = r {
            if !(r > 0.0) {
                return Err(Error::Refused(format!("affine convolution diverges as {end} (integrand rate {r})")));
            }
        }
    }
    Ok((low, high))
}

/// `(f1 *aff f2)(x) = int d^2x'/x'^2 f1(x') f2(x/x')`.
pub fn affine_convolution(f1: &dyn PlaneFunction, f2: &dyn PlaneFunction, x: PlaneVector, tol: f64) -> Result<Estimate> {
    if !(x.norm() > 0.0) {
        return Err(Error::domain("affine convolution at x = 0"));
    }
    let (low, high) = convolution_rates(f1, f2)?;
    let f = |t: f64, phi: f64| {
        let y = PlaneVector::from_polar(t.exp(), phi);
        let inv = PlaneVector::from_polar((-t).exp(), -phi);
        f1.eval(y) * f2.eval(x * inv)
    };
    integrate_log_polar(f, &QuadOptions::with_tol(tol).rates(low, high)).map(|o| o.estimate())
}

/// The nodes of an adaptive convolution run at a reference point, with the
/// first factor folded into the weights. Evaluating the convolution at other
/// points is then a node sum over `f2(x/x'_k)`.
pub struct ConvolutionPlan {
    nodes: Vec<(PlaneVector, C)>,
}

impl ConvolutionPlan {
    pub fn new(f1: &dyn PlaneFunction, f2: &dyn PlaneFunction, x_ref: PlaneVector, tol: f64) -> Result<Self> {
        let (low, high) = convolution_rates(f1, f2)?;
        let f = |t: f64, phi: f64| {
            let y = PlaneVector::from_polar(t.exp(), phi);
            let inv = PlaneVector::from_polar((-t).exp(), -phi);
            f1.eval(y) * f2.eval(x_ref * inv)
        };
        let out = integrate_log_polar(f, &QuadOptions::with_tol(tol).rates(low, high))?;
        let nodes = out
            .mesh
            .nodes()
            .into_iter()
            .map(|(t, phi, wt)| (PlaneVector::from_polar((-t).exp(), -phi), f1.eval(PlaneVector::from_polar(t.exp(), phi)) * wt))
            .collect();
        Ok(ConvolutionPlan { nodes })
    }

    pub fn eval(&self, f2: &dyn PlaneFunction, x: PlaneVector) -> C {
        self.nodes.iter().fold(ZERO, |s, &(inv, c)| s + c * f2.eval(x * inv))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `(1/Omega(1)) (w_hat(1, -.) *aff u)` at the requested points, planned on
/// a frozen mesh and checked against adaptive runs at the first, middle and
/// last point; falls back to adaptive quadrature everywhere if the check fails.
fn convolution_at_points(f1: &dyn PlaneFunction, u: &dyn PlaneFunction, points: &[PlaneVector], tol: f64) -> Result<Vec<C>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    let mid = points[points.len() / 2];
    let planned = ConvolutionPlan::new(f1, u, mid, tol).ok().and_then(|plan| {
        let probes = [0, points.len() / 2, points.len() - 1];
        let ok = probes.iter().all(|&k| match affine_convolution(f1, u, points[k], tol) {
            Ok(e) => (plan.eval(u, points[k]) - e.value).norm() <= 10.0 * (tol + e.abs_err).max(1e-10 * e.value.norm()),
            Err(_) => false,
        });
        ok.then(|| points.par_iter().map(|&x| plan.eval(u, x)).collect::<Vec<C>>())
    });
    match planned {
        Some(v) => Ok(v),
        None => points.par_iter().map(|&x| affine_convolution(f1, u, x, tol).map(|e| e.value)).collect(),
    }
}

/// The multiplier of `Op_u` sampled on the grid of `like`.
pub fn multiplication_symbol(m: &MomentTable, w: &WeightSpec, u: &dyn PlaneFunction, like: &SampledField, tol: f64) -> Result<SampledField> {
    let g = like.grid;
    let profile = WeightProfile::at_identity(w);
    let norm = m.omega0();
    if profile.is_radial() && u.is_radial() {
        let rows: Vec<PlaneVector> = (0..g.n_r).map(|i| PlaneVector::new(g.r(i), 0.0)).collect();
        let vals = convolution_at_points(&profile, u, &rows, tol)?;
        return Ok(like.pointwise(|i, _, _| vals[i] / norm));
    }
    let points: Vec<PlaneVector> = (0..g.len()).map(|k| g.point(k / g.n_theta, k % g.n_theta)).collect();
    let vals = convolution_at_points(&profile, u, &points, tol)?;
    Ok(SampledField { grid: g, values: vals.into_iter().map(|v| v / norm).collect() })
}

/// `(Op_u phi)(x) = (1/c) (w *aff u)(x) phi(x)` with `w = 2 pi w_hat(1, -.)`.
pub fn apply_multiplication_op(m: &MomentTable, w: &WeightSpec, u: &dyn PlaneFunction, phi: &SampledField, tol: f64) -> Result<SampledField> {
    let mult = multiplication_symbol(m, w, u, phi, tol)?;
    Ok(phi.pointwise(|i, j, v| v * mult.at(i, j)))
}

/// The momentum factor `v(p)` of a separable symbol, through its transform.
#[derive(Clone)]
pub enum MomentumSymbol {
    /// `v = 1`, `v_hat = 2 pi delta`.
    One,
    /// `v(p) = e^{-p^2 / 2 s^2}`, `v_hat(k) = s^2 e^{-s^2 k^2 / 2}`.
    Gaussian { width: f64 },
    /// A user-supplied `v_hat`.
    Transform(Arc<dyn Fn(PlaneVector) -> C + Send + Sync>),
}

/// Kernel values: ordinary, or the coefficient of `delta(x - x')`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum KernelValue {
    Regular(C),
    Delta(C),
}

impl KernelValue {
    pub fn value(self) -> C {
        match self {
            KernelValue::Regular(v) | KernelValue::Delta(v) => v,
        }
    }
}

/// `A(x, x') = (1/c) v_hat(x' - x) (x^2/x'^2) (w_hat(x/x', -.) *aff u)(x)`.
pub fn kernel_separable(m: &MomentTable, w: &WeightSpec, u: &dyn PlaneFunction, v: &MomentumSymbol, x: PlaneVector, xp: PlaneVector, tol: f64) -> Result<KernelValue> {
    let ratio = x.div(xp)?;
    let prefactor = x.norm_sqr() / xp.norm_sqr() / m.c_constant();
    let vhat = match v {
        MomentumSymbol::One => {
            if (x - xp).norm() > 1e-14 * x.norm() {
                return Ok(KernelValue::Regular(ZERO));
            }
            let conv = affine_convolution(&WeightProfile::at(w, ratio)?, u, x, tol)?;
            return Ok(KernelValue::Delta(conv.value * prefactor * (2.0 * PI)));
        }
        MomentumSymbol::Gaussian { width } => re(width * width * (-(width * width) * (xp - x).norm_sqr() / 2.0).exp()),
        MomentumSymbol::Transform(f) => f(xp - x),
    };
    if vhat == ZERO {
        return Ok(KernelValue::Regular(ZERO));
    }
    let conv = affine_convolution(&WeightProfile::at(w, ratio)?, u, x, tol)?;
    Ok(KernelValue::Regular(conv.value * vhat * prefactor))
}

/// General kernel `A(x, x') = (1/c)(x^2/x'^2) int d^2y/y^2 w_hat(x/x', -y) f_hat(x/y, x' - x)`
/// from the partial transform `f_hat(q, k)` of the symbol.
///
/// Experimental: runs at twice the requested tolerance.
pub fn kernel_general<F>(m: &MomentTable, w: &WeightSpec, f_hat: F, x: PlaneVector, xp: PlaneVector, tol: f64) -> Result<C>
where
    F: Fn(PlaneVector, PlaneVector) -> C + Sync,
{
    let ratio = x.div(xp)?;
    let k = xp - x;
    let f = |t: f64, phi: f64| {
        let y = PlaneVector::from_polar(t.exp(), phi);
        let inv = PlaneVector::from_polar((-t).exp(), -phi);
        eval_weight_hat(w, ratio, -y).unwrap_or(C::new(f64::NAN, 0.0)) * f_hat(x * inv, k)
    };
    let out = integrate_log_polar(f, &QuadOptions::with_tol(2.0 * tol).rates(Some(w.decay.small_power), None))?;
    Ok(out.value * (x.norm_sqr() / xp.norm_sqr()) / m.c_constant())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CovarianceReport {
    /// Relative L2 distance between the two sides.
    pub residual: f64,
    pub norm: f64,
}

/// Compares `U(g0) Op_u U(g0)^dag phi` with `Op_{u(./q0)} phi` on the grid of `phi`.
pub fn covariance_check(m: &MomentTable, w: &WeightSpec, u: SharedFunction, g0: &GroupElement, phi: &SampledField, opts: UnitaryOptions, tol: f64) -> Result<CovarianceReport> {
    let pulled = apply_unitary(&g0.inverse(), phi, opts)?;
    let acted = apply_multiplication_op(m, w, u.as_ref(), &pulled, tol)?;
    let lhs = apply_unitary(g0, &acted, opts)?;
    let moved = Dilated::new(u, g0.q())?;
    let rhs = apply_multiplication_op(m, w, &moved, phi, tol)?;
    Ok(CovarianceReport { residual: lhs.relative_l2_diff(&rhs)?, norm: rhs.norm_l2() })
}
