//! The similitude group SIM(2) and the complex algebra of the plane.
//!
//! Points of the plane carry their own multiplication, `(a1, a2)(b1, b2) =
//! (a1 b1 - a2 b2, a1 b2 + a2 b1)`, with unit `e1 = (1, 0)` and `e2 e2 = -e1`.
//! That `e2` is *not* the quantum imaginary unit: amplitudes are
//! [`Complex64`] values and never convert implicitly into [`PlaneVector`]s.
//!
//! A group element `(q, p)` has a nonzero scaling/rotation part `q` and a
//! translation part `p`, with
//!
//! ```text
//! (q, p)(q', p') = (q q', p' / q* + p),    (q, p)^-1 = (q^-1, -q* p).
//! ```

use std::f64::consts::PI;
use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{Interpolation, SampledField};
use rayon::prelude::*;

/// A point of the plane `R^2` with the plane's complex multiplication.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct PlaneVector {
    pub c1: f64,
    pub c2: f64,
}

impl From<[f64; 2]> for PlaneVector {
    fn from(v: [f64; 2]) -> Self {
        PlaneVector::new(v[0], v[1])
    }
}

impl From<PlaneVector> for [f64; 2] {
    fn from(v: PlaneVector) -> Self {
        [v.c1, v.c2]
    }
}

impl fmt::Debug for PlaneVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.c1, self.c2)
    }
}

impl PlaneVector {
    pub const E1: PlaneVector = PlaneVector { c1: 1.0, c2: 0.0 };
    pub const E2: PlaneVector = PlaneVector { c1: 0.0, c2: 1.0 };
    pub const ZERO: PlaneVector = PlaneVector { c1: 0.0, c2: 0.0 };

    pub const fn new(c1: f64, c2: f64) -> Self {
        PlaneVector { c1, c2 }
    }

    /// Builds a vector from its modulus and angle.
    pub fn from_polar(r: f64, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        PlaneVector::new(r * c, r * s)
    }

    pub fn norm_sqr(self) -> f64 {
        self.c1 * self.c1 + self.c2 * self.c2
    }

    pub fn norm(self) -> f64 {
        self.c1.hypot(self.c2)
    }

    /// Angle in `(-pi, pi]`, quadrant-correct.
    pub fn arg(self) -> f64 {
        let a = self.c2.atan2(self.c1);
        // atan2 returns -pi for (negative, -0.0); fold onto the closed end.
        if a <= -PI {
            a + 2.0 * PI
        } else {
            a
        }
    }

    pub fn to_polar(self) -> (f64, f64) {
        (self.norm(), self.arg())
    }

    /// Plane conjugate `q*`.
    pub fn conj(self) -> Self {
        PlaneVector::new(self.c1, -self.c2)
    }

    /// Plane inverse `q^-1 = q* / |q|^2`.
    pub fn inv(self) -> Result<Self> {
        let n2 = self.norm_sqr();
        if n2 == 0.0 {
            return Err(Error::domain("plane inverse of the zero vector"));
        }
        Ok(PlaneVector::new(self.c1 / n2, -self.c2 / n2))
    }

    /// Euclidean inner product `Re(a* b)`.
    pub fn dot(self, other: Self) -> f64 {
        self.c1 * other.c1 + self.c2 * other.c2
    }

    /// `a1 b2 - a2 b1`.
    pub fn wedge(self, other: Self) -> f64 {
        self.c1 * other.c2 - self.c2 * other.c1
    }

    pub fn scale(self, s: f64) -> Self {
        PlaneVector::new(self.c1 * s, self.c2 * s)
    }

    /// Plane product.
    pub fn mul(self, b: Self) -> Self {
        PlaneVector::new(self.c1 * b.c1 - self.c2 * b.c2, self.c1 * b.c2 + self.c2 * b.c1)
    }

    /// Plane quotient `self / b`; fails when `b = 0`.
    pub fn div(self, b: Self) -> Result<Self> {
        Ok(self.mul(b.inv()?))
    }

    pub fn is_finite(self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }
}

/// `plane_mul(a, b) = (a1 b1 - a2 b2, a1 b2 + a2 b1)`.
pub fn plane_mul(a: PlaneVector, b: PlaneVector) -> PlaneVector {
    a.mul(b)
}

/// Plane inverse; the zero vector is a domain error.
pub fn plane_inv(a: PlaneVector) -> Result<PlaneVector> {
    a.inv()
}

impl Add for PlaneVector {
    type Output = PlaneVector;
    fn add(self, o: Self) -> Self {
        PlaneVector::new(self.c1 + o.c1, self.c2 + o.c2)
    }
}

impl AddAssign for PlaneVector {
    fn add_assign(&mut self, o: Self) {
        self.c1 += o.c1;
        self.c2 += o.c2;
    }
}

impl Sub for PlaneVector {
    type Output = PlaneVector;
    fn sub(self, o: Self) -> Self {
        PlaneVector::new(self.c1 - o.c1, self.c2 - o.c2)
    }
}

impl Neg for PlaneVector {
    type Output = PlaneVector;
    fn neg(self) -> Self {
        PlaneVector::new(-self.c1, -self.c2)
    }
}

impl Mul for PlaneVector {
    type Output = PlaneVector;
    fn mul(self, o: Self) -> Self {
        PlaneVector::mul(self, o)
    }
}

impl Mul<f64> for PlaneVector {
    type Output = PlaneVector;
    fn mul(self, s: f64) -> Self {
        self.scale(s)
    }
}

/// A plane vector whose two components are quantum amplitudes.
///
/// This is how `grad Omega(1)` and the `(1/Q*)`-block coefficients are stored:
/// the plane structure acts on the component index, the quantum `i` acts on
/// each component value.
#[derive(Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct ComplexPlaneVector {
    pub c1: Complex64,
    pub c2: Complex64,
}

impl From<[[f64; 2]; 2]> for ComplexPlaneVector {
    fn from(v: [[f64; 2]; 2]) -> Self {
        ComplexPlaneVector::new(Complex64::new(v[0][0], v[0][1]), Complex64::new(v[1][0], v[1][1]))
    }
}

impl From<ComplexPlaneVector> for [[f64; 2]; 2] {
    fn from(v: ComplexPlaneVector) -> Self {
        [[v.c1.re, v.c1.im], [v.c2.re, v.c2.im]]
    }
}

impl fmt::Debug for ComplexPlaneVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.c1, self.c2)
    }
}

impl ComplexPlaneVector {
    pub const ZERO: ComplexPlaneVector = ComplexPlaneVector {
        c1: Complex64::new(0.0, 0.0),
        c2: Complex64::new(0.0, 0.0),
    };

    pub const fn new(c1: Complex64, c2: Complex64) -> Self {
        ComplexPlaneVector { c1, c2 }
    }

    pub fn from_real(v: PlaneVector) -> Self {
        ComplexPlaneVector::new(Complex64::new(v.c1, 0.0), Complex64::new(v.c2, 0.0))
    }

    /// Plane product with a real plane vector.
    pub fn plane_mul_real(self, a: PlaneVector) -> Self {
        ComplexPlaneVector::new(a.c1 * self.c1 - a.c2 * self.c2, a.c1 * self.c2 + a.c2 * self.c1)
    }

    /// Bilinear (non-Hermitian) dot product `z1 w1 + z2 w2`.
    pub fn dot(self, o: Self) -> Complex64 {
        self.c1 * o.c1 + self.c2 * o.c2
    }

    pub fn dot_real(self, a: PlaneVector) -> Complex64 {
        self.c1 * a.c1 + self.c2 * a.c2
    }

    pub fn scale(self, s: Complex64) -> Self {
        ComplexPlaneVector::new(self.c1 * s, self.c2 * s)
    }

    pub fn add_real(self, a: PlaneVector) -> Self {
        ComplexPlaneVector::new(self.c1 + a.c1, self.c2 + a.c2)
    }

    pub fn norm(self) -> f64 {
        (self.c1.norm_sqr() + self.c2.norm_sqr()).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.c1.is_finite() && self.c2.is_finite()
    }
}

impl Add for ComplexPlaneVector {
    type Output = ComplexPlaneVector;
    fn add(self, o: Self) -> Self {
        ComplexPlaneVector::new(self.c1 + o.c1, self.c2 + o.c2)
    }
}

impl Sub for ComplexPlaneVector {
    type Output = ComplexPlaneVector;
    fn sub(self, o: Self) -> Self {
        ComplexPlaneVector::new(self.c1 - o.c1, self.c2 - o.c2)
    }
}

impl Div<Complex64> for ComplexPlaneVector {
    type Output = ComplexPlaneVector;
    fn div(self, s: Complex64) -> Self {
        ComplexPlaneVector::new(self.c1 / s, self.c2 / s)
    }
}

/// An element `(q, p)` of SIM(2), `q != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGroupElement")]
pub struct GroupElement {
    q: PlaneVector,
    p: PlaneVector,
}

#[derive(Deserialize)]
struct RawGroupElement {
    q: PlaneVector,
    p: PlaneVector,
}

impl TryFrom<RawGroupElement> for GroupElement {
    type Error = Error;
    fn try_from(r: RawGroupElement) -> Result<Self> {
        GroupElement::new(r.q, r.p)
    }
}

impl GroupElement {
    pub fn new(q: PlaneVector, p: PlaneVector) -> Result<Self> {
        if !(q.norm() > 0.0) || !q.is_finite() || !p.is_finite() {
            return Err(Error::domain(format!("group element needs finite q != 0, got q = {q:?}")));
        }
        Ok(GroupElement { q, p })
    }

    pub fn identity() -> Self {
        GroupElement { q: PlaneVector::E1, p: PlaneVector::ZERO }
    }

    /// Pure dilation-rotation `(polar(a, theta), 0)`.
    pub fn dilation_rotation(a: f64, theta: f64) -> Result<Self> {
        GroupElement::new(PlaneVector::from_polar(a, theta), PlaneVector::ZERO)
    }

    pub fn q(&self) -> PlaneVector {
        self.q
    }

    pub fn p(&self) -> PlaneVector {
        self.p
    }

    /// `(|q|, arg q)`.
    pub fn q_polar(&self) -> (f64, f64) {
        self.q.to_polar()
    }

    pub fn compose(&self, other: &GroupElement) -> GroupElement {
        let q = self.q.mul(other.q);
        // q != 0 keeps q* invertible.
        let p = other.p.mul(self.q.conj().inv().expect("nonzero q")) + self.p;
        GroupElement { q, p }
    }

    pub fn inverse(&self) -> GroupElement {
        let q = self.q.inv().expect("nonzero q");
        let p = -(self.q.conj().mul(self.p));
        GroupElement { q, p }
    }
}

/// `compose(g1, g2) = (q1 q2, p2 / q1* + p1)`.
pub fn compose(g1: &GroupElement, g2: &GroupElement) -> GroupElement {
    g1.compose(g2)
}

pub fn inverse(g: &GroupElement) -> GroupElement {
    g.inverse()
}

/// Action of `(a, theta, b)` on a point: `a R(theta) x + b`.
pub fn act_on_plane(a: f64, theta: f64, b: PlaneVector, x: PlaneVector) -> Result<PlaneVector> {
    if !(a > 0.0) {
        return Err(Error::domain(format!("dilation factor must be positive, got {a}")));
    }
    let (s, c) = theta.sin_cos();
    Ok(PlaneVector::new(a * (c * x.c1 - s * x.c2) + b.c1, a * (s * x.c1 + c * x.c2) + b.c2))
}

/// How [`apply_unitary`] reads the field between and beyond its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct UnitaryOptions {
    pub interpolation: Interpolation,
    pub zero_pad: bool,
}

/// `(U(q, p) phi)(x) = e^{i p.x} / |q| * phi(x / q)` on the grid of `phi`.
pub fn apply_unitary(g: &GroupElement, phi: &SampledField, opts: UnitaryOptions) -> Result<SampledField> {
    let q_inv = g.q.inv()?;
    let scale = 1.0 / g.q.norm();
    let grid = phi.grid;
    let values: Result<Vec<Complex64>> = (0..grid.len())
        .into_par_iter()
        .map(|k| {
            let x = grid.point(k / grid.n_theta, k % grid.n_theta);
            let v = phi.interpolate(x * q_inv, opts.interpolation, opts.zero_pad)?;
            Ok(Complex64::from_polar(scale, g.p.dot(x)) * v)
        })
        .collect();
    Ok(SampledField { grid, values: values? })
}
