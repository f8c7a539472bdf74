//! Adaptive quadrature over the punctured plane in log-polar coordinates.
//!
//! With `x = e^t (cos phi, sin phi)` the Haar measure is `d^2x / x^2 = dt dphi`,
//! so every moment and convolution integral becomes
//! `int_R dt int_0^{2 pi} dphi f(t, phi)`. The angular integral uses the
//! periodic trapezoid rule (spectrally accurate for smooth periodic
//! integrands); the radial one uses adaptive Gauss-Kronrod 21 on a window
//! located by an envelope scan, with a tail estimate outside it.
//!
//! Results are deterministic: the refinement order is fixed (ties broken by
//! interval index) and partial sums are added in ascending `t`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const XGK: [f64; 11] = [
    0.995657163025808080735527280689003,
    0.973906528517171720077964012084452,
    0.930157491355708226001207180059508,
    0.865063366688984510732096688423493,
    0.780817726586416897063717578345042,
    0.679409568299024406234327365114874,
    0.562757134668604683339000099272694,
    0.433395394129247190799265943165784,
    0.294392862701460198131126603103866,
    0.148874338981631210884826001129720,
    0.0,
];

const WGK: [f64; 11] = [
    0.011694638867371874278064396062192,
    0.032558162307964727478818972459390,
    0.054755896574351996031381300244580,
    0.075039674810919952767043140916190,
    0.093125454583697605535065465083366,
    0.109387158802297641899210590325805,
    0.123491976262065851077958109831074,
    0.134709217311473325928054001771707,
    0.142775938577060080797094273138717,
    0.147739104901338491374841515972068,
    0.149445554002916905664936468389821,
];

// Gauss weights for the odd Kronrod nodes XGK[1], XGK[3], ..., XGK[9].
const WG: [f64; 5] = [
    0.066671344308688137593568809893332,
    0.149451349150580593145776339657697,
    0.219086362515982043995534934228163,
    0.269266719309996355091226921569469,
    0.295524224714752870173892994651338,
];

/// Behaviour at infinity of a function on the punctured plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LargeDecay {
    /// Faster than any power.
    Gaussian,
    /// `|f(x)| <= C |x|^-exponent`.
    Power { exponent: f64 },
}

/// Declared decay of a function `f` on the punctured plane:
/// `|f(x)| ~ |x|^small_power` as `x -> 0`, and `large` as `|x| -> inf`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decay {
    pub small_power: f64,
    pub large: LargeDecay,
}

impl Decay {
    pub fn new(small_power: f64, large: LargeDecay) -> Self {
        Decay { small_power, large }
    }

    /// Exponent of decay at infinity; `INFINITY` for Gaussian tails.
    pub fn large_exponent(&self) -> f64 {
        match self.large {
            LargeDecay::Gaussian => f64::INFINITY,
            LargeDecay::Power { exponent } => exponent,
        }
    }
}

/// A value together with its absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: Complex64,
    pub abs_err: f64,
}

impl Estimate {
    pub fn new(value: Complex64, abs_err: f64) -> Self {
        Estimate { value, abs_err }
    }

    pub fn exact(value: Complex64) -> Self {
        Estimate { value, abs_err: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Budget of integrand evaluations.
    pub max_evals: u64,
    /// Scan range in `t = ln |x|`.
    pub t_min: f64,
    pub t_max: f64,
    pub scan_step: f64,
    /// Points in `t` that must lie inside the window and start a new piece.
    pub breakpoints: Vec<f64>,
    /// Exponential rates of the integrand in `t` at the two ends, when known.
    pub rate_low: Option<f64>,
    pub rate_high: Option<f64>,
    pub min_phi: usize,
    pub max_phi: usize,
    pub max_piece: f64,
}

impl Default for QuadOptions {
    fn default() -> Self {
        QuadOptions {
            abs_tol: 1e-9,
            rel_tol: 1e-12,
            max_evals: 10_000_000,
            t_min: -60.0,
            t_max: 40.0,
            scan_step: 0.25,
            breakpoints: Vec::new(),
            rate_low: None,
            rate_high: None,
            min_phi: 16,
            max_phi: 4096,
            max_piece: 0.5,
        }
    }
}

impl QuadOptions {
    pub fn with_tol(abs_tol: f64) -> Self {
        QuadOptions { abs_tol, ..Default::default() }
    }

    pub fn rates(mut self, low: Option<f64>, high: Option<f64>) -> Self {
        self.rate_low = low;
        self.rate_high = high;
        self
    }
}

/// The radial pieces and angular resolution chosen by an adaptive run.
///
/// Re-integrating a nearby integrand on the same mesh gives results whose
/// discretization error varies smoothly, which is what finite differences
/// in a parameter need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mesh {
    pub intervals: Vec<(f64, f64)>,
    pub n_phi: usize,
    /// Power-law tails `(t_edge, rate)`: the angular integral at `t_edge`
    /// divided by `rate` accounts for everything beyond the edge.
    #[serde(default)]
    pub tails: Vec<(f64, f64)>,
}

impl Mesh {
    /// Quadrature nodes `(t, phi, weight)` in the order used by [`integrate_on_mesh`].
    pub fn nodes(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.intervals.len() * 21 * self.n_phi);
        let dphi = 2.0 * PI / self.n_phi as f64;
        for &(a, b) in &self.intervals {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            for (t, w) in kronrod_nodes(c, h) {
                for k in 0..self.n_phi {
                    out.push((t, k as f64 * dphi, w * dphi));
                }
            }
        }
        for &(t, rate) in &self.tails {
            for k in 0..self.n_phi {
                out.push((t, k as f64 * dphi, dphi / rate));
            }
        }
        out
    }

    pub fn node_count(&self) -> usize {
        (self.intervals.len() * 21 + self.tails.len()) * self.n_phi
    }
}

#[derive(Debug, Clone)]
pub struct QuadOutcome {
    pub value: Complex64,
    pub abs_err: f64,
    pub evals: u64,
    pub mesh: Mesh,
}

impl QuadOutcome {
    pub fn estimate(&self) -> Estimate {
        Estimate::new(self.value, self.abs_err)
    }
}

fn kronrod_nodes(c: f64, h: f64) -> impl Iterator<Item = (f64, f64)> {
    (0..21).map(move |i| {
        if i < 10 {
            (c - h * XGK[i], h * WGK[i])
        } else if i == 10 {
            (c, h * WGK[10])
        } else {
            (c + h * XGK[20 - i], h * WGK[20 - i])
        }
    })
}

struct Piece {
    a: f64,
    b: f64,
    value: Complex64,
    err: f64,
}

/// One Gauss-Kronrod 21 step on `[a, b]` with the QUADPACK error heuristic.
pub fn gk21<F: Fn(f64) -> Complex64>(f: &F, a: f64, b: f64) -> (Complex64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kron = fc * WGK[10];
    let mut gauss = Complex64::new(0.0, 0.0);
    let mut abs_k = fc.norm() * WGK[10];
    let mut fv1 = [Complex64::new(0.0, 0.0); 10];
    let mut fv2 = [Complex64::new(0.0, 0.0); 10];
    for j in 0..10 {
        let dx = h * XGK[j];
        let f1 = f(c - dx);
        let f2 = f(c + dx);
        fv1[j] = f1;
        fv2[j] = f2;
        kron += (f1 + f2) * WGK[j];
        abs_k += (f1.norm() + f2.norm()) * WGK[j];
        if j % 2 == 1 {
            gauss += (f1 + f2) * WG[j / 2];
        }
    }
    let mean = kron * 0.5;
    let mut asc = (fc - mean).norm() * WGK[10];
    for j in 0..10 {
        asc += ((fv1[j] - mean).norm() + (fv2[j] - mean).norm()) * WGK[j];
    }
    let result = kron * h;
    let resabs = abs_k * h.abs();
    let resasc = asc * h.abs();
    let mut err = ((kron - gauss) * h).norm();
    if resasc != 0.0 && err != 0.0 {
        err = resasc * (200.0 * err / resasc).powf(1.5).min(1.0);
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    (result, err)
}

#[derive(PartialEq)]
struct HeapItem {
    err: f64,
    idx: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Largest error first; on ties the lower index wins.
        self.err.total_cmp(&other.err).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Adaptive GK21 over the pieces of `[a, b]` split at `cuts`.
fn adaptive<F>(g: &F, initial: Vec<(f64, f64)>, abs_tol: f64, rel_tol: f64, extra_err: f64, eval_cost: u64, max_evals: u64, what: &str) -> Result<(Complex64, f64, u64, Vec<(f64, f64)>)>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    let mut pieces: Vec<Piece> = initial
        .par_iter()
        .map(|&(a, b)| {
            let (value, err) = gk21(g, a, b);
            Piece { a, b, value, err }
        })
        .collect();
    let mut evals = pieces.len() as u64 * 21 * eval_cost;
    let mut heap: BinaryHeap<HeapItem> = pieces.iter().enumerate().map(|(idx, p)| HeapItem { err: p.err, idx }).collect();
    let mut alive = vec![true; pieces.len()];

    loop {
        let (total, err) = sum_pieces(&pieces, &alive);
        let tol = abs_tol.max(rel_tol * total.norm());
        if err + extra_err <= tol {
            return Ok((total, err + extra_err, evals, leaf_intervals(&pieces, &alive)));
        }
        let worst = match heap.pop() {
            Some(item) => item,
            None => break,
        };
        let Piece { a, b, .. } = pieces[worst.idx];
        if evals + 42 * eval_cost > max_evals || (b - a) < 1e-11 * (1.0 + a.abs().max(b.abs())) {
            return Err(Error::NonConvergent {
                what: what.to_string(),
                estimate_re: total.re,
                estimate_im: total.im,
                abs_err: err + extra_err,
                evals,
            });
        }
        alive[worst.idx] = false;
        let m = 0.5 * (a + b);
        for (lo, hi) in [(a, m), (m, b)] {
            let (value, err) = gk21(g, lo, hi);
            pieces.push(Piece { a: lo, b: hi, value, err });
            alive.push(true);
            heap.push(HeapItem { err, idx: pieces.len() - 1 });
        }
        evals += 42 * eval_cost;
    }
    let (total, err) = sum_pieces(&pieces, &alive);
    Ok((total, err + extra_err, evals, leaf_intervals(&pieces, &alive)))
}

fn sorted_leaves<'a>(pieces: &'a [Piece], alive: &[bool]) -> Vec<&'a Piece> {
    let mut leaves: Vec<&Piece> = pieces.iter().zip(alive).filter(|(_, &a)| a).map(|(p, _)| p).collect();
    leaves.sort_by(|x, y| x.a.total_cmp(&y.a));
    leaves
}

fn sum_pieces(pieces: &[Piece], alive: &[bool]) -> (Complex64, f64) {
    let mut total = Complex64::new(0.0, 0.0);
    let mut err = 0.0;
    for p in sorted_leaves(pieces, alive) {
        total += p.value;
        err += p.err;
    }
    (total, err)
}

fn leaf_intervals(pieces: &[Piece], alive: &[bool]) -> Vec<(f64, f64)> {
    sorted_leaves(pieces, alive).iter().map(|p| (p.a, p.b)).collect()
}

fn split_uniform(a: f64, b: f64, max_len: f64) -> Vec<(f64, f64)> {
    let n = (((b - a) / max_len).ceil() as usize).max(1);
    (0..n)
        .map(|i| {
            let lo = if i == 0 { a } else { a + (b - a) * i as f64 / n as f64 };
            let hi = if i + 1 == n { b } else { a + (b - a) * (i + 1) as f64 / n as f64 };
            (lo, hi)
        })
        .collect()
}

/// Adaptive 1-D integral of `f` over the finite interval `[a, b]`.
pub fn integrate_interval<F>(f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64, max_evals: u64) -> Result<Estimate>
where
    F: Fn(f64) -> Complex64 + Sync,
{
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::domain(format!("invalid interval [{a}, {b}]")));
    }
    let (v, e, _, _) = adaptive(&f, split_uniform(a, b, (b - a) / 4.0), abs_tol, rel_tol, 0.0, 1, max_evals, "interval quadrature")?;
    Ok(Estimate::new(v, e))
}

/// Periodic trapezoid over `phi` in `[0, 2 pi)` with `n` nodes.
fn trapezoid<F: Fn(f64, f64) -> Complex64>(f: &F, t: f64, n: usize) -> Complex64 {
    let dphi = 2.0 * PI / n as f64;
    let mut s = Complex64::new(0.0, 0.0);
    for k in 0..n {
        s += f(t, k as f64 * dphi);
    }
    s * dphi
}

fn envelope<F: Fn(f64, f64) -> Complex64>(f: &F, t: f64) -> (f64, Complex64) {
    const N: usize = 32;
    let mut m: f64 = 0.0;
    let mut s = Complex64::new(0.0, 0.0);
    for k in 0..N {
        let v = f(t, 2.0 * PI * k as f64 / N as f64);
        if !v.is_finite() {
            return (f64::INFINITY, v);
        }
        m = m.max(v.norm());
        s += v;
    }
    (m, s * (2.0 * PI / N as f64))
}

/// Integrates `f(t, phi)` over `t in R`, `phi in [0, 2 pi)`.
pub fn integrate_log_polar<F>(f: F, opts: &QuadOptions) -> Result<QuadOutcome>
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    if !(opts.abs_tol > 0.0) {
        return Err(Error::domain("quadrature tolerance must be positive"));
    }
    let step = opts.scan_step;
    let n_scan = ((opts.t_max - opts.t_min) / step).round() as usize + 1;
    let ts: Vec<f64> = (0..n_scan).map(|i| opts.t_min + i as f64 * step).collect();
    let scan: Vec<(f64, Complex64)> = ts.par_iter().map(|&t| envelope(&f, t)).collect();
    let mut evals = n_scan as u64 * 32;
    if let Some(i) = scan.iter().position(|(m, _)| !m.is_finite()) {
        return Err(Error::Refused(format!("integrand is not finite at t = {:.3}", ts[i])));
    }
    let rough: Complex64 = scan.iter().map(|(_, s)| *s).sum::<Complex64>() * step;
    let peak = scan.iter().map(|(m, _)| *m).fold(0.0, f64::max);
    let tol = opts.abs_tol.max(opts.rel_tol * rough.norm());
    if peak == 0.0 && opts.breakpoints.is_empty() {
        return Ok(QuadOutcome {
            value: Complex64::new(0.0, 0.0),
            abs_err: 0.0,
            evals,
            mesh: Mesh { intervals: vec![(-1.0, 1.0)], n_phi: opts.min_phi, tails: Vec::new() },
        });
    }
    let thresh = 1e-4 * tol / (2.0 * PI);
    let significant: Vec<usize> = (0..n_scan).filter(|&i| scan[i].0 > thresh).collect();
    let (mut lo_i, mut hi_i) = match (significant.first(), significant.last()) {
        (Some(&l), Some(&h)) => (l, h),
        _ => (n_scan / 2, n_scan / 2),
    };
    lo_i = lo_i.saturating_sub(1);
    hi_i = (hi_i + 1).min(n_scan - 1);
    let mut a = ts[lo_i];
    let mut b = ts[hi_i];
    for &bp in &opts.breakpoints {
        a = a.min(bp - step);
        b = b.max(bp + step);
    }

    // Tails outside the window. At a scan limit with a declared rate the
    // integrand is taken as a pure power of |x| and its tail is added.
    struct Tail {
        err: f64,
        power_law: Option<(f64, f64)>,
    }
    let tail = |edge: usize, inner: usize, declared: Option<f64>| -> Result<Tail> {
        let e = scan[edge].0;
        if e == 0.0 {
            return Ok(Tail { err: 0.0, power_law: None });
        }
        let at_limit = edge == 0 || edge == n_scan - 1;
        let measured = {
            let ei = scan[inner].0;
            if ei > 0.0 && ei > e {
                Some((ei / e).ln() / step)
            } else {
                None
            }
        };
        if let (Some(r), true) = (declared, at_limit) {
            if !(r > 0.0) {
                return Err(Error::Refused(format!("declared rate {r} does not decay at t = {:.1}", ts[edge])));
            }
            let rel = measured.map_or(1.0, |m| ((m - r) / r).abs());
            return Ok(Tail { err: 2.0 * PI * e / r * rel.max(1e-12), power_law: Some((ts[edge], r)) });
        }
        let rate = match (declared, measured) {
            (_, Some(r)) => r,
            (Some(r), None) => r,
            (None, None) => {
                if at_limit && e > thresh {
                    return Err(Error::Refused(format!(
                        "integrand still of size {e:.3e} at the scan limit t = {:.1}",
                        ts[edge]
                    )));
                }
                1.0
            }
        };
        if !(rate > 0.0) {
            return Err(Error::Refused(format!("integrand does not decay at t = {:.1}", ts[edge])));
        }
        Ok(Tail { err: 2.0 * PI * e / rate, power_law: None })
    };
    let tail_low = tail(lo_i, (lo_i + 1).min(n_scan - 1), opts.rate_low)?;
    let tail_high = tail(hi_i, hi_i.saturating_sub(1), opts.rate_high)?;
    let tail_err = tail_low.err + tail_high.err;
    if tail_err > tol {
        return Err(Error::NonConvergent {
            what: "tail outside the scan range".into(),
            estimate_re: rough.re,
            estimate_im: rough.im,
            abs_err: tail_err,
            evals,
        });
    }
    let mut tails: Vec<(f64, f64)> = Vec::new();
    if let Some((_, r)) = tail_low.power_law {
        tails.push((a, r));
    }
    if let Some((_, r)) = tail_high.power_law {
        tails.push((b, -r));
    }
    if tails.iter().any(|&(t, _)| t != ts[0] && t != ts[n_scan - 1]) {
        // A breakpoint widened the window past the scan limit.
        tails.clear();
    }

    // Angular resolution.
    let mut probes: Vec<f64> = (0..=8).map(|i| a + (b - a) * i as f64 / 8.0).collect();
    if let Some(i) = (lo_i..=hi_i).max_by(|&x, &y| scan[x].0.total_cmp(&scan[y].0).then(y.cmp(&x))) {
        probes.push(ts[i]);
    }
    probes.extend(opts.breakpoints.iter().copied());
    probes.extend(tails.iter().map(|&(t, _)| t));
    let inner_tol = 1e-13 * 2.0 * PI * peak + 1e-4 * tol / (b - a);
    let mut n_phi = opts.min_phi;
    for &t in &probes {
        let mut n = n_phi;
        let mut cur = trapezoid(&f, t, n);
        evals += n as u64;
        loop {
            let next = trapezoid(&f, t, 2 * n);
            evals += 2 * n as u64;
            if (next - cur).norm() <= inner_tol {
                break;
            }
            if 2 * n > opts.max_phi {
                return Err(Error::NonConvergent {
                    what: format!("angular resolution at t = {t:.3}"),
                    estimate_re: rough.re,
                    estimate_im: rough.im,
                    abs_err: (next - cur).norm(),
                    evals,
                });
            }
            n *= 2;
            cur = next;
        }
        n_phi = n_phi.max(n);
    }

    let mut cuts: Vec<f64> = opts.breakpoints.iter().copied().filter(|&c| c > a && c < b).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut initial = Vec::new();
    let mut left = a;
    for c in cuts.into_iter().chain(std::iter::once(b)) {
        initial.extend(split_uniform(left, c, opts.max_piece));
        left = c;
    }
    let g = |t: f64| trapezoid(&f, t, n_phi);
    let (value, abs_err, used, intervals) = adaptive(&g, initial, opts.abs_tol, opts.rel_tol, tail_err, n_phi as u64, opts.max_evals.saturating_sub(evals), "log-polar quadrature").map_err(|e| match e {
        Error::NonConvergent { what, estimate_re, estimate_im, abs_err, evals: used } => Error::NonConvergent {
            what,
            estimate_re,
            estimate_im,
            abs_err,
            evals: used + evals,
        },
        other => other,
    })?;
    let mut value = value;
    for &(t, r) in &tails {
        value += g(t) / r.abs();
    }
    let tails = tails.into_iter().map(|(t, r)| (t, r.abs())).collect();
    Ok(QuadOutcome { value, abs_err, evals: evals + used, mesh: Mesh { intervals, n_phi, tails } })
}

/// Applies the Kronrod rule and trapezoid of a frozen mesh to `f`.
pub fn integrate_on_mesh<F>(f: F, mesh: &Mesh) -> Complex64
where
    F: Fn(f64, f64) -> Complex64 + Sync,
{
    let parts: Vec<Complex64> = mesh
        .intervals
        .par_iter()
        .map(|&(a, b)| {
            let c = 0.5 * (a + b);
            let h = 0.5 * (b - a);
            let mut s = Complex64::new(0.0, 0.0);
            for (t, w) in kronrod_nodes(c, h) {
                s += trapezoid(&f, t, mesh.n_phi) * w;
            }
            s
        })
        .collect();
    let mut total: Complex64 = parts.into_iter().sum();
    for &(t, rate) in &mesh.tails {
        total += trapezoid(&f, t, mesh.n_phi) / rate;
    }
    total
}
