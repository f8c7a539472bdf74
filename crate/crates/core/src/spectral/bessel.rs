//! Bessel functions of the first kind and their zeros.

use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};

const RESCALE: f64 = 1e250;

/// `J_order(x)` for `order >= 0`, `x >= 0`, by Miller's backward recurrence
/// normalized with `(x/2)^order / Gamma(order + 1) = sum_k d_k J_{order + 2k}`.
pub fn bessel_j(order: f64, x: f64) -> Result<f64> {
    if !(order >= 0.0 && order.is_finite() && x >= 0.0 && x.is_finite()) {
        return Err(Error::domain(format!("J_{order}({x}) needs order >= 0 and x >= 0")));
    }
    if x == 0.0 {
        return Ok(if order == 0.0 { 1.0 } else { 0.0 });
    }
    let big = x.max(order);
    let n = (big + 30.0 + 4.0 * big.sqrt()).ceil() as usize;
    // d_k, k >= 1, in logs; d_0 = 1.
    let log_d = |k: usize| -> f64 {
        let k = k as f64;
        (order + 2.0 * k).ln() + ln_gamma(order + k) - ln_gamma(k + 1.0) - ln_gamma(order + 1.0)
    };
    let mut above = 0.0; // J~_{order + k + 1}
    let mut here = 1e-300; // J~_{order + k}
    let mut sum = 0.0;
    for k in (0..=n).rev() {
        if k % 2 == 0 {
            sum += if k == 0 { here } else { log_d(k / 2).exp() * here };
        }
        if k == 0 {
            break;
        }
        let below = 2.0 * (order + k as f64) / x * here - above;
        above = here;
        here = below;
        if here.abs() > RESCALE {
            here /= RESCALE;
            above /= RESCALE;
            sum /= RESCALE;
        }
    }
    let lhs = (order * (x / 2.0).ln() - ln_gamma(order + 1.0)).exp();
    Ok(here * lhs / sum)
}

/// The first `k` positive zeros of `J_order`, by a scan with step `0.1` and
/// bisection to `1e-12`.
pub fn bessel_zeros(order: f64, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Ok(Vec::new());
    }
    let step = 0.1;
    let start = order.max(0.05);
    let stop = order + (k as f64 + 2.0) * std::f64::consts::PI + 20.0;
    let mut out = Vec::with_capacity(k);
    let mut a = start;
    let mut fa = bessel_j(order, a)?;
    while out.len() < k {
        let b = a + step;
        if b > stop {
            return Err(Error::Bracketing { order, index: out.len() + 1 });
        }
        let fb = bessel_j(order, b)?;
        if fa == 0.0 {
            out.push(a);
        } else if fa * fb < 0.0 {
            out.push(bisect(order, a, b, fa)?);
        }
        a = b;
        fa = fb;
    }
    Ok(out)
}

fn bisect(order: f64, mut a: f64, mut b: f64, mut fa: f64) -> Result<f64> {
    for _ in 0..200 {
        if b - a <= 1e-12 {
            break;
        }
        let m = 0.5 * (a + b);
        let fm = bessel_j(order, m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fa * fm < 0.0 {
            b = m;
        } else {
            a = m;
            fa = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// `(j_{order, i} / radius)^2`, `i = 1..=k`: the Dirichlet disk spectrum.
pub fn bessel_zero_oracle(order: f64, k: usize, radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(Error::domain("oracle radius must be positive"));
    }
    Ok(bessel_zeros(order, k)?.into_iter().map(|j| (j / radius).powi(2)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Ascending series, fine for moderate `x`.
    fn series(order: f64, x: f64) -> f64 {
        let mut t = (order * (x / 2.0).ln() - ln_gamma(order + 1.0)).exp();
        let mut s = t;
        for k in 0..120 {
            let k = k as f64;
            t *= -(x * x / 4.0) / ((k + 1.0) * (k + order + 1.0));
            s += t;
        }
        s
    }

    #[test]
    fn matches_series_and_half_order_closed_form() {
        for order in [0.0, 0.5, 1.0, 1.5, 2.3, 7.0] {
            for x in [0.01, 0.7, 2.0, 5.5, 9.0] {
                let v = bessel_j(order, x).unwrap();
                // The alternating series loses about log10(e^x) digits.
                assert!((v - series(order, x)).abs() < 1e-16 * x.exp().max(1e3), "J_{order}({x}): {v} vs {}", series(order, x));
            }
        }
        for x in [0.3, 4.0, 25.0, 80.0] {
            let exact = (2.0 / (PI * x)).sqrt() * x.sin();
            assert!((bessel_j(0.5, x).unwrap() - exact).abs() < 1e-13);
        }
    }

    #[test]
    fn three_term_recurrence_at_large_argument() {
        for x in [30.0, 61.7] {
            for order in [0.0, 1.25, 10.0] {
                let (a, b, c) = (bessel_j(order, x).unwrap(), bessel_j(order + 1.0, x).unwrap(), bessel_j(order + 2.0, x).unwrap());
                assert!((a + c - 2.0 * (order + 1.0) / x * b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zeros() {
        let z = bessel_zeros(0.0, 3).unwrap();
        assert!((z[0] - 2.404825557695773).abs() < 1e-11);
        assert!((z[1] - 5.520078110286311).abs() < 1e-11);
        for (i, z) in bessel_zeros(0.5, 6).unwrap().into_iter().enumerate() {
            assert!((z - (i + 1) as f64 * PI).abs() < 1e-11);
        }
        let big = bessel_zeros(12.0, 2).unwrap();
        assert!(big[0] > 12.0 && bessel_j(12.0, big[0]).unwrap().abs() < 1e-12);
    }

    #[test]
    fn oracle_scales_with_radius() {
        let a = bessel_zero_oracle(1.5, 3, 1.0).unwrap();
        let b = bessel_zero_oracle(1.5, 3, 2.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x / 4.0 - y).abs() < 1e-13 * x);
        }
        assert!(bessel_zero_oracle(1.0, 1, 0.0).is_err());
        assert!(bessel_j(-1.0, 1.0).is_err());
    }
}
