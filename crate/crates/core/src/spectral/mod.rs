//! Radial reduction of `(P - q A)^2 + K / Q^2` on a Dirichlet annulus.
//!
//! With `phi = e^{i m theta} u(r) / sqrt(r)` the operator becomes
//! `-u'' + (nu_eff^2 - 1/4) u / r^2`, `nu_eff^2 = (m - mu)^2 + K`.

mod bessel;
mod tridiag;

pub use bessel::{bessel_j, bessel_zero_oracle, bessel_zeros};
pub use tridiag::SymTridiag;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RadialProblem {
    /// Angular mode.
    pub m: i64,
    /// Flux in quanta.
    pub mu: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub r_min: f64,
    pub r_max: f64,
    /// Interior grid points.
    pub n: usize,
}

impl RadialProblem {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > 0.0 && self.r_max > self.r_min && self.r_max.is_finite()) {
            return Err(Error::InvalidGrid(format!("need 0 < r_min < r_max, got [{}, {}]", self.r_min, self.r_max)));
        }
        if self.n < 16 {
            return Err(Error::InvalidGrid(format!("n = {} is below 16", self.n)));
        }
        if !(self.k >= 0.0 && self.k.is_finite()) {
            return Err(Error::domain(format!("K = {} must be finite and non-negative", self.k)));
        }
        if !self.mu.is_finite() {
            return Err(Error::domain("flux must be finite"));
        }
        Ok(())
    }

    /// `(m - mu)^2 + K`.
    pub fn nu_eff_sq(&self) -> f64 {
        let s = self.m as f64 - self.mu;
        s * s + self.k
    }

    pub fn nu_eff(&self) -> f64 {
        self.nu_eff_sq().sqrt()
    }

    pub fn step(&self) -> f64 {
        (self.r_max - self.r_min) / (self.n + 1) as f64
    }

    /// Interior nodes.
    pub fn radii(&self) -> Vec<f64> {
        let h = self.step();
        (1..=self.n).map(|i| self.r_min + i as f64 * h).collect()
    }

    fn with_n(&self, n: usize) -> Self {
        RadialProblem { n, ..*self }
    }
}

/// Three-point discretization with Dirichlet ends.
pub fn build_radial_hamiltonian(rp: &RadialProblem) -> Result<SymTridiag> {
    rp.validate()?;
    let h = rp.step();
    let c = rp.nu_eff_sq() - 0.25;
    let diag = rp.radii().into_iter().map(|r| 2.0 / (h * h) + c / (r * r)).collect();
    SymTridiag::new(diag, vec![-1.0 / (h * h); rp.n - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumResult {
    /// Eigenvalues on the `n` grid.
    pub eigenvalues: Vec<f64>,
    /// Eigenvalues on the `2n` grid.
    pub refined: Vec<f64>,
    /// Richardson extrapolation from the two grids.
    pub extrapolated: Vec<f64>,
    /// `|eigenvalue - extrapolated|`, the error estimate of the `n` grid.
    pub errors: Vec<f64>,
}

/// The lowest `k` levels with a second-order Richardson estimate.
pub fn eigen_solve(rp: &RadialProblem, k: usize) -> Result<SpectrumResult> {
    rp.validate()?;
    if k == 0 || k > rp.n / 4 {
        return Err(Error::domain(format!("k = {k} must lie in 1..=n/4 = {}", rp.n / 4)));
    }
    let coarse = build_radial_hamiltonian(rp)?.lowest_eigenvalues(k)?;
    let fine_rp = rp.with_n(2 * rp.n);
    let fine = build_radial_hamiltonian(&fine_rp)?.lowest_eigenvalues(k)?;
    let (h1, h2) = (rp.step().powi(2), fine_rp.step().powi(2));
    let extrapolated: Vec<f64> = coarse.iter().zip(&fine).map(|(a, b)| (b * h1 - a * h2) / (h1 - h2)).collect();
    let errors: Vec<f64> = coarse.iter().zip(&extrapolated).map(|(a, e)| (a - e).abs()).collect();
    if let Some(i) = coarse.iter().chain(&fine).position(|v| !v.is_finite()) {
        return Err(Error::Eigen(format!("non-finite eigenvalue at position {i}")));
    }
    Ok(SpectrumResult { eigenvalues: coarse, refined: fine, extrapolated, errors })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelComparison {
    pub level: usize,
    pub eigenvalue: f64,
    pub oracle_value: f64,
    pub rel_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumComparison {
    pub problem: RadialProblem,
    pub nu_eff: f64,
    pub levels: Vec<LevelComparison>,
    pub max_rel_err: f64,
    /// False when `nu_eff < 1/2`, where the inner wall shifts low levels
    /// noticeably and the disk oracle is only indicative.
    pub oracle_applicable: bool,
}

/// `eigen_solve` against the Dirichlet disk spectrum `(j_{nu_eff, i} / r_max)^2`.
pub fn spectrum_compare(rp: &RadialProblem, k: usize) -> Result<SpectrumComparison> {
    rp.validate()?;
    if rp.r_min > 1e-3 * rp.r_max {
        return Err(Error::domain(format!("r_min = {} exceeds 1e-3 r_max; the disk oracle does not apply", rp.r_min)));
    }
    let s = eigen_solve(rp, k)?;
    let nu = rp.nu_eff();
    let oracle = bessel_zero_oracle(nu, k, rp.r_max)?;
    let levels: Vec<LevelComparison> = s
        .eigenvalues
        .iter()
        .zip(&oracle)
        .enumerate()
        .map(|(i, (&e, &o))| LevelComparison { level: i + 1, eigenvalue: e, oracle_value: o, rel_err: (e - o).abs() / o })
        .collect();
    let max_rel_err = levels.iter().map(|l| l.rel_err).fold(0.0, f64::max);
    Ok(SpectrumComparison { problem: *rp, nu_eff: nu, levels, max_rel_err, oracle_applicable: nu >= 0.5 })
}

/// Independent configurations in parallel, results in input order.
pub fn spectrum_batch(problems: &[RadialProblem], k: usize) -> Vec<Result<SpectrumComparison>> {
    problems.par_iter().map(|rp| spectrum_compare(rp, k)).collect()
}

pub fn spectrum_csv(rows: &[SpectrumComparison]) -> String {
    let mut s = String::from("m,mu,K,level,eigenvalue,oracle_value,rel_err\n");
    for c in rows {
        for l in &c.levels {
            s.push_str(&format!(
                "{},{},{},{},{:.15e},{:.15e},{:.6e}\n",
                c.problem.m, c.problem.mu, c.problem.k, l.level, l.eigenvalue, l.oracle_value, l.rel_err
            ));
        }
    }
    s
}
