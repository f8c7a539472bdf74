//! Shared fixtures for the numerics benchmarks.

use aciq_core::spectral::RadialProblem;
use aciq_core::{MomentRequest, MomentTable, WeightSpec};

/// The example weight at `(nu, sigma, mu)`.
pub fn example(nu: f64, sigma: f64, mu: f64) -> WeightSpec {
    WeightSpec::example_exponential(nu, sigma, mu).expect("valid example parameters")
}

/// Moments needed by every built-in observable.
pub fn standard_table(w: &WeightSpec, tol: f64) -> MomentTable {
    MomentTable::build(w, &MomentRequest::standard(), tol).expect("moments converge")
}

/// The reference radial problem `(m, mu, K) = (1, 1/2, 2)` on `n` interior points.
pub fn reference_problem(n: usize) -> RadialProblem {
    RadialProblem { m: 1, mu: 0.5, k: 2.0, r_min: 1e-3, r_max: 20.0, n }
}
