use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    /// An argument lies outside the domain of the operation (e.g. `q = 0`).
    #[error("domain error: {0}")]
    Domain(String),

    /// The declared decay of an integrand does not guarantee convergence.
    #[error("integral refused: {0}")]
    Refused(String),

    /// Quadrature did not reach its tolerance; carries the best estimate.
    #[error("quadrature did not converge ({what}): estimate {estimate_re}+{estimate_im}i, abs_err {abs_err:.3e} after {evals} evaluations")]
    NonConvergent {
        what: String,
        estimate_re: f64,
        estimate_im: f64,
        abs_err: f64,
        evals: u64,
    },

    #[error("moment Omega_({beta},{nu1},{nu2}) missing from table")]
    MissingMoment { beta: f64, nu1: u32, nu2: u32 },

    #[error("gradient of moment Omega_({beta},{nu1},{nu2}) missing from table")]
    MissingMomentGradient { beta: f64, nu1: u32, nu2: u32 },

    #[error("gauge condition violated: |d1 ln Omega(1) + 2| = {residual:.3e} exceeds {tol:.1e}")]
    GaugeCondition { residual: f64, tol: f64 },

    #[error("evaluation outside sampled support at r = {r:.4e} (grid covers [{r_min:.4e}, {r_max:.4e}])")]
    Extrapolation { r: f64, r_min: f64, r_max: f64 },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("state norm {norm:.6} is not within 1e-3 of unity")]
    Normalization { norm: f64 },

    #[error("failed to bracket Bessel zero #{index} of order {order}")]
    Bracketing { order: f64, index: usize },

    #[error("eigensolver did not converge: {0}")]
    Eigen(String),

    #[error("invalid weight: {0}")]
    InvalidWeight(String),

    #[error("invalid configuration: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// True for failures that stem from numerics (convergence, refusal)
    /// rather than from a malformed request.
    pub fn is_convergence(&self) -> bool {
        matches!(
            self,
            Error::NonConvergent { .. } | Error::Refused(_) | Error::Bracketing { .. } | Error::Eigen(_)
        )
    }
}
