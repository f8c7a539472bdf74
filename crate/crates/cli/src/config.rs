use std::fs;
use std::path::{Path, PathBuf};

use aciq_core::moments::MomentRequest;
use aciq_core::spectral::RadialProblem;
use aciq_core::weights::LocalizationGrid;
use aciq_core::{AlphaSpec, Observable, StateSpec, Units, WeightSpec};
use serde::{Deserialize, Serialize};

use crate::report::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Verify,
    Moments,
    Quantize,
    Gauge,
    Coherent,
    Spectrum,
    Localize,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Moments => "moments",
            Command::Quantize => "quantize",
            Command::Gauge => "gauge",
            Command::Coherent => "coherent",
            Command::Spectrum => "spectrum",
            Command::Localize => "localize",
        }
    }

    fn default_format(self) -> Format {
        match self {
            Command::Spectrum | Command::Localize => Format::Csv,
            _ => Format::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Json,
    Csv,
}

/// Grid of the covariance spot-check: `n_r` log-radial steps of `ln 2 / steps_per_octave`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CovarianceGrid {
    pub steps_per_octave: usize,
    pub octaves: usize,
    pub n_theta: usize,
}

impl Default for CovarianceGrid {
    fn default() -> Self {
        CovarianceGrid { steps_per_octave: 16, octaves: 12, n_theta: 64 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    #[serde(default = "default_levels")]
    pub levels: usize,
    /// Largest accepted relative deviation from the disk oracle.
    #[serde(default = "default_spectrum_tol")]
    pub max_rel_err: f64,
    #[serde(default)]
    pub problems: Vec<RadialProblem>,
}

fn default_levels() -> usize {
    3
}

fn default_spectrum_tol() -> f64 {
    5e-3
}

impl Default for SpectrumConfig {
    fn default() -> Self {
        SpectrumConfig { levels: default_levels(), max_rel_err: default_spectrum_tol(), problems: Vec::new() }
    }
}

pub const DEFAULT_PROBLEM: RadialProblem = RadialProblem { m: 1, mu: 0.5, k: 2.0, r_min: 1e-3, r_max: 20.0, n: 4000 };

/// The on-disk run description. Every field is optional; flags override it.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: Option<Command>,
    pub weight: Option<WeightSpec>,
    pub state: Option<StateSpec>,
    pub tol: Option<f64>,
    pub hbar: Option<f64>,
    pub charge: Option<f64>,
    pub seed: Option<u64>,
    pub symmetry_samples: Option<usize>,
    pub pullback_samples: Option<usize>,
    pub covariance: Option<CovarianceGrid>,
    pub localization: Option<LocalizationGrid>,
    pub spectrum: Option<SpectrumConfig>,
    pub moments: Option<MomentRequest>,
    pub observables: Option<Vec<Observable>>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = fs::read_to_string(path).map_err(|e| Failure::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Failure::config(format!("{}: {e}", path.display())))
    }
}

/// Flag values that override the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub format: Option<Format>,
    pub nu: Option<f64>,
    pub sigma: Option<f64>,
    pub mu: Option<f64>,
    pub m: Option<i64>,
    pub k: Option<f64>,
    pub n: Option<usize>,
    pub r_min: Option<f64>,
    pub r_max: Option<f64>,
    pub levels: Option<usize>,
}

impl Overrides {
    fn touches_weight(&self) -> bool {
        self.nu.is_some() || self.sigma.is_some() || self.mu.is_some()
    }

    fn touches_problem(&self) -> bool {
        self.m.is_some() || self.mu.is_some() || self.k.is_some() || self.n.is_some() || self.r_min.is_some() || self.r_max.is_some()
    }
}

pub const DEFAULT_TOL: f64 = 1e-10;

/// A validated run: all defaults filled in.
#[derive(Debug, Clone)]
pub struct Run {
    pub command: Command,
    pub weight: Option<WeightSpec>,
    pub state: Option<StateSpec>,
    pub tol: f64,
    pub units: Units,
    pub seed: u64,
    pub symmetry_samples: usize,
    pub pullback_samples: usize,
    pub covariance: CovarianceGrid,
    pub localization: LocalizationGrid,
    pub spectrum: SpectrumConfig,
    pub moments: MomentRequest,
    pub observables: Vec<Observable>,
    pub out: Option<PathBuf>,
    pub format: Format,
}

fn positive(name: &str, v: f64) -> Result<f64, Failure> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Failure::config(format!("`{name}` must be positive and finite, got {v}")))
    }
}

/// The example weight named by `--nu/--sigma/--mu`, on top of the file's example weight if any.
fn weight_from_flags(base: Option<&WeightSpec>, o: &Overrides) -> Result<WeightSpec, Failure> {
    let ex = base.and_then(|w| w.as_example());
    if base.is_some() && ex.is_none() {
        return Err(Failure::config("--nu/--sigma/--mu apply only to the example family"));
    }
    let nu = o.nu.or(ex.map(|e| e.nu)).ok_or_else(|| Failure::config("no weight: give `weight` in the config or --nu"))?;
    let sigma = o.sigma.or(ex.map(|e| e.sigma)).ok_or_else(|| Failure::config("no weight: give `weight` in the config or --sigma"))?;
    let alpha = match (o.mu, ex) {
        (Some(mu), _) => AlphaSpec::Exponential { mu },
        (None, Some(e)) => e.alpha.clone(),
        (None, None) => AlphaSpec::Exponential { mu: 0.0 },
    };
    WeightSpec::example(nu, sigma, alpha).map_err(Failure::from)
}

impl Run {
    pub fn resolve(command: Command, file: RunConfig, o: Overrides) -> Result<Self, Failure> {
        if let Some(c) = file.command {
            if c != command {
                return Err(Failure::config(format!("config names command `{}` but `{}` was invoked", c.name(), command.name())));
            }
        }
        let tol = positive("tol", o.tol.or(file.tol).unwrap_or(DEFAULT_TOL))?;
        let units = Units { hbar: positive("hbar", file.hbar.unwrap_or(1.0))?, charge: positive("charge", file.charge.unwrap_or(1.0))? };

        let weight = match command {
            Command::Spectrum => {
                if o.nu.is_some() || o.sigma.is_some() {
                    return Err(Failure::config("--nu/--sigma do not apply to `spectrum`"));
                }
                None
            }
            Command::Coherent => {
                if o.touches_weight() {
                    return Err(Failure::config("`coherent` takes its weight from `state`; --nu/--sigma/--mu do not apply"));
                }
                None
            }
            _ if o.touches_weight() => Some(weight_from_flags(file.weight.as_ref(), &o)?),
            _ => match (&file.weight, &file.state) {
                (Some(w), _) => Some(w.clone()),
                (None, Some(s)) => Some(aciq_core::weight_from_state(s)),
                (None, None) => return Err(Failure::config(format!("`{}` needs a `weight` or `state`", command.name()))),
            },
        };
        if let Some(w) = &weight {
            w.validate()?;
        }
        if command == Command::Coherent && file.state.is_none() {
            return Err(Failure::config("`coherent` needs a `state`"));
        }

        let mut spectrum = file.spectrum.unwrap_or_default();
        if let Some(l) = o.levels {
            spectrum.levels = l;
        }
        if command == Command::Spectrum {
            if o.touches_problem() || spectrum.problems.is_empty() {
                let b = spectrum.problems.first().copied().unwrap_or(DEFAULT_PROBLEM);
                spectrum.problems = vec![RadialProblem {
                    m: o.m.unwrap_or(b.m),
                    mu: o.mu.unwrap_or(b.mu),
                    k: o.k.unwrap_or(b.k),
                    r_min: o.r_min.unwrap_or(b.r_min),
                    r_max: o.r_max.unwrap_or(b.r_max),
                    n: o.n.unwrap_or(b.n),
                }];
            }
            positive("spectrum.max_rel_err", spectrum.max_rel_err)?;
            for p in &spectrum.problems {
                p.validate()?;
                if spectrum.levels == 0 || spectrum.levels > p.n / 4 {
                    return Err(Failure::config(format!("levels = {} must lie in 1..=n/4 = {}", spectrum.levels, p.n / 4)));
                }
            }
        }

        let symmetry_samples = file.symmetry_samples.unwrap_or(200);
        let pullback_samples = file.pullback_samples.unwrap_or(10);
        if symmetry_samples == 0 || pullback_samples == 0 {
            return Err(Failure::config("sample counts must be at least 1"));
        }
        let covariance = file.covariance.unwrap_or_default();
        if covariance.steps_per_octave == 0 || covariance.octaves < 4 || covariance.n_theta < 8 {
            return Err(Failure::config("covariance grid needs steps_per_octave >= 1, octaves >= 4, n_theta >= 8"));
        }

        Ok(Run {
            command,
            weight,
            state: file.state,
            tol,
            units,
            seed: file.seed.unwrap_or(2024),
            symmetry_samples,
            pullback_samples,
            covariance,
            localization: file.localization.unwrap_or_default(),
            spectrum,
            moments: file.moments.unwrap_or_else(MomentRequest::standard),
            observables: file.observables.unwrap_or_else(default_observables),
            out: o.out.or(file.out),
            format: o.format.or(file.format).unwrap_or(command.default_format()),
        })
    }

    /// The weight of a command that needs one; `resolve` has checked it is present.
    pub fn weight(&self) -> &WeightSpec {
        self.weight.as_ref().expect("weight resolved for this command")
    }
}

fn default_observables() -> Vec<Observable> {
    vec![
        Observable::PowerQ(-2.0),
        Observable::PowerQ(-1.0),
        Observable::PowerQ(0.0),
        Observable::PowerQ(1.0),
        Observable::Position,
        Observable::Momentum,
        Observable::Kinetic,
        Observable::Dilation,
        Observable::AngularMomentum,
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> Result<RunConfig, serde_json::Error> {
        serde_json::from_str(s)
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse(r#"{"tol": 1e-9, "tolerance": 1}"#).is_err());
        assert!(parse(r#"{"spectrum": {"levels": 3, "extra": 1}}"#).is_err());
        assert!(parse(r#"{"weight": {"family": "example", "nu": 1, "sigma": 3.5, "alpha": {"kind": "exponential", "mu": 1}, "beta": 2}}"#).is_err());
    }

    #[test]
    fn flags_override_the_file() {
        let file = parse(r#"{"weight": {"family": "example", "nu": 4, "sigma": 2, "alpha": {"kind": "exponential", "mu": 1}}, "tol": 1e-8}"#).unwrap();
        let o = Overrides { nu: Some(16.0), tol: Some(1e-9), ..Default::default() };
        let run = Run::resolve(Command::Localize, file, o).unwrap();
        let ex = run.weight().as_example().unwrap();
        assert_eq!((ex.nu, ex.sigma, run.tol), (16.0, 2.0, 1e-9));
        assert!(matches!(ex.alpha, AlphaSpec::Exponential { mu } if mu == 1.0));
        assert_eq!(run.format, Format::Csv);
    }

    #[test]
    fn command_mismatch_and_missing_weight_fail() {
        let file = parse(r#"{"command": "gauge"}"#).unwrap();
        assert!(Run::resolve(Command::Verify, file, Overrides::default()).is_err());
        assert!(Run::resolve(Command::Verify, RunConfig::default(), Overrides::default()).is_err());
        assert!(Run::resolve(Command::Coherent, RunConfig::default(), Overrides::default()).is_err());
    }

    #[test]
    fn spectrum_flags_build_one_problem() {
        let o = Overrides { m: Some(2), k: Some(0.5), n: Some(800), ..Default::default() };
        let run = Run::resolve(Command::Spectrum, RunConfig::default(), o).unwrap();
        assert_eq!(run.spectrum.problems, vec![RadialProblem { m: 2, k: 0.5, n: 800, ..DEFAULT_PROBLEM }]);
        let o = Overrides { n: Some(8), levels: Some(3), ..Default::default() };
        assert!(Run::resolve(Command::Spectrum, RunConfig::default(), o).is_err());
    }

    #[test]
    fn bad_numbers_fail() {
        let o = Overrides { tol: Some(-1.0), nu: Some(1.0), sigma: Some(1.0), ..Default::default() };
        assert!(Run::resolve(Command::Verify, RunConfig::default(), o).is_err());
        let o = Overrides { nu: Some(-1.0), sigma: Some(1.0), ..Default::default() };
        assert!(Run::resolve(Command::Verify, RunConfig::default(), o).is_err());
    }
}
