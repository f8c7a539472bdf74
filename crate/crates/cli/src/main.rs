//! `aciq`: verification suites and data export for affine covariant integral quantization.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Command, Format, Overrides, Run, RunConfig};
use report::{emit, Failure};

#[derive(Parser, Debug)]
#[command(name = "aciq", version, about = "Affine covariant integral quantization on the punctured plane")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug, Clone, Default)]
struct Common {
    /// JSON run description; flags override its fields.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Quadrature tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ACIQ_THREADS")]
    threads: Option<usize>,
    /// Output file (default: stdout).
    #[arg(long, global = true, value_name = "PATH")]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
}

#[derive(Args, Debug, Clone, Default)]
struct WeightFlags {
    /// Radial localization of the example weight.
    #[arg(long)]
    nu: Option<f64>,
    /// Momentum width of the example weight.
    #[arg(long)]
    sigma: Option<f64>,
    /// Angular winding of the example weight.
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct SpectrumFlags {
    /// Angular mode.
    #[arg(long, allow_negative_numbers = true)]
    m: Option<i64>,
    /// Flux in quanta.
    #[arg(long, allow_negative_numbers = true)]
    mu: Option<f64>,
    /// Strength of the inverse-square potential.
    #[arg(long = "K")]
    k: Option<f64>,
    /// Interior grid points.
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    r_min: Option<f64>,
    #[arg(long)]
    r_max: Option<f64>,
    /// Number of levels.
    #[arg(long)]
    levels: Option<usize>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run the full check bundle on one weight.
    Verify(WeightFlags),
    /// Tabulate moments at the identity.
    Moments(WeightFlags),
    /// Quantize the configured observables.
    Quantize(WeightFlags),
    /// Flux, scalar strength and vector potential.
    Gauge(WeightFlags),
    /// Gauge content of a rank-one weight through both routes.
    Coherent,
    /// Radial spectrum against the Bessel-zero oracle.
    Spectrum(SpectrumFlags),
    /// |w| on a phase-space grid.
    Localize(WeightFlags),
    /// Run the command named in the config file.
    Run,
}

fn overrides(common: &Common, cmd: &Cmd) -> Overrides {
    let mut o = Overrides { tol: common.tol, out: common.out.clone(), format: common.format, ..Default::default() };
    match cmd {
        Cmd::Verify(w) | Cmd::Moments(w) | Cmd::Quantize(w) | Cmd::Gauge(w) | Cmd::Localize(w) => {
            (o.nu, o.sigma, o.mu) = (w.nu, w.sigma, w.mu);
        }
        Cmd::Spectrum(s) => {
            (o.m, o.mu, o.k, o.n, o.r_min, o.r_max, o.levels) = (s.m, s.mu, s.k, s.n, s.r_min, s.r_max, s.levels);
        }
        Cmd::Coherent | Cmd::Run => {}
    }
    o
}

fn command(cmd: &Cmd, file: &RunConfig) -> Result<Command, Failure> {
    Ok(match cmd {
        Cmd::Verify(_) => Command::Verify,
        Cmd::Moments(_) => Command::Moments,
        Cmd::Quantize(_) => Command::Quantize,
        Cmd::Gauge(_) => Command::Gauge,
        Cmd::Coherent => Command::Coherent,
        Cmd::Spectrum(_) => Command::Spectrum,
        Cmd::Localize(_) => Command::Localize,
        Cmd::Run => file.command.ok_or_else(|| Failure::config("`run` needs `command` in the config"))?,
    })
}

fn execute(cli: Cli) -> Result<bool, Failure> {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Failure::config(format!("thread pool: {e}")))?;
    }
    let file = match &cli.common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    let cmd = command(&cli.command, &file)?;
    let run = Run::resolve(cmd, file, overrides(&cli.common, &cli.command))?;
    let outcome = commands::run(&run)?;
    emit(&outcome.render(cmd.name(), run.format), run.out.as_deref())?;
    if !outcome.passed() {
        eprintln!("{}", outcome.diagnostic());
    }
    Ok(outcome.passed())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(f) => {
            eprintln!("{}", f.to_json());
            ExitCode::from(2)
        }
    }
}
