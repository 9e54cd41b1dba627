//! `ratchet`: closed-form coefficients, periodic Fokker–Planck orbits,
//! limit studies and parameter sweeps from the command line.

mod commands;
mod config;
mod report;
mod sweep;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ratchet_core::RatchetError;

use config::{Config, Params};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{message}")]
    Config { message: String },
    #[error(transparent)]
    Core(#[from] RatchetError),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn config(message: String) -> Self {
        Self::Config { message }
    }

    /// 2 for bad input, 1 for numerical or I/O failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config { .. } => 2,
            Self::Core(e) => match e {
                RatchetError::InvalidParameter(_) | RatchetError::Precondition(_) | RatchetError::Parse(_) | RatchetError::CommonZero { .. } => 2,
                _ => 1,
            },
            Self::Io(_) => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Closed-form coefficients and limit velocities of the tilted potential.
    Coeffs,
    /// Exact stationary density of the tilted potential against the solver's.
    Stationary,
    /// Average velocity of the periodic orbit.
    Velocity,
    /// Periodic orbit snapshots as t,x,value rows.
    Periodic,
    /// Displacement scan and rotation estimate of the zero-noise dynamics.
    Rotation,
    /// Velocity against the rotation estimate over decreasing sigma.
    Conjecture,
    /// Stationary velocity and sign classification of a multi-state model.
    Multistate,
    /// Randomized inequality suite.
    Inequality,
    /// Slow square-wave tilting against its limit.
    AdiabaticScan,
    /// Short strong pulses against their limit.
    SemiadiabaticScan,
    /// Travelling potential against the moving-frame density.
    Stokes,
    /// Adiabatic velocity along the squeeze family.
    Homotopy,
    /// Cartesian parameter sweep described by --config.
    Sweep,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Coeffs => "coeffs",
            Self::Stationary => "stationary",
            Self::Velocity => "velocity",
            Self::Periodic => "periodic",
            Self::Rotation => "rotation",
            Self::Conjecture => "conjecture",
            Self::Multistate => "multistate",
            Self::Inequality => "inequality",
            Self::AdiabaticScan => "adiabatic-scan",
            Self::SemiadiabaticScan => "semiadiabatic-scan",
            Self::Stokes => "stokes",
            Self::Homotopy => "homotopy",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Args)]
struct Flags {
    /// Potential preset, e.g. "cosine", "asym 1 0.3", "sampled 0 1 0.5".
    #[arg(long, global = true)]
    potential: Option<String>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    omega: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    sigma: Option<f64>,
    #[arg(long, global = true)]
    grid_n: Option<usize>,
    #[arg(long, global = true)]
    dt: Option<f64>,
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    period: Option<f64>,
    #[arg(long, global = true, allow_negative_numbers = true)]
    tau: Option<f64>,
    /// constant, square, semiadiabatic or traveling.
    #[arg(long, global = true)]
    protocol: Option<String>,
    #[arg(long, global = true, value_delimiter = ',')]
    periods: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    tau_fracs: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    sigmas: Option<Vec<f64>>,
    #[arg(long, global = true, value_delimiter = ',')]
    lambdas: Option<Vec<f64>>,
    /// Increasing arc "alpha,beta" for the homotopy.
    #[arg(long, global = true, value_delimiter = ',', num_args = 2)]
    arc: Option<Vec<f64>>,
    /// sinineq, window, interval or functional.
    #[arg(long, global = true)]
    suite: Option<String>,
    #[arg(long, global = true)]
    cases: Option<usize>,
    #[arg(long, global = true)]
    initial_conditions: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// TOML file with [params], [protocol], [multistate] and [sweep] tables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Debug, Parser)]
#[command(name = "ratchet", version, about = "Transport in tilting and multi-state Brownian ratchets")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

impl Flags {
    fn apply(&self, p: &mut Params) -> Result<(), CliError> {
        let bad = |flag: &str, m: String| CliError::config(format!("--{flag}: {m}"));
        if let Some(s) = &self.potential {
            p.potential = s.parse().map_err(|e: RatchetError| bad("potential", e.to_string()))?;
        }
        macro_rules! copy {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { p.$f = v; } )* };
        }
        copy!(omega, sigma, grid_n, dt, tol, period, cases, initial_conditions, seed);
        if let Some(t) = self.tau {
            p.tau = Some(t);
        }
        for (src, dst) in [(&self.periods, &mut p.periods), (&self.tau_fracs, &mut p.tau_fracs), (&self.sigmas, &mut p.sigmas), (&self.lambdas, &mut p.lambdas)]
        {
            if let Some(v) = src {
                dst.clone_from(v);
            }
        }
        if let Some(a) = &self.arc {
            p.arc = Some((a[0], a[1]));
        }
        if let Some(s) = &self.protocol {
            p.set_protocol(s).map_err(|m| bad("protocol", m))?;
        }
        if let Some(s) = &self.suite {
            p.set_suite(s).map_err(|m| bad("suite", m))?;
        }
        Ok(())
    }
}

fn execute(cli: &Cli) -> Result<String, CliError> {
    let cfg = match &cli.flags.config {
        Some(path) => config::load(path)?,
        None => Config::default(),
    };
    let mut params = cfg.params.clone();
    cli.flags.apply(&mut params)?;
    let workers = cli.flags.workers.or(cfg.workers);
    if let Some(w) = workers {
        if w == 0 {
            return Err(CliError::config("--workers must be at least 1".into()));
        }
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(w).build_global();
    }
    let name = cli.command.name();
    let (report, json_default) = if name == "sweep" {
        let spec = cfg.sweep.as_ref().ok_or_else(|| CliError::config("sweep needs --config with a [sweep] table".into()))?;
        (sweep::run(spec, &params), false)
    } else {
        (commands::run(name, &params)?, commands::prefers_json(name))
    };
    let json = match cli.flags.format {
        Some(Format::Json) => true,
        Some(Format::Csv) => false,
        None => json_default,
    };
    Ok(if json { report.to_json() } else { report.to_csv() })
}

fn emit(text: &str, out: Option<&PathBuf>) -> Result<(), CliError> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display()))),
        None => match std::io::stdout().lock().write_all(text.as_bytes()) {
            Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(e.to_string())),
            _ => Ok(()),
        },
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("RATCHET_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match execute(&cli).and_then(|text| emit(&text, cli.flags.out.as_ref())) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
