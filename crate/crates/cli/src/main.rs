//! `loadvine` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or I/O error, 3 numeric or
//! fit failure.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use loadvine::ErrorClass;

use config::{DataArgs, FitArgs, PipelineConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("output directory is in use (lock file {0} exists)")]
    Locked(PathBuf),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Lib(#[from] loadvine::Error),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Locked(_) | CliError::Io { .. } => 2,
            CliError::Lib(e) => match e.class() {
                ErrorClass::Data | ErrorClass::Io => 2,
                ErrorClass::Numeric => 3,
            },
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "loadvine", version, about = "Household load models from kernel densities and D-vine copulas")]
struct Cli {
    /// TOML configuration; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Repeat for more log output.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse meter data and write the filtered slot matrix.
    Ingest {
        #[command(flatten)]
        data: DataArgs,
        /// File of customer ids, one per line; writes one matrix per id.
        #[arg(long)]
        allowlist: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Fit densities, clusters and vines; write the model and fit report.
    Fit {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Draw synthetic day profiles from a fitted model.
    Simulate {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Number of profiles.
        #[arg(short, long)]
        n: Option<usize>,
        /// Keep only profiles whose every slot lies between these marginal
        /// quantiles, e.g. `0.01,0.99`.
        #[arg(long, value_delimiter = ',')]
        band: Option<Vec<f64>>,
        #[arg(long)]
        max_attempts: Option<usize>,
        /// Quantile levels for the band file.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Permutation tests of simulated against real days.
    Validate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        repetitions: Option<usize>,
        /// Report `(count + 1)/(M + 1)` p-values.
        #[arg(long)]
        add_one: bool,
        /// Keep the observed pooled covariance for every permutation.
        #[arg(long)]
        freeze_covariance: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Export density grids, silhouettes and distances of a fitted model.
    Report {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Abscissae of the shared clustering grid.
        #[arg(long, default_value_t = loadvine::clustering::DEFAULT_GRID_POINTS)]
        grid_points: usize,
        /// Abscissae per slot in `marginals.csv`.
        #[arg(long, default_value_t = 200)]
        marginal_points: usize,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn set_if<T>(target: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *target = value;
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    match cli.command {
        Command::Ingest { data, allowlist, out_dir } => {
            data.apply(&mut cfg);
            set_if(&mut cfg.output_dir, out_dir);
            commands::ingest(&cfg, allowlist.as_deref())
        }
        Command::Fit { data, fit, seed, out_dir } => {
            data.apply(&mut cfg);
            fit.apply(&mut cfg)?;
            set_if(&mut cfg.seed, seed);
            set_if(&mut cfg.output_dir, out_dir);
            commands::fit(&cfg)
        }
        Command::Simulate { model, n, band, max_attempts, levels, seed, out_dir } => {
            set_if(&mut cfg.model, model);
            set_if(&mut cfg.seed, seed);
            set_if(&mut cfg.output_dir, out_dir);
            if let Some(n) = n {
                cfg.simulate.n = n;
            }
            if let Some(b) = band {
                let [lo, hi] = b[..] else {
                    return Err(CliError::Usage("--band takes two levels, e.g. 0.01,0.99".into()));
                };
                cfg.simulate.band = Some([lo, hi]);
            }
            if let Some(m) = max_attempts {
                cfg.simulate.max_attempts = m;
            }
            if let Some(l) = levels {
                cfg.simulate.levels = l;
            }
            commands::simulate(&cfg)
        }
        Command::Validate { model, data, permutations, repetitions, add_one, freeze_covariance, seed, out_dir } => {
            data.apply(&mut cfg);
            set_if(&mut cfg.model, model);
            set_if(&mut cfg.seed, seed);
            set_if(&mut cfg.output_dir, out_dir);
            if let Some(m) = permutations {
                cfg.validate.permutations = m;
            }
            if let Some(r) = repetitions {
                cfg.validate.repetitions = r;
            }
            cfg.validate.add_one |= add_one;
            cfg.validate.freeze_covariance |= freeze_covariance;
            commands::validate(&cfg)
        }
        Command::Report { model, grid_points, marginal_points, out_dir } => {
            set_if(&mut cfg.model, model);
            set_if(&mut cfg.output_dir, out_dir);
            commands::report(&cfg, grid_points, marginal_points)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
