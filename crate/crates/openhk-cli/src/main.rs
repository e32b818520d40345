//! Scenario runner: reads a JSON config (flags override its keys), runs the
//! requested ensemble, and writes `series.csv`, one `events_<k>.csv` per
//! requested trace, and `manifest.json` into the output directory.
//!
//! Exit codes: 0 success, 2 config error, 3 I/O error, 4 numerical failure.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use openhk::config::{ConfigError, Mode, PartialConfig, ScenarioConfig};
use openhk::ensemble::EnsembleError;
use openhk::open_process::RunError;
use openhk::output::{self, OutputError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Closed,
    Open,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Mode {
        match m {
            ModeArg::Closed => Mode::Closed,
            ModeArg::Open => Mode::Open,
        }
    }
}

/// Simulate closed or open bounded-confidence opinion dynamics and emit
/// ensemble statistics and event logs as CSV.
#[derive(Debug, Parser)]
#[command(name = "openhk", version, about)]
struct Cli {
    /// JSON scenario file; other flags override its keys
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// closed: fixed population; open: Poisson arrivals and departures
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Initial number of agents
    #[arg(long)]
    n0: Option<usize>,
    /// Lower end of the opinion support
    #[arg(long)]
    a: Option<f64>,
    /// Upper end of the opinion support
    #[arg(long)]
    b: Option<f64>,
    /// Arrival rate (open mode)
    #[arg(long = "lambda-a")]
    lambda_a: Option<f64>,
    /// Per-agent departure rate (open mode)
    #[arg(long = "lambda-d")]
    lambda_d: Option<f64>,
    /// Simulation horizon
    #[arg(long = "t-end")]
    t_end: Option<f64>,
    /// Integrator step
    #[arg(long)]
    dt: Option<f64>,
    /// Number of sampling times over [0, t_end]
    #[arg(long)]
    grid: Option<usize>,
    /// Number of Monte Carlo realizations
    #[arg(long)]
    realizations: Option<usize>,
    /// Master seed; realization k runs on RNG stream (seed, k)
    #[arg(long)]
    seed: Option<u64>,
    /// Number of realizations whose event logs are written out
    #[arg(long)]
    traces: Option<usize>,
    /// Output directory for series.csv, events_<k>.csv, manifest.json
    #[arg(long = "out-dir", value_name = "DIR")]
    out_dir: Option<PathBuf>,
}

impl Cli {
    fn overrides(&self) -> PartialConfig {
        PartialConfig {
            mode: self.mode.map(Mode::from),
            n0: self.n0,
            a: self.a,
            b: self.b,
            lambda_a: self.lambda_a,
            lambda_d: self.lambda_d,
            t_end: self.t_end,
            dt: self.dt,
            grid: self.grid,
            realizations: self.realizations,
            seed: self.seed,
            traces: self.traces,
            out_dir: self.out_dir.clone(),
        }
    }
}

enum AppError {
    Config(String),
    Io(String),
    Numerical(String),
}

impl AppError {
    fn exit_code(&self) -> u8 {
        match self {
            AppError::Config(_) => 2,
            AppError::Io(_) => 3,
            AppError::Numerical(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            AppError::Config(m) | AppError::Io(m) | AppError::Numerical(m) => m,
        }
    }
}

impl From<ConfigError> for AppError {
    fn from(e: ConfigError) -> Self {
        AppError::Config(e.to_string())
    }
}

impl From<OutputError> for AppError {
    fn from(e: OutputError) -> Self {
        AppError::Io(e.to_string())
    }
}

impl From<EnsembleError> for AppError {
    fn from(e: EnsembleError) -> Self {
        match e {
            EnsembleError::Run(RunError::Config(m)) => AppError::Config(m),
            other => AppError::Numerical(other.to_string()),
        }
    }
}

impl From<RunError> for AppError {
    fn from(e: RunError) -> Self {
        match e {
            RunError::Config(m) => AppError::Config(m),
            other => AppError::Numerical(other.to_string()),
        }
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig, AppError> {
    let from_file = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| AppError::Io(format!("failed to read {}: {e}", path.display())))?;
            PartialConfig::from_json(&text)?
        }
        None => PartialConfig::default(),
    };
    Ok(from_file.merged(cli.overrides()).finish()?)
}

fn run(cli: &Cli) -> Result<(), AppError> {
    let config = load_config(cli)?;
    let realization = config.realization_config();
    output::ensure_dir(&config.out_dir)?;

    let stats = openhk::run_ensemble(&realization, config.realizations, config.seed)?;
    let series_path = config.out_dir.join("series.csv");
    output::write_series(&stats, &series_path)?;

    for k in 0..config.traces as u64 {
        let trace = openhk::simulate_realization(&realization, config.seed, k)?;
        output::write_events(&trace, &config.out_dir.join(format!("events_{k}.csv")))?;
    }

    output::write_manifest(&config, &config.out_dir.join("manifest.json"))?;

    println!(
        "wrote {} ({} grid points, {} realizations) and {} event log(s) to {}",
        series_path.display(),
        config.grid,
        config.realizations,
        config.traces,
        config.out_dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code())
        }
    }
}
