use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;

#[derive(Debug, Parser)]
#[command(
    name = "hubspoke",
    version,
    about = "Hub-and-spoke delivery simulation and tracker-log analytics"
)]
pub struct Cli {
    /// Override the configured random seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Unit system for printed distances and speeds.
    #[arg(long, global = true, value_enum, default_value_t = Units::Km)]
    pub units: Units,

    /// Suppress diagnostics on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Worker threads for sweeps and file parsing (default: all cores).
    #[arg(long, global = true)]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Units {
    Km,
    Miles,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one scenario; print metrics and optionally write the mail CSV.
    Simulate(SimulateArgs),
    /// Run replicated scenarios over a (d_s, d_h) grid.
    Sweep(SweepArgs),
    /// Merge items.data snapshots into a normalized CSV.
    Ingest(IngestArgs),
    /// Per-device summaries, update frequency, dwell and speed tables.
    Metrics(MetricsArgs),
    /// Export tracks (or a scenario layout) as KML.
    Kml(KmlArgs),
}

/// Scenario keys; each mirrors a `[network]` config key.
#[derive(Debug, Args, Default)]
pub struct NetworkFlags {
    #[arg(long)]
    pub d_s_km: Option<f64>,
    #[arg(long)]
    pub d_h_km: Option<f64>,
    #[arg(long)]
    pub speed_kmh: Option<f64>,
    #[arg(long, alias = "lambda")]
    pub lambda_per_hour: Option<f64>,
    #[arg(long, alias = "mu")]
    pub mu_per_hour: Option<f64>,
    #[arg(long)]
    pub sim_time_hours: Option<f64>,
    /// via_hub, direct or threshold.
    #[arg(long)]
    pub policy: Option<String>,
    #[arg(long)]
    pub threshold_km: Option<f64>,

    /// Spoke-to-spoke distance in miles.
    #[arg(long, conflicts_with = "d_s_km")]
    pub d_s_mi: Option<f64>,
    /// Hub-to-spoke distance in miles.
    #[arg(long, conflicts_with = "d_h_km")]
    pub d_h_mi: Option<f64>,
    #[arg(long, conflicts_with = "speed_kmh")]
    pub speed_mph: Option<f64>,
    #[arg(long, conflicts_with = "threshold_km")]
    pub threshold_mi: Option<f64>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub network: NetworkFlags,
    /// Mail lifecycle CSV destination.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Event trace destination (time, seq, payload per line).
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory for sweep.csv (and surface.csv).
    #[arg(long)]
    pub out: PathBuf,
    /// Also classify the analytic cost surface over the same axes.
    #[arg(long)]
    pub analytic: bool,
    #[arg(long)]
    pub replications: Option<u32>,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// items.data files or directories of snapshots.
    #[arg(required = true)]
    pub paths: Vec<PathBuf>,
    /// Normalized CSV destination.
    #[arg(long)]
    pub out: PathBuf,
    /// File-name pattern for files inside directories.
    #[arg(long, default_value = hubspoke_core::ingest::DEFAULT_PATTERN)]
    pub pattern: String,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    /// Normalized CSV from `ingest`.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Output directory; without it both tables go to stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Observation window (default: whole days spanned by the data).
    #[arg(long)]
    pub window_days: Option<f64>,
    /// Drop fixes with horizontal accuracy worse than this many metres.
    #[arg(long)]
    pub max_h_acc: Option<f64>,
    #[arg(long, default_value_t = hubspoke_core::metrics::DEFAULT_DWELL_SPEED_KMH)]
    pub dwell_speed_kmh: f64,
    #[arg(long, default_value_t = hubspoke_core::metrics::DEFAULT_DWELL_MINUTES)]
    pub dwell_minutes: f64,
    #[arg(long, default_value_t = 60.0)]
    pub bin_minutes: f64,
}

#[derive(Debug, Args)]
pub struct KmlArgs {
    /// Normalized CSV from `ingest`.
    #[arg(long = "in", conflicts_with_all = ["alpha", "beta", "hub"])]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Scenario config for a layout export.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Alpha spoke as LAT,LON.
    #[arg(long, requires_all = ["beta", "hub"])]
    pub alpha: Option<String>,
    #[arg(long, requires_all = ["alpha", "hub"])]
    pub beta: Option<String>,
    #[arg(long, requires_all = ["alpha", "beta"])]
    pub hub: Option<String>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(commands::Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(commands::Failure::Domain(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
