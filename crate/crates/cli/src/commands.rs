use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use hubspoke_core::config::{ConfigFile, NetworkSection};
use hubspoke_core::cost::{classify_grid, CellClass};
use hubspoke_core::ingest::{build_tracks, ingest_paths, read_normalized_csv, write_normalized_csv, DeviceTrack};
use hubspoke_core::kml::{scenario_to_kml, tracks_to_kml, ScenarioPlacement};
use hubspoke_core::metrics::{
    days_to_ms, device_summary, dwell_segments, filter_horizontal_accuracy, frequency_report, observed_window_days,
    speed_profile, write_dwell_csv, write_speed_csv, write_summary_csv, LatLon,
};
use hubspoke_core::model::{run_scenario_with, write_mail_csv, NetworkConfig};
use hubspoke_core::sweep::{run_sweep_parallel, write_sweep_csv};
use hubspoke_core::KM_PER_MILE;

use crate::{Cli, Command, IngestArgs, KmlArgs, MetricsArgs, NetworkFlags, SimulateArgs, SweepArgs, Units};

pub enum Failure {
    Usage(String),
    Domain(anyhow::Error),
}

impl<E: Into<anyhow::Error>> From<E> for Failure {
    fn from(e: E) -> Self {
        Failure::Domain(e.into())
    }
}

type Result<T> = std::result::Result<T, Failure>;

pub fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(args) => simulate(cli, args),
        Command::Sweep(args) => sweep(cli, args),
        Command::Ingest(args) => ingest(cli, args),
        Command::Metrics(args) => metrics(cli, args),
        Command::Kml(args) => kml(cli, args),
    }
}

fn workers(cli: &Cli) -> usize {
    cli.workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .max(1)
}

fn warn(cli: &Cli, msg: impl std::fmt::Display) {
    if !cli.quiet {
        eprintln!("warning: {msg}");
    }
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn load_config(path: Option<&Path>) -> anyhow::Result<ConfigFile> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ConfigFile::parse(&text).with_context(|| format!("in {}", p.display()))
        }
        None => Ok(ConfigFile::default()),
    }
}

fn flag_section(flags: &NetworkFlags, seed: Option<u64>) -> NetworkSection {
    let mi = |v: Option<f64>| v.map(|x| x * KM_PER_MILE);
    NetworkSection {
        d_s_km: flags.d_s_km.or(mi(flags.d_s_mi)),
        d_h_km: flags.d_h_km.or(mi(flags.d_h_mi)),
        speed_kmh: flags.speed_kmh.or(mi(flags.speed_mph)),
        lambda_per_hour: flags.lambda_per_hour,
        mu_per_hour: flags.mu_per_hour,
        sim_time_hours: flags.sim_time_hours,
        seed,
        policy: flags.policy.clone(),
        threshold_km: flags.threshold_km.or(mi(flags.threshold_mi)),
    }
}

fn network(file: &ConfigFile, flags: &NetworkFlags, seed: Option<u64>) -> NetworkSection {
    let mut section = file.network.clone();
    section.overlay(&flag_section(flags, seed));
    section
}

/// Shortest decimal form with at most three places.
fn num(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn distance(units: Units, km: f64) -> String {
    match units {
        Units::Km => format!("{} km", num(km)),
        Units::Miles => format!("{} mi", num(km / KM_PER_MILE)),
    }
}

fn speed(units: Units, kmh: f64) -> String {
    match units {
        Units::Km => format!("{} km/h", num(kmh)),
        Units::Miles => format!("{} mph", num(kmh / KM_PER_MILE)),
    }
}

fn simulate(cli: &Cli, args: &SimulateArgs) -> Result<()> {
    let file = load_config(args.config.as_deref())?;
    let config = network(&file, &args.network, cli.seed).to_config()?;
    let output = run_scenario_with(&config, args.trace.is_some(), |_| {})?;

    if let Some(path) = &args.out {
        let mut w = create(path)?;
        write_mail_csv(&mut w, &output.items)?;
        w.flush()?;
    }
    if let Some(path) = &args.trace {
        let mut w = create(path)?;
        for line in output.trace.iter().flatten() {
            writeln!(w, "{line}")?;
        }
        w.flush()?;
    }

    let m = &output.metrics;
    let mut out = io::stdout().lock();
    writeln!(out, "policy: {}", config.policy)?;
    writeln!(out, "d_s: {}", distance(cli.units, config.d_s_km))?;
    writeln!(out, "d_h: {}", distance(cli.units, config.d_h_km))?;
    writeln!(out, "speed: {}", speed(cli.units, config.speed_kmh))?;
    writeln!(out, "route_distance: {}", distance(cli.units, config.route_km()))?;
    writeln!(out, "seed: {}", config.seed)?;
    writeln!(out, "generated: {}", m.generated)?;
    writeln!(out, "delivered: {}", m.delivered)?;
    writeln!(out, "success_rate: {:.4}", m.success_rate)?;
    writeln!(out, "avg_transit_hours: {:.4}", m.avg_transit_hours)?;
    writeln!(out, "max_queue_len: {}", m.max_queue_len)?;
    writeln!(out, "time_avg_queue_len: {:.4}", m.time_avg_queue_len)?;
    writeln!(out, "avg_queue_wait_hours: {:.4}", m.avg_queue_wait_hours)?;
    writeln!(out, "hub_utilization: {:.4}", m.hub_utilization)?;
    Ok(())
}

fn sweep(cli: &Cli, args: &SweepArgs) -> Result<()> {
    let file = load_config(Some(&args.config))?;
    let net = network(&file, &NetworkFlags::default(), cli.seed);
    let mut spec = file.sweep_spec(&net)?;
    if let Some(r) = args.replications {
        spec.replications = r;
    }
    let results = run_sweep_parallel(&spec, workers(cli))?;
    if results.iter().any(|c| c.single_replication()) {
        warn(cli, "one replication per cell; standard deviations are reported as 0");
    }

    fs::create_dir_all(&args.out).with_context(|| format!("creating {}", args.out.display()))?;
    let mut w = create(&args.out.join("sweep.csv"))?;
    write_sweep_csv(&mut w, &results)?;
    w.flush()?;

    if args.analytic {
        let params = file.cost_params(&spec.base);
        params.validate()?;
        let surface = classify_grid(&params, &spec.d_s_km, &spec.d_h_km)?;
        let mut w = create(&args.out.join("surface.csv"))?;
        surface.write_csv(&mut w)?;
        w.flush()?;
        let unstable = surface.classes.iter().filter(|c| **c == CellClass::Unstable).count();
        if unstable > 0 {
            warn(
                cli,
                format!("{unstable} cell(s) have an unstable hub queue and no finite cost"),
            );
        }
    }
    if !cli.quiet {
        eprintln!("{} cell(s) written to {}", results.len(), args.out.display());
    }
    Ok(())
}

fn ingest(cli: &Cli, args: &IngestArgs) -> Result<()> {
    let (tracks, report) = ingest_paths(&args.paths, &args.pattern, workers(cli))?;
    if !cli.quiet {
        eprint!("{report}");
    }
    let mut w = create(&args.out)?;
    write_normalized_csv(&mut w, &tracks)?;
    w.flush()?;
    Ok(())
}

fn read_tracks(path: &Path) -> anyhow::Result<Vec<DeviceTrack>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let records = read_normalized_csv(io::BufReader::new(file)).with_context(|| format!("in {}", path.display()))?;
    Ok(build_tracks(records))
}

fn metrics(cli: &Cli, args: &MetricsArgs) -> Result<()> {
    let mut tracks = read_tracks(&args.input)?;
    if let Some(max) = args.max_h_acc {
        tracks = filter_horizontal_accuracy(&tracks, max);
    }
    let window_days = match args.window_days {
        Some(d) if d > 0.0 && d.is_finite() => d,
        Some(d) => return Err(Failure::Usage(format!("--window-days must be positive, got {d}"))),
        None => observed_window_days(&tracks) as f64,
    };
    let freq = frequency_report(&tracks, days_to_ms(window_days))?;
    let summaries = tracks
        .iter()
        .map(device_summary)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    let dwell: Vec<_> = tracks
        .iter()
        .map(|t| (t, dwell_segments(t, args.dwell_speed_kmh, args.dwell_minutes)))
        .collect();
    let speeds: Vec<_> = tracks.iter().map(|t| (t, speed_profile(t, args.bin_minutes))).collect();
    for (t, p) in &speeds {
        if let Some(msg) = p.warning() {
            warn(cli, format!("{}: {msg}", t.device_key));
        }
    }

    match &args.out {
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut w = create(&dir.join("summary.csv"))?;
            write_summary_csv(&mut w, &summaries)?;
            w.flush()?;
            let mut w = create(&dir.join("frequency.csv"))?;
            freq.write_csv(&mut w)?;
            w.flush()?;
            let mut w = create(&dir.join("dwell.csv"))?;
            write_dwell_csv(&mut w, &dwell)?;
            w.flush()?;
            let mut w = create(&dir.join("speed.csv"))?;
            write_speed_csv(&mut w, &speeds)?;
            w.flush()?;

            let mut out = io::stdout().lock();
            writeln!(out, "devices: {}  window: {} day(s)", freq.devices, num(window_days))?;
            writeln!(out, "{:<20} {:>12} {:>12}", "metric", "overall", "per_tracker")?;
            for (name, overall, per) in freq.display_rows() {
                writeln!(out, "{name:<20} {overall:>12} {per:>12}")?;
            }
        }
        None => {
            let mut out = io::stdout().lock();
            write_summary_csv(&mut out, &summaries)?;
            writeln!(out)?;
            freq.write_csv(&mut out)?;
        }
    }
    Ok(())
}

fn parse_point(flag: &str, text: &str) -> Result<LatLon> {
    let bad = || Failure::Usage(format!("--{flag} expects LAT,LON, got {text:?}"));
    let (lat, lon) = text.split_once(',').ok_or_else(bad)?;
    let lat: f64 = lat.trim().parse().map_err(|_| bad())?;
    let lon: f64 = lon.trim().parse().map_err(|_| bad())?;
    if !(-90.0..=90.0).contains(&lat) || !(-180.0..=180.0).contains(&lon) {
        return Err(bad());
    }
    Ok(LatLon::new(lat, lon))
}

fn kml(cli: &Cli, args: &KmlArgs) -> Result<()> {
    let text = match (&args.input, &args.alpha, &args.beta, &args.hub) {
        (Some(input), ..) => tracks_to_kml(&read_tracks(input)?),
        (None, Some(a), Some(b), Some(h)) => {
            let placement = ScenarioPlacement {
                alpha: parse_point("alpha", a)?,
                beta: parse_point("beta", b)?,
                hub: parse_point("hub", h)?,
            };
            let file = load_config(args.config.as_deref())?;
            let config: NetworkConfig = network(&file, &NetworkFlags::default(), cli.seed).to_config()?;
            scenario_to_kml(&config, &placement)
        }
        _ => {
            return Err(Failure::Usage(
                "kml needs --in FILE or all of --alpha, --beta and --hub".into(),
            ))
        }
    };
    let mut w = create(&args.out)?;
    w.write_all(text.as_bytes())?;
    w.flush()?;
    Ok(())
}
