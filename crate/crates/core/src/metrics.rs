//! Track metrics: per-device summaries, update frequency, dwell segments,
//! detour ratios and speed profiles.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::Write;

use num_rational::Ratio;
use thiserror::Error;

use crate::ingest::{DeviceTrack, TraceRecord};

/// Mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

const MS_PER_DAY: i64 = 86_400_000;
const MS_PER_MINUTE: u64 = 60_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("track has no records")]
    EmptyTrack,
    #[error("observation window must be positive")]
    EmptyWindow,
    #[error("frequency report needs at least one device")]
    NoDevices,
    #[error("origin and destination coincide; detour ratio undefined")]
    DegenerateOD,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        LatLon { lat, lon }
    }
}

impl From<&TraceRecord> for LatLon {
    fn from(r: &TraceRecord) -> Self {
        LatLon::new(r.latitude, r.longitude)
    }
}

/// Great-circle distance on a sphere of radius [`EARTH_RADIUS_KM`].
pub fn haversine_km(a: LatLon, b: LatLon) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.clamp(0.0, 1.0).sqrt().asin()
}

fn path_length_km(records: &[TraceRecord]) -> f64 {
    records
        .windows(2)
        .map(|w| haversine_km((&w[0]).into(), (&w[1]).into()))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceSummary {
    pub device_key: String,
    pub name: String,
    pub distance_km: f64,
    pub records: usize,
    pub unique_locations: usize,
    /// Distinct UTC calendar dates with at least one record.
    pub days_active: usize,
}

pub fn device_summary(track: &DeviceTrack) -> Result<DeviceSummary, MetricsError> {
    if track.records.is_empty() {
        return Err(MetricsError::EmptyTrack);
    }
    let unique: HashSet<(i64, i64)> = track.records.iter().map(TraceRecord::position_key).collect();
    let days: HashSet<i64> = track
        .records
        .iter()
        .map(|r| r.timestamp_ms.div_euclid(MS_PER_DAY))
        .collect();
    Ok(DeviceSummary {
        device_key: track.device_key.clone(),
        name: track.name.clone(),
        distance_km: path_length_km(&track.records),
        records: track.records.len(),
        unique_locations: unique.len(),
        days_active: days.len(),
    })
}

/// Rounds half away from zero to `decimals` places and formats the result.
/// Exact for rational input.
pub fn display_rational(value: Ratio<u128>, decimals: u32) -> String {
    let scale = 10u128.pow(decimals);
    let (num, den) = (value.numer() * scale, *value.denom());
    let scaled = (2 * num + den) / (2 * den);
    if decimals == 0 {
        return scaled.to_string();
    }
    format!(
        "{}.{:0width$}",
        scaled / scale,
        scaled % scale,
        width = decimals as usize
    )
}

/// Update counts over an observation window, kept as exact rationals.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyReport {
    pub window_ms: u64,
    pub devices: u64,
    pub total_updates: u64,
    pub per_day: Ratio<u128>,
    pub per_hour: Ratio<u128>,
    pub per_minute: Ratio<u128>,
}

/// Decimal places shown per row, as `(overall, per tracker)`.
const DISPLAY_DECIMALS: [(&str, u32, u32); 4] = [
    ("total_updates", 0, 0),
    ("updates_per_day", 0, 0),
    ("updates_per_hour", 0, 1),
    ("updates_per_minute", 2, 2),
];

impl FrequencyReport {
    pub fn from_counts(total_updates: u64, devices: u64, window_ms: u64) -> Result<Self, MetricsError> {
        if window_ms == 0 {
            return Err(MetricsError::EmptyWindow);
        }
        if devices == 0 {
            return Err(MetricsError::NoDevices);
        }
        let total = u128::from(total_updates);
        let minutes = Ratio::new(u128::from(window_ms), u128::from(MS_PER_MINUTE));
        let per_minute = Ratio::from_integer(total) / minutes;
        let per_hour = per_minute * 60;
        let per_day = per_hour * 24;
        Ok(FrequencyReport {
            window_ms,
            devices,
            total_updates,
            per_day,
            per_hour,
            per_minute,
        })
    }

    pub fn window_days(&self) -> f64 {
        self.window_ms as f64 / MS_PER_DAY as f64
    }

    fn per_tracker(&self, v: Ratio<u128>) -> Ratio<u128> {
        v / u128::from(self.devices)
    }

    /// `(metric, overall, per tracker)` in exact arithmetic.
    pub fn rows(&self) -> [(&'static str, Ratio<u128>, Ratio<u128>); 4] {
        let total = Ratio::from_integer(u128::from(self.total_updates));
        let vals = [total, self.per_day, self.per_hour, self.per_minute];
        let mut out = [("", Ratio::from_integer(0), Ratio::from_integer(0)); 4];
        for (k, v) in vals.into_iter().enumerate() {
            out[k] = (DISPLAY_DECIMALS[k].0, v, self.per_tracker(v));
        }
        out
    }

    /// Rows rounded for display.
    pub fn display_rows(&self) -> Vec<(&'static str, String, String)> {
        self.rows()
            .into_iter()
            .zip(DISPLAY_DECIMALS)
            .map(|((name, overall, tracker), (_, d_all, d_one))| {
                (name, display_rational(overall, d_all), display_rational(tracker, d_one))
            })
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["metric", "overall", "per_tracker"])?;
        for (name, overall, tracker) in self.display_rows() {
            w.write_record([name, overall.as_str(), tracker.as_str()])?;
        }
        w.flush()
    }
}

pub fn frequency_report(tracks: &[DeviceTrack], window_ms: u64) -> Result<FrequencyReport, MetricsError> {
    let total: usize = tracks.iter().map(|t| t.records.len()).sum();
    FrequencyReport::from_counts(total as u64, tracks.len() as u64, window_ms)
}

/// Whole days spanned by the tracks, rounded up, at least one.
pub fn observed_window_days(tracks: &[DeviceTrack]) -> u64 {
    let ts = tracks.iter().flat_map(|t| &t.records).map(|r| r.timestamp_ms);
    let (lo, hi) = ts.fold((i64::MAX, i64::MIN), |(lo, hi), t| (lo.min(t), hi.max(t)));
    if lo > hi {
        return 1;
    }
    (((hi - lo) + MS_PER_DAY - 1) / MS_PER_DAY).max(1) as u64
}

pub fn days_to_ms(days: f64) -> u64 {
    (days * MS_PER_DAY as f64).round().max(0.0) as u64
}

/// Drops records whose horizontal accuracy is known and worse than `max_m`.
pub fn filter_horizontal_accuracy(tracks: &[DeviceTrack], max_m: f64) -> Vec<DeviceTrack> {
    tracks
        .iter()
        .map(|t| DeviceTrack {
            records: t
                .records
                .iter()
                .filter(|r| r.horizontal_accuracy.is_none_or(|a| a <= max_m))
                .cloned()
                .collect(),
            ..t.clone()
        })
        .filter(|t| !t.records.is_empty())
        .collect()
}

pub fn write_summary_csv<W: Write>(out: W, summaries: &[DeviceSummary]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "device_key",
        "name",
        "distance_km",
        "records",
        "unique_locations",
        "days_active",
    ])?;
    for s in summaries {
        w.write_record([
            s.device_key.clone(),
            s.name.clone(),
            format!("{:.1}", s.distance_km),
            s.records.to_string(),
            s.unique_locations.to_string(),
            s.days_active.to_string(),
        ])?;
    }
    w.flush()
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwellSegment {
    pub start_ms: i64,
    pub end_ms: i64,
    pub centroid: LatLon,
    /// Largest distance from the centroid to a fix in the segment, metres.
    pub radius_m: f64,
    pub fixes: usize,
}

/// Default stationarity threshold, km/h.
pub const DEFAULT_DWELL_SPEED_KMH: f64 = 0.5;
/// Default minimum dwell, minutes.
pub const DEFAULT_DWELL_MINUTES: f64 = 10.0;

fn pair_speed_kmh(a: &TraceRecord, b: &TraceRecord) -> f64 {
    let km = haversine_km(a.into(), b.into());
    let hours = (b.timestamp_ms - a.timestamp_ms) as f64 / 3_600_000.0;
    if hours > 0.0 {
        km / hours
    } else if km == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// Maximal runs of fixes whose consecutive speeds stay below
/// `speed_floor_kmh` and that last at least `min_duration_min`.
pub fn dwell_segments(track: &DeviceTrack, speed_floor_kmh: f64, min_duration_min: f64) -> Vec<DwellSegment> {
    let recs = &track.records;
    let min_ms = min_duration_min * 60_000.0;
    let mut out = Vec::new();
    let mut start = 0;
    for i in 0..recs.len() {
        let run_continues = i + 1 < recs.len() && pair_speed_kmh(&recs[i], &recs[i + 1]) < speed_floor_kmh;
        if run_continues {
            continue;
        }
        let run = &recs[start..=i];
        let duration = (run[run.len() - 1].timestamp_ms - run[0].timestamp_ms) as f64;
        if run.len() >= 2 && duration > 0.0 && duration >= min_ms {
            out.push(segment(run));
        }
        start = i + 1;
    }
    out
}

fn segment(run: &[TraceRecord]) -> DwellSegment {
    let n = run.len() as f64;
    let centroid = LatLon::new(
        run.iter().map(|r| r.latitude).sum::<f64>() / n,
        run.iter().map(|r| r.longitude).sum::<f64>() / n,
    );
    let radius_m = run
        .iter()
        .map(|r| haversine_km(centroid, r.into()) * 1000.0)
        .fold(0.0, f64::max);
    DwellSegment {
        start_ms: run[0].timestamp_ms,
        end_ms: run[run.len() - 1].timestamp_ms,
        centroid,
        radius_m,
        fixes: run.len(),
    }
}

/// Path length over direct distance for the fixes inside each
/// `(start_ms, end_ms)` window (inclusive).
pub fn detour_ratio(track: &DeviceTrack, od_pairs: &[(i64, i64)]) -> Vec<Result<f64, MetricsError>> {
    od_pairs
        .iter()
        .map(|&(start, end)| {
            let fixes: Vec<TraceRecord> = track
                .records
                .iter()
                .filter(|r| (start..=end).contains(&r.timestamp_ms))
                .cloned()
                .collect();
            let (Some(first), Some(last)) = (fixes.first(), fixes.last()) else {
                return Err(MetricsError::DegenerateOD);
            };
            let direct = haversine_km(first.into(), last.into());
            if direct <= 1e-9 {
                return Err(MetricsError::DegenerateOD);
            }
            Ok(path_length_km(&fixes) / direct)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedBin {
    pub start_ms: i64,
    pub mean_kmh: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpeedProfile {
    pub bins: Vec<SpeedBin>,
    /// Consecutive fixes sharing a timestamp; no speed can be computed.
    pub skipped_pairs: usize,
}

impl SpeedProfile {
    pub fn warning(&self) -> Option<String> {
        (self.skipped_pairs > 0).then(|| format!("skipped {} fix pair(s) with zero elapsed time", self.skipped_pairs))
    }
}

/// Consecutive-fix speeds averaged per wall-clock bin (epoch aligned). Each
/// pair counts toward the bin holding its first fix.
pub fn speed_profile(track: &DeviceTrack, bin_minutes: f64) -> SpeedProfile {
    let bin_ms = (bin_minutes * 60_000.0).round().max(1.0) as i64;
    let mut bins: BTreeMap<i64, (f64, usize)> = BTreeMap::new();
    let mut skipped = 0;
    for w in track.records.windows(2) {
        if w[1].timestamp_ms == w[0].timestamp_ms {
            skipped += 1;
            continue;
        }
        let bin = w[0].timestamp_ms.div_euclid(bin_ms);
        let e = bins.entry(bin).or_default();
        e.0 += pair_speed_kmh(&w[0], &w[1]);
        e.1 += 1;
    }
    SpeedProfile {
        bins: bins
            .into_iter()
            .map(|(bin, (sum, n))| SpeedBin {
                start_ms: bin * bin_ms,
                mean_kmh: sum / n as f64,
                samples: n,
            })
            .collect(),
        skipped_pairs: skipped,
    }
}

impl fmt::Display for DwellSegment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}..{} at {},{} (r={:.1} m)",
            self.start_ms, self.end_ms, self.centroid.lat, self.centroid.lon, self.radius_m
        )
    }
}

pub fn write_dwell_csv<W: Write>(out: W, per_track: &[(&DeviceTrack, Vec<DwellSegment>)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device_key", "start_ms", "end_ms", "lat", "lon", "radius_m", "fixes"])?;
    for (track, segs) in per_track {
        for s in segs {
            w.write_record([
                track.device_key.clone(),
                s.start_ms.to_string(),
                s.end_ms.to_string(),
                s.centroid.lat.to_string(),
                s.centroid.lon.to_string(),
                format!("{:.1}", s.radius_m),
                s.fixes.to_string(),
            ])?;
        }
    }
    w.flush()
}

pub fn write_speed_csv<W: Write>(out: W, per_track: &[(&DeviceTrack, SpeedProfile)]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["device_key", "bin_start_ms", "mean_kmh", "samples"])?;
    for (track, profile) in per_track {
        for b in &profile.bins {
            w.write_record([
                track.device_key.clone(),
                b.start_ms.to_string(),
                format!("{:.1}", b.mean_kmh),
                b.samples.to_string(),
            ])?;
        }
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth;

    fn rec(ts_ms: i64, lat: f64, lon: f64) -> TraceRecord {
        synth::record("dev", "Dev", ts_ms, lat, lon)
    }

    fn track(records: Vec<TraceRecord>) -> DeviceTrack {
        DeviceTrack {
            device_key: "dev".into(),
            name: "Dev".into(),
            records,
        }
    }

    #[test]
    fn haversine_reference_values() {
        let o = LatLon::new(0.0, 0.0);
        assert_eq!(haversine_km(o, o), 0.0);
        // R * pi / 180
        let one_degree = EARTH_RADIUS_KM * std::f64::consts::PI / 180.0;
        assert!((haversine_km(o, LatLon::new(0.0, 1.0)) - one_degree).abs() < 1e-9);
        assert!((haversine_km(o, LatLon::new(0.0, 1.0)) - 111.195).abs() < 0.001);
        let half = EARTH_RADIUS_KM * std::f64::consts::PI;
        assert!((haversine_km(o, LatLon::new(0.0, 180.0)) - half).abs() < 1e-6);
        assert!((haversine_km(o, LatLon::new(0.0, 180.0)) - 20015.09).abs() < 0.01);
    }

    #[test]
    fn single_record_summary() {
        let s = device_summary(&track(vec![rec(1_000, 1.0, 2.0)])).unwrap();
        assert_eq!(
            (s.distance_km, s.records, s.unique_locations, s.days_active),
            (0.0, 1, 1, 1)
        );
        assert_eq!(device_summary(&track(vec![])), Err(MetricsError::EmptyTrack));
    }

    #[test]
    fn equatorial_degree_summary() {
        let s = device_summary(&track(vec![rec(1_000, 0.0, 0.0), rec(2_000, 0.0, 1.0)])).unwrap();
        assert!((s.distance_km - 111.195).abs() < 0.001);
        assert_eq!((s.unique_locations, s.days_active), (2, 1));
    }

    #[test]
    fn revisits_count_both_legs_but_one_location() {
        let s = device_summary(&track(vec![
            rec(1_000, 0.0, 0.0),
            rec(2_000, 0.0, 1.0),
            rec(MS_PER_DAY + 5, 0.0, 0.0),
        ]))
        .unwrap();
        assert_eq!(s.unique_locations, 2);
        assert!((s.distance_km - 2.0 * 111.195).abs() < 0.002);
        assert_eq!(s.days_active, 2);
    }

    #[test]
    fn reference_fleet_frequency_cells() {
        let r = FrequencyReport::from_counts(19_629, 18, 7 * MS_PER_DAY as u64).unwrap();
        let rows = r.display_rows();
        let cells: Vec<(&str, &str)> = rows.iter().map(|(_, a, b)| (a.as_str(), b.as_str())).collect();
        assert_eq!(
            cells,
            vec![("19629", "1091"), ("2804", "156"), ("117", "6.5"), ("1.95", "0.11")]
        );
    }

    #[test]
    fn frequency_small_cases() {
        let r = FrequencyReport::from_counts(24, 1, MS_PER_DAY as u64).unwrap();
        assert_eq!(r.per_hour, Ratio::from_integer(1));
        let zero = FrequencyReport::from_counts(0, 3, 1000).unwrap();
        assert_eq!(zero.per_day, Ratio::from_integer(0));
        assert_eq!(zero.per_minute, Ratio::from_integer(0));
        assert_eq!(FrequencyReport::from_counts(5, 1, 0), Err(MetricsError::EmptyWindow));
        assert_eq!(frequency_report(&[], 1000), Err(MetricsError::NoDevices));
    }

    #[test]
    fn frequency_rates_are_exactly_consistent() {
        for (total, devices, window) in [(19_629u64, 18u64, 604_800_000u64), (7, 3, 123_457), (1, 1, 1)] {
            let r = FrequencyReport::from_counts(total, devices, window).unwrap();
            assert_eq!(r.per_minute * 60, r.per_hour);
            assert_eq!(r.per_hour * 24, r.per_day);
            for (_, overall, tracker) in r.rows() {
                assert_eq!(tracker * u128::from(devices), overall);
            }
        }
    }

    #[test]
    fn rational_display_rounding() {
        assert_eq!(display_rational(Ratio::new(21, 2), 0), "11");
        assert_eq!(display_rational(Ratio::new(1, 20), 1), "0.1");
        assert_eq!(display_rational(Ratio::new(1, 200), 2), "0.01");
        assert_eq!(display_rational(Ratio::new(3, 1), 2), "3.00");
    }

    #[test]
    fn stationary_track_is_one_dwell() {
        let t = track((0..=60).map(|m| rec(m * 60_000, 35.0, -86.0)).collect());
        let segs = dwell_segments(&t, 0.5, 10.0);
        assert_eq!(segs.len(), 1);
        assert_eq!((segs[0].start_ms, segs[0].end_ms), (0, 3_600_000));
        assert!(segs[0].radius_m < 1e-6);
    }

    #[test]
    fn moving_track_has_no_dwell() {
        let t = synth::constant_speed_track("dev", "Dev", 0, 50.0, 120, 60_000);
        assert!(dwell_segments(&t, 0.5, 10.0).is_empty());
    }

    #[test]
    fn stop_drive_stop() {
        let t = synth::stop_drive_stop_track();
        let segs = dwell_segments(&t, 0.5, 10.0);
        let bounds: Vec<(i64, i64)> = segs.iter().map(|s| (s.start_ms, s.end_ms)).collect();
        let base = t.records[0].timestamp_ms;
        let m = |x: i64| base + x * 60_000;
        assert_eq!(bounds, vec![(m(0), m(10)), (m(30), m(45))]);
    }

    #[test]
    fn detour_ratio_cases() {
        let straight = track(vec![rec(0, 0.0, 0.0), rec(1, 0.0, 0.5)]);
        assert!((detour_ratio(&straight, &[(0, 1)])[0].clone().unwrap() - 1.0).abs() < 1e-12);

        let hub = synth::hub_detour_track();
        let span = (hub.records[0].timestamp_ms, hub.records.last().unwrap().timestamp_ms);
        let ratio = detour_ratio(&hub, &[span])[0].clone().unwrap();
        assert!((ratio - 21.0).abs() < 1e-6, "{ratio}");

        let round_trip = track(vec![rec(0, 0.0, 0.0), rec(1, 0.0, 0.5), rec(2, 0.0, 0.0)]);
        assert_eq!(detour_ratio(&round_trip, &[(0, 2)])[0], Err(MetricsError::DegenerateOD));
        assert_eq!(
            detour_ratio(&round_trip, &[(10, 20)])[0],
            Err(MetricsError::DegenerateOD)
        );
    }

    #[test]
    fn speed_profile_cases() {
        let t = synth::constant_speed_track("dev", "Dev", 0, 48.0, 240, 60_000);
        let p = speed_profile(&t, 30.0);
        assert!(!p.bins.is_empty());
        for b in &p.bins {
            assert!((b.mean_kmh - 48.0).abs() < 0.1, "{b:?}");
        }
        let still = track((0..10).map(|m| rec(m * 60_000, 1.0, 1.0)).collect());
        assert!(speed_profile(&still, 5.0).bins.iter().all(|b| b.mean_kmh == 0.0));
        assert!(speed_profile(&track(vec![rec(0, 0.0, 0.0)]), 5.0).bins.is_empty());
        let dup = track(vec![rec(0, 0.0, 0.0), rec(0, 0.0, 0.1), rec(60_000, 0.0, 0.2)]);
        let p = speed_profile(&dup, 5.0);
        assert_eq!(p.skipped_pairs, 1);
        assert!(p.warning().is_some());
    }

    #[test]
    fn accuracy_filter_keeps_unknown_accuracy() {
        let mut a = rec(0, 0.0, 0.0);
        a.horizontal_accuracy = Some(500.0);
        let mut b = rec(1, 0.0, 0.0);
        b.horizontal_accuracy = Some(5.0);
        let c = rec(2, 0.0, 0.0);
        let filtered = filter_horizontal_accuracy(&[track(vec![a, b, c])], 50.0);
        assert_eq!(filtered[0].records.len(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn point() -> impl Strategy<Value = LatLon> {
            (-90.0f64..=90.0, -180.0f64..=180.0).prop_map(|(lat, lon)| LatLon::new(lat, lon))
        }

        proptest! {
            #[test]
            fn triangle_inequality(a in point(), b in point(), c in point()) {
                prop_assert!(haversine_km(a, c) <= haversine_km(a, b) + haversine_km(b, c) + 1e-9);
            }

            #[test]
            fn detour_ratio_at_least_one(pts in proptest::collection::vec((-60.0f64..60.0, -100.0f64..100.0), 2..20)) {
                let t = track(pts.iter().enumerate().map(|(i, (la, lo))| rec(i as i64 * 1000, *la, *lo)).collect());
                if let Ok(r) = &detour_ratio(&t, &[(0, i64::MAX)])[0] {
                    prop_assert!(*r >= 1.0 - 1e-9);
                }
            }

            #[test]
            fn dwell_segments_are_ordered_and_disjoint(
                steps in proptest::collection::vec((0i64..5, 1i64..600_000), 2..80)
            ) {
                let mut ts = 0;
                let mut lon = 0.0;
                let recs: Vec<TraceRecord> = steps.iter().map(|(moving, dt)| {
                    ts += dt;
                    if *moving > 2 { lon += 0.01; }
                    rec(ts, 10.0, lon)
                }).collect();
                let t = track(recs);
                let segs = dwell_segments(&t, 0.5, 10.0);
                let (first, last) = (t.records[0].timestamp_ms, t.records.last().unwrap().timestamp_ms);
                for s in &segs {
                    prop_assert!(s.end_ms > s.start_ms);
                    prop_assert!(s.start_ms >= first && s.end_ms <= last);
                }
                for w in segs.windows(2) {
                    prop_assert!(w[0].end_ms < w[1].start_ms);
                }
            }

            #[test]
            fn distance_ignores_duplicates(n in 2usize..30, dup in 0usize..30) {
                let recs: Vec<TraceRecord> = (0..n).map(|i| rec(i as i64 * 1000, i as f64 * 0.01, 0.0)).collect();
                let base = device_summary(&crate::ingest::build_tracks(recs.clone())[0]).unwrap();
                let mut with_dup = recs.clone();
                with_dup.insert(0, recs[dup % n].clone());
                let again = device_summary(&crate::ingest::build_tracks(with_dup)[0]).unwrap();
                prop_assert_eq!(base.distance_km, again.distance_km);
            }
        }
    }
}
