//! Synthetic tracks and `items.data` snapshots for tests and demos.

use serde_json::{json, Value};

use crate::engine::RngStream;
use crate::ingest::{build_tracks, Battery, DeviceTrack, TraceRecord};
use crate::metrics::EARTH_RADIUS_KM;
use crate::KM_PER_MILE;

/// 2024-12-01T00:00:00Z.
pub const EPOCH_MS: i64 = 1_733_011_200_000;
pub const DAY_MS: i64 = 86_400_000;

pub const EXPLORERS: [&str; 18] = [
    "Amelia Earhart",
    "Amerigo Vespucci",
    "Gulliver",
    "Indiana Jones",
    "Jack Sparrow",
    "Jacques Cousteau",
    "Jane Goodall",
    "King Arthur",
    "Kubla Khan",
    "Lara Croft",
    "Leif Erikson",
    "Marco Polo",
    "Meriwether Lewis",
    "Roald Amundsen",
    "Sir Edmund Hillary",
    "Ferdinand Magellan",
    "Ibn Battuta",
    "Zheng He",
];

pub fn record(key: &str, name: &str, timestamp_ms: i64, lat: f64, lon: f64) -> TraceRecord {
    TraceRecord {
        device_key: key.to_string(),
        name: name.to_string(),
        latitude: lat,
        longitude: lon,
        altitude: None,
        horizontal_accuracy: None,
        vertical_accuracy: None,
        timestamp_ms,
        battery: None,
        floor_level: None,
    }
}

fn km_to_degrees(km: f64) -> f64 {
    (km / EARTH_RADIUS_KM).to_degrees()
}

/// Eastward along the equator at a constant speed.
pub fn constant_speed_track(
    key: &str,
    name: &str,
    start_ms: i64,
    speed_kmh: f64,
    fixes: usize,
    interval_ms: i64,
) -> DeviceTrack {
    let step_km = speed_kmh * interval_ms as f64 / 3_600_000.0;
    let records = (0..fixes)
        .map(|k| {
            record(
                key,
                name,
                start_ms + k as i64 * interval_ms,
                0.0,
                km_to_degrees(step_km * k as f64),
            )
        })
        .collect();
    DeviceTrack {
        device_key: key.to_string(),
        name: name.to_string(),
        records,
    }
}

/// One-minute fixes: halt 10 min, drive 20 min, halt 15 min.
pub fn stop_drive_stop_track() -> DeviceTrack {
    let (lat, lon0): (f64, f64) = (34.7304, -86.5861);
    let drive_km = 15.0;
    let mut records = Vec::new();
    for minute in 0..=45i64 {
        let progress = ((minute - 10) as f64 / 20.0).clamp(0.0, 1.0);
        let lon = lon0 + km_to_degrees(drive_km * progress) / lat.to_radians().cos();
        records.push(record("commuter", "Commuter", EPOCH_MS + minute * 60_000, lat, lon));
    }
    DeviceTrack {
        device_key: "commuter".into(),
        name: "Commuter".into(),
        records,
    }
}

/// Spoke A to a hub 50 mi north, back to A, then 5 mi east to spoke B.
pub fn hub_detour_track() -> DeviceTrack {
    let d_s = km_to_degrees(5.0 * KM_PER_MILE);
    let d_h = km_to_degrees(50.0 * KM_PER_MILE);
    let hour = 3_600_000;
    let records = vec![
        record("parcel", "Parcel", EPOCH_MS, 0.0, 0.0),
        record("parcel", "Parcel", EPOCH_MS + hour, d_h, 0.0),
        record("parcel", "Parcel", EPOCH_MS + 2 * hour, 0.0, 0.0),
        record("parcel", "Parcel", EPOCH_MS + 3 * hour, 0.0, d_s),
    ];
    DeviceTrack {
        device_key: "parcel".into(),
        name: "Parcel".into(),
        records,
    }
}

/// `total` records spread as evenly as possible over `devices` devices
/// (one per [`EXPLORERS`] name, cycling) and `days` days, each device on a
/// seeded random walk around Huntsville, AL. Timestamps are distinct per
/// device, so no record is a duplicate.
pub fn fleet_records(total: usize, devices: usize, days: i64, seed: u64) -> Vec<TraceRecord> {
    let mut out = Vec::with_capacity(total);
    let window = days * DAY_MS;
    for d in 0..devices {
        let n = total / devices + usize::from(d < total % devices);
        let key = format!("SN{:04}", d);
        let name = EXPLORERS[d % EXPLORERS.len()];
        let mut rng = RngStream::new(seed, d as u64);
        let (mut lat, mut lon) = (34.7304, -86.5861);
        for k in 0..n {
            let ts = EPOCH_MS + (k as i64 * window) / n as i64;
            if rng.uniform_open() < 0.6 {
                lat += (rng.uniform_open() - 0.5) * 0.02;
                lon += (rng.uniform_open() - 0.5) * 0.02;
            }
            let mut r = record(&key, name, ts, round6(lat), round6(lon));
            r.horizontal_accuracy = Some((rng.uniform_open() * 100.0).round());
            r.battery = Some(Battery::Level((100.0 - k as f64 * 50.0 / n as f64).round() / 100.0));
            out.push(r);
        }
    }
    out
}

fn round6(v: f64) -> f64 {
    (v * 1e6).round() / 1e6
}

/// The 18-device, 7-day, 19,629-record fleet.
pub fn reference_fleet() -> Vec<DeviceTrack> {
    build_tracks(fleet_records(19_629, 18, 7, 2024))
}

fn item_json(r: &TraceRecord) -> Value {
    let mut location = json!({
        "latitude": r.latitude,
        "longitude": r.longitude,
        "timeStamp": r.timestamp_ms,
        "positionType": "crowdsourced",
        "isOld": false,
    });
    let loc = location.as_object_mut().expect("object literal");
    if let Some(a) = r.altitude {
        loc.insert("altitude".into(), json!(a));
    }
    if let Some(a) = r.horizontal_accuracy {
        loc.insert("horizontalAccuracy".into(), json!(a));
    }
    if let Some(a) = r.vertical_accuracy {
        loc.insert("verticalAccuracy".into(), json!(a));
    }
    if let Some(f) = r.floor_level {
        loc.insert("floorLevel".into(), json!(f));
    }
    let mut item = json!({
        "name": r.name,
        "serialNumber": r.device_key,
        "productType": {"type": "b389"},
        "location": location,
    });
    match &r.battery {
        Some(Battery::Level(v)) => {
            item["batteryLevel"] = json!(v);
        }
        Some(Battery::Status(s)) => {
            item["batteryStatus"] = json!(s);
        }
        None => {}
    }
    item
}

/// An `items.data` array holding one item per record.
pub fn items_data_json(records: &[TraceRecord]) -> String {
    let items: Vec<Value> = records.iter().map(item_json).collect();
    serde_json::to_string_pretty(&Value::Array(items)).expect("serializable")
}

/// Snapshot `k` holds each device's latest fix at or before the `k`-th of
/// `count` evenly spaced instants across the tracks' span.
pub fn snapshots(tracks: &[DeviceTrack], count: usize) -> Vec<String> {
    let all = tracks.iter().flat_map(|t| &t.records).map(|r| r.timestamp_ms);
    let (lo, hi) = all.fold((i64::MAX, i64::MIN), |(a, b), t| (a.min(t), b.max(t)));
    (1..=count)
        .map(|k| {
            let cut = lo + (hi - lo) * k as i64 / count as i64;
            let latest: Vec<TraceRecord> = tracks
                .iter()
                .filter_map(|t| t.records.iter().rev().find(|r| r.timestamp_ms <= cut).cloned())
                .collect();
            items_data_json(&latest)
        })
        .collect()
}
