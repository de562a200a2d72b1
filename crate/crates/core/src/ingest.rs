//! Find My `items.data` ingestion.
//!
//! The cache only ever holds each device's latest fix, so history is built by
//! merging many snapshots of it. Parsing is tolerant: fields may be nested
//! (`location.latitude`) or flattened (`location|latitude`), unknown fields
//! are ignored, and per-item problems become warnings instead of errors.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde_json::{Map, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("document contains no items")]
    EmptyDocument,
    #[error("path not found: {}", .0.display())]
    PathNotFound(PathBuf),
    #[error("invalid file pattern {pattern:?}: {reason}")]
    BadPattern { pattern: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("normalized CSV line {line}: {reason}")]
    BadCsv { line: u64, reason: String },
    #[error("worker pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Battery {
    /// Charge fraction.
    Level(f64),
    /// Opaque status code or label.
    Status(String),
}

impl fmt::Display for Battery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Battery::Level(v) => write!(f, "{v}"),
            Battery::Status(s) => write!(f, "status:{s}"),
        }
    }
}

impl Battery {
    fn parse(text: &str) -> Battery {
        match text.strip_prefix("status:") {
            Some(s) => Battery::Status(s.to_string()),
            None => text
                .parse()
                .map(Battery::Level)
                .unwrap_or_else(|_| Battery::Status(text.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub device_key: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: Option<f64>,
    pub horizontal_accuracy: Option<f64>,
    pub vertical_accuracy: Option<f64>,
    /// UTC epoch milliseconds.
    pub timestamp_ms: i64,
    pub battery: Option<Battery>,
    pub floor_level: Option<i64>,
}

/// Decimal places kept when comparing positions.
pub const COORD_DECIMALS: i32 = 6;

/// Position rounded to [`COORD_DECIMALS`], as integers.
pub fn position_key(lat: f64, lon: f64) -> (i64, i64) {
    let scale = 10f64.powi(COORD_DECIMALS);
    ((lat * scale).round() as i64, (lon * scale).round() as i64)
}

impl TraceRecord {
    pub fn position_key(&self) -> (i64, i64) {
        position_key(self.latitude, self.longitude)
    }

    fn dedup_key(&self) -> (i64, i64, i64) {
        let (lat, lon) = self.position_key();
        (self.timestamp_ms, lat, lon)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeviceTrack {
    pub device_key: String,
    pub name: String,
    /// Sorted by timestamp, exact duplicates removed.
    pub records: Vec<TraceRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IngestWarning {
    pub item: Option<usize>,
    pub device: Option<String>,
    pub message: String,
}

impl fmt::Display for IngestWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(i) = self.item {
            write!(f, "item {i}")?;
            if let Some(d) = &self.device {
                write!(f, " ({d})")?;
            }
            write!(f, ": ")?;
        }
        f.write_str(&self.message)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedDocument {
    pub records: Vec<TraceRecord>,
    pub warnings: Vec<IngestWarning>,
}

/// Looks up `group.field` nested, then `group|field` flattened.
fn lookup<'a>(item: &'a Map<String, Value>, group: &str, field: &str) -> Option<&'a Value> {
    item.get(group)
        .and_then(Value::as_object)
        .and_then(|g| g.get(field))
        .or_else(|| item.get(&format!("{group}|{field}")))
        .filter(|v| !v.is_null())
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().parse().ok(),
        _ => None,
    }
    .filter(|x: &f64| x.is_finite())
}

fn text(v: &Value) -> Option<String> {
    match v {
        Value::String(s) if !s.trim().is_empty() => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Epoch milliseconds from a number or a string (digits or RFC 3339).
pub fn parse_timestamp(v: &Value) -> Option<i64> {
    let ms = match v {
        Value::Number(n) => n
            .as_i64()
            .or_else(|| n.as_f64().filter(|f| f.fract() == 0.0).map(|f| f as i64)),
        Value::String(s) => {
            let s = s.trim();
            s.parse::<i64>().ok().or_else(|| {
                chrono::DateTime::parse_from_rfc3339(s)
                    .ok()
                    .map(|dt| dt.timestamp_millis())
            })
        }
        _ => None,
    }?;
    (ms > 0).then_some(ms)
}

fn location_present(item: &Map<String, Value>) -> bool {
    item.get("location").is_some_and(|v| !v.is_null()) || item.keys().any(|k| k.starts_with("location|"))
}

fn looks_like_item(obj: &Map<String, Value>) -> bool {
    location_present(obj)
        || ["name", "serialNumber", "deviceDiscoveryId"]
            .iter()
            .any(|k| obj.contains_key(*k))
}

fn items_of(doc: &Value) -> Result<Vec<&Value>, IngestError> {
    let items: Vec<&Value> = match doc {
        Value::Array(items) => items.iter().collect(),
        Value::Object(obj) => {
            if let Some(Value::Array(items)) = obj.get("items") {
                items.iter().collect()
            } else if looks_like_item(obj) {
                vec![doc]
            } else {
                obj.values()
                    .find_map(|v| match v {
                        Value::Array(a) if a.iter().any(Value::is_object) => Some(a.iter().collect()),
                        _ => None,
                    })
                    .unwrap_or_default()
            }
        }
        _ => Vec::new(),
    };
    if items.is_empty() {
        Err(IngestError::EmptyDocument)
    } else {
        Ok(items)
    }
}

fn parse_item(index: usize, value: &Value) -> Result<TraceRecord, IngestWarning> {
    let warn = |device: Option<String>, message: &str| IngestWarning {
        item: Some(index),
        device,
        message: message.to_string(),
    };
    let Some(item) = value.as_object() else {
        return Err(warn(None, "not a JSON object"));
    };
    let name = item.get("name").and_then(text);
    let device_key = ["serialNumber", "deviceDiscoveryId"]
        .iter()
        .find_map(|k| item.get(*k).and_then(text))
        .or_else(|| name.clone());
    let Some(device_key) = device_key else {
        return Err(warn(None, "no serialNumber, deviceDiscoveryId or name"));
    };
    let label = Some(name.clone().unwrap_or_else(|| device_key.clone()));
    if !location_present(item) {
        return Err(warn(label, "no location"));
    }
    let loc = |field| lookup(item, "location", field);
    let latitude = loc("latitude").and_then(number).filter(|v| (-90.0..=90.0).contains(v));
    let longitude = loc("longitude")
        .and_then(number)
        .filter(|v| (-180.0..=180.0).contains(v));
    let (Some(latitude), Some(longitude)) = (latitude, longitude) else {
        return Err(warn(label, "location lacks a valid latitude/longitude"));
    };
    let Some(timestamp_ms) = loc("timeStamp").or_else(|| loc("timestamp")).and_then(parse_timestamp) else {
        return Err(warn(label, "location lacks a valid timestamp"));
    };
    let accuracy = |field| loc(field).and_then(number).filter(|v| *v >= 0.0);
    let battery = item
        .get("batteryLevel")
        .and_then(number)
        .map(Battery::Level)
        .or_else(|| item.get("batteryStatus").and_then(text).map(Battery::Status));
    let floor_level = loc("floorLevel")
        .and_then(number)
        .filter(|f| f.fract() == 0.0)
        .map(|f| f as i64);
    Ok(TraceRecord {
        name: name.unwrap_or_else(|| device_key.clone()),
        device_key,
        latitude,
        longitude,
        altitude: loc("altitude").and_then(number),
        horizontal_accuracy: accuracy("horizontalAccuracy"),
        vertical_accuracy: accuracy("verticalAccuracy"),
        timestamp_ms,
        battery,
        floor_level,
    })
}

/// Parses one `items.data` document.
pub fn parse_items_data(document: &str) -> Result<ParsedDocument, IngestError> {
    let doc: Value = serde_json::from_str(document).map_err(|e| IngestError::MalformedJson(e.to_string()))?;
    let mut parsed = ParsedDocument::default();
    for (index, item) in items_of(&doc)?.into_iter().enumerate() {
        match parse_item(index, item) {
            Ok(record) => parsed.records.push(record),
            Err(w) => parsed.warnings.push(w),
        }
    }
    Ok(parsed)
}

/// Groups records per device, orders them by time and drops exact
/// duplicates (same timestamp and rounded position). Among equal timestamps
/// the first-seen record comes first. Tracks are ordered by device key; each
/// track takes the name of its latest record.
pub fn build_tracks(records: impl IntoIterator<Item = TraceRecord>) -> Vec<DeviceTrack> {
    let mut groups: BTreeMap<String, Vec<TraceRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(r.device_key.clone()).or_default().push(r);
    }
    groups
        .into_iter()
        .map(|(device_key, mut records)| {
            records.sort_by_key(|r| r.timestamp_ms);
            let mut seen = HashSet::new();
            records.retain(|r| seen.insert(r.dedup_key()));
            let name = records.last().map(|r| r.name.clone()).unwrap_or_default();
            DeviceTrack {
                device_key,
                name,
                records,
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct FileReport {
    pub path: PathBuf,
    pub records: usize,
    pub warnings: Vec<IngestWarning>,
    /// Set when the file could not be read or parsed at all.
    pub error: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub files: Vec<FileReport>,
}

impl IngestReport {
    pub fn total_records(&self) -> usize {
        self.files.iter().map(|f| f.records).sum()
    }

    pub fn failed_files(&self) -> impl Iterator<Item = &FileReport> {
        self.files.iter().filter(|f| f.error.is_some())
    }
}

impl fmt::Display for IngestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "ingested {} file(s), {} record(s)",
            self.files.len(),
            self.total_records()
        )?;
        for file in &self.files {
            let path = file.path.display();
            match &file.error {
                Some(e) => writeln!(f, "warning: {path}: skipped: {e}")?,
                None => writeln!(f, "{path}: {} record(s)", file.records)?,
            }
            for w in &file.warnings {
                writeln!(f, "warning: {path}: {w}")?;
            }
        }
        Ok(())
    }
}

fn matching_files(path: &Path, pattern: &glob::Pattern) -> Result<Vec<PathBuf>, IngestError> {
    if !path.exists() {
        return Err(IngestError::PathNotFound(path.to_path_buf()));
    }
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let io = |source| IngestError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut files = Vec::new();
    for entry in std::fs::read_dir(path).map_err(io)? {
        let p = entry.map_err(io)?.path();
        let matches = p.file_name().is_some_and(|n| pattern.matches(&n.to_string_lossy()));
        if p.is_file() && matches {
            files.push(p);
        }
    }
    Ok(files)
}

fn parse_file(path: &Path) -> (FileReport, Vec<TraceRecord>) {
    let result = std::fs::read_to_string(path)
        .map_err(|e| e.to_string())
        .and_then(|text| parse_items_data(&text).map_err(|e| e.to_string()));
    match result {
        Ok(parsed) => (
            FileReport {
                path: path.to_path_buf(),
                records: parsed.records.len(),
                warnings: parsed.warnings,
                error: None,
            },
            parsed.records,
        ),
        Err(e) => (
            FileReport {
                path: path.to_path_buf(),
                records: 0,
                warnings: Vec::new(),
                error: Some(e),
            },
            Vec::new(),
        ),
    }
}

/// Default pattern for snapshot files inside a directory.
pub const DEFAULT_PATTERN: &str = "*";

/// Ingests files and directories. Directories contribute their direct
/// children whose names match `pattern`; files are taken as given. Files are
/// merged in path order, so the argument order does not affect the result.
/// Unreadable or unparseable files are recorded in the report and skipped.
pub fn ingest_paths<P: AsRef<Path>>(
    paths: &[P],
    pattern: &str,
    workers: usize,
) -> Result<(Vec<DeviceTrack>, IngestReport), IngestError> {
    let glob = glob::Pattern::new(pattern).map_err(|e| IngestError::BadPattern {
        pattern: pattern.to_string(),
        reason: e.to_string(),
    })?;
    let mut files = Vec::new();
    for p in paths {
        files.extend(matching_files(p.as_ref(), &glob)?);
    }
    files.sort();
    files.dedup();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| IngestError::Pool(e.to_string()))?;
    let parsed: Vec<(FileReport, Vec<TraceRecord>)> =
        pool.install(|| files.par_iter().map(|f| parse_file(f)).collect());

    let mut report = IngestReport::default();
    let mut records = Vec::new();
    for (file, recs) in parsed {
        report.files.push(file);
        records.extend(recs);
    }
    Ok((build_tracks(records), report))
}

/// Ingests every file in `dir` whose name matches `pattern`.
pub fn ingest_directory(dir: &Path, pattern: &str) -> Result<(Vec<DeviceTrack>, IngestReport), IngestError> {
    ingest_paths(&[dir], pattern, 1)
}

pub const NORMALIZED_CSV_HEADER: &str = "device_key,name,timestamp_ms,lat,lon,alt_m,h_acc_m,v_acc_m,battery,floor";

pub fn write_normalized_csv<W: Write>(out: W, tracks: &[DeviceTrack]) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(NORMALIZED_CSV_HEADER.split(','))?;
    fn opt<T: ToString>(v: &Option<T>) -> String {
        v.as_ref().map(T::to_string).unwrap_or_default()
    }
    for r in tracks.iter().flat_map(|t| &t.records) {
        w.write_record([
            r.device_key.clone(),
            r.name.clone(),
            r.timestamp_ms.to_string(),
            r.latitude.to_string(),
            r.longitude.to_string(),
            opt(&r.altitude),
            opt(&r.horizontal_accuracy),
            opt(&r.vertical_accuracy),
            opt(&r.battery),
            opt(&r.floor_level),
        ])?;
    }
    w.flush()
}

/// Reads a normalized CSV back into records (file order).
pub fn read_normalized_csv<R: Read>(input: R) -> Result<Vec<TraceRecord>, IngestError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let headers = rdr
        .headers()
        .map_err(|e| IngestError::BadCsv {
            line: 1,
            reason: e.to_string(),
        })?
        .clone();
    if !headers.is_empty() && headers.iter().collect::<Vec<_>>().join(",") != NORMALIZED_CSV_HEADER {
        return Err(IngestError::BadCsv {
            line: 1,
            reason: format!("expected header {NORMALIZED_CSV_HEADER:?}"),
        });
    }
    let mut records = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| IngestError::BadCsv {
            line: e.position().map_or(0, |p| p.line()),
            reason: e.to_string(),
        })?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |field: &str| IngestError::BadCsv {
            line,
            reason: format!("bad {field}"),
        };
        let field = |i: usize| row.get(i).unwrap_or("");
        fn optional<T: std::str::FromStr>(s: &str) -> Result<Option<T>, ()> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|_| ())
            }
        }
        records.push(TraceRecord {
            device_key: field(0).to_string(),
            name: field(1).to_string(),
            timestamp_ms: field(2).parse().map_err(|_| bad("timestamp_ms"))?,
            latitude: field(3).parse().map_err(|_| bad("lat"))?,
            longitude: field(4).parse().map_err(|_| bad("lon"))?,
            altitude: optional(field(5)).map_err(|_| bad("alt_m"))?,
            horizontal_accuracy: optional(field(6)).map_err(|_| bad("h_acc_m"))?,
            vertical_accuracy: optional(field(7)).map_err(|_| bad("v_acc_m"))?,
            battery: Some(field(8)).filter(|s| !s.is_empty()).map(Battery::parse),
            floor_level: optional(field(9)).map_err(|_| bad("floor"))?,
        });
    }
    Ok(records)
}
