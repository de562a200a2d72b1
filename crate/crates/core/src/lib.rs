//! Hub-and-spoke delivery networks, simulated and measured.
//!
//! The simulation half models two nearby spokes that exchange mail either
//! directly or through a distant sorting hub:
//!
//! - [`engine`]: a small deterministic discrete-event kernel
//! - [`model`]: the two-spoke/one-hub scenario with an M/M/1 hub
//! - [`cost`]: the analytic cost surface and its critical-cell classifier
//! - [`sweep`]: replicated runs over a `(d_s, d_h)` grid
//!
//! The empirical half works on Find My `items.data` snapshots:
//!
//! - [`ingest`]: tolerant JSON parsing, snapshot merging, normalized CSV
//! - [`metrics`]: per-device summaries, update frequencies, dwell and detour
//! - [`kml`]: KML layers for tracks and for a simulated scenario
//!
//! Internally, distances are kilometres, speeds km/h and times hours.

pub mod config;
pub mod cost;
pub mod engine;
pub mod ingest;
pub mod kml;
pub mod metrics;
pub mod model;
pub mod sweep;
pub mod synth;

/// Exact statute-mile conversion.
pub const KM_PER_MILE: f64 = 1.609344;
