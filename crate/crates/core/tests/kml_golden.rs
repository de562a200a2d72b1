use std::path::PathBuf;

use hubspoke_core::ingest::build_tracks;
use hubspoke_core::kml::{scenario_to_kml, tracks_to_kml, ScenarioPlacement};
use hubspoke_core::metrics::LatLon;
use hubspoke_core::model::NetworkConfig;
use hubspoke_core::synth;

/// Set `BLESS_GOLDEN=1` to rewrite the files after checking a render by hand.
fn check(name: &str, actual: &str) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/golden")
        .join(name);
    if std::env::var_os("BLESS_GOLDEN").is_some() {
        std::fs::write(&path, actual).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert!(expected == actual, "{name} differs from the golden copy");
    roxmltree::Document::parse(actual).unwrap();
}

#[test]
fn fleet_tracks() {
    let tracks = build_tracks(synth::fleet_records(180, 18, 7, 11));
    check("fleet.kml", &tracks_to_kml(&tracks));
}

#[test]
fn scenario_layout() {
    let placement = ScenarioPlacement {
        alpha: LatLon::new(35.5951, -82.5515),
        beta: LatLon::new(35.5951, -82.4629),
        hub: LatLon::new(36.1, -81.8),
    };
    check("scenario.kml", &scenario_to_kml(&NetworkConfig::default(), &placement));
}

#[test]
fn empty_input() {
    check("empty.kml", &tracks_to_kml(&[]));
}
