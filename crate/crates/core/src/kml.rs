//! KML 2.2 output: one folder per device track, or a scenario layout.
//!
//! Output is UTF-8 with LF line endings and two-space indentation, and is a
//! pure function of its input.

use std::fmt::Write as _;

use crate::ingest::DeviceTrack;
use crate::metrics::LatLon;
use crate::model::NetworkConfig;

const KML_NS: &str = "http://www.opengis.net/kml/2.2";

/// Line colours in KML `aabbggrr` order.
const PALETTE: [&str; 8] = [
    "ff0000ff", "ff00a5ff", "ff00ffff", "ff00ff00", "ffff0000", "ff82004b", "ffee82ee", "ff808080",
];

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

struct Doc {
    out: String,
    depth: usize,
}

impl Doc {
    fn new(name: &str) -> Self {
        let mut d = Doc {
            out: String::from("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"),
            depth: 0,
        };
        d.open(&format!("kml xmlns=\"{KML_NS}\""));
        d.open("Document");
        d.leaf("name", name);
        d
    }

    fn line(&mut self, s: &str) {
        for _ in 0..self.depth {
            self.out.push_str("  ");
        }
        self.out.push_str(s);
        self.out.push('\n');
    }

    fn open(&mut self, tag: &str) {
        self.line(&format!("<{tag}>"));
        self.depth += 1;
    }

    fn close(&mut self, tag: &str) {
        self.depth -= 1;
        self.line(&format!("</{tag}>"));
    }

    fn leaf(&mut self, tag: &str, text: &str) {
        self.line(&format!("<{tag}>{}</{tag}>", escape(text)));
    }

    fn style(&mut self, id: &str, color: &str) {
        self.open(&format!("Style id=\"{id}\""));
        self.open("LineStyle");
        self.leaf("color", color);
        self.leaf("width", "2");
        self.close("LineStyle");
        self.open("IconStyle");
        self.leaf("color", color);
        self.close("IconStyle");
        self.close("Style");
    }

    fn placemark(&mut self, name: &str, style: Option<&str>, geometry: Geometry<'_>) {
        self.open("Placemark");
        self.leaf("name", name);
        if let Some(style) = style {
            self.leaf("styleUrl", &format!("#{style}"));
        }
        match geometry {
            Geometry::Line(coords) => {
                self.open("LineString");
                self.leaf("tessellate", "1");
                self.leaf("coordinates", &coords.join(" "));
                self.close("LineString");
            }
            Geometry::Point(coord) => {
                self.open("Point");
                self.leaf("coordinates", coord);
                self.close("Point");
            }
        }
        self.close("Placemark");
    }

    fn finish(mut self) -> String {
        self.close("Document");
        self.close("kml");
        self.out
    }
}

enum Geometry<'a> {
    Line(&'a [String]),
    Point(&'a str),
}

fn coord(lat: f64, lon: f64, alt: Option<f64>) -> String {
    match alt {
        Some(a) => format!("{lon},{lat},{a}"),
        None => format!("{lon},{lat}"),
    }
}

/// One folder per track, ordered by device key: a chronological LineString
/// plus a Point at the last fix. Altitude is written only when every fix of
/// the track has one.
pub fn tracks_to_kml(tracks: &[DeviceTrack]) -> String {
    let mut sorted: Vec<&DeviceTrack> = tracks.iter().collect();
    sorted.sort_by(|a, b| a.device_key.cmp(&b.device_key));

    let mut doc = Doc::new("Tracked items");
    for (k, _) in sorted.iter().enumerate() {
        doc.style(&format!("track-{k}"), PALETTE[k % PALETTE.len()]);
    }
    for (k, track) in sorted.iter().enumerate() {
        let style = format!("track-{k}");
        let mut records = track.records.clone();
        records.sort_by_key(|r| r.timestamp_ms);
        let with_alt = !records.is_empty() && records.iter().all(|r| r.altitude.is_some());
        let coords: Vec<String> = records
            .iter()
            .map(|r| coord(r.latitude, r.longitude, r.altitude.filter(|_| with_alt)))
            .collect();

        doc.open("Folder");
        doc.leaf("name", &track.name);
        doc.leaf(
            "description",
            &format!("device {}, {} fixes", track.device_key, records.len()),
        );
        if !coords.is_empty() {
            doc.placemark(&format!("{} path", track.name), Some(&style), Geometry::Line(&coords));
            doc.placemark(&track.name, Some(&style), Geometry::Point(&coords[coords.len() - 1]));
        }
        doc.close("Folder");
    }
    doc.finish()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScenarioPlacement {
    pub alpha: LatLon,
    pub beta: LatLon,
    pub hub: LatLon,
}

/// Alpha, Beta and Hub placemarks plus the direct and via-hub routes.
pub fn scenario_to_kml(config: &NetworkConfig, placement: &ScenarioPlacement) -> String {
    let c = |p: LatLon| coord(p.lat, p.lon, None);
    let mut doc = Doc::new("Hub-spoke scenario");
    let mut desc = String::new();
    let _ = write!(
        desc,
        "d_s {} km, d_h {} km, speed {} km/h, policy {}",
        config.d_s_km, config.d_h_km, config.speed_kmh, config.policy
    );
    doc.leaf("description", &desc);
    doc.style("direct", PALETTE[3]);
    doc.style("via-hub", PALETTE[0]);
    doc.style("site", PALETTE[7]);

    doc.open("Folder");
    doc.leaf("name", "Sites");
    for (name, p) in [
        ("Alpha", placement.alpha),
        ("Beta", placement.beta),
        ("Hub", placement.hub),
    ] {
        doc.placemark(name, Some("site"), Geometry::Point(&c(p)));
    }
    doc.close("Folder");

    doc.open("Folder");
    doc.leaf("name", "Direct route");
    doc.placemark(
        "Alpha-Beta",
        Some("direct"),
        Geometry::Line(&[c(placement.alpha), c(placement.beta)]),
    );
    doc.close("Folder");

    doc.open("Folder");
    doc.leaf("name", "Via-hub route");
    doc.placemark(
        "Alpha-Hub-Beta",
        Some("via-hub"),
        Geometry::Line(&[c(placement.alpha), c(placement.hub), c(placement.beta)]),
    );
    doc.close("Folder");
    doc.finish()
}
