//! Loaders for charger registries, traffic counts and road networks.
//!
//! Schemas:
//!
//! * `chargers.csv`: `id,lat,lon,ports,power_kw`
//! * `traffic.csv`: `id,lat,lon,aadt`
//! * `nodes.csv`: `id,lat,lon`
//! * `edges.csv`: `from,to,length_miles,speed_mph,oneway`
//!
//! Numbers are parsed with Rust's locale-independent parser (`.` decimal separator).
//! Line numbers in errors are 1-based file lines, the header being line 1.

use std::collections::{BTreeMap, HashSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{haversine_miles, GeoPoint};
use crate::road::{RoadError, RoadNetwork};

pub const DEFAULT_PORTS: u32 = 1;
pub const DEFAULT_POWER_KW: f64 = 50.0;
pub const DEFAULT_SPEED_MPH: f64 = 40.0;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column `{0}`")]
    MissingColumn(&'static str),
    #[error("line {line}, column `{column}`: {message}")]
    Parse {
        line: u64,
        column: &'static str,
        message: String,
    },
    #[error("duplicate id `{0}`")]
    DuplicateId(String),
    #[error("edge {from} -> {to} references an unknown node")]
    DanglingEdge { from: String, to: String },
    #[error("invalid geojson: {0}")]
    GeoJson(String),
    #[error(transparent)]
    Road(#[from] RoadError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChargerStation {
    pub id: String,
    pub location: GeoPoint,
    pub ports: u32,
    pub power_kw: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrafficPoint {
    pub id: String,
    pub location: GeoPoint,
    pub aadt: f64,
}

/// Rows that were accepted with substituted defaults.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub defaulted: Vec<DefaultedRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DefaultedRow {
    pub line: u64,
    pub id: String,
    pub column: &'static str,
}

impl LoadReport {
    pub fn warning_count(&self) -> usize {
        self.defaulted.len()
    }
}

fn open(path: &Path) -> Result<File, IngestError> {
    File::open(path).map_err(|source| IngestError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Header-indexed view over one CSV record.
struct Row<'a> {
    record: &'a csv::StringRecord,
    columns: &'a Columns,
    line: u64,
}

struct Columns(BTreeMap<String, usize>);

impl Columns {
    fn new(headers: &csv::StringRecord) -> Self {
        Columns(
            headers
                .iter()
                .enumerate()
                .map(|(i, h)| (h.trim().to_ascii_lowercase(), i))
                .collect(),
        )
    }

    fn require(&self, names: &[&'static str]) -> Result<(), IngestError> {
        match names.iter().find(|n| !self.0.contains_key(**n)) {
            Some(n) => Err(IngestError::MissingColumn(n)),
            None => Ok(()),
        }
    }
}

impl Row<'_> {
    fn raw(&self, column: &'static str) -> Option<&str> {
        self.columns
            .0
            .get(column)
            .and_then(|&i| self.record.get(i))
            .map(str::trim)
            .filter(|s| !s.is_empty())
    }

    fn err(&self, column: &'static str, message: impl Into<String>) -> IngestError {
        IngestError::Parse {
            line: self.line,
            column,
            message: message.into(),
        }
    }

    fn text(&self, column: &'static str) -> Result<String, IngestError> {
        self.raw(column)
            .map(str::to_owned)
            .ok_or_else(|| self.err(column, "missing value"))
    }

    fn number(&self, column: &'static str) -> Result<Option<f64>, IngestError> {
        match self.raw(column) {
            None => Ok(None),
            Some(s) => match s.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(Some(v)),
                _ => Err(self.err(column, format!("`{s}` is not a number"))),
            },
        }
    }

    fn required_number(&self, column: &'static str) -> Result<f64, IngestError> {
        self.number(column)?
            .ok_or_else(|| self.err(column, "missing value"))
    }

    fn location(&self) -> Result<GeoPoint, IngestError> {
        let lat = self.required_number("lat")?;
        let lon = self.required_number("lon")?;
        if !(-90.0..=90.0).contains(&lat) {
            return Err(self.err("lat", format!("latitude {lat} out of range")));
        }
        GeoPoint::new(lat, lon).map_err(|e| self.err("lon", e.to_string()))
    }
}

fn for_each_row<R: Read>(
    reader: R,
    required: &[&'static str],
    mut f: impl FnMut(Row<'_>) -> Result<(), IngestError>,
) -> Result<(), IngestError> {
    let mut csv = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .flexible(true)
        .from_reader(reader);
    let columns = Columns::new(csv.headers()?);
    columns.require(required)?;
    let mut record = csv::StringRecord::new();
    while csv.read_record(&mut record)? {
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        f(Row {
            record: &record,
            columns: &columns,
            line,
        })?;
    }
    Ok(())
}

pub fn read_chargers<R: Read>(reader: R) -> Result<(Vec<ChargerStation>, LoadReport), IngestError> {
    let mut stations = Vec::new();
    let mut report = LoadReport::default();
    let mut seen = HashSet::new();
    for_each_row(reader, &["id", "lat", "lon"], |row| {
        let id = row.text("id")?;
        let location = row.location()?;
        let ports = match row.number("ports")? {
            Some(p) if p >= 1.0 && p.fract() == 0.0 && p <= u32::MAX as f64 => p as u32,
            Some(p) => return Err(row.err("ports", format!("{p} is not a positive integer"))),
            None => {
                report.defaulted.push(DefaultedRow {
                    line: row.line,
                    id: id.clone(),
                    column: "ports",
                });
                DEFAULT_PORTS
            }
        };
        let power_kw = match row.number("power_kw")? {
            Some(p) if p > 0.0 => p,
            Some(p) => return Err(row.err("power_kw", format!("{p} must be positive"))),
            None => {
                report.defaulted.push(DefaultedRow {
                    line: row.line,
                    id: id.clone(),
                    column: "power_kw",
                });
                DEFAULT_POWER_KW
            }
        };
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId(id));
        }
        stations.push(ChargerStation {
            id,
            location,
            ports,
            power_kw,
        });
        Ok(())
    })?;
    Ok((stations, report))
}

pub fn load_chargers(path: impl AsRef<Path>) -> Result<(Vec<ChargerStation>, LoadReport), IngestError> {
    read_chargers(open(path.as_ref())?)
}

pub fn read_traffic<R: Read>(reader: R) -> Result<Vec<TrafficPoint>, IngestError> {
    let mut points = Vec::new();
    let mut seen = HashSet::new();
    for_each_row(reader, &["id", "lat", "lon", "aadt"], |row| {
        let id = row.text("id")?;
        let location = row.location()?;
        let aadt = row.required_number("aadt")?;
        if aadt < 0.0 {
            return Err(row.err("aadt", format!("{aadt} is negative")));
        }
        if !seen.insert(id.clone()) {
            return Err(IngestError::DuplicateId(id));
        }
        points.push(TrafficPoint { id, location, aadt });
        Ok(())
    })?;
    Ok(points)
}

pub fn load_traffic(path: impl AsRef<Path>) -> Result<Vec<TrafficPoint>, IngestError> {
    read_traffic(open(path.as_ref())?)
}

pub fn read_road_network<N: Read, E: Read>(nodes: N, edges: E) -> Result<RoadNetwork, IngestError> {
    let mut net = RoadNetwork::default();
    for_each_row(nodes, &["id", "lat", "lon"], |row| {
        let id = row.text("id")?;
        let location = row.location()?;
        if net.node_index(&id).is_some() {
            return Err(IngestError::DuplicateId(id));
        }
        net.add_node(id, location);
        Ok(())
    })?;
    for_each_row(edges, &["from", "to", "length_miles"], |row| {
        let from = row.text("from")?;
        let to = row.text("to")?;
        let length = row.required_number("length_miles")?;
        if length <= 0.0 {
            return Err(row.err("length_miles", "length must be positive"));
        }
        let speed = row.number("speed_mph")?.unwrap_or(DEFAULT_SPEED_MPH);
        if !(speed > 1.0 && speed <= 100.0) {
            return Err(row.err("speed_mph", format!("speed {speed} outside (1, 100] mph")));
        }
        let oneway = match row.raw("oneway") {
            None | Some("0") => false,
            Some("1") => true,
            Some(other) => return Err(row.err("oneway", format!("expected 0 or 1, got `{other}`"))),
        };
        let time_min = length / speed * 60.0;
        let (Some(a), Some(b)) = (net.node_index(&from), net.node_index(&to)) else {
            return Err(IngestError::DanglingEdge { from, to });
        };
        net.add_arc(a, b, length, time_min)?;
        if !oneway {
            net.add_arc(b, a, length, time_min)?;
        }
        Ok(())
    })?;
    Ok(net)
}

pub fn load_road_network(
    nodes_path: impl AsRef<Path>,
    edges_path: impl AsRef<Path>,
) -> Result<RoadNetwork, IngestError> {
    read_road_network(open(nodes_path.as_ref())?, open(edges_path.as_ref())?)
}

/// Reads a GeoJSON FeatureCollection of LineStrings (or MultiLineStrings) into a
/// road network. Each distinct vertex becomes a node `n<k>`, numbered in order of
/// first appearance; consecutive vertices become edges with haversine length.
/// Feature properties `speed_mph` and `oneway` are honored when present.
pub fn read_geojson_roads<R: Read>(reader: R) -> Result<RoadNetwork, IngestError> {
    let doc: serde_json::Value =
        serde_json::from_reader(reader).map_err(|e| IngestError::GeoJson(e.to_string()))?;
    if doc.get("type").and_then(|t| t.as_str()) != Some("FeatureCollection") {
        return Err(IngestError::GeoJson("expected a FeatureCollection".into()));
    }
    let features = doc
        .get("features")
        .and_then(|f| f.as_array())
        .ok_or_else(|| IngestError::GeoJson("missing features array".into()))?;

    let mut net = RoadNetwork::default();
    let mut vertex_ids: BTreeMap<(u64, u64), usize> = BTreeMap::new();

    for (fi, feature) in features.iter().enumerate() {
        let geometry = feature
            .get("geometry")
            .ok_or_else(|| IngestError::GeoJson(format!("feature {fi} has no geometry")))?;
        let props = feature.get("properties");
        let speed = props
            .and_then(|p| p.get("speed_mph"))
            .and_then(|s| s.as_f64())
            .unwrap_or(DEFAULT_SPEED_MPH);
        if !(speed > 1.0 && speed <= 100.0) {
            return Err(IngestError::GeoJson(format!("feature {fi}: speed {speed} outside (1, 100]")));
        }
        let oneway = props
            .and_then(|p| p.get("oneway"))
            .map(|o| o.as_bool().unwrap_or(false) || o.as_i64() == Some(1))
            .unwrap_or(false);

        let lines: Vec<&serde_json::Value> = match geometry.get("type").and_then(|t| t.as_str()) {
            Some("LineString") => vec![geometry.get("coordinates").unwrap_or(&serde_json::Value::Null)],
            Some("MultiLineString") => geometry
                .get("coordinates")
                .and_then(|c| c.as_array())
                .map(|a| a.iter().collect())
                .unwrap_or_default(),
            other => {
                return Err(IngestError::GeoJson(format!(
                    "feature {fi}: unsupported geometry {other:?}"
                )))
            }
        };

        for line in lines {
            let coords = line
                .as_array()
                .ok_or_else(|| IngestError::GeoJson(format!("feature {fi}: bad coordinates")))?;
            let mut prev: Option<usize> = None;
            for c in coords {
                let (lon, lat) = match c.as_array().map(|a| a.as_slice()) {
                    Some([lon, lat, ..]) => (
                        lon.as_f64().unwrap_or(f64::NAN),
                        lat.as_f64().unwrap_or(f64::NAN),
                    ),
                    _ => return Err(IngestError::GeoJson(format!("feature {fi}: bad position"))),
                };
                let point = GeoPoint::new(lat, lon)
                    .map_err(|e| IngestError::GeoJson(format!("feature {fi}: {e}")))?;
                let key = (lat.to_bits(), lon.to_bits());
                let idx = *vertex_ids.entry(key).or_insert_with(|| {
                    let id = format!("n{}", net.node_count());
                    net.add_node(id, point)
                });
                if let Some(p) = prev.filter(|&p| p != idx) {
                    let length = haversine_miles(net.location(p), point);
                    if length > 0.0 {
                        let time = length / speed * 60.0;
                        net.add_arc(p, idx, length, time)?;
                        if !oneway {
                            net.add_arc(idx, p, length, time)?;
                        }
                    }
                }
                prev = Some(idx);
            }
        }
    }
    Ok(net)
}

pub fn load_geojson_roads(path: impl AsRef<Path>) -> Result<RoadNetwork, IngestError> {
    read_geojson_roads(open(path.as_ref())?)
}
