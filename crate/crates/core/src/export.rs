//! CSV and GeoJSON writers for analysis outputs.
//!
//! Every file starts with a reproducibility header: CSV files carry `# key=value`
//! comment lines (which the ingest readers skip), GeoJSON documents carry a
//! top-level `metadata` member.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde_json::{json, Map, Value};

use crate::geo::GeoPoint;
use crate::ingest::{ChargerStation, TrafficPoint};
use crate::robustness::{PercolationPoint, RobustnessReport};
use crate::router::RoutePlan;
use crate::siting::{CoverageResult, SitingProposal};

/// Ordered key/value pairs describing how an output was produced.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunHeader {
    entries: Vec<(String, String)>,
}

impl RunHeader {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, key: impl Into<String>, value: impl ToString) -> Self {
        self.push(key, value);
        self
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        let key = key.into();
        let value = value.to_string().replace(['\n', '\r'], " ");
        match self.entries.iter_mut().find(|(k, _)| *k == key) {
            Some(slot) => slot.1 = value,
            None => self.entries.push((key, value)),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn write_comment_lines<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for (k, v) in &self.entries {
            writeln!(w, "# {k}={v}")?;
        }
        Ok(())
    }

    pub fn to_json(&self) -> Value {
        Value::Object(
            self.entries
                .iter()
                .map(|(k, v)| (k.clone(), Value::String(v.clone())))
                .collect::<Map<_, _>>(),
        )
    }

    /// Parses the `# key=value` lines at the top of a CSV file.
    pub fn parse_comment_lines(text: &str) -> Self {
        let mut header = RunHeader::new();
        for line in text.lines() {
            let Some(rest) = line.strip_prefix('#') else { break };
            if let Some((k, v)) = rest.trim_start().split_once('=') {
                header.push(k.trim(), v);
            }
        }
        header
    }
}

fn csv_writer<W: Write>(mut w: W, header: &RunHeader) -> io::Result<csv::Writer<W>> {
    header.write_comment_lines(&mut w)?;
    Ok(csv::Writer::from_writer(w))
}

fn finish<W: Write>(mut wtr: csv::Writer<W>) -> io::Result<()> {
    wtr.flush()
}

fn csv_err(e: csv::Error) -> io::Error {
    io::Error::other(e)
}

/// One row per traffic point: whether it is covered and by which stations.
pub fn write_coverage_csv<W: Write>(
    w: W,
    header: &RunHeader,
    points: &[TrafficPoint],
    result: &CoverageResult,
) -> io::Result<()> {
    let covering: BTreeMap<&str, &[String]> = result
        .covered
        .iter()
        .map(|c| (c.point_id.as_str(), c.stations.as_slice()))
        .collect();
    let mut wtr = csv_writer(w, header)?;
    wtr.write_record(["point_id", "lat", "lon", "aadt", "covered", "stations"]).map_err(csv_err)?;
    for p in points {
        let stations = covering.get(p.id.as_str()).copied().unwrap_or(&[]);
        wtr.write_record([
            p.id.clone(),
            p.location.lat().to_string(),
            p.location.lon().to_string(),
            p.aadt.to_string(),
            (!stations.is_empty()).to_string(),
            stations.join(";"),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

pub fn write_centrality_csv<W: Write>(w: W, header: &RunHeader, report: &RobustnessReport) -> io::Result<()> {
    let mut wtr = csv_writer(w, header)?;
    wtr.write_record(["id", "degree", "betweenness"]).map_err(csv_err)?;
    for (id, degree) in &report.degree {
        let betweenness = report.betweenness.get(id).copied().unwrap_or(0.0);
        wtr.write_record([id.clone(), degree.to_string(), betweenness.to_string()])
            .map_err(csv_err)?;
    }
    finish(wtr)
}

pub fn write_curve_csv<W: Write>(w: W, header: &RunHeader, curve: &[PercolationPoint]) -> io::Result<()> {
    let mut wtr = csv_writer(w, header)?;
    wtr.write_record(["fraction_removed", "gcc_fraction", "std"]).map_err(csv_err)?;
    for p in curve {
        wtr.write_record([p.fraction_removed.to_string(), p.gcc_fraction.to_string(), p.std.to_string()])
            .map_err(csv_err)?;
    }
    finish(wtr)
}

pub fn write_sites_csv<W: Write>(w: W, header: &RunHeader, proposal: &SitingProposal) -> io::Result<()> {
    let mut wtr = csv_writer(w, header)?;
    wtr.write_record(["cluster", "lat", "lon", "demand_aadt"]).map_err(csv_err)?;
    for s in &proposal.sites {
        wtr.write_record([
            s.cluster.to_string(),
            s.location.lat().to_string(),
            s.location.lon().to_string(),
            s.demand_aadt.to_string(),
        ])
        .map_err(csv_err)?;
    }
    finish(wtr)
}

fn position(p: GeoPoint) -> Value {
    json!([p.lon(), p.lat()])
}

fn point_feature(p: GeoPoint, properties: Value) -> Value {
    json!({
        "type": "Feature",
        "geometry": { "type": "Point", "coordinates": position(p) },
        "properties": properties,
    })
}

fn collection(header: &RunHeader, features: Vec<Value>) -> Value {
    json!({
        "type": "FeatureCollection",
        "metadata": header.to_json(),
        "features": features,
    })
}

pub fn coverage_geojson(
    header: &RunHeader,
    stations: &[ChargerStation],
    points: &[TrafficPoint],
    result: &CoverageResult,
) -> Value {
    let covered: BTreeMap<&str, usize> = result
        .covered
        .iter()
        .map(|c| (c.point_id.as_str(), c.stations.len()))
        .collect();
    let mut features: Vec<Value> = stations
        .iter()
        .map(|s| {
            point_feature(
                s.location,
                json!({ "kind": "station", "id": s.id, "ports": s.ports, "power_kw": s.power_kw, "radius_mi": result.radius_mi }),
            )
        })
        .collect();
    features.extend(points.iter().map(|p| {
        let n = covered.get(p.id.as_str()).copied().unwrap_or(0);
        point_feature(
            p.location,
            json!({ "kind": "traffic", "id": p.id, "aadt": p.aadt, "covered": n > 0, "station_count": n }),
        )
    }));
    collection(header, features)
}

/// Quantile bucket (0..buckets) of each value, by rank; ties share the lower bucket.
pub fn quantile_buckets(values: &BTreeMap<String, f64>, buckets: usize) -> BTreeMap<String, usize> {
    let buckets = buckets.max(1);
    let mut sorted: Vec<f64> = values.values().copied().collect();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    values
        .iter()
        .map(|(id, &v)| {
            let below = sorted.partition_point(|&x| x < v);
            (id.clone(), (below * buckets / n.max(1)).min(buckets - 1))
        })
        .collect()
}

pub fn centrality_geojson(header: &RunHeader, stations: &[ChargerStation], report: &RobustnessReport) -> Value {
    let quantile = quantile_buckets(&report.betweenness, 4);
    let features = stations
        .iter()
        .map(|s| {
            point_feature(
                s.location,
                json!({
                    "id": s.id,
                    "degree": report.degree.get(&s.id),
                    "betweenness": report.betweenness.get(&s.id),
                    "betweenness_quartile": quantile.get(&s.id),
                }),
            )
        })
        .collect();
    collection(header, features)
}

pub fn sites_geojson(header: &RunHeader, proposal: &SitingProposal) -> Value {
    let features = proposal
        .sites
        .iter()
        .map(|s| {
            point_feature(
                s.location,
                json!({ "cluster": s.cluster, "demand_aadt": s.demand_aadt, "point_ids": s.point_ids }),
            )
        })
        .collect();
    collection(header, features)
}

/// The route as a LineString plus one Point per stop.
pub fn plan_geojson(header: &RunHeader, plan: &RoutePlan) -> Value {
    let line = json!({
        "type": "Feature",
        "geometry": {
            "type": "LineString",
            "coordinates": plan.waypoints.iter().map(|&p| position(p)).collect::<Vec<_>>(),
        },
        "properties": {
            "kind": "route",
            "alpha": plan.alpha,
            "travel_min": plan.totals.travel_min,
            "wait_min": plan.totals.wait_min,
            "charge_min": plan.totals.charge_min,
            "total_min": plan.totals.total_min,
        },
    });
    let mut features = vec![line];
    // waypoints are origin, stops..., destination
    for (detail, &p) in plan.stop_details.iter().zip(plan.waypoints.iter().skip(1)) {
        features.push(point_feature(
            p,
            json!({
                "kind": "stop",
                "id": detail.station_id,
                "arrival_soc": detail.arrival_soc,
                "departure_soc": detail.departure_soc,
                "wait_min": detail.wait_min,
                "charge_min": detail.charge_min,
            }),
        ));
    }
    collection(header, features)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::siting::coverage;

    fn pt(id: &str, lat: f64, lon: f64) -> TrafficPoint {
        TrafficPoint {
            id: id.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
            aadt: 1000.0,
        }
    }

    #[test]
    fn header_round_trip() {
        let h = RunHeader::new().with("seed", 7).with("radius_mi", 2.0).with("seed", 8);
        let mut buf = Vec::new();
        h.write_comment_lines(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "# seed=8\n# radius_mi=2\n");
        assert_eq!(RunHeader::parse_comment_lines(&text), h);
    }

    #[test]
    fn coverage_csv_rows() {
        let stations = [ChargerStation {
            id: "s".into(),
            location: GeoPoint::new(32.0, -97.0).unwrap(),
            ports: 1,
            power_kw: 50.0,
        }];
        let points = [pt("near", 32.001, -97.0), pt("far", 33.0, -97.0)];
        let result = coverage(&stations, &points, 2.0).unwrap();
        let mut buf = Vec::new();
        write_coverage_csv(&mut buf, &RunHeader::new().with("radius_mi", 2), &points, &result).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "# radius_mi=2");
        assert_eq!(lines.len(), 4);
        assert!(lines[2].starts_with("near,") && lines[2].ends_with(",true,s"));
        assert!(lines[3].ends_with(",false,"));
        let gj = coverage_geojson(&RunHeader::new(), &stations, &points, &result);
        assert_eq!(gj["features"].as_array().unwrap().len(), 3);
    }

    #[test]
    fn quartiles() {
        let values: BTreeMap<String, f64> = [("a", 0.0), ("b", 0.1), ("c", 0.2), ("d", 0.9)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let q = quantile_buckets(&values, 4);
        assert_eq!(q["a"], 0);
        assert_eq!(q["d"], 3);
        assert!(quantile_buckets(&BTreeMap::new(), 4).is_empty());
    }
}
