//! Charging demand and waiting time at each station, derived from traffic counts.
//!
//! Each traffic point generates `aadt / 24 × ev_share × charge_need_share` charging
//! arrivals per hour, shared among the stations within `assign_radius_mi`. Waiting
//! time follows a fluid overload model: a station only builds a queue when its
//! hourly arrivals need more port-minutes than the hour provides.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_miles;
use crate::ingest::{ChargerStation, TrafficPoint};

/// EV share of traffic used for the statewide network figures.
pub const STATEWIDE_EV_SHARE: f64 = 0.014;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitRule {
    /// Demand shared equally among all covering stations.
    #[default]
    Equal,
    /// Demand shared in proportion to inverse distance (floored at 0.1 mi).
    InverseDistance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DemandConfig {
    pub ev_share: f64,
    pub charge_need_share: f64,
    pub service_min: f64,
    pub wait_cap_min: f64,
    pub assign_radius_mi: f64,
    pub split: SplitRule,
}

impl Default for DemandConfig {
    fn default() -> Self {
        DemandConfig {
            ev_share: 0.01,
            charge_need_share: 0.01,
            service_min: 15.0,
            wait_cap_min: 60.0,
            assign_radius_mi: 40.0,
            split: SplitRule::Equal,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("`{field}` = {value} is outside {expected}")]
    OutOfRange {
        field: &'static str,
        value: f64,
        expected: &'static str,
    },
}

impl DemandConfig {
    /// Metro-area catchment: drivers detour at most a couple of miles to charge.
    pub fn urban() -> Self {
        DemandConfig {
            assign_radius_mi: 2.0,
            ..Default::default()
        }
    }

    pub fn statewide_share() -> Self {
        DemandConfig {
            ev_share: STATEWIDE_EV_SHARE,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (field, value) in [("ev_share", self.ev_share), ("charge_need_share", self.charge_need_share)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(ConfigError::OutOfRange { field, value, expected: "[0, 1]" });
            }
        }
        for (field, value) in [
            ("service_min", self.service_min),
            ("wait_cap_min", self.wait_cap_min),
            ("assign_radius_mi", self.assign_radius_mi),
        ] {
            if !(value > 0.0 && value.is_finite()) {
                return Err(ConfigError::OutOfRange { field, value, expected: "(0, inf)" });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaitProfile {
    pub station_id: String,
    pub arrivals_per_hour: f64,
    pub wait_min: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DemandAssignment {
    /// Charging arrivals per hour at each station (every station present).
    pub arrivals: BTreeMap<String, f64>,
    /// Demand from points outside every station's catchment.
    pub orphaned: f64,
    pub total: f64,
}

/// Uniform-over-day conversion of annual average daily traffic.
pub fn hourly_flow(aadt: f64) -> f64 {
    aadt / 24.0
}

/// Charging arrivals per hour generated at one traffic point.
pub fn charging_demand(point: &TrafficPoint, cfg: &DemandConfig) -> f64 {
    hourly_flow(point.aadt) * cfg.ev_share * cfg.charge_need_share
}

pub fn assign_demand(stations: &[ChargerStation], points: &[TrafficPoint], cfg: &DemandConfig) -> DemandAssignment {
    let mut out = DemandAssignment {
        arrivals: stations.iter().map(|s| (s.id.clone(), 0.0)).collect(),
        ..Default::default()
    };
    for point in points {
        let demand = charging_demand(point, cfg);
        out.total += demand;
        let covering: Vec<(&ChargerStation, f64)> = stations
            .iter()
            .map(|s| (s, haversine_miles(s.location, point.location)))
            .filter(|&(_, d)| d <= cfg.assign_radius_mi)
            .collect();
        if covering.is_empty() {
            out.orphaned += demand;
            continue;
        }
        let weights: Vec<f64> = match cfg.split {
            SplitRule::Equal => vec![1.0; covering.len()],
            SplitRule::InverseDistance => covering.iter().map(|&(_, d)| 1.0 / d.max(0.1)).collect(),
        };
        let sum: f64 = weights.iter().sum();
        for ((station, _), w) in covering.iter().zip(&weights) {
            *out.arrivals.get_mut(&station.id).expect("station registered") += demand * w / sum;
        }
    }
    out
}

pub fn waiting_time(arrivals_per_hour: f64, ports: u32, cfg: &DemandConfig) -> f64 {
    let ports = ports.max(1) as f64;
    let utilization = arrivals_per_hour * cfg.service_min / (60.0 * ports);
    ((utilization - 1.0) * 60.0).clamp(0.0, cfg.wait_cap_min)
}

/// Demand assignment followed by the wait model, one profile per station in input order.
pub fn wait_profiles(stations: &[ChargerStation], points: &[TrafficPoint], cfg: &DemandConfig) -> Vec<WaitProfile> {
    let assignment = assign_demand(stations, points, cfg);
    stations
        .iter()
        .map(|s| {
            let arrivals = assignment.arrivals[&s.id];
            WaitProfile {
                station_id: s.id.clone(),
                arrivals_per_hour: arrivals,
                wait_min: waiting_time(arrivals, s.ports, cfg),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::GeoPoint;
    use proptest::prelude::*;

    fn station(id: &str, lat: f64, lon: f64, ports: u32) -> ChargerStation {
        ChargerStation {
            id: id.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
            ports,
            power_kw: 150.0,
        }
    }

    fn point(id: &str, lat: f64, lon: f64, aadt: f64) -> TrafficPoint {
        TrafficPoint {
            id: id.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
            aadt,
        }
    }

    #[test]
    fn hourly_flow_examples() {
        assert_eq!(hourly_flow(0.0), 0.0);
        assert_eq!(hourly_flow(2400.0), 100.0);
        assert_eq!(hourly_flow(36.0), 1.5);
    }

    #[test]
    fn no_stations_orphans_everything() {
        let pts = [point("p", 32.0, -97.0, 2400.0)];
        let a = assign_demand(&[], &pts, &DemandConfig::default());
        assert!(a.arrivals.is_empty());
        assert_eq!(a.orphaned, a.total);
        assert!(a.total > 0.0);
    }

    #[test]
    fn equal_split_between_two() {
        let cfg = DemandConfig {
            charge_need_share: 1.0,
            ..Default::default()
        };
        let st = [station("a", 32.0, -97.0, 1), station("b", 32.1, -97.0, 1)];
        let a = assign_demand(&st, &[point("p", 32.05, -97.0, 2400.0)], &cfg);
        assert!((a.arrivals["a"] - 0.5).abs() < 1e-12);
        assert!((a.arrivals["b"] - 0.5).abs() < 1e-12);
        assert_eq!(a.orphaned, 0.0);
    }

    #[test]
    fn inverse_distance_split_favors_closer() {
        let cfg = DemandConfig {
            split: SplitRule::InverseDistance,
            ..Default::default()
        };
        let st = [station("a", 32.0, -97.0, 1), station("b", 32.3, -97.0, 1)];
        let a = assign_demand(&st, &[point("p", 32.05, -97.0, 2400.0)], &cfg);
        assert!(a.arrivals["a"] > a.arrivals["b"]);
        assert!((a.arrivals["a"] + a.arrivals["b"] - a.total).abs() < 1e-12);
    }

    #[test]
    fn radius_boundary_is_inclusive() {
        let st = [station("a", 32.0, -97.0, 1)];
        let p = point("p", 32.1, -97.0, 2400.0);
        let d = haversine_miles(st[0].location, p.location);
        let at = DemandConfig { assign_radius_mi: d, ..Default::default() };
        assert_eq!(assign_demand(&st, std::slice::from_ref(&p), &at).orphaned, 0.0);
        let inside = DemandConfig { assign_radius_mi: d - 1e-6, ..Default::default() };
        assert!(assign_demand(&st, &[p], &inside).orphaned > 0.0);
    }

    #[test]
    fn waiting_examples() {
        let cfg = DemandConfig::default();
        assert_eq!(waiting_time(0.0, 1, &cfg), 0.0);
        assert!((waiting_time(10.0, 2, &cfg) - 15.0).abs() < 1e-12);
        assert_eq!(waiting_time(1000.0, 1, &cfg), 60.0);
        assert_eq!(waiting_time(4.0, 1, &cfg), 0.0);
    }

    #[test]
    fn config_validation() {
        assert!(DemandConfig::default().validate().is_ok());
        assert!(DemandConfig { ev_share: 1.5, ..Default::default() }.validate().is_err());
        assert!(DemandConfig { service_min: 0.0, ..Default::default() }.validate().is_err());
        assert_eq!(DemandConfig::urban().assign_radius_mi, 2.0);
        assert_eq!(DemandConfig::statewide_share().ev_share, 0.014);
    }

    #[test]
    fn zero_traffic_zero_wait() {
        let st = [station("a", 32.0, -97.0, 1), station("b", 32.01, -97.0, 3)];
        let pts = [point("p", 32.0, -97.0, 0.0)];
        for w in wait_profiles(&st, &pts, &DemandConfig::default()) {
            assert_eq!(w.wait_min, 0.0);
        }
    }

    fn scatter() -> impl Strategy<Value = (Vec<ChargerStation>, Vec<TrafficPoint>)> {
        (
            prop::collection::vec((32.0f64..33.0, -97.5f64..-96.5, 1u32..5), 0..6),
            prop::collection::vec((32.0f64..33.0, -97.5f64..-96.5, 0.0f64..200_000.0), 0..12),
        )
            .prop_map(|(s, p)| {
                (
                    s.into_iter()
                        .enumerate()
                        .map(|(i, (a, b, c))| station(&format!("s{i}"), a, b, c))
                        .collect(),
                    p.into_iter()
                        .enumerate()
                        .map(|(i, (a, b, c))| point(&format!("p{i}"), a, b, c))
                        .collect(),
                )
            })
    }

    proptest! {
        #[test]
        fn demand_is_conserved((st, pts) in scatter(), radius in 1.0f64..40.0, inverse in any::<bool>()) {
            let cfg = DemandConfig {
                assign_radius_mi: radius,
                split: if inverse { SplitRule::InverseDistance } else { SplitRule::Equal },
                ..Default::default()
            };
            let a = assign_demand(&st, &pts, &cfg);
            let assigned: f64 = a.arrivals.values().sum();
            prop_assert!((assigned + a.orphaned - a.total).abs() <= 1e-9 * a.total.max(1.0));
        }

        #[test]
        fn ev_share_scales_linearly((st, pts) in scatter(), c in 0.0f64..1.0) {
            let base = DemandConfig { ev_share: 1.0, ..Default::default() };
            let scaled = DemandConfig { ev_share: c, ..Default::default() };
            let a = assign_demand(&st, &pts, &base);
            let b = assign_demand(&st, &pts, &scaled);
            for (id, v) in &a.arrivals {
                prop_assert!((b.arrivals[id] - c * v).abs() <= 1e-12 * v.max(1.0));
            }
        }

        #[test]
        fn wait_bounded_and_monotone(x in 0.0f64..50.0, dx in 0.0f64..10.0, ports in 1u32..8) {
            let cfg = DemandConfig::default();
            let w = waiting_time(x, ports, &cfg);
            prop_assert!((0.0..=cfg.wait_cap_min).contains(&w));
            prop_assert!(waiting_time(x + dx, ports, &cfg) >= w);
            prop_assert!(waiting_time(x, ports + 1, &cfg) <= w);
        }
    }
}
