//! Coverage of demand points by existing chargers and k-means siting of new ones.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{centroid, haversine_miles, project_local_miles, unproject_local_miles, GeoError, GeoPoint};
use crate::ingest::{ChargerStation, TrafficPoint};

pub const DEFAULT_COVERAGE_RADIUS_MI: f64 = 40.0;
pub const URBAN_COVERAGE_RADIUS_MI: f64 = 2.0;
pub const DEFAULT_CLUSTERS: usize = 5;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SitingError {
    #[error("k = {k} is invalid for {points} points")]
    InvalidK { k: usize, points: usize },
    #[error("no uncovered demand to site chargers for")]
    EmptyDemand,
    #[error("coverage radius must be positive, got {0}")]
    InvalidRadius(f64),
    #[error(transparent)]
    Geo(#[from] GeoError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoveredPoint {
    pub point_id: String,
    pub stations: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CoverageResult {
    pub radius_mi: f64,
    pub covered: Vec<CoveredPoint>,
    pub uncovered: Vec<String>,
}

pub fn coverage(stations: &[ChargerStation], points: &[TrafficPoint], radius_mi: f64) -> Result<CoverageResult, SitingError> {
    if !(radius_mi > 0.0) {
        return Err(SitingError::InvalidRadius(radius_mi));
    }
    let mut out = CoverageResult {
        radius_mi,
        ..Default::default()
    };
    for p in points {
        let covering: Vec<String> = stations
            .iter()
            .filter(|s| haversine_miles(s.location, p.location) <= radius_mi)
            .map(|s| s.id.clone())
            .collect();
        if covering.is_empty() {
            out.uncovered.push(p.id.clone());
        } else {
            out.covered.push(CoveredPoint {
                point_id: p.id.clone(),
                stations: covering,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent k-means++ restarts; the lowest inertia wins, earliest restart on ties.
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            max_iter: 100,
            tol: 1e-6,
            restarts: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub centroids: Vec<[f64; 2]>,
    pub assignment: Vec<usize>,
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step.
    pub inertia_history: Vec<f64>,
}

fn sq_dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)
}

/// Index of the nearest centroid, lowest index on ties.
pub fn nearest(p: [f64; 2], centroids: &[[f64; 2]]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, &c) in centroids.iter().enumerate() {
        let d = sq_dist(p, c);
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

fn plus_plus_init(points: &[[f64; 2]], k: usize, rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let mut centroids = vec![points[rng.gen_range(0..points.len())]];
    let mut d2: Vec<f64> = points.iter().map(|&p| sq_dist(p, centroids[0])).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total <= 0.0 {
            // all remaining points coincide with a centroid
            d2.iter().position(|&d| d == 0.0).unwrap_or(0)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(0);
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            chosen
        };
        let c = points[next];
        centroids.push(c);
        for (d, &p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, c));
        }
    }
    centroids
}

fn lloyd(points: &[[f64; 2]], mut centroids: Vec<[f64; 2]>, max_iter: usize, tol: f64) -> KMeansResult {
    let k = centroids.len();
    let mut assignment = vec![0; points.len()];
    let mut history = Vec::new();
    let mut iterations = 0;

    loop {
        let mut inertia = 0.0;
        for (a, &p) in assignment.iter_mut().zip(points) {
            let (c, d) = nearest(p, &centroids);
            *a = c;
            inertia += d;
        }
        history.push(inertia);
        if iterations >= max_iter {
            break;
        }
        iterations += 1;

        let mut sums = vec![[0.0f64; 2]; k];
        let mut counts = vec![0usize; k];
        for (&a, &p) in assignment.iter().zip(points) {
            sums[a][0] += p[0];
            sums[a][1] += p[1];
            counts[a] += 1;
        }
        let mut updated = centroids.clone();
        for c in 0..k {
            if counts[c] > 0 {
                updated[c] = [sums[c][0] / counts[c] as f64, sums[c][1] / counts[c] as f64];
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // reseed at the point farthest from every centroid
                let far = points
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| (i, nearest(p, &updated).1))
                    .max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)))
                    .map(|(i, _)| i)
                    .unwrap_or(0);
                updated[c] = points[far];
            }
        }
        let movement = centroids
            .iter()
            .zip(&updated)
            .map(|(&a, &b)| sq_dist(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = updated;
        if movement < tol {
            break;
        }
    }

    // final assignment against the final centroids
    let mut inertia = 0.0;
    for (a, &p) in assignment.iter_mut().zip(points) {
        let (c, d) = nearest(p, &centroids);
        *a = c;
        inertia += d;
    }
    if history.last() != Some(&inertia) {
        history.push(inertia);
    }
    KMeansResult {
        centroids,
        assignment,
        inertia,
        iterations,
        inertia_history: history,
    }
}

/// Lloyd's algorithm with k-means++ seeding.
pub fn kmeans(points: &[[f64; 2]], cfg: &KMeansConfig) -> Result<KMeansResult, SitingError> {
    if cfg.k == 0 || points.is_empty() || cfg.k > points.len() {
        return Err(SitingError::InvalidK {
            k: cfg.k,
            points: points.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<KMeansResult> = None;
    for _ in 0..cfg.restarts.max(1) {
        let init = plus_plus_init(points, cfg.k, &mut rng);
        let run = lloyd(points, init, cfg.max_iter, cfg.tol);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposedSite {
    /// Rank by demand, 0 = most demand.
    pub cluster: usize,
    pub location: GeoPoint,
    pub demand_aadt: f64,
    pub point_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SitingProposal {
    pub sites: Vec<ProposedSite>,
    pub assignment: BTreeMap<String, usize>,
    pub inertia_sq_mi: f64,
}

impl SitingProposal {
    pub fn centroids(&self) -> Vec<GeoPoint> {
        self.sites.iter().map(|s| s.location).collect()
    }
}

/// Clusters uncovered demand points in local miles and ranks clusters by summed AADT.
pub fn propose_sites(uncovered: &[TrafficPoint], k: usize, seed: u64) -> Result<SitingProposal, SitingError> {
    if uncovered.is_empty() {
        return Err(SitingError::EmptyDemand);
    }
    if k == 0 || k > uncovered.len() {
        return Err(SitingError::InvalidK {
            k,
            points: uncovered.len(),
        });
    }
    let locations: Vec<GeoPoint> = uncovered.iter().map(|p| p.location).collect();
    let reference = centroid(&locations).expect("nonempty");
    let xy = locations
        .iter()
        .map(|&p| project_local_miles(p, reference).map(|(x, y)| [x, y]))
        .collect::<Result<Vec<_>, _>>()?;
    let result = kmeans(&xy, &KMeansConfig::new(k, seed))?;

    let mut demand = vec![0.0; k];
    for (p, &c) in uncovered.iter().zip(&result.assignment) {
        demand[c] += p.aadt;
    }
    let mut ranked: Vec<usize> = (0..k).collect();
    ranked.sort_by(|&a, &b| demand[b].total_cmp(&demand[a]).then(a.cmp(&b)));
    let mut rank_of = vec![0; k];
    for (rank, &c) in ranked.iter().enumerate() {
        rank_of[c] = rank;
    }

    let mut sites = Vec::with_capacity(k);
    for (rank, &c) in ranked.iter().enumerate() {
        let [x, y] = result.centroids[c];
        sites.push(ProposedSite {
            cluster: rank,
            location: unproject_local_miles((x, y), reference)?,
            demand_aadt: demand[c],
            point_ids: uncovered
                .iter()
                .zip(&result.assignment)
                .filter(|(_, &a)| a == c)
                .map(|(p, _)| p.id.clone())
                .collect(),
        });
    }
    let assignment = uncovered
        .iter()
        .zip(&result.assignment)
        .map(|(p, &c)| (p.id.clone(), rank_of[c]))
        .collect();
    Ok(SitingProposal {
        sites,
        assignment,
        inertia_sq_mi: result.inertia,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(id: &str, lat: f64, lon: f64, aadt: f64) -> TrafficPoint {
        TrafficPoint {
            id: id.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
            aadt,
        }
    }

    fn st(id: &str, lat: f64, lon: f64) -> ChargerStation {
        ChargerStation {
            id: id.into(),
            location: GeoPoint::new(lat, lon).unwrap(),
            ports: 1,
            power_kw: 50.0,
        }
    }

    #[test]
    fn station_on_point_covers() {
        let r = coverage(&[st("s", 32.0, -97.0)], &[pt("p", 32.0, -97.0, 1.0)], 2.0).unwrap();
        assert_eq!(r.covered.len(), 1);
        assert!(r.uncovered.is_empty());
    }

    #[test]
    fn just_outside_radius() {
        let s = st("s", 32.0, -97.0);
        let p = pt("p", 32.1, -97.0, 1.0);
        let d = haversine_miles(s.location, p.location);
        let r = coverage(&[s], &[p], d - 0.001).unwrap();
        assert_eq!(r.uncovered, ["p"]);
    }

    #[test]
    fn invalid_radius() {
        assert!(coverage(&[], &[], 0.0).is_err());
    }

    #[test]
    fn k_one_is_mean() {
        let pts = [[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]];
        let r = kmeans(&pts, &KMeansConfig::new(1, 3)).unwrap();
        assert!((r.centroids[0][0] - 1.0).abs() < 1e-12);
        assert!((r.centroids[0][1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n() {
        let pts = [[0.0, 0.0], [5.0, 1.0], [1.0, 9.0], [7.0, 7.0]];
        let r = kmeans(&pts, &KMeansConfig::new(4, 11)).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut a = r.assignment.clone();
        a.sort();
        a.dedup();
        assert_eq!(a.len(), 4);
    }

    #[test]
    fn invalid_k() {
        assert!(kmeans(&[[0.0, 0.0]], &KMeansConfig::new(2, 0)).is_err());
        assert!(kmeans(&[[0.0, 0.0]], &KMeansConfig::new(0, 0)).is_err());
        assert!(kmeans(&[], &KMeansConfig::new(1, 0)).is_err());
    }

    #[test]
    fn duplicate_points_do_not_break_init() {
        let pts = [[1.0, 1.0]; 5];
        let r = kmeans(&pts, &KMeansConfig::new(3, 2)).unwrap();
        assert_eq!(r.inertia, 0.0);
    }

    #[test]
    fn empty_demand() {
        assert_eq!(propose_sites(&[], 5, 0), Err(SitingError::EmptyDemand));
    }

    #[test]
    fn single_point_site() {
        let p = pt("p", 31.5, -98.0, 1234.0);
        let prop = propose_sites(std::slice::from_ref(&p), 1, 0).unwrap();
        let c = prop.sites[0].location;
        assert!(haversine_miles(c, p.location) < 1e-6);
        assert_eq!(prop.sites[0].demand_aadt, 1234.0);
        assert!(matches!(propose_sites(&[p], 2, 0), Err(SitingError::InvalidK { .. })));
    }

    #[test]
    fn seeded_determinism() {
        let pts: Vec<[f64; 2]> = (0..40).map(|i| [(i * 37 % 17) as f64, (i * 11 % 23) as f64]).collect();
        let a = kmeans(&pts, &KMeansConfig::new(4, 99)).unwrap();
        let b = kmeans(&pts, &KMeansConfig::new(4, 99)).unwrap();
        assert_eq!(a, b);
    }
}
