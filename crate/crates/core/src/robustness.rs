//! Robustness of the charger network: centrality and percolation.
//!
//! Stations are joined when they are within one CC-phase leg of each other, so
//! the graph describes which stations an EV can hop between without leaving the
//! efficient charging window.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_miles;
use crate::ingest::ChargerStation;
use crate::road::RoadNetwork;

/// Relative tolerance for treating two weighted path lengths as equal.
const TIE_TOLERANCE: f64 = 1e-9;

/// Smallest edge weight; co-located stations stay adjacent with this weight.
const MIN_EDGE_WEIGHT: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RobustnessError {
    #[error("removal fractions must be sorted and within [0, 1]")]
    InvalidFractions,
    #[error("edge ({0}, {1}) is invalid")]
    InvalidEdge(usize, usize),
    #[error("lambda must be positive, got {0}")]
    InvalidLambda(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargerGraph {
    ids: Vec<String>,
    adjacency: Vec<Vec<(usize, f64)>>,
}

/// How distances between stations are measured.
#[derive(Debug, Clone, Copy)]
pub enum DistanceSource<'a> {
    Geodesic,
    /// Shortest road length, snapping each station to its nearest road node.
    Road(&'a RoadNetwork),
}

impl ChargerGraph {
    /// Undirected graph from explicit weighted edges.
    pub fn from_edges(ids: Vec<String>, edges: &[(usize, usize, f64)]) -> Result<Self, RobustnessError> {
        let mut adjacency = vec![Vec::new(); ids.len()];
        for &(a, b, w) in edges {
            if a == b || a >= ids.len() || b >= ids.len() || !(w > 0.0 && w.is_finite()) {
                return Err(RobustnessError::InvalidEdge(a, b));
            }
            adjacency[a].push((b, w));
            adjacency[b].push((a, w));
        }
        Ok(ChargerGraph { ids, adjacency })
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn neighbors(&self, v: usize) -> &[(usize, f64)] {
        &self.adjacency[v]
    }

    /// Edges as `(a, b, weight)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        let mut out = Vec::new();
        for (a, nbrs) in self.adjacency.iter().enumerate() {
            for &(b, w) in nbrs {
                if a < b {
                    out.push((a, b, w));
                }
            }
        }
        out
    }
}

pub fn build_charger_graph(stations: &[ChargerStation], lambda_max_mi: f64) -> Result<ChargerGraph, RobustnessError> {
    build_charger_graph_with(stations, lambda_max_mi, DistanceSource::Geodesic)
}

pub fn build_charger_graph_with(
    stations: &[ChargerStation],
    lambda_max_mi: f64,
    source: DistanceSource<'_>,
) -> Result<ChargerGraph, RobustnessError> {
    if !(lambda_max_mi > 0.0) {
        return Err(RobustnessError::InvalidLambda(lambda_max_mi));
    }
    let n = stations.len();
    let road_costs = match source {
        DistanceSource::Road(net) => {
            let pts: Vec<_> = stations.iter().map(|s| s.location).collect();
            Some(net.pairwise_costs(&pts, 60.0))
        }
        DistanceSource::Geodesic => None,
    };
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let d = match &road_costs {
                None => Some(haversine_miles(stations[i].location, stations[j].location)),
                Some(m) => match (m[i][j], m[j][i]) {
                    (Some(a), Some(b)) => Some(a.length_miles.min(b.length_miles)),
                    (Some(a), None) | (None, Some(a)) => Some(a.length_miles),
                    (None, None) => None,
                },
            };
            if let Some(d) = d.filter(|&d| d <= lambda_max_mi) {
                edges.push((i, j, d.max(MIN_EDGE_WEIGHT)));
            }
        }
    }
    ChargerGraph::from_edges(stations.iter().map(|s| s.id.clone()).collect(), &edges)
}

pub fn degree_centrality(g: &ChargerGraph) -> BTreeMap<String, f64> {
    let n = g.node_count();
    g.ids
        .iter()
        .enumerate()
        .map(|(v, id)| {
            let value = if n <= 1 {
                0.0
            } else {
                g.adjacency[v].len() as f64 / (n - 1) as f64
            };
            (id.clone(), value)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    #[default]
    Weighted,
    /// Every edge counts as one hop.
    Unweighted,
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem {
    dist: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other.dist.total_cmp(&self.dist).then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn nearly_equal(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIE_TOLERANCE * a.abs().max(b.abs()).max(1.0)
}

/// Brandes' algorithm with Dijkstra passes, normalized for undirected graphs so
/// every value lies in `[0, 1]`.
pub fn betweenness_centrality(g: &ChargerGraph, weighting: Weighting) -> BTreeMap<String, f64> {
    let n = g.node_count();
    let mut centrality = vec![0.0; n];
    let weight = |w: f64| match weighting {
        Weighting::Weighted => w,
        Weighting::Unweighted => 1.0,
    };

    for s in 0..n {
        let mut order = Vec::with_capacity(n);
        let mut preds: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut sigma = vec![0.0f64; n];
        let mut dist = vec![f64::INFINITY; n];
        let mut settled = vec![false; n];
        sigma[s] = 1.0;
        dist[s] = 0.0;
        let mut heap = BinaryHeap::new();
        heap.push(HeapItem { dist: 0.0, node: s });

        while let Some(HeapItem { dist: d, node: v }) = heap.pop() {
            if settled[v] || d > dist[v] {
                continue;
            }
            settled[v] = true;
            order.push(v);
            for &(w, len) in &g.adjacency[v] {
                if settled[w] {
                    continue;
                }
                let cand = d + weight(len);
                if dist[w].is_finite() && nearly_equal(cand, dist[w]) {
                    sigma[w] += sigma[v];
                    preds[w].push(v);
                } else if cand < dist[w] {
                    dist[w] = cand;
                    sigma[w] = sigma[v];
                    preds[w].clear();
                    preds[w].push(v);
                    heap.push(HeapItem { dist: cand, node: w });
                }
            }
        }

        let mut delta = vec![0.0; n];
        for &w in order.iter().rev() {
            for &v in &preds[w] {
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
            }
            if w != s {
                centrality[w] += delta[w];
            }
        }
    }

    // each unordered pair was counted from both endpoints
    let scale = if n > 2 {
        1.0 / ((n - 1) * (n - 2)) as f64
    } else {
        0.0
    };
    g.ids
        .iter()
        .zip(centrality)
        .map(|(id, c)| (id.clone(), c * scale))
        .collect()
}

/// Size of the largest connected component among nodes not marked removed.
pub fn largest_component(g: &ChargerGraph, removed: &[bool]) -> usize {
    let n = g.node_count();
    let mut seen = removed.to_vec();
    let mut best = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if seen[start] {
            continue;
        }
        seen[start] = true;
        stack.push(start);
        let mut size = 0;
        while let Some(v) = stack.pop() {
            size += 1;
            for &(w, _) in &g.adjacency[v] {
                if !seen[w] {
                    seen[w] = true;
                    stack.push(w);
                }
            }
        }
        best = best.max(size);
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PercolationPoint {
    pub fraction_removed: f64,
    pub gcc_fraction: f64,
    /// Standard deviation over random trials; zero for targeted removal.
    pub std: f64,
}

#[derive(Debug, Clone, Copy)]
pub enum Removal<'a> {
    Random { trials: usize, seed: u64 },
    /// Highest-ranked nodes first; ties broken by node id.
    Targeted(&'a BTreeMap<String, f64>),
}

fn removal_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64 + 1e-9).floor() as usize).min(n)
}

fn gcc_after_removing(g: &ChargerGraph, order: &[usize], count: usize) -> f64 {
    let n = g.node_count();
    if n == 0 {
        return 0.0;
    }
    let mut removed = vec![false; n];
    for &v in &order[..count] {
        removed[v] = true;
    }
    largest_component(g, &removed) as f64 / n as f64
}

pub fn percolate(g: &ChargerGraph, removal: Removal<'_>, fractions: &[f64]) -> Result<Vec<PercolationPoint>, RobustnessError> {
    if fractions.iter().any(|f| !(0.0..=1.0).contains(f)) || fractions.windows(2).any(|w| w[0] > w[1]) {
        return Err(RobustnessError::InvalidFractions);
    }
    let n = g.node_count();
    match removal {
        Removal::Targeted(ranking) => {
            let mut order: Vec<usize> = (0..n).collect();
            let score = |v: usize| ranking.get(&g.ids[v]).copied().unwrap_or(0.0);
            order.sort_by(|&a, &b| score(b).total_cmp(&score(a)).then_with(|| g.ids[a].cmp(&g.ids[b])));
            Ok(fractions
                .iter()
                .map(|&f| PercolationPoint {
                    fraction_removed: f,
                    gcc_fraction: gcc_after_removing(g, &order, removal_count(f, n)),
                    std: 0.0,
                })
                .collect())
        }
        Removal::Random { trials, seed } => {
            let trials = trials.max(1);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut samples = vec![Vec::with_capacity(trials); fractions.len()];
            let mut order: Vec<usize> = (0..n).collect();
            for _ in 0..trials {
                order.sort_unstable();
                order.shuffle(&mut rng);
                for (i, &f) in fractions.iter().enumerate() {
                    samples[i].push(gcc_after_removing(g, &order, removal_count(f, n)));
                }
            }
            Ok(fractions
                .iter()
                .zip(samples)
                .map(|(&f, s)| {
                    let mean = s.iter().sum::<f64>() / s.len() as f64;
                    let var = s.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / s.len() as f64;
                    PercolationPoint {
                        fraction_removed: f,
                        gcc_fraction: mean,
                        std: var.sqrt(),
                    }
                })
                .collect())
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetRanking {
    Degree,
    #[default]
    Betweenness,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessConfig {
    pub lambda_max_mi: f64,
    pub trials: usize,
    pub seed: u64,
    pub fractions: Vec<f64>,
    pub weighting: Weighting,
    pub target_by: TargetRanking,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        RobustnessConfig {
            lambda_max_mi: 212.0,
            trials: 100,
            seed: 0,
            fractions: (0..=20).map(|i| i as f64 / 20.0).collect(),
            weighting: Weighting::Weighted,
            target_by: TargetRanking::Betweenness,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessReport {
    pub node_count: usize,
    pub edge_count: usize,
    pub degree: BTreeMap<String, f64>,
    pub betweenness: BTreeMap<String, f64>,
    pub percolation_random: Vec<PercolationPoint>,
    pub percolation_targeted: Vec<PercolationPoint>,
}

pub fn analyze(g: &ChargerGraph, cfg: &RobustnessConfig) -> Result<RobustnessReport, RobustnessError> {
    let degree = degree_centrality(g);
    let betweenness = betweenness_centrality(g, cfg.weighting);
    let percolation_random = percolate(
        g,
        Removal::Random {
            trials: cfg.trials,
            seed: cfg.seed,
        },
        &cfg.fractions,
    )?;
    let ranking = match cfg.target_by {
        TargetRanking::Degree => &degree,
        TargetRanking::Betweenness => &betweenness,
    };
    let percolation_targeted = percolate(g, Removal::Targeted(ranking), &cfg.fractions)?;
    Ok(RobustnessReport {
        node_count: g.node_count(),
        edge_count: g.edge_count(),
        degree,
        betweenness,
        percolation_random,
        percolation_targeted,
    })
}
