//! Congestion-aware charging-stop planning.
//!
//! A trip is solved on an overlay graph whose nodes are the origin, the
//! destination and every charger, and whose arcs are the legs an EV can drive
//! without leaving the CC window. The optimization problem is
//!
//! ```text
//! min  Σ cost(i,j)·x_ij + α·Σ W_i·y_i
//! s.t. unit flow origin → destination, conservation at every other node,
//!      y_i = 1 on every charger the flow visits,
//!      x_ij ∈ {0,1}, y_i ∈ {0,1}
//! ```
//!
//! with per-leg range limits already enforced by which arcs exist. Splitting each
//! charger into `in → out` with the visit cost `α·W_i` on the internal arc turns
//! this into a nonnegative shortest-path problem, solved exactly by label setting.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charging::{cc_range_miles, charge_time_minutes, range_from_soc, ChargingError, EvModel};
use crate::congestion::WaitProfile;
use crate::geo::{haversine_miles, GeoPoint};
use crate::ingest::ChargerStation;
use crate::road::RoadNetwork;

pub const ORIGIN_ID: &str = "origin";
pub const DESTINATION_ID: &str = "destination";
pub const DEFAULT_AVG_SPEED_MPH: f64 = 60.0;

/// Largest overlay the exhaustive oracle accepts.
pub const ORACLE_MAX_NODES: usize = 14;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Origin,
    Destination,
    Charger,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlayNode {
    pub id: String,
    pub kind: NodeKind,
    pub location: Option<GeoPoint>,
    /// Expected waiting time; zero for origin and destination.
    pub wait_min: f64,
    /// Charger power per port; zero for origin and destination.
    pub power_kw: f64,
}

impl OverlayNode {
    pub fn charger(id: impl Into<String>, wait_min: f64, power_kw: f64) -> Self {
        OverlayNode {
            id: id.into(),
            kind: NodeKind::Charger,
            location: None,
            wait_min,
            power_kw,
        }
    }

    pub fn endpoint(id: impl Into<String>, kind: NodeKind) -> Self {
        OverlayNode {
            id: id.into(),
            kind,
            location: None,
            wait_min: 0.0,
            power_kw: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlayArc {
    pub from: usize,
    pub to: usize,
    pub dist_mi: f64,
    pub time_min: f64,
    /// Range limit this leg had to satisfy.
    pub threshold_mi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegCost {
    pub dist_mi: f64,
    pub time_min: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OverlayGraph {
    nodes: Vec<OverlayNode>,
    arcs: Vec<OverlayArc>,
    out: Vec<Vec<usize>>,
    origin: usize,
    destination: usize,
    /// Cost between every ordered pair of nodes, when known (used for
    /// diagnostics and CV-overshoot merging).
    pairs: Option<Vec<Vec<Option<LegCost>>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Infeasibility {
    /// No leg out of the origin fits the starting charge.
    OriginIsolated { nearest: Option<(String, f64)>, range_mi: f64 },
    /// No feasible leg reaches the destination.
    DestinationIsolated { nearest: Option<(String, f64)>, range_mi: f64 },
    /// Everything reachable from the origin is separated from the rest of the
    /// network by a gap longer than one leg.
    RangeGap {
        reachable: Vec<String>,
        gap: Option<(String, String, f64)>,
        threshold_mi: f64,
    },
}

impl fmt::Display for Infeasibility {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Infeasibility::OriginIsolated { nearest, range_mi } => {
                write!(f, "origin isolated: starting charge covers {range_mi:.2} mi")?;
                if let Some((id, d)) = nearest {
                    write!(f, " but the nearest node `{id}` is {d:.2} mi away")?;
                }
                Ok(())
            }
            Infeasibility::DestinationIsolated { nearest, range_mi } => {
                write!(f, "destination isolated: legs are limited to {range_mi:.2} mi")?;
                if let Some((id, d)) = nearest {
                    write!(f, " but the nearest node `{id}` is {d:.2} mi away")?;
                }
                Ok(())
            }
            Infeasibility::RangeGap { reachable, gap, threshold_mi } => {
                write!(f, "range gap: {} node(s) reachable from the origin", reachable.len())?;
                if let Some((a, b, d)) = gap {
                    write!(f, "; shortest onward leg `{a}` -> `{b}` is {d:.2} mi")?;
                }
                write!(f, ", exceeding the {threshold_mi:.2} mi leg limit")
            }
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RouterError {
    #[error("infeasible: {0}")]
    Infeasible(Infeasibility),
    #[error("overlay has {nodes} nodes; the exhaustive oracle accepts at most {ORACLE_MAX_NODES}")]
    TooLarge { nodes: usize },
    #[error("invalid query: {0}")]
    InvalidQuery(String),
    #[error("invalid overlay: {0}")]
    InvalidOverlay(String),
    #[error(transparent)]
    Charging(#[from] ChargingError),
}

impl OverlayGraph {
    pub fn new(
        nodes: Vec<OverlayNode>,
        arcs: Vec<OverlayArc>,
        origin: usize,
        destination: usize,
    ) -> Result<Self, RouterError> {
        let n = nodes.len();
        let bad = |m: String| Err(RouterError::InvalidOverlay(m));
        if origin >= n || destination >= n {
            return bad("origin/destination index out of range".into());
        }
        let mut ids = HashSet::new();
        for node in &nodes {
            if !ids.insert(node.id.as_str()) {
                return bad(format!("duplicate node id `{}`", node.id));
            }
            if !(node.wait_min >= 0.0 && node.wait_min.is_finite()) {
                return bad(format!("node `{}` has wait {}", node.id, node.wait_min));
            }
        }
        let mut out = vec![Vec::new(); n];
        for (k, arc) in arcs.iter().enumerate() {
            if arc.from >= n || arc.to >= n || arc.from == arc.to {
                return bad(format!("arc {k} has invalid endpoints"));
            }
            if !(arc.dist_mi >= 0.0 && arc.time_min >= 0.0 && arc.dist_mi.is_finite() && arc.time_min.is_finite()) {
                return bad(format!("arc {k} has negative or non-finite cost"));
            }
            if arc.dist_mi > arc.threshold_mi {
                return bad(format!("arc {k} is longer than its range threshold"));
            }
            out[arc.from].push(k);
        }
        Ok(OverlayGraph {
            nodes,
            arcs,
            out,
            origin,
            destination,
            pairs: None,
        })
    }

    pub fn with_pair_costs(mut self, pairs: Vec<Vec<Option<LegCost>>>) -> Self {
        if pairs.len() == self.nodes.len() {
            self.pairs = Some(pairs);
        }
        self
    }

    pub fn nodes(&self) -> &[OverlayNode] {
        &self.nodes
    }

    pub fn arcs(&self) -> &[OverlayArc] {
        &self.arcs
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn destination(&self) -> usize {
        self.destination
    }

    pub fn outgoing(&self, v: usize) -> impl Iterator<Item = &OverlayArc> {
        self.out[v].iter().map(move |&k| &self.arcs[k])
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.nodes.iter().position(|n| n.id == id)
    }

    pub fn pair_cost(&self, from: usize, to: usize) -> Option<LegCost> {
        self.pairs.as_ref().and_then(|p| p[from][to])
    }

    /// The overlay with one node (and its arcs) removed.
    pub fn without_node(&self, id: &str) -> Option<Self> {
        let victim = self.node_index(id)?;
        if victim == self.origin || victim == self.destination {
            return None;
        }
        let remap = |v: usize| if v > victim { v - 1 } else { v };
        let nodes = self
            .nodes
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != victim)
            .map(|(_, n)| n.clone())
            .collect();
        let arcs = self
            .arcs
            .iter()
            .filter(|a| a.from != victim && a.to != victim)
            .map(|a| OverlayArc {
                from: remap(a.from),
                to: remap(a.to),
                ..*a
            })
            .collect();
        let mut g = OverlayGraph::new(nodes, arcs, remap(self.origin), remap(self.destination)).ok()?;
        if let Some(p) = &self.pairs {
            let pairs = p
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != victim)
                .map(|(_, row)| {
                    row.iter()
                        .enumerate()
                        .filter(|&(j, _)| j != victim)
                        .map(|(_, c)| *c)
                        .collect()
                })
                .collect();
            g = g.with_pair_costs(pairs);
        }
        Some(g)
    }

    /// Position of each node in id order; the tie-break key for equal-cost paths.
    fn id_ranks(&self) -> Vec<u32> {
        let mut order: Vec<usize> = (0..self.nodes.len()).collect();
        order.sort_by(|&a, &b| self.nodes[a].id.cmp(&self.nodes[b].id));
        let mut rank = vec![0; order.len()];
        for (r, &v) in order.iter().enumerate() {
            rank[v] = r as u32;
        }
        rank
    }

    fn reachable_from_origin(&self) -> Vec<bool> {
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![self.origin];
        seen[self.origin] = true;
        while let Some(v) = stack.pop() {
            for arc in self.outgoing(v) {
                if !seen[arc.to] {
                    seen[arc.to] = true;
                    stack.push(arc.to);
                }
            }
        }
        seen
    }

    fn nearest_pair(&self, from: impl Fn(usize) -> bool, to: impl Fn(usize) -> bool) -> Option<(usize, usize, f64)> {
        let pairs = self.pairs.as_ref()?;
        let mut best: Option<(usize, usize, f64)> = None;
        for (i, row) in pairs.iter().enumerate().filter(|&(i, _)| from(i)) {
            for (j, c) in row.iter().enumerate().filter(|&(j, _)| j != i && to(j)) {
                if let Some(c) = c {
                    if best.is_none_or(|b| c.dist_mi < b.2) {
                        best = Some((i, j, c.dist_mi));
                    }
                }
            }
        }
        best
    }

    /// Explains why the destination cannot be reached.
    pub fn diagnose(&self) -> Infeasibility {
        let origin_range = self
            .arcs
            .iter()
            .filter(|a| a.from == self.origin)
            .map(|a| a.threshold_mi)
            .next();
        let leg_range = self
            .arcs
            .iter()
            .filter(|a| a.from != self.origin)
            .map(|a| a.threshold_mi)
            .fold(0.0, f64::max);
        let (o, d) = (self.origin, self.destination);
        if self.out[o].is_empty() {
            let nearest = self.nearest_pair(|i| i == o, |j| j != o).map(|(_, j, x)| (self.nodes[j].id.clone(), x));
            return Infeasibility::OriginIsolated {
                nearest,
                range_mi: origin_range.unwrap_or(0.0),
            };
        }
        if !self.arcs.iter().any(|a| a.to == d) {
            let nearest = self.nearest_pair(|i| i != d && i != o, |j| j == d).map(|(i, _, x)| (self.nodes[i].id.clone(), x));
            return Infeasibility::DestinationIsolated {
                nearest,
                range_mi: leg_range,
            };
        }
        let seen = self.reachable_from_origin();
        let reachable = (0..self.nodes.len())
            .filter(|&v| seen[v] && v != o)
            .map(|v| self.nodes[v].id.clone())
            .collect();
        let gap = self
            .nearest_pair(|i| seen[i], |j| !seen[j])
            .map(|(i, j, x)| (self.nodes[i].id.clone(), self.nodes[j].id.clone(), x));
        Infeasibility::RangeGap {
            reachable,
            gap,
            threshold_mi: leg_range.max(origin_range.unwrap_or(0.0)),
        }
    }
}

/// Which arc attribute the objective sums.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostMetric {
    /// Minutes; α is minutes per minute of waiting.
    #[default]
    Time,
    /// Miles; α is miles per minute of waiting.
    Distance,
}

impl CostMetric {
    fn arc_cost(self, arc: &OverlayArc) -> f64 {
        match self {
            CostMetric::Time => arc.time_min,
            CostMetric::Distance => arc.dist_mi,
        }
    }
}

/// An origin→destination path through the overlay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedPath {
    /// Overlay node indices, origin first.
    pub nodes: Vec<usize>,
    /// Overlay arc indices, one per leg.
    pub arcs: Vec<usize>,
    pub objective_value: f64,
}

/// Binary decision variables of the flow formulation for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct MilpAssignment {
    /// `x[k]` for every overlay arc.
    pub x: Vec<u8>,
    /// `y[i]` for every overlay node; only meaningful on chargers.
    pub y: Vec<u8>,
}

impl SolvedPath {
    pub fn to_milp(&self, overlay: &OverlayGraph) -> MilpAssignment {
        let mut x = vec![0u8; overlay.arcs.len()];
        for &k in &self.arcs {
            x[k] = 1;
        }
        let mut y = vec![0u8; overlay.nodes.len()];
        for &v in &self.nodes {
            if overlay.nodes[v].kind == NodeKind::Charger {
                y[v] = 1;
            }
        }
        MilpAssignment { x, y }
    }

    pub fn stop_ids<'a>(&self, overlay: &'a OverlayGraph) -> Vec<&'a str> {
        self.nodes
            .iter()
            .filter(|&&v| overlay.nodes[v].kind == NodeKind::Charger)
            .map(|&v| overlay.nodes[v].id.as_str())
            .collect()
    }
}

/// Node-split overlay: node `v` becomes `2v` (in) and `2v + 1` (out).
struct SplitGraph {
    /// `(head, cost, overlay arc)`; internal arcs carry `None`.
    adjacency: Vec<Vec<(usize, f64, Option<usize>)>>,
}

impl SplitGraph {
    fn build(overlay: &OverlayGraph, alpha: f64, metric: CostMetric) -> Self {
        let mut adjacency = vec![Vec::new(); 2 * overlay.nodes.len()];
        for (v, node) in overlay.nodes.iter().enumerate() {
            let visit = match node.kind {
                NodeKind::Charger => alpha * node.wait_min,
                _ => 0.0,
            };
            adjacency[2 * v].push((2 * v + 1, visit, None));
        }
        for (k, arc) in overlay.arcs.iter().enumerate() {
            adjacency[2 * arc.from + 1].push((2 * arc.to, metric.arc_cost(arc), Some(k)));
        }
        SplitGraph { adjacency }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    /// Id ranks of the overlay nodes entered so far.
    seq: Vec<u32>,
    arcs: Vec<usize>,
    nodes: Vec<usize>,
}

impl Label {
    fn key_cmp(&self, other: &Label) -> Ordering {
        self.cost.total_cmp(&other.cost).then_with(|| self.seq.cmp(&other.seq))
    }
}

struct QueueItem {
    label: Label,
    vertex: usize,
}

impl PartialEq for QueueItem {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueueItem {}

impl Ord for QueueItem {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .label
            .key_cmp(&self.label)
            .then_with(|| other.vertex.cmp(&self.vertex))
    }
}

impl PartialOrd for QueueItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn check_alpha(alpha: f64) -> Result<(), RouterError> {
    if alpha >= 0.0 && alpha.is_finite() {
        Ok(())
    } else {
        Err(RouterError::InvalidQuery(format!("alpha must be finite and nonnegative, got {alpha}")))
    }
}

/// Minimum-objective path with time as the arc cost.
pub fn solve(overlay: &OverlayGraph, alpha: f64) -> Result<SolvedPath, RouterError> {
    solve_with(overlay, alpha, CostMetric::Time)
}

/// Exact label-setting search on the node-split overlay. Among equal-cost paths
/// the one whose node-id sequence is lexicographically smallest wins.
pub fn solve_with(overlay: &OverlayGraph, alpha: f64, metric: CostMetric) -> Result<SolvedPath, RouterError> {
    check_alpha(alpha)?;
    if overlay.origin == overlay.destination {
        return Ok(SolvedPath {
            nodes: vec![overlay.origin],
            arcs: Vec::new(),
            objective_value: 0.0,
        });
    }
    let split = SplitGraph::build(overlay, alpha, metric);
    let ranks = overlay.id_ranks();
    let source = 2 * overlay.origin;
    let target = 2 * overlay.destination;

    let mut best: Vec<Option<Label>> = vec![None; split.adjacency.len()];
    let mut settled = vec![false; split.adjacency.len()];
    let start = Label {
        cost: 0.0,
        seq: vec![ranks[overlay.origin]],
        arcs: Vec::new(),
        nodes: vec![overlay.origin],
    };
    best[source] = Some(start.clone());
    let mut heap = BinaryHeap::new();
    heap.push(QueueItem { label: start, vertex: source });

    while let Some(QueueItem { label, vertex }) = heap.pop() {
        if settled[vertex] {
            continue;
        }
        settled[vertex] = true;
        if vertex == target {
            return Ok(SolvedPath {
                nodes: label.nodes,
                arcs: label.arcs,
                objective_value: label.cost,
            });
        }
        for &(head, cost, arc) in &split.adjacency[vertex] {
            if settled[head] {
                continue;
            }
            let mut next = Label {
                cost: label.cost + cost,
                ..label.clone()
            };
            if let Some(k) = arc {
                let to = overlay.arcs[k].to;
                next.seq.push(ranks[to]);
                next.arcs.push(k);
                next.nodes.push(to);
            }
            let improves = best[head]
                .as_ref()
                .is_none_or(|cur| next.key_cmp(cur) == Ordering::Less);
            if improves {
                best[head] = Some(next.clone());
                heap.push(QueueItem { label: next, vertex: head });
            }
        }
    }
    Err(RouterError::Infeasible(overlay.diagnose()))
}

/// Exhaustive enumeration of every simple origin→destination path.
pub fn brute_force_oracle(overlay: &OverlayGraph, alpha: f64, metric: CostMetric) -> Result<SolvedPath, RouterError> {
    check_alpha(alpha)?;
    if overlay.nodes.len() > ORACLE_MAX_NODES {
        return Err(RouterError::TooLarge { nodes: overlay.nodes.len() });
    }
    if overlay.origin == overlay.destination {
        return Ok(SolvedPath {
            nodes: vec![overlay.origin],
            arcs: Vec::new(),
            objective_value: 0.0,
        });
    }
    let ranks = overlay.id_ranks();

    type Candidate = (f64, Vec<u32>, Vec<usize>, Vec<usize>);

    struct Search<'a> {
        overlay: &'a OverlayGraph,
        alpha: f64,
        metric: CostMetric,
        ranks: Vec<u32>,
        visited: Vec<bool>,
        nodes: Vec<usize>,
        arcs: Vec<usize>,
        best: Option<Candidate>,
    }

    impl Search<'_> {
        fn visit(&mut self, v: usize, cost: f64) {
            if v == self.overlay.destination {
                let seq: Vec<u32> = self.nodes.iter().map(|&u| self.ranks[u]).collect();
                let better = match &self.best {
                    None => true,
                    Some((c, s, _, _)) => cost.total_cmp(c).then_with(|| seq.cmp(s)) == Ordering::Less,
                };
                if better {
                    self.best = Some((cost, seq, self.nodes.clone(), self.arcs.clone()));
                }
                return;
            }
            for &k in &self.overlay.out[v] {
                let arc = self.overlay.arcs[k];
                if self.visited[arc.to] {
                    continue;
                }
                let node = &self.overlay.nodes[arc.to];
                let visit = if node.kind == NodeKind::Charger {
                    self.alpha * node.wait_min
                } else {
                    0.0
                };
                self.visited[arc.to] = true;
                self.nodes.push(arc.to);
                self.arcs.push(k);
                self.visit(arc.to, cost + self.metric.arc_cost(&arc) + visit);
                self.arcs.pop();
                self.nodes.pop();
                self.visited[arc.to] = false;
            }
        }
    }

    let mut search = Search {
        overlay,
        alpha,
        metric,
        ranks,
        visited: vec![false; overlay.nodes.len()],
        nodes: vec![overlay.origin],
        arcs: Vec::new(),
        best: None,
    };
    search.visited[overlay.origin] = true;
    search.visit(overlay.origin, 0.0);
    match search.best {
        Some((cost, _, nodes, arcs)) => Ok(SolvedPath {
            nodes,
            arcs,
            objective_value: cost,
        }),
        None => Err(RouterError::Infeasible(overlay.diagnose())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteQuery {
    pub origin: GeoPoint,
    pub destination: GeoPoint,
    pub ev: EvModel,
    pub soc_start: f64,
    pub alpha: f64,
    /// Expected wait per station id; stations not listed wait zero.
    pub wait_profiles: BTreeMap<String, f64>,
}

impl RouteQuery {
    pub fn validate(&self) -> Result<(), RouterError> {
        if !(self.ev.soc_min <= self.soc_start && self.soc_start <= 1.0) {
            return Err(RouterError::InvalidQuery(format!(
                "soc_start {} outside [{}, 1]",
                self.soc_start, self.ev.soc_min
            )));
        }
        check_alpha(self.alpha)?;
        if let Some((id, w)) = self.wait_profiles.iter().find(|(_, w)| !(**w >= 0.0 && w.is_finite())) {
            return Err(RouterError::InvalidQuery(format!("wait for `{id}` is {w}")));
        }
        Ok(())
    }
}

pub fn wait_map(profiles: &[WaitProfile]) -> BTreeMap<String, f64> {
    profiles.iter().map(|p| (p.station_id.clone(), p.wait_min)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlanOptions {
    /// Speed for geodesic legs and road access legs.
    pub avg_speed_mph: f64,
    pub metric: CostMetric,
    /// Let a stop charge past the CC→CV transition when that removes a later stop.
    pub allow_cv_overshoot: bool,
    /// Ceiling SOC for overshoot charging.
    pub overshoot_max_soc: f64,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            avg_speed_mph: DEFAULT_AVG_SPEED_MPH,
            metric: CostMetric::Time,
            allow_cv_overshoot: false,
            overshoot_max_soc: 1.0,
        }
    }
}

pub fn build_overlay(
    query: &RouteQuery,
    stations: &[ChargerStation],
    road: Option<&RoadNetwork>,
    opts: &PlanOptions,
) -> Result<OverlayGraph, RouterError> {
    query.validate()?;
    if !(opts.avg_speed_mph > 0.0) {
        return Err(RouterError::InvalidQuery("average speed must be positive".into()));
    }
    let same_place = query.origin == query.destination;
    let mut nodes = vec![OverlayNode {
        location: Some(query.origin),
        ..OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin)
    }];
    if !same_place {
        nodes.push(OverlayNode {
            location: Some(query.destination),
            ..OverlayNode::endpoint(DESTINATION_ID, NodeKind::Destination)
        });
    }
    for s in stations {
        nodes.push(OverlayNode {
            id: s.id.clone(),
            kind: NodeKind::Charger,
            location: Some(s.location),
            wait_min: query.wait_profiles.get(&s.id).copied().unwrap_or(0.0),
            power_kw: s.power_kw,
        });
    }
    let (origin, destination) = (0, if same_place { 0 } else { 1 });
    let points: Vec<GeoPoint> = nodes.iter().map(|n| n.location.expect("located")).collect();

    let pairs: Vec<Vec<Option<LegCost>>> = match road {
        Some(net) => net
            .pairwise_costs(&points, opts.avg_speed_mph)
            .into_iter()
            .map(|row| {
                row.into_iter()
                    .map(|c| c.map(|c| LegCost { dist_mi: c.length_miles, time_min: c.time_min }))
                    .collect()
            })
            .collect(),
        None => points
            .iter()
            .map(|&a| {
                points
                    .iter()
                    .map(|&b| {
                        let d = haversine_miles(a, b);
                        Some(LegCost {
                            dist_mi: d,
                            time_min: d / opts.avg_speed_mph * 60.0,
                        })
                    })
                    .collect()
            })
            .collect(),
    };

    let start_range = range_from_soc(&query.ev, query.soc_start);
    let leg_range = cc_range_miles(&query.ev);
    let mut arcs = Vec::new();
    if !same_place {
        for i in 0..nodes.len() {
            if i == destination {
                continue;
            }
            for j in 0..nodes.len() {
                if j == i || j == origin {
                    continue;
                }
                let threshold = if i == origin { start_range } else { leg_range };
                if let Some(c) = pairs[i][j].filter(|c| c.dist_mi <= threshold) {
                    arcs.push(OverlayArc {
                        from: i,
                        to: j,
                        dist_mi: c.dist_mi,
                        time_min: c.time_min,
                        threshold_mi: threshold,
                    });
                }
            }
        }
    }
    Ok(OverlayGraph::new(nodes, arcs, origin, destination)?.with_pair_costs(pairs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Leg {
    pub from: String,
    pub to: String,
    pub dist_mi: f64,
    pub time_min: f64,
    pub threshold_mi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopDetail {
    pub station_id: String,
    pub arrival_soc: f64,
    pub departure_soc: f64,
    pub wait_min: f64,
    pub charge_min: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Totals {
    pub travel_min: f64,
    pub wait_min: f64,
    pub charge_min: f64,
    pub total_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutePlan {
    pub stops: Vec<String>,
    pub legs: Vec<Leg>,
    pub stop_details: Vec<StopDetail>,
    pub totals: Totals,
    pub objective_value: f64,
    pub alpha: f64,
    pub arrival_soc: f64,
    /// Coordinates of origin, stops and destination in travel order.
    pub waypoints: Vec<GeoPoint>,
    pub cv_overshoot: bool,
}

/// `(from, to, cost, threshold)` of one leg of a concrete path.
type PathLeg = (usize, usize, LegCost, f64);

/// SOC bookkeeping along a fixed sequence of overlay nodes. Each stop charges to
/// the CC→CV transition, or higher if the next leg needs it.
fn evaluate_path(
    overlay: &OverlayGraph,
    legs: &[PathLeg],
    query: &RouteQuery,
    metric: CostMetric,
) -> Result<RoutePlan, RouterError> {
    let ev = &query.ev;
    let mut soc = query.soc_start;
    let mut plan = RoutePlan {
        stops: Vec::new(),
        legs: Vec::new(),
        stop_details: Vec::new(),
        totals: Totals::default(),
        objective_value: 0.0,
        alpha: query.alpha,
        arrival_soc: soc,
        waypoints: overlay.nodes[overlay.origin].location.into_iter().collect(),
        cv_overshoot: false,
    };
    for (idx, &(from, to, cost, threshold)) in legs.iter().enumerate() {
        plan.legs.push(Leg {
            from: overlay.nodes[from].id.clone(),
            to: overlay.nodes[to].id.clone(),
            dist_mi: cost.dist_mi,
            time_min: cost.time_min,
            threshold_mi: threshold,
        });
        plan.totals.travel_min += cost.time_min;
        plan.objective_value += match metric {
            CostMetric::Time => cost.time_min,
            CostMetric::Distance => cost.dist_mi,
        };
        soc -= cost.dist_mi / ev.rated_range_mi;
        let node = &overlay.nodes[to];
        plan.waypoints.extend(node.location);
        if node.kind != NodeKind::Charger {
            continue;
        }
        let next_leg = legs.get(idx + 1).map_or(0.0, |l| l.2.dist_mi);
        let target = ev.soc_cv.max(ev.soc_min + next_leg / ev.rated_range_mi);
        if target > ev.soc_cv + 1e-12 {
            plan.cv_overshoot = true;
        }
        let arrival = soc.max(0.0);
        let (charge_min, departure) = if arrival >= target {
            (0.0, arrival)
        } else {
            (charge_time_minutes(ev, node.power_kw, arrival, target.min(1.0))?, target)
        };
        plan.stops.push(node.id.clone());
        plan.stop_details.push(StopDetail {
            station_id: node.id.clone(),
            arrival_soc: arrival,
            departure_soc: departure,
            wait_min: node.wait_min,
            charge_min,
        });
        plan.totals.wait_min += node.wait_min;
        plan.totals.charge_min += charge_min;
        plan.objective_value += query.alpha * node.wait_min;
        soc = departure;
    }
    plan.arrival_soc = soc;
    plan.totals.total_min = plan.totals.travel_min + plan.totals.charge_min + plan.totals.wait_min;
    Ok(plan)
}

fn legs_of(overlay: &OverlayGraph, path: &SolvedPath) -> Vec<PathLeg> {
    path.arcs
        .iter()
        .map(|&k| {
            let a = overlay.arcs[k];
            (a.from, a.to, LegCost { dist_mi: a.dist_mi, time_min: a.time_min }, a.threshold_mi)
        })
        .collect()
}

/// Greedily drops stops whose removal, paid for by charging into the CV phase at
/// the previous charger, lowers total trip time.
fn merge_stops_with_overshoot(
    overlay: &OverlayGraph,
    mut legs: Vec<PathLeg>,
    mut plan: RoutePlan,
    query: &RouteQuery,
    opts: &PlanOptions,
) -> RoutePlan {
    let ev = &query.ev;
    let ceiling = opts.overshoot_max_soc.clamp(ev.soc_cv, 1.0);
    let overshoot_range = (ceiling - ev.soc_min) * ev.rated_range_mi;
    loop {
        let mut best: Option<(Vec<PathLeg>, RoutePlan)> = None;
        for k in 0..legs.len().saturating_sub(1) {
            let (p, _, _, _) = legs[k];
            let (_, q, _, _) = legs[k + 1];
            if overlay.nodes[p].kind != NodeKind::Charger {
                continue;
            }
            let Some(cost) = overlay.pair_cost(p, q).filter(|c| c.dist_mi <= overshoot_range) else {
                continue;
            };
            let mut candidate = legs.clone();
            candidate.splice(k..k + 2, [(p, q, cost, overshoot_range)]);
            let Ok(merged) = evaluate_path(overlay, &candidate, query, opts.metric) else {
                continue;
            };
            let incumbent = best.as_ref().map_or(plan.totals.total_min, |b| b.1.totals.total_min);
            if merged.totals.total_min < incumbent - 1e-9 {
                best = Some((candidate, merged));
            }
        }
        match best {
            Some((l, p)) => {
                legs = l;
                plan = p;
            }
            None => return plan,
        }
    }
}

/// Plans one trip: overlay construction, exact solve, then charge and wait
/// bookkeeping to report total time = travel + charging + waiting.
pub fn plan_route(
    query: &RouteQuery,
    stations: &[ChargerStation],
    road: Option<&RoadNetwork>,
    opts: &PlanOptions,
) -> Result<RoutePlan, RouterError> {
    let overlay = build_overlay(query, stations, road, opts)?;
    plan_on_overlay(&overlay, query, opts)
}

pub fn plan_on_overlay(overlay: &OverlayGraph, query: &RouteQuery, opts: &PlanOptions) -> Result<RoutePlan, RouterError> {
    query.validate()?;
    let path = solve_with(overlay, query.alpha, opts.metric)?;
    let legs = legs_of(overlay, &path);
    let mut plan = evaluate_path(overlay, &legs, query, opts.metric)?;
    plan.objective_value = path.objective_value;
    if opts.allow_cv_overshoot {
        plan = merge_stops_with_overshoot(overlay, legs, plan, query, opts);
    }
    Ok(plan)
}

/// Plans every query independently, keeping per-query failures.
pub fn plan_batch(
    queries: &[RouteQuery],
    stations: &[ChargerStation],
    road: Option<&RoadNetwork>,
    opts: &PlanOptions,
) -> Vec<Result<RoutePlan, RouterError>> {
    queries.iter().map(|q| plan_route(q, stations, road, opts)).collect()
}

/// Chargers a path visits, as a set of ids.
pub fn visited_chargers(overlay: &OverlayGraph, path: &SolvedPath) -> BTreeSet<String> {
    path.stop_ids(overlay).into_iter().map(str::to_owned).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arc(from: usize, to: usize, time: f64) -> OverlayArc {
        OverlayArc {
            from,
            to,
            dist_mi: time,
            time_min: time,
            threshold_mi: 1000.0,
        }
    }

    /// origin(0) destination(1) c1(2) c2(3) c3(4)
    fn diamond() -> OverlayGraph {
        let nodes = vec![
            OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin),
            OverlayNode::endpoint(DESTINATION_ID, NodeKind::Destination),
            OverlayNode::charger("c1", 50.0, 120.0),
            OverlayNode::charger("c2", 0.0, 120.0),
            OverlayNode::charger("c3", 0.0, 120.0),
        ];
        let arcs = vec![arc(0, 2, 50.0), arc(2, 1, 50.0), arc(0, 3, 40.0), arc(3, 4, 50.0), arc(4, 1, 40.0)];
        OverlayGraph::new(nodes, arcs, 0, 1).unwrap()
    }

    #[test]
    fn diamond_switches_with_alpha() {
        let g = diamond();
        let congested = solve(&g, 0.0).unwrap();
        assert_eq!(congested.stop_ids(&g), ["c1"]);
        assert_eq!(congested.objective_value, 100.0);
        let detour = solve(&g, 1.0).unwrap();
        assert_eq!(detour.stop_ids(&g), ["c2", "c3"]);
        assert_eq!(detour.objective_value, 130.0);
    }

    #[test]
    fn isolated_origin() {
        let mut g = diamond();
        g.arcs.retain(|a| a.from != 0);
        let g = OverlayGraph::new(g.nodes, g.arcs, 0, 1).unwrap();
        assert!(matches!(
            solve(&g, 1.0),
            Err(RouterError::Infeasible(Infeasibility::OriginIsolated { .. }))
        ));
        assert!(matches!(brute_force_oracle(&g, 1.0, CostMetric::Time), Err(RouterError::Infeasible(_))));
    }

    #[test]
    fn same_endpoint() {
        let g = OverlayGraph::new(vec![OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin)], vec![], 0, 0).unwrap();
        let p = solve(&g, 1.0).unwrap();
        assert!(p.arcs.is_empty());
        assert_eq!(p.objective_value, 0.0);
    }

    #[test]
    fn oracle_single_arc() {
        let nodes = vec![
            OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin),
            OverlayNode::endpoint(DESTINATION_ID, NodeKind::Destination),
        ];
        let g = OverlayGraph::new(nodes, vec![arc(0, 1, 7.0)], 0, 1).unwrap();
        let p = brute_force_oracle(&g, 1.0, CostMetric::Time).unwrap();
        assert_eq!(p.objective_value, 7.0);
        assert_eq!(p.arcs, [0]);
    }

    #[test]
    fn oracle_rejects_large() {
        let mut nodes = vec![
            OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin),
            OverlayNode::endpoint(DESTINATION_ID, NodeKind::Destination),
        ];
        nodes.extend((0..13).map(|i| OverlayNode::charger(format!("c{i:02}"), 0.0, 50.0)));
        let g = OverlayGraph::new(nodes, vec![], 0, 1).unwrap();
        assert_eq!(
            brute_force_oracle(&g, 1.0, CostMetric::Time),
            Err(RouterError::TooLarge { nodes: 15 })
        );
    }

    #[test]
    fn ties_prefer_smaller_ids() {
        let nodes = vec![
            OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin),
            OverlayNode::endpoint(DESTINATION_ID, NodeKind::Destination),
            OverlayNode::charger("b", 0.0, 50.0),
            OverlayNode::charger("a", 0.0, 50.0),
        ];
        let arcs = vec![arc(0, 2, 10.0), arc(2, 1, 10.0), arc(0, 3, 10.0), arc(3, 1, 10.0)];
        let g = OverlayGraph::new(nodes, arcs, 0, 1).unwrap();
        assert_eq!(solve(&g, 1.0).unwrap().stop_ids(&g), ["a"]);
        assert_eq!(brute_force_oracle(&g, 1.0, CostMetric::Time).unwrap().stop_ids(&g), ["a"]);
    }

    #[test]
    fn overlay_validation() {
        let nodes = vec![
            OverlayNode::endpoint(ORIGIN_ID, NodeKind::Origin),
            OverlayNode::endpoint(DESTINATION_ID, NodeKind::Destination),
        ];
        let long = OverlayArc {
            threshold_mi: 5.0,
            ..arc(0, 1, 7.0)
        };
        assert!(OverlayGraph::new(nodes.clone(), vec![long], 0, 1).is_err());
        assert!(OverlayGraph::new(nodes.clone(), vec![arc(0, 0, 1.0)], 0, 1).is_err());
        assert!(OverlayGraph::new(nodes, vec![], 0, 5).is_err());
    }

    #[test]
    fn milp_view() {
        let g = diamond();
        let p = solve(&g, 1.0).unwrap();
        let m = p.to_milp(&g);
        assert_eq!(m.x, [0, 0, 1, 1, 1]);
        assert_eq!(m.y, [0, 0, 0, 1, 1]);
    }

    #[test]
    fn remove_node() {
        let g = diamond();
        let h = g.without_node("c2").unwrap();
        assert_eq!(h.nodes().len(), 4);
        assert_eq!(solve(&h, 1.0).unwrap().stop_ids(&h), ["c1"]);
        assert!(g.without_node(ORIGIN_ID).is_none());
    }

    fn ev() -> EvModel {
        EvModel::new("fixture", 60.0, 281.0).unwrap()
    }

    fn query(from: GeoPoint, to: GeoPoint, soc: f64) -> RouteQuery {
        RouteQuery {
            origin: from,
            destination: to,
            ev: ev(),
            soc_start: soc,
            alpha: 1.0,
            wait_profiles: BTreeMap::new(),
        }
    }

    fn north(miles: f64) -> GeoPoint {
        // along a meridian, miles = Δlat · R · π/180
        GeoPoint::new(30.0 + miles / (crate::geo::EARTH_RADIUS_MI * std::f64::consts::PI / 180.0), -97.0).unwrap()
    }

    #[test]
    fn soc_at_reserve_isolates_origin() {
        let q = query(north(0.0), north(10.0), 0.15);
        let g = build_overlay(&q, &[], None, &PlanOptions::default()).unwrap();
        assert_eq!(g.outgoing(g.origin()).count(), 0);
    }

    #[test]
    fn direct_arc_within_start_range() {
        let q = query(north(0.0), north(100.0), 0.8);
        let plan = plan_route(&q, &[], None, &PlanOptions::default()).unwrap();
        assert!(plan.stops.is_empty());
        assert!((plan.totals.travel_min - 100.0).abs() < 1e-9);
        assert_eq!(plan.totals.total_min, plan.totals.travel_min);
    }

    #[test]
    fn distant_chargers_not_linked() {
        let stations = [
            ChargerStation { id: "a".into(), location: north(50.0), ports: 1, power_kw: 120.0 },
            ChargerStation { id: "b".into(), location: north(300.0), ports: 1, power_kw: 120.0 },
        ];
        let q = query(north(0.0), north(320.0), 0.8);
        let g = build_overlay(&q, &stations, None, &PlanOptions::default()).unwrap();
        let (a, b) = (g.node_index("a").unwrap(), g.node_index("b").unwrap());
        assert!(!g.outgoing(a).any(|arc| arc.to == b));
        match plan_route(&q, &stations, None, &PlanOptions::default()) {
            Err(RouterError::Infeasible(Infeasibility::RangeGap { gap: Some((from, to, d)), .. })) => {
                assert_eq!(from, "a");
                assert_eq!(to, "b");
                assert!((d - 250.0).abs() < 1e-6);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn one_stop_geodesic_plan() {
        let stations = [ChargerStation { id: "mid".into(), location: north(120.0), ports: 2, power_kw: 120.0 }];
        let mut q = query(north(0.0), north(210.0), 0.8);
        q.wait_profiles.insert("mid".into(), 15.0);
        let plan = plan_route(&q, &stations, None, &PlanOptions::default()).unwrap();
        assert_eq!(plan.stops, ["mid"]);
        assert!((plan.totals.total_min - 237.811_387_9).abs() < 1e-6, "{:?}", plan.totals);
    }

    #[test]
    fn invalid_soc_rejected() {
        let q = query(north(0.0), north(10.0), 0.05);
        assert!(matches!(plan_route(&q, &[], None, &PlanOptions::default()), Err(RouterError::InvalidQuery(_))));
    }

    #[test]
    fn same_place_query() {
        let q = query(north(5.0), north(5.0), 0.5);
        let plan = plan_route(&q, &[], None, &PlanOptions::default()).unwrap();
        assert!(plan.legs.is_empty());
        assert_eq!(plan.totals, Totals::default());
    }

    #[test]
    fn overshoot_removes_stop_when_worth_it() {
        // 0 -> a (100) -> b (150) -> dest (50): b is badly congested; charging past
        // the CV transition at `a` reaches the destination directly (200 mi).
        let stations = [
            ChargerStation { id: "a".into(), location: north(100.0), ports: 1, power_kw: 150.0 },
            ChargerStation { id: "b".into(), location: north(250.0), ports: 1, power_kw: 150.0 },
        ];
        let mut q = query(north(0.0), north(300.0), 0.8);
        q.wait_profiles.insert("b".into(), 60.0);
        let base = plan_route(&q, &stations, None, &PlanOptions::default()).unwrap();
        assert_eq!(base.stops, ["a", "b"]);
        let opts = PlanOptions { allow_cv_overshoot: true, ..Default::default() };
        let merged = plan_route(&q, &stations, None, &opts).unwrap();
        assert_eq!(merged.stops, ["a"]);
        assert!(merged.cv_overshoot);
        assert!(merged.totals.total_min < base.totals.total_min);
        assert!(merged.stop_details[0].departure_soc > q.ev.soc_cv);
        for leg in &merged.legs {
            assert!(leg.dist_mi <= leg.threshold_mi);
        }
    }
}
