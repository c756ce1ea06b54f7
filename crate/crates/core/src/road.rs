//! Directed road graph and shortest-path queries over it.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};

use thiserror::Error;

use crate::geo::{haversine_miles, GeoPoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RoadError {
    #[error("arc {from}->{to}: length {length} and time {time} must be positive")]
    NonPositive { from: usize, to: usize, length: f64, time: f64 },
    #[error("arc {from}->{to}: implied speed {speed:.2} mph outside (1, 100]")]
    ImplausibleSpeed { from: usize, to: usize, speed: f64 },
    #[error("arc endpoint {0} out of range")]
    UnknownNode(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoadArc {
    pub to: usize,
    pub length_miles: f64,
    pub time_min: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RoadNetwork {
    ids: Vec<String>,
    locations: Vec<GeoPoint>,
    index: HashMap<String, usize>,
    adjacency: Vec<Vec<RoadArc>>,
}

/// Length and time of one route through the road network.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RouteCost {
    pub length_miles: f64,
    pub time_min: f64,
}

impl RoadNetwork {
    pub fn add_node(&mut self, id: String, location: GeoPoint) -> usize {
        let idx = self.ids.len();
        self.index.insert(id.clone(), idx);
        self.ids.push(id);
        self.locations.push(location);
        self.adjacency.push(Vec::new());
        idx
    }

    pub fn add_arc(&mut self, from: usize, to: usize, length_miles: f64, time_min: f64) -> Result<(), RoadError> {
        for n in [from, to] {
            if n >= self.ids.len() {
                return Err(RoadError::UnknownNode(n));
            }
        }
        if !(length_miles > 0.0 && time_min > 0.0) {
            return Err(RoadError::NonPositive { from, to, length: length_miles, time: time_min });
        }
        let speed = length_miles / time_min * 60.0;
        // allow for rounding when the time was derived from an exact speed
        if !(speed > 1.0 && speed <= 100.0 * (1.0 + 1e-12)) {
            return Err(RoadError::ImplausibleSpeed { from, to, speed });
        }
        self.adjacency[from].push(RoadArc { to, length_miles, time_min });
        Ok(())
    }

    pub fn node_count(&self) -> usize {
        self.ids.len()
    }

    pub fn arc_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum()
    }

    pub fn node_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn node_id(&self, idx: usize) -> &str {
        &self.ids[idx]
    }

    pub fn location(&self, idx: usize) -> GeoPoint {
        self.locations[idx]
    }

    pub fn arcs_from(&self, idx: usize) -> &[RoadArc] {
        &self.adjacency[idx]
    }

    /// Closest node by great-circle distance; ties go to the lower index.
    pub fn nearest_node(&self, p: GeoPoint) -> Option<(usize, f64)> {
        self.locations
            .iter()
            .enumerate()
            .map(|(i, &loc)| (i, haversine_miles(p, loc)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Single-source shortest paths by length, ties broken by travel time.
    pub fn shortest_from(&self, source: usize) -> Vec<Option<RouteCost>> {
        let n = self.node_count();
        let mut best: Vec<Option<RouteCost>> = vec![None; n];
        let mut done = vec![false; n];
        let mut heap = BinaryHeap::new();
        best[source] = Some(RouteCost { length_miles: 0.0, time_min: 0.0 });
        heap.push(Entry { length: 0.0, time: 0.0, node: source });
        while let Some(Entry { length, time, node }) = heap.pop() {
            if done[node] {
                continue;
            }
            done[node] = true;
            for arc in &self.adjacency[node] {
                let cand = RouteCost {
                    length_miles: length + arc.length_miles,
                    time_min: time + arc.time_min,
                };
                let better = match best[arc.to] {
                    None => true,
                    Some(cur) => cand.length_miles < cur.length_miles
                        || (cand.length_miles == cur.length_miles && cand.time_min < cur.time_min),
                };
                if better && !done[arc.to] {
                    best[arc.to] = Some(cand);
                    heap.push(Entry { length: cand.length_miles, time: cand.time_min, node: arc.to });
                }
            }
        }
        best
    }

    /// Route costs between every ordered pair of `points`. Each point is snapped to
    /// its nearest road node; the snap offset is added as a straight access leg
    /// driven at `access_speed_mph`. `None` marks unreachable pairs.
    pub fn pairwise_costs(&self, points: &[GeoPoint], access_speed_mph: f64) -> Vec<Vec<Option<RouteCost>>> {
        let n = points.len();
        let mut out = vec![vec![None; n]; n];
        if self.node_count() == 0 {
            return out;
        }
        let snaps: Vec<(usize, f64)> = points
            .iter()
            .map(|&p| self.nearest_node(p).expect("nonempty network"))
            .collect();
        let mut trees: HashMap<usize, Vec<Option<RouteCost>>> = HashMap::new();
        for (i, &(src, src_off)) in snaps.iter().enumerate() {
            let tree = trees.entry(src).or_insert_with(|| self.shortest_from(src));
            for (j, &(dst, dst_off)) in snaps.iter().enumerate() {
                if i == j {
                    out[i][j] = Some(RouteCost { length_miles: 0.0, time_min: 0.0 });
                    continue;
                }
                if let Some(c) = tree[dst] {
                    let access = src_off + dst_off;
                    out[i][j] = Some(RouteCost {
                        length_miles: c.length_miles + access,
                        time_min: c.time_min + access / access_speed_mph * 60.0,
                    });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    length: f64,
    time: f64,
    node: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .length
            .total_cmp(&self.length)
            .then_with(|| other.time.total_cmp(&self.time))
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> RoadNetwork {
        // a -1- b -1- c
        // |           |
        // +----3------+   (a-c direct, slower)
        let mut net = RoadNetwork::default();
        let a = net.add_node("a".into(), GeoPoint::new(32.0, -97.0).unwrap());
        let b = net.add_node("b".into(), GeoPoint::new(32.0, -96.98).unwrap());
        let c = net.add_node("c".into(), GeoPoint::new(32.0, -96.96).unwrap());
        for (x, y, l, t) in [(a, b, 1.0, 2.0), (b, c, 1.0, 2.0), (a, c, 3.0, 3.0)] {
            net.add_arc(x, y, l, t).unwrap();
            net.add_arc(y, x, l, t).unwrap();
        }
        net
    }

    #[test]
    fn shortest_by_length() {
        let net = grid();
        let tree = net.shortest_from(0);
        assert_eq!(tree[2], Some(RouteCost { length_miles: 2.0, time_min: 4.0 }));
    }

    #[test]
    fn rejects_bad_arcs() {
        let mut net = grid();
        assert!(matches!(net.add_arc(0, 1, 0.0, 1.0), Err(RoadError::NonPositive { .. })));
        assert!(matches!(net.add_arc(0, 1, 10.0, 1.0), Err(RoadError::ImplausibleSpeed { .. })));
        assert!(matches!(net.add_arc(0, 9, 1.0, 1.0), Err(RoadError::UnknownNode(9))));
    }

    #[test]
    fn unreachable_is_none() {
        let mut net = grid();
        net.add_node("island".into(), GeoPoint::new(33.0, -97.0).unwrap());
        assert_eq!(net.shortest_from(0)[3], None);
    }

    #[test]
    fn pairwise_with_snap() {
        let net = grid();
        let pts = [net.location(0), net.location(2)];
        let m = net.pairwise_costs(&pts, 60.0);
        assert_eq!(m[0][1].unwrap().length_miles, 2.0);
        assert_eq!(m[1][0].unwrap().length_miles, 2.0);
        assert_eq!(m[0][0].unwrap().length_miles, 0.0);
    }
}
