use std::collections::BTreeMap;

use evplan_core::geo::GeoPoint;
use evplan_core::ingest::ChargerStation;
use evplan_core::robustness::{
    analyze, betweenness_centrality, build_charger_graph, degree_centrality, largest_component, percolate, ChargerGraph,
    PercolationPoint, Removal, RobustnessConfig, Weighting,
};
use evplan_oracles::largest_component_union_find;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("n{i:02}")).collect()
}

fn star(leaves: usize) -> ChargerGraph {
    let edges: Vec<_> = (1..=leaves).map(|i| (0, i, 1.0)).collect();
    ChargerGraph::from_edges(ids(leaves + 1), &edges).unwrap()
}

fn path(n: usize) -> ChargerGraph {
    let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, 1.0)).collect();
    ChargerGraph::from_edges(ids(n), &edges).unwrap()
}

fn fractions() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

#[test]
fn endpoints_of_the_curve() {
    for g in [star(9), path(12)] {
        let random = percolate(&g, Removal::Random { trials: 50, seed: 1 }, &fractions()).unwrap();
        assert_eq!(random[0].gcc_fraction, 1.0);
        assert_eq!(random[0].std, 0.0);
        assert_eq!(random.last().unwrap().gcc_fraction, 0.0);
        let ranking = degree_centrality(&g);
        let targeted = percolate(&g, Removal::Targeted(&ranking), &fractions()).unwrap();
        assert_eq!(targeted[0].gcc_fraction, 1.0);
        assert_eq!(targeted.last().unwrap().gcc_fraction, 0.0);
    }
}

#[test]
fn star_loses_hub_first() {
    let g = star(9);
    let ranking = degree_centrality(&g);
    let curve = percolate(&g, Removal::Targeted(&ranking), &[0.1]).unwrap();
    assert_eq!(curve[0].gcc_fraction, 0.1);
}

#[test]
fn targeted_by_betweenness_at_or_below_random_mean() {
    for g in [star(4), star(9), star(15), path(3), path(4), path(5)] {
        let ranking = betweenness_centrality(&g, Weighting::Weighted);
        let targeted = percolate(&g, Removal::Targeted(&ranking), &fractions()).unwrap();
        let random = percolate(&g, Removal::Random { trials: 200, seed: 3 }, &fractions()).unwrap();
        for (t, r) in targeted.iter().zip(&random) {
            assert!(t.gcc_fraction <= r.gcc_fraction + 1e-12, "{t:?} vs {r:?}");
        }
    }
}

#[test]
fn long_path_random_removal_fragments_faster() {
    // Static ranking removes the middle outward and leaves long tails; scattered
    // random removals cut a 10-node path into shorter pieces at half removal.
    let g = path(10);
    let ranking = betweenness_centrality(&g, Weighting::Weighted);
    let targeted = percolate(&g, Removal::Targeted(&ranking), &[0.5]).unwrap();
    let random = percolate(&g, Removal::Random { trials: 2000, seed: 3 }, &[0.5]).unwrap();
    assert_eq!(targeted[0].gcc_fraction, 0.3);
    assert!(random[0].gcc_fraction < 0.28, "{:?}", random[0]);
}

fn bytes(curve: &[PercolationPoint]) -> Vec<u8> {
    curve
        .iter()
        .flat_map(|p| [p.fraction_removed, p.gcc_fraction, p.std])
        .flat_map(f64::to_le_bytes)
        .collect()
}

#[test]
fn seeded_random_curves_are_bit_identical() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut edges = Vec::new();
    for a in 0..30 {
        for b in a + 1..30 {
            if rng.gen_bool(0.1) {
                edges.push((a, b, 1.0));
            }
        }
    }
    let g = ChargerGraph::from_edges(ids(30), &edges).unwrap();
    let run = |seed| bytes(&percolate(&g, Removal::Random { trials: 40, seed }, &fractions()).unwrap());
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn removal_count_uses_floor() {
    // 10 nodes on a path; 0.25 removes 2 nodes, the two highest-ranked by id tie-break
    let g = path(10);
    let flat: BTreeMap<String, f64> = g.ids().iter().map(|id| (id.clone(), 0.0)).collect();
    let curve = percolate(&g, Removal::Targeted(&flat), &[0.25]).unwrap();
    assert_eq!(curve[0].gcc_fraction, 0.8);
}

#[test]
fn invalid_fractions_rejected() {
    let g = path(4);
    assert!(percolate(&g, Removal::Random { trials: 1, seed: 0 }, &[0.5, 0.2]).is_err());
    assert!(percolate(&g, Removal::Random { trials: 1, seed: 0 }, &[1.5]).is_err());
}

#[test]
fn collinear_stations_form_path() {
    let deg = |mi: f64| mi / (evplan_core::geo::EARTH_RADIUS_MI * std::f64::consts::PI / 180.0);
    let stations: Vec<ChargerStation> = [0.0, 100.0, 200.0]
        .iter()
        .enumerate()
        .map(|(i, &mi)| ChargerStation {
            id: format!("s{i}"),
            location: GeoPoint::new(31.0 + deg(mi), -98.0).unwrap(),
            ports: 1,
            power_kw: 150.0,
        })
        .collect();
    let g = build_charger_graph(&stations, 150.0).unwrap();
    assert_eq!(g.edge_count(), 2);
    let report = analyze(&g, &RobustnessConfig { trials: 10, ..Default::default() }).unwrap();
    assert_eq!(report.betweenness["s1"], 1.0);
    assert_eq!(report.degree["s1"], 1.0);
    assert_eq!(report.percolation_targeted.len(), 21);
    assert!(build_charger_graph(&stations[..2], 0.0).is_err());
}

proptest! {
    #[test]
    fn largest_component_matches_union_find(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(1..25);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.12) {
                    edges.push((a, b));
                }
            }
        }
        let weighted: Vec<_> = edges.iter().map(|&(a, b)| (a, b, 1.0)).collect();
        let g = ChargerGraph::from_edges(ids(n), &weighted).unwrap();
        let removed: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        prop_assert_eq!(largest_component(&g, &removed), largest_component_union_find(n, &edges, &removed));
    }

    #[test]
    fn gcc_fractions_bounded_and_std_nonnegative(seed in 0u64..100_000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..20);
        let mut edges = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.gen_bool(0.2) {
                    edges.push((a, b, rng.gen_range(1.0..10.0)));
                }
            }
        }
        let g = ChargerGraph::from_edges(ids(n), &edges).unwrap();
        let curve = percolate(&g, Removal::Random { trials: 10, seed }, &fractions()).unwrap();
        for p in &curve {
            prop_assert!((0.0..=1.0).contains(&p.gcc_fraction));
            prop_assert!(p.std >= 0.0);
        }
        let ranking = betweenness_centrality(&g, Weighting::Weighted);
        let targeted = percolate(&g, Removal::Targeted(&ranking), &fractions()).unwrap();
        for w in targeted.windows(2) {
            prop_assert!(w[1].gcc_fraction <= w[0].gcc_fraction);
        }
    }
}
