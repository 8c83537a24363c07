use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wmn_core::mpr::{
    flood_retransmissions, select_mprs, should_forward_broadcast, states_from_adjacency,
    BroadcastContext, MprState,
};

fn from_edges(n: usize, edges: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut adj = vec![BTreeSet::new(); n];
    for &(a, b) in edges {
        let (a, b) = (a % n, b % n);
        if a != b {
            adj[a].insert(b);
            adj[b].insert(a);
        }
    }
    adj.into_iter().map(|s| s.into_iter().collect()).collect()
}

fn connected(adj: &[Vec<usize>]) -> bool {
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![0];
    seen[0] = true;
    while let Some(v) = stack.pop() {
        for &u in &adj[v] {
            if !seen[u] {
                seen[u] = true;
                stack.push(u);
            }
        }
    }
    seen.iter().all(|s| *s)
}

/// Unit-disk graph of `n` points in a square, resampled until connected with mean degree
/// at least `min_degree`.
fn geometric_graph(n: usize, min_degree: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let side = 1000.0;
    let range = side * (min_degree / (n as f64 * std::f64::consts::PI)).sqrt() * 1.3;
    loop {
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
            .collect();
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1) <= range {
                    edges.push((i, j));
                }
            }
        }
        let adj = from_edges(n, &edges);
        let degree = 2.0 * edges.len() as f64 / n as f64;
        if degree >= min_degree && connected(&adj) {
            return adj;
        }
    }
}

fn assert_cover(st: &MprState, adj: &[Vec<usize>]) {
    let sel = select_mprs(st);
    assert_eq!(sel.uncovered, 0);
    assert!(sel.selected.is_subset(&st.one_hop));
    for x in st.strict_two_hop() {
        assert!(
            sel.selected.iter().any(|m| adj[*m].contains(&x)),
            "two-hop node {x} of {} left uncovered",
            st.owner
        );
    }
}

#[test]
fn isolated_and_leaf_nodes() {
    let adj = from_edges(3, &[(0, 1)]);
    let states = states_from_adjacency(&adj);
    assert!(select_mprs(&states[2]).selected.is_empty());
    assert!(select_mprs(&states[0]).selected.is_empty());
}

#[test]
fn path_graph_picks_the_only_relay() {
    let adj = from_edges(4, &[(0, 1), (1, 2), (2, 3)]);
    let states = states_from_adjacency(&adj);
    assert_eq!(select_mprs(&states[0]).selected, BTreeSet::from([1]));
    assert_eq!(select_mprs(&states[1]).selected, BTreeSet::from([2]));
    assert_eq!(flood_retransmissions(&adj, 0, true), (2, 4));
}

#[test]
fn forward_rule_requires_all_three_conditions() {
    for sel in [false, true] {
        for r in [0.3, 0.5, 0.9] {
            for in_scope in [false, true] {
                let ctx = BroadcastContext {
                    selected_by_previous_hop: sel,
                    previous_hop_reliability: r,
                    in_scope,
                };
                assert_eq!(should_forward_broadcast(&ctx, 0.5), sel && r >= 0.5 && in_scope);
            }
        }
    }
}

#[test]
fn mpr_flooding_suppresses_retransmissions() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut saved = 0usize;
    let mut total = 0usize;
    for trial in 0..50 {
        let n = 20 + trial % 30;
        let adj = geometric_graph(n, 4.0, &mut rng);
        for source in [0, n / 2] {
            let (blind, blind_reach) = flood_retransmissions(&adj, source, false);
            let (mpr, mpr_reach) = flood_retransmissions(&adj, source, true);
            assert_eq!(blind_reach, n);
            assert_eq!(mpr_reach, n, "MPR flood missed nodes (trial {trial})");
            assert!(mpr <= blind);
            assert!(mpr < blind, "no suppression on a {n}-node graph (trial {trial})");
            saved += blind - mpr;
            total += blind;
        }
    }
    let saving = saved as f64 / total as f64;
    assert!(saving > 0.3, "only {:.0}% of relays saved", saving * 100.0);
}

proptest! {
    #[test]
    fn selection_covers_every_strict_two_hop_node(
        n in 2usize..40,
        edges in prop::collection::vec((0usize..40, 0usize..40), 0..160),
    ) {
        let adj = from_edges(n, &edges);
        for st in states_from_adjacency(&adj) {
            assert_cover(&st, &adj);
        }
    }

    #[test]
    fn selection_is_no_larger_than_needed(
        n in 2usize..30,
        edges in prop::collection::vec((0usize..30, 0usize..30), 0..120),
    ) {
        let adj = from_edges(n, &edges);
        for st in states_from_adjacency(&adj) {
            let sel = select_mprs(&st).selected;
            let strict = st.strict_two_hop();
            prop_assert!(sel.len() <= strict.len());
            // Every chosen relay reaches at least one strict two-hop node.
            for m in &sel {
                prop_assert!(adj[*m].iter().any(|x| strict.contains(x)));
            }
        }
    }

    #[test]
    fn lossless_mpr_flood_reaches_all_of_a_connected_graph(seed in any::<u64>(), n in 5usize..45) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let adj = geometric_graph(n, 3.0, &mut rng);
        let source = rng.gen_range(0..n);
        let (mpr, reach) = flood_retransmissions(&adj, source, true);
        prop_assert_eq!(reach, n);
        prop_assert!(mpr <= flood_retransmissions(&adj, source, false).0);
    }
}
