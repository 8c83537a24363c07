use std::collections::BTreeSet;

use proptest::prelude::*;
use wmn_core::routing::{
    choose_route_domain, discovery_scope, forward_filter, shared_relays, CandidateTable,
    DiscoveryScope, RouteDomain, RouteRequest, RrepOutcome,
};
use wmn_core::SimError;

#[test]
fn same_subnet_scope_is_that_subnet() {
    let s = discovery_scope(10, 11, 5, 5, true).unwrap();
    assert_eq!(s, DiscoveryScope::Subnets(BTreeSet::from([5])));
    assert!(s.contains(5));
    assert!(!s.contains(6));
}

#[test]
fn cross_subnet_scope_is_the_union() {
    let s = discovery_scope(10, 20, 5, 7, true).unwrap();
    assert!(s.contains(5) && s.contains(7));
    assert!(!s.contains(6) && !s.contains(8));
}

#[test]
fn unscoped_discovery_reaches_everywhere() {
    let s = discovery_scope(10, 20, 5, 7, false).unwrap();
    assert!((0..100).all(|sub| s.contains(sub)));
}

#[test]
fn same_endpoints_are_rejected() {
    assert!(matches!(discovery_scope(3, 3, 5, 5, true), Err(SimError::SameEndpoints)));
}

#[test]
fn domain_rule_examples() {
    assert_eq!(choose_route_domain(6, 2, 2), RouteDomain::WiredForward);
    assert_eq!(choose_route_domain(3, 2, 2), RouteDomain::Mesh);
    assert_eq!(choose_route_domain(4, 2, 2), RouteDomain::Mesh);
    assert_eq!(choose_route_domain(1, 0, 0), RouteDomain::WiredForward);
}

#[test]
fn replies_are_ranked_by_arrival() {
    let mut t = CandidateTable::new();
    let store = |t: &mut CandidateTable, path: Vec<usize>, r: f64| {
        let rev = path.iter().rev().copied().collect();
        t.handle_rrep(path, rev, r, RouteDomain::Mesh, 0.01, Some(0.5))
    };
    assert_eq!(
        store(&mut t, vec![1, 2, 3], 0.8),
        RrepOutcome::Stored {
            rank: 1,
            start_probe: true
        }
    );
    assert_eq!(store(&mut t, vec![1, 4, 3], 0.4), RrepOutcome::BelowThreshold);
    assert_eq!(store(&mut t, vec![1, 2, 3], 0.9), RrepOutcome::Duplicate);
    assert_eq!(
        store(&mut t, vec![1, 5, 6, 3], 0.7),
        RrepOutcome::Stored {
            rank: 2,
            start_probe: false
        }
    );
    assert_eq!(t.len(), 2);
    assert_eq!(t.take_next().unwrap().arrival_rank, 1);
    assert_eq!(t.take_next().unwrap().arrival_rank, 2);
    assert!(t.take_next().is_none());
    assert!(!t.has_untried());
}

#[test]
fn threshold_can_be_disabled() {
    let mut t = CandidateTable::new();
    let out = t.handle_rrep(vec![1, 2], vec![2, 1], 0.1, RouteDomain::Mesh, 0.0, None);
    assert!(matches!(out, RrepOutcome::Stored { rank: 1, .. }));
}

#[test]
fn forward_filter_examples() {
    assert!(!forward_filter(0.0, 0.5));
    assert!(forward_filter(0.8, 0.5));
    assert!(forward_filter(0.5, 0.5));
}

#[test]
fn shared_relays_ignore_endpoints() {
    assert!(shared_relays(&[1, 2, 0, 3, 4], &[1, 5, 6, 4]).is_empty());
    assert_eq!(shared_relays(&[1, 2, 3, 4], &[1, 2, 7, 4]), BTreeSet::from([2]));
    assert!(shared_relays(&[], &[1, 2]).is_empty());
}

#[test]
fn hop_list_cycles_are_detected() {
    let mut r = RouteRequest {
        source: 1,
        destination: 9,
        request_id: 1,
        hop_list: vec![1, 2, 3],
        link_reliabilities: vec![0.9, 0.8],
        source_gateway_hops: Some(2),
        scope: DiscoveryScope::Everywhere,
    };
    assert!(r.is_acyclic());
    r.hop_list.push(2);
    assert!(!r.is_acyclic());
}

proptest! {
    #[test]
    fn wired_forward_iff_strictly_fewer_hops(mesh in 0u32..50, a in 0u32..25, b in 0u32..25) {
        let d = choose_route_domain(mesh, a, b);
        prop_assert_eq!(d == RouteDomain::WiredForward, a + b < mesh);
    }

    #[test]
    fn ranks_are_unique_and_increasing(rels in prop::collection::vec(0.0f64..=1.0, 1..30)) {
        let mut t = CandidateTable::new();
        for (i, r) in rels.iter().enumerate() {
            t.handle_rrep(vec![0, 100 + i, 1], vec![1, 100 + i, 0], *r, RouteDomain::Mesh, 0.0, Some(0.5));
        }
        let ranks: Vec<u32> = t.candidates().iter().map(|c| c.arrival_rank).collect();
        prop_assert!(ranks.windows(2).all(|w| w[0] < w[1]));
        prop_assert!(t.candidates().iter().all(|c| c.path_reliability >= 0.5));
        prop_assert_eq!(t.len(), rels.iter().filter(|r| **r >= 0.5).count());
    }
}
