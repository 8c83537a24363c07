//! Bidirectional neighbour detection from hello neighbour lists and multipoint relay
//! selection (greedy cover of the strict two-hop neighbourhood).

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::link_metrics::is_eligible;
use crate::sim::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct HelloMessage {
    pub sender: NodeId,
    pub neighbor_list: BTreeSet<NodeId>,
    /// Relays the sender has selected; a receiver listed here re-forwards the sender's
    /// broadcasts.
    pub mprs: BTreeSet<NodeId>,
    /// The sender's hello period in seconds.
    pub interval: f64,
    pub timestamp: f64,
}

/// True iff the receiver appears in the neighbour list advertised by the hello's sender.
pub fn check_bidirectional(self_id: NodeId, hello: &HelloMessage) -> bool {
    hello.neighbor_list.contains(&self_id)
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MprState {
    pub owner: NodeId,
    pub one_hop: BTreeSet<NodeId>,
    pub two_hop: BTreeMap<NodeId, BTreeSet<NodeId>>,
    pub selected_mprs: BTreeSet<NodeId>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MprSelection {
    pub selected: BTreeSet<NodeId>,
    /// Two-hop nodes that no current one-hop neighbour reaches (stale entries).
    pub uncovered: usize,
}

impl MprState {
    pub fn new(owner: NodeId) -> Self {
        MprState {
            owner,
            ..Default::default()
        }
    }

    /// Nodes two hops away that are neither the owner nor one of its one-hop neighbours.
    pub fn strict_two_hop(&self) -> BTreeSet<NodeId> {
        self.two_hop
            .values()
            .flatten()
            .copied()
            .filter(|n| *n != self.owner && !self.one_hop.contains(n))
            .collect()
    }

    fn reach(&self, n: NodeId) -> Option<&BTreeSet<NodeId>> {
        if self.one_hop.contains(&n) {
            self.two_hop.get(&n)
        } else {
            None
        }
    }
}

/// Greedy cover: repeatedly take the one-hop neighbour that covers the most still-uncovered
/// strict two-hop nodes, ties to the lower id.
pub fn select_mprs(state: &MprState) -> MprSelection {
    let strict = state.strict_two_hop();
    let size = strict.last().map_or(0, |m| m + 1);
    let mut uncovered = vec![false; size];
    for &x in &strict {
        uncovered[x] = true;
    }
    let mut remaining = strict.len();
    // Candidates in ascending id order, each with the strict two-hop nodes it reaches.
    let mut candidates: Vec<(NodeId, Vec<NodeId>)> = state
        .one_hop
        .iter()
        .filter_map(|&n| {
            let r: Vec<NodeId> = state.reach(n)?.iter().copied().filter(|x| strict.contains(x)).collect();
            (!r.is_empty()).then_some((n, r))
        })
        .collect();
    let mut selected = BTreeSet::new();
    while remaining > 0 {
        let mut best: Option<(usize, usize)> = None;
        for (i, (_, r)) in candidates.iter().enumerate() {
            let gain = r.iter().filter(|&&x| uncovered[x]).count();
            if gain > 0 && best.is_none_or(|(_, g)| gain > g) {
                best = Some((i, gain));
            }
        }
        let Some((i, _)) = best else { break };
        let (n, r) = candidates.swap_remove(i);
        // Keep ascending order so ties still go to the lower id.
        candidates.sort_unstable_by_key(|c| c.0);
        selected.insert(n);
        for x in r {
            if uncovered[x] {
                uncovered[x] = false;
                remaining -= 1;
            }
        }
    }
    MprSelection {
        selected,
        uncovered: remaining,
    }
}

/// Inputs to the re-forwarding decision for a broadcast control message.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BroadcastContext {
    pub selected_by_previous_hop: bool,
    pub previous_hop_reliability: f64,
    pub in_scope: bool,
}

pub fn should_forward_broadcast(ctx: &BroadcastContext, threshold: f64) -> bool {
    ctx.selected_by_previous_hop
        && is_eligible(ctx.previous_hop_reliability, threshold)
        && ctx.in_scope
}

/// Builds every node's MPR state from a symmetric adjacency list.
pub fn states_from_adjacency(adj: &[Vec<NodeId>]) -> Vec<MprState> {
    (0..adj.len())
        .map(|v| {
            let mut st = MprState::new(v);
            st.one_hop = adj[v].iter().copied().collect();
            for &n in &adj[v] {
                st.two_hop.insert(n, adj[n].iter().copied().collect());
            }
            st
        })
        .collect()
}

/// Counts re-broadcasts (excluding the origin's own transmission) of one lossless flood
/// from `source`, delivered hop by hop in breadth-first order. With `use_mpr`, a node
/// re-forwards once, on the first copy it hears from a neighbour that selected it; copies
/// from other neighbours are received but do not trigger a relay.
/// Returns `(retransmissions, nodes_reached)`.
pub fn flood_retransmissions(adj: &[Vec<NodeId>], source: NodeId, use_mpr: bool) -> (usize, usize) {
    let mprs: Vec<BTreeSet<NodeId>> = if use_mpr {
        states_from_adjacency(adj)
            .iter()
            .map(|s| select_mprs(s).selected)
            .collect()
    } else {
        Vec::new()
    };
    let mut received = vec![false; adj.len()];
    let mut relayed = vec![false; adj.len()];
    received[source] = true;
    relayed[source] = true;
    let mut queue = VecDeque::from([source]);
    let mut retransmissions = 0;
    while let Some(tx) = queue.pop_front() {
        for &rx in &adj[tx] {
            received[rx] = true;
            if relayed[rx] || (use_mpr && !mprs[tx].contains(&rx)) {
                continue;
            }
            relayed[rx] = true;
            retransmissions += 1;
            queue.push_back(rx);
        }
    }
    (retransmissions, received.iter().filter(|r| **r).count())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(v: &[NodeId]) -> BTreeSet<NodeId> {
        v.iter().copied().collect()
    }

    #[test]
    fn bidirectional_check() {
        let hello = HelloMessage {
            sender: 2,
            neighbor_list: set(&[1, 5]),
            mprs: BTreeSet::new(),
            interval: 1.0,
            timestamp: 0.0,
        };
        assert!(check_bidirectional(1, &hello));
        assert!(!check_bidirectional(3, &hello));
        let empty = HelloMessage {
            neighbor_list: BTreeSet::new(),
            ..hello
        };
        assert!(!check_bidirectional(1, &empty));
    }

    #[test]
    fn star_center_is_forced() {
        let mut st = MprState::new(0);
        st.one_hop = set(&[1]);
        st.two_hop.insert(1, set(&[0, 2, 3, 4, 5]));
        assert_eq!(select_mprs(&st).selected, set(&[1]));
    }

    #[test]
    fn empty_two_hop_selects_nothing() {
        let mut st = MprState::new(0);
        st.one_hop = set(&[1, 2]);
        st.two_hop.insert(1, set(&[0, 2]));
        st.two_hop.insert(2, set(&[0, 1]));
        assert!(select_mprs(&st).selected.is_empty());
    }

    #[test]
    fn larger_cover_wins() {
        // a = 10 covers {x, y}; b = 11 covers {y}.
        let mut st = MprState::new(0);
        st.one_hop = set(&[10, 11]);
        st.two_hop.insert(10, set(&[20, 21]));
        st.two_hop.insert(11, set(&[21]));
        assert_eq!(select_mprs(&st).selected, set(&[10]));
    }

    #[test]
    fn tie_goes_to_lower_id() {
        let mut st = MprState::new(0);
        st.one_hop = set(&[4, 3]);
        st.two_hop.insert(3, set(&[9]));
        st.two_hop.insert(4, set(&[9]));
        assert_eq!(select_mprs(&st).selected, set(&[3]));
    }

    #[test]
    fn stale_two_hop_is_counted_uncovered() {
        let mut st = MprState::new(0);
        st.one_hop = set(&[1]);
        st.two_hop.insert(1, set(&[5]));
        st.two_hop.insert(2, set(&[6])); // 2 is no longer a one-hop neighbour
        let sel = select_mprs(&st);
        assert_eq!(sel.selected, set(&[1]));
        assert_eq!(sel.uncovered, 1);
    }

    #[test]
    fn forward_rule_examples() {
        let ctx = |sel, r| BroadcastContext {
            selected_by_previous_hop: sel,
            previous_hop_reliability: r,
            in_scope: true,
        };
        assert!(!should_forward_broadcast(&ctx(false, 0.9), 0.5));
        assert!(should_forward_broadcast(&ctx(true, 0.6), 0.5));
        assert!(!should_forward_broadcast(&ctx(true, 0.3), 0.5));
        let mut out = ctx(true, 0.9);
        out.in_scope = false;
        assert!(!should_forward_broadcast(&out, 0.5));
    }
}
