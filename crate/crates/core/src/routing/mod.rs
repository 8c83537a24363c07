//! Route-discovery decisions: request scoping, reply ranking, circular (wired-forward)
//! routing, and the forwarding filter that shuts out unreliable or selfish neighbours.
//!
//! The event-driven state machine that uses these lives in [`crate::network`].

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::link_metrics::is_eligible;
use crate::sim::NodeId;

pub const RREQ_CACHE_HORIZON: f64 = 30.0;
pub const LOCAL_REPAIR_TTL: u32 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RouteDomain {
    Mesh,
    WiredForward,
}

/// Forward over the wired backbone iff both gateway legs together are strictly shorter than
/// the mesh path. Transit between gateways counts as zero hops.
pub fn choose_route_domain(mesh_hops: u32, src_gw_hops: u32, dst_gw_hops: u32) -> RouteDomain {
    if src_gw_hops + dst_gw_hops < mesh_hops {
        RouteDomain::WiredForward
    } else {
        RouteDomain::Mesh
    }
}

/// The set of subnets (identified by their mesh router) a route request may visit.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscoveryScope {
    Subnets(BTreeSet<NodeId>),
    Everywhere,
}

impl DiscoveryScope {
    pub fn contains(&self, subnet: NodeId) -> bool {
        match self {
            DiscoveryScope::Subnets(s) => s.contains(&subnet),
            DiscoveryScope::Everywhere => true,
        }
    }
}

/// Source subnet alone when both ends share it, otherwise the union of the two.
pub fn discovery_scope(
    source: NodeId,
    destination: NodeId,
    src_subnet: NodeId,
    dst_subnet: NodeId,
    scoped: bool,
) -> Result<DiscoveryScope, SimError> {
    if source == destination {
        return Err(SimError::SameEndpoints);
    }
    if !scoped {
        return Ok(DiscoveryScope::Everywhere);
    }
    Ok(DiscoveryScope::Subnets([src_subnet, dst_subnet].into_iter().collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteRequest {
    pub source: NodeId,
    pub destination: NodeId,
    pub request_id: u64,
    pub hop_list: Vec<NodeId>,
    /// `R` of each traversed link as measured by its receiving end.
    pub link_reliabilities: Vec<f64>,
    pub source_gateway_hops: Option<u32>,
    pub scope: DiscoveryScope,
}

impl RouteRequest {
    pub fn is_acyclic(&self) -> bool {
        let set: BTreeSet<_> = self.hop_list.iter().collect();
        set.len() == self.hop_list.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteCandidate {
    pub path: Vec<NodeId>,
    pub arrival_rank: u32,
    pub path_reliability: f64,
    pub probe_avg_delay: Option<f64>,
    pub est_bandwidth: Option<f64>,
    pub domain: RouteDomain,
    /// Mesh route back to the source; differs from `path` reversed for wired-forward routes.
    pub reverse_path: Vec<NodeId>,
    /// Half the RREQ-to-RREP round trip that produced this candidate.
    pub rrep_delay_estimate: f64,
    pub tried: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RrepOutcome {
    /// Stored with this rank; `start_probe` is set for the first candidate.
    Stored { rank: u32, start_probe: bool },
    Duplicate,
    BelowThreshold,
}

/// RREP records held by a source for one discovery, in arrival order.
#[derive(Debug, Clone, Default)]
pub struct CandidateTable {
    candidates: Vec<RouteCandidate>,
    next_rank: u32,
}

impl CandidateTable {
    pub fn new() -> Self {
        CandidateTable {
            candidates: Vec::new(),
            next_rank: 1,
        }
    }

    /// Stores a reply unless its path repeats a stored one or, when `min_reliability` is
    /// given, its reliability falls below it.
    #[allow(clippy::too_many_arguments)]
    pub fn handle_rrep(
        &mut self,
        path: Vec<NodeId>,
        reverse_path: Vec<NodeId>,
        path_reliability: f64,
        domain: RouteDomain,
        rrep_delay_estimate: f64,
        min_reliability: Option<f64>,
    ) -> RrepOutcome {
        if let Some(th) = min_reliability {
            if !is_eligible(path_reliability, th) {
                return RrepOutcome::BelowThreshold;
            }
        }
        if self.candidates.iter().any(|c| c.path == path) {
            return RrepOutcome::Duplicate;
        }
        let rank = self.next_rank;
        self.next_rank += 1;
        self.candidates.push(RouteCandidate {
            path,
            arrival_rank: rank,
            path_reliability,
            probe_avg_delay: None,
            est_bandwidth: None,
            domain,
            reverse_path,
            rrep_delay_estimate,
            tried: false,
        });
        RrepOutcome::Stored {
            rank,
            start_probe: rank == 1,
        }
    }

    /// The untried candidate with the lowest arrival rank, marked as tried.
    pub fn take_next(&mut self) -> Option<&mut RouteCandidate> {
        let c = self.candidates.iter_mut().find(|c| !c.tried)?;
        c.tried = true;
        Some(c)
    }

    pub fn has_untried(&self) -> bool {
        self.candidates.iter().any(|c| !c.tried)
    }

    pub fn get_mut(&mut self, rank: u32) -> Option<&mut RouteCandidate> {
        self.candidates.iter_mut().find(|c| c.arrival_rank == rank)
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn candidates(&self) -> &[RouteCandidate] {
        &self.candidates
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FlowState {
    Discovering,
    Probing,
    Active,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub source: NodeId,
    pub destination: NodeId,
    pub forward_route: Vec<NodeId>,
    pub reverse_route: Vec<NodeId>,
    pub bw_min: f64,
    pub delay_bound: f64,
    pub state: FlowState,
}

/// Relaying decision for unicast traffic: only packets arriving from a neighbour whose
/// link reliability clears the threshold are passed on.
pub fn forward_filter(previous_hop_reliability: f64, threshold: f64) -> bool {
    is_eligible(previous_hop_reliability, threshold)
}

/// For a wired-forward route: nodes shared by the forward route and the mesh reverse
/// route, other than the two endpoints. Empty means the routes are node-disjoint.
pub fn shared_relays(forward: &[NodeId], reverse: &[NodeId]) -> BTreeSet<NodeId> {
    let (Some(&src), Some(&dst)) = (forward.first(), forward.last()) else {
        return BTreeSet::new();
    };
    let fwd: BTreeSet<_> = forward.iter().copied().collect();
    reverse
        .iter()
        .copied()
        .filter(|n| *n != src && *n != dst && fwd.contains(n))
        .collect()
}
