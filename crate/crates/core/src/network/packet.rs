//! Messages exchanged by the simulated nodes.

use crate::routing::{DiscoveryScope, RouteDomain};
use crate::sim::NodeId;

pub type FlowId = usize;

/// Gateway leg advertised in route requests: `path` runs from the node to its gateway.
#[derive(Debug, Clone, PartialEq)]
pub struct GatewayRoute {
    pub igw: NodeId,
    pub path: Vec<NodeId>,
    pub link_r: Vec<f64>,
}

impl GatewayRoute {
    pub fn hops(&self) -> u32 {
        (self.path.len() - 1) as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Hello {
        neighbors: Vec<NodeId>,
        mprs: Vec<NodeId>,
        interval: f64,
    },
    /// Gateway announcement. `path` runs from the gateway to the current transmitter; the
    /// originating beacon also carries the gateway's hello fields.
    GwInfo {
        igw: NodeId,
        seq: u64,
        path: Vec<NodeId>,
        link_r: Vec<f64>,
        neighbors: Vec<NodeId>,
        mprs: Vec<NodeId>,
        interval: f64,
    },
    Rreq {
        source: NodeId,
        destination: NodeId,
        request_id: u64,
        hop_list: Vec<NodeId>,
        link_r: Vec<f64>,
        source_gateway: Option<GatewayRoute>,
        scope: DiscoveryScope,
        ttl: u32,
        /// Set for local repair requests: any of these nodes may answer.
        repair_targets: Option<Vec<NodeId>>,
        flow: FlowId,
    },
    Rrep {
        flow: FlowId,
        source: NodeId,
        destination: NodeId,
        request_id: u64,
        forward: Vec<NodeId>,
        reverse: Vec<NodeId>,
        reliability: f64,
        domain: RouteDomain,
        /// Set when answering a local repair request.
        repair: bool,
    },
    Rerr {
        flow: FlowId,
        epoch: u32,
    },
    RouteUpdate {
        flow: FlowId,
        epoch: u32,
        path: Vec<NodeId>,
    },
    Probe {
        flow: FlowId,
        epoch: u32,
        seq: u32,
        sent_at: f64,
        link_congestion: Vec<f64>,
        /// Route the destination uses to return the measured delay.
        reply_route: Vec<NodeId>,
    },
    ProbeReply {
        flow: FlowId,
        epoch: u32,
        avg_delay: f64,
        mad: f64,
        count: usize,
        p_congestion: f64,
        sent_at: f64,
    },
    Data {
        flow: FlowId,
        epoch: u32,
        seq: u64,
        sent_at: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Kind {
    Hello,
    GwInfo,
    Rreq,
    Rrep,
    Rerr,
    RouteUpdate,
    Probe,
    ProbeReply,
    Data,
}

impl Kind {
    pub const ALL: [Kind; 9] = [
        Kind::Hello,
        Kind::GwInfo,
        Kind::Rreq,
        Kind::Rrep,
        Kind::Rerr,
        Kind::RouteUpdate,
        Kind::Probe,
        Kind::ProbeReply,
        Kind::Data,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Kind::Hello => "hello",
            Kind::GwInfo => "gw_info",
            Kind::Rreq => "rreq",
            Kind::Rrep => "rrep",
            Kind::Rerr => "rerr",
            Kind::RouteUpdate => "route_update",
            Kind::Probe => "probe",
            Kind::ProbeReply => "probe_reply",
            Kind::Data => "data",
        }
    }

    /// Routing control traffic that counts towards control overhead. Hellos are tallied
    /// separately; data is not overhead.
    pub fn is_routing_control(&self) -> bool {
        !matches!(self, Kind::Hello | Kind::Data)
    }

    /// Probes travel with data priority so that they see what data sees.
    pub fn is_data_priority(&self) -> bool {
        matches!(self, Kind::Data | Kind::Probe)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub payload: Payload,
    pub size_bytes: usize,
    /// Source route and the index of the node currently holding the packet.
    pub route: Option<(Vec<NodeId>, usize)>,
}

impl Packet {
    pub fn kind(&self) -> Kind {
        match self.payload {
            Payload::Hello { .. } => Kind::Hello,
            Payload::GwInfo { .. } => Kind::GwInfo,
            Payload::Rreq { .. } => Kind::Rreq,
            Payload::Rrep { .. } => Kind::Rrep,
            Payload::Rerr { .. } => Kind::Rerr,
            Payload::RouteUpdate { .. } => Kind::RouteUpdate,
            Payload::Probe { .. } => Kind::Probe,
            Payload::ProbeReply { .. } => Kind::ProbeReply,
            Payload::Data { .. } => Kind::Data,
        }
    }

    /// Wire size from field counts: 4 bytes per node id, 4 per reliability value.
    pub fn control(payload: Payload) -> Packet {
        let size_bytes = match &payload {
            Payload::Hello { neighbors, mprs, .. } => 24 + 4 * (neighbors.len() + mprs.len()),
            Payload::GwInfo {
                path,
                neighbors,
                mprs,
                ..
            } => 32 + 8 * path.len() + 4 * (neighbors.len() + mprs.len()),
            Payload::Rreq {
                hop_list,
                source_gateway,
                repair_targets,
                ..
            } => {
                40 + 8 * hop_list.len()
                    + source_gateway.as_ref().map_or(0, |g| 8 * g.path.len())
                    + repair_targets.as_ref().map_or(0, |t| 4 * t.len())
            }
            Payload::Rrep { forward, reverse, .. } => 40 + 4 * (forward.len() + reverse.len()),
            Payload::Rerr { .. } => 32,
            Payload::RouteUpdate { path, .. } => 32 + 4 * path.len(),
            Payload::ProbeReply { .. } => 56,
            Payload::Probe { .. } | Payload::Data { .. } => {
                panic!("probes and data carry an explicit size")
            }
        };
        Packet {
            payload,
            size_bytes,
            route: None,
        }
    }

    pub fn with_route(mut self, route: Vec<NodeId>) -> Packet {
        self.route = Some((route, 0));
        self
    }
}
