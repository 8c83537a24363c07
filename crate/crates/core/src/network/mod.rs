//! Packet-level simulation of the routing protocol over the shared medium.
//!
//! Every node runs the same state machine: periodic hellos feed link reliability and MPR
//! selection, gateways flood GW_INFO within their subnet, and sources discover, probe and
//! maintain source routes for their CBR flows. Feature switches turn individual mechanisms
//! off so that ablated variants run through exactly the same code.

mod mac;
mod packet;
mod protocol;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::link_metrics::{LinkReliabilityTable, DEFAULT_ALPHA, DEFAULT_WINDOW, ELIGIBILITY_THRESHOLD};
use crate::mpr::{HelloMessage, MprState};
use crate::qos::{ProbeSession, DEFAULT_K_FACTOR};
use crate::routing::{CandidateTable, DiscoveryScope, FlowState, RouteDomain};
use crate::sim::{Engine, Medium, MediumCounters, MediumModel, NodeId, Role, Topology};

pub use packet::{FlowId, GatewayRoute, Kind, Packet, Payload};

use mac::{AirTx, MacState};

/// Protocol mechanisms that can be switched off independently.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Features {
    /// Only MPRs of the previous hop re-broadcast RREQ and GW_INFO.
    pub mpr: bool,
    /// Destinations may answer with a wired-forward route.
    pub circular: bool,
    /// Drop traffic from neighbours whose link reliability is below the threshold, and
    /// discard replies over unreliable paths.
    pub reliability_filter: bool,
    /// Confine route requests to the source and destination subnets.
    pub scoped_discovery: bool,
    /// Probe candidate paths before admitting a flow.
    pub probing: bool,
    /// Without probing: take the first reply and switch to any shorter one that follows.
    pub hop_count_selection: bool,
}

impl Features {
    pub fn full() -> Self {
        Features {
            mpr: true,
            circular: true,
            reliability_filter: true,
            scoped_discovery: true,
            probing: true,
            hop_count_selection: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProtocolParams {
    pub hello_interval: f64,
    pub igw_beacon_interval: f64,
    /// A neighbour is dropped after this many hello intervals of silence.
    pub hello_validity_intervals: f64,
    pub reliability_alpha: f64,
    pub reliability_window: f64,
    pub reliability_threshold: f64,
    /// How long a learned gateway route stays usable.
    pub gateway_validity: f64,
    pub rreq_jitter: f64,
    pub gw_info_jitter: f64,
    pub rreq_ttl: u32,
    pub discovery_wait: f64,
    pub discovery_retries: u32,
    /// Pause after a failed discovery; doubles with each consecutive failure up to
    /// `2^max_holdoff_doublings` times this value.
    pub discovery_holdoff: f64,
    pub max_holdoff_doublings: u32,
    /// Route replies a destination sends per request.
    pub max_replies: u32,
    pub k_factor: f64,
    /// Slack after the last probe before the source gives up on a reply.
    pub probe_reply_timeout: f64,
    pub repair_wait: f64,
    /// How long a link stays marked broken after retries run out.
    pub broken_link_hold: f64,
    pub queue_capacity: usize,
    pub source_buffer: usize,
    pub repair_buffer: usize,
    /// Outbound data queue fill fraction at which a node counts as saturated.
    pub saturation_fraction: f64,
}

impl Default for ProtocolParams {
    fn default() -> Self {
        ProtocolParams {
            hello_interval: 0.25,
            igw_beacon_interval: 0.2,
            hello_validity_intervals: 3.0,
            reliability_alpha: DEFAULT_ALPHA,
            reliability_window: DEFAULT_WINDOW,
            reliability_threshold: ELIGIBILITY_THRESHOLD,
            gateway_validity: 1.0,
            rreq_jitter: 0.01,
            gw_info_jitter: 0.005,
            rreq_ttl: 32,
            discovery_wait: 1.0,
            discovery_retries: 2,
            discovery_holdoff: 10.0,
            max_holdoff_doublings: 4,
            max_replies: 3,
            k_factor: DEFAULT_K_FACTOR,
            probe_reply_timeout: 2.0,
            repair_wait: 0.5,
            broken_link_hold: 2.0,
            queue_capacity: 50,
            source_buffer: 32,
            repair_buffer: 16,
            saturation_fraction: 0.5,
        }
    }
}

impl ProtocolParams {
    pub fn validate(&self) -> Result<(), SimError> {
        let positive = [
            ("hello_interval", self.hello_interval),
            ("igw_beacon_interval", self.igw_beacon_interval),
            ("hello_validity_intervals", self.hello_validity_intervals),
            ("reliability_window", self.reliability_window),
            ("gateway_validity", self.gateway_validity),
            ("discovery_wait", self.discovery_wait),
            ("discovery_holdoff", self.discovery_holdoff),
            ("probe_reply_timeout", self.probe_reply_timeout),
            ("repair_wait", self.repair_wait),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(SimError::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.reliability_alpha > 0.0 && self.reliability_alpha < 1.0) {
            return Err(SimError::InvalidConfig("reliability_alpha must lie in (0, 1)".into()));
        }
        if !(0.0..=1.0).contains(&self.reliability_threshold) {
            return Err(SimError::InvalidConfig("reliability_threshold must lie in [0, 1]".into()));
        }
        if self.rreq_jitter < 0.0 || self.gw_info_jitter < 0.0 || self.broken_link_hold < 0.0 {
            return Err(SimError::InvalidConfig("jitters and holds must be nonnegative".into()));
        }
        if self.queue_capacity == 0 || self.source_buffer == 0 || self.rreq_ttl == 0 || self.max_replies == 0 {
            return Err(SimError::InvalidConfig(
                "queue_capacity, source_buffer, rreq_ttl and max_replies must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.saturation_fraction) {
            return Err(SimError::InvalidConfig("saturation_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A constant-bit-rate flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowSpec {
    pub source: NodeId,
    pub destination: NodeId,
    pub start: f64,
    /// bits/s
    pub data_rate: f64,
    pub packet_size: usize,
    /// bits/s
    pub bw_min: f64,
    pub delay_bound: f64,
}

/// Route delay estimates and measured delay for one admitted path.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochRecord {
    pub flow: FlowId,
    pub epoch: u32,
    pub domain: RouteDomain,
    pub hops: usize,
    /// Mean one-way probe delay measured at the destination.
    pub probe_estimate: Option<f64>,
    /// Time from sending the RREQ to receiving this path's RREP.
    pub rrep_estimate: f64,
    /// First sequence number generated after activation. Earlier packets were queued at
    /// the source while no route existed and are left out of the delay statistics.
    pub first_seq: u64,
    /// Packets generated on this route and delivered.
    pub delivered: u64,
    pub delay_sum: f64,
}

impl EpochRecord {
    pub fn mean_delay(&self) -> Option<f64> {
        (self.delivered > 0).then(|| self.delay_sum / self.delivered as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlowReport {
    pub id: FlowId,
    pub source: NodeId,
    pub destination: NodeId,
    /// Either end of the flow is a selfish node.
    pub selfish: bool,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub delivered_bits: u64,
    pub mean_delay: Option<f64>,
    pub state: FlowState,
    pub discoveries: u32,
    pub activations: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RreqAction {
    Originate,
    /// The RREQ handler ran past the scope check.
    Handle,
    /// The node queued the RREQ for rebroadcast.
    Relay,
}

/// One RREQ event at a node.
#[derive(Debug, Clone, PartialEq)]
pub struct RreqLogEntry {
    pub time: f64,
    pub node: NodeId,
    pub action: RreqAction,
    pub subnet: NodeId,
    pub source: NodeId,
    pub request_id: u64,
    pub scope: DiscoveryScope,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct NetworkStats {
    /// Wireless bytes put on the air per message kind, one count per transmission attempt.
    pub air_bytes: BTreeMap<String, u64>,
    pub wired_bytes: u64,
    pub queue_drops: u64,
    /// Relayed packets dropped because the previous hop was below the reliability threshold.
    pub selfish_suppressed: u64,
    /// Packets a selfish node refused to relay.
    pub selfish_dropped: u64,
    pub route_break_drops: u64,
    pub source_buffer_drops: u64,
    pub link_breaks: u64,
    pub rreq_originated: u64,
    pub rreq_forwarded: u64,
    pub rrep_sent: u64,
    /// Discovery replies that reached their source.
    pub rrep_received: u64,
    pub rerr_sent: u64,
    pub local_repairs: u64,
    pub local_repair_successes: u64,
    pub discoveries: u64,
    pub discoveries_failed: u64,
    /// Discovery rounds that ended without any usable reply.
    pub discovery_timeouts: u64,
    pub probe_sessions: u64,
    /// Probe sessions whose reply never arrived.
    pub probe_timeouts: u64,
    pub probe_delay_rejections: u64,
    pub probe_bandwidth_rejections: u64,
    pub route_activations: u64,
    pub circular_activations: u64,
    pub mpr_uncovered: u64,
}

impl NetworkStats {
    /// Routing control bytes on the air: everything except hellos and data.
    pub fn control_overhead_bytes(&self) -> u64 {
        Kind::ALL
            .iter()
            .filter(|k| k.is_routing_control())
            .map(|k| self.air_bytes.get(k.name()).copied().unwrap_or(0))
            .sum()
    }

    pub fn hello_bytes(&self) -> u64 {
        self.air_bytes.get(Kind::Hello.name()).copied().unwrap_or(0)
    }
}

#[derive(Debug, Clone)]
pub(crate) enum Event {
    Hello(NodeId),
    Beacon(NodeId),
    WindowClose,
    MacAttempt { node: NodeId, token: u64 },
    TxEnd { node: NodeId, tx: u64 },
    MacResume { node: NodeId, token: u64 },
    /// Jittered broadcast relay.
    Relay { node: NodeId, packet: Box<Packet> },
    Wired { node: NodeId, from: NodeId, packet: Box<Packet> },
    FlowStart(FlowId),
    DataTick(FlowId),
    DiscoveryTimeout { flow: FlowId, request_id: u64 },
    HoldoffEnd(FlowId),
    ProbeTick { flow: FlowId, epoch: u32 },
    ProbeTimeout { flow: FlowId, epoch: u32 },
    ProbeDeadline { node: NodeId, flow: FlowId, epoch: u32 },
    RepairTimeout { node: NodeId, flow: FlowId, request_id: u64 },
}

/// Destination-side probe bookkeeping.
#[derive(Debug, Clone)]
pub(crate) struct DestProbe {
    session: ProbeSession,
    congestion_sum: f64,
    reply_route: Vec<NodeId>,
    done: bool,
}

/// A local repair in progress (or completed) at a relay.
#[derive(Debug, Clone)]
pub(crate) struct Repair {
    request_id: u64,
    old_route: Vec<NodeId>,
    index: usize,
    epoch: u32,
    new_route: Option<Vec<NodeId>>,
    pending: Vec<Packet>,
}

#[derive(Debug, Clone)]
pub(crate) struct NodeState {
    links: LinkReliabilityTable,
    heard: BTreeMap<NodeId, HelloMessage>,
    mprs: BTreeSet<NodeId>,
    /// Input and result of the last MPR computation, reused while the neighbourhood holds.
    mpr_input: MprState,
    mpr_uncovered: usize,
    gateway: Option<(GatewayRoute, f64)>,
    gw_seen: BTreeMap<NodeId, u64>,
    /// Latest GW_INFO sequence relayed, per gateway.
    gw_relayed: BTreeMap<NodeId, u64>,
    beacon_seq: u64,
    /// Requests already relayed (or refused for good), with the time first handled.
    rreq_seen: HashMap<(NodeId, u64), f64>,
    /// Replies sent per request: (count, fewest hops replied with, first time).
    replies: HashMap<(NodeId, u64), (u32, usize, f64)>,
    probes: HashMap<(FlowId, u32), DestProbe>,
    repairs: HashMap<FlowId, Repair>,
    broken: BTreeMap<NodeId, f64>,
}

impl NodeState {
    fn new(params: &ProtocolParams) -> Self {
        NodeState {
            links: LinkReliabilityTable::new(
                params.reliability_alpha,
                params.reliability_window,
                params.hello_interval,
            ),
            heard: BTreeMap::new(),
            mprs: BTreeSet::new(),
            mpr_input: MprState::default(),
            mpr_uncovered: 0,
            gateway: None,
            gw_seen: BTreeMap::new(),
            gw_relayed: BTreeMap::new(),
            beacon_seq: 0,
            rreq_seen: HashMap::new(),
            replies: HashMap::new(),
            probes: HashMap::new(),
            repairs: HashMap::new(),
            broken: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct ProbeRun {
    epoch: u32,
    rank: u32,
    path: Vec<NodeId>,
    reverse: Vec<NodeId>,
    domain: RouteDomain,
    total: usize,
    sent: usize,
    rrep_estimate: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ActiveRoute {
    epoch: u32,
    path: Vec<NodeId>,
    request_id: u64,
}

#[derive(Debug, Clone)]
pub(crate) struct Flow {
    spec: FlowSpec,
    state: FlowState,
    request_id: u64,
    attempt: u32,
    /// Consecutive discoveries that ended in failure.
    failures: u32,
    rreq_sent_at: f64,
    candidates: CandidateTable,
    epoch: u32,
    probe: Option<ProbeRun>,
    route: Option<ActiveRoute>,
    buffer: VecDeque<u64>,
    next_seq: u64,
    offered: u64,
    delivered: u64,
    delivered_bits: u64,
    delay_sum: f64,
    discoveries: u32,
    activations: u32,
    epochs: BTreeMap<u32, EpochRecord>,
}

impl Flow {
    fn interval(&self) -> f64 {
        (self.spec.packet_size * 8) as f64 / self.spec.data_rate
    }
}

/// A complete simulated network: topology, medium, per-node protocol state and flows.
/// Owns its random stream, so two networks built from equal inputs evolve identically.
pub struct Network {
    topo: Topology,
    medium: Medium,
    features: Features,
    params: ProtocolParams,
    engine: Engine<Event>,
    rng: ChaCha8Rng,
    nodes: Vec<NodeState>,
    macs: Vec<MacState>,
    /// Time until which each node senses the channel busy.
    nav: Vec<f64>,
    air: Vec<AirTx>,
    next_tx: u64,
    flows: Vec<Flow>,
    next_request_id: u64,
    stats: NetworkStats,
    rreq_log: Vec<RreqLogEntry>,
    last_seen_prune: f64,
}

impl Network {
    pub fn new(
        topo: Topology,
        model: MediumModel,
        features: Features,
        params: ProtocolParams,
        seed: u64,
    ) -> Result<Self, SimError> {
        params.validate()?;
        if model.len() != topo.len() {
            return Err(SimError::InvalidConfig(format!(
                "medium covers {} nodes, topology has {}",
                model.len(),
                topo.len()
            )));
        }
        let n = topo.len();
        let mut net = Network {
            nodes: (0..n).map(|_| NodeState::new(&params)).collect(),
            macs: (0..n).map(|_| MacState::new(model.phy.cw_min)).collect(),
            nav: vec![0.0; n],
            air: Vec::new(),
            next_tx: 0,
            medium: Medium::new(model),
            topo,
            features,
            params,
            engine: Engine::new(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            flows: Vec::new(),
            next_request_id: 1,
            stats: NetworkStats::default(),
            rreq_log: Vec::new(),
            last_seen_prune: 0.0,
        };
        for id in 0..n {
            let node = &net.topo.nodes[id];
            if node.role == Role::Igw {
                let t = net.rng.gen_range(0.0..net.params.igw_beacon_interval);
                net.engine.schedule_in(t, Event::Beacon(id));
            } else if !node.selfish {
                let t = net.rng.gen_range(0.0..net.params.hello_interval);
                net.engine.schedule_in(t, Event::Hello(id));
            }
        }
        net.engine
            .schedule_in(net.params.reliability_window, Event::WindowClose);
        Ok(net)
    }

    /// Registers a flow; discovery starts at `spec.start`.
    pub fn add_flow(&mut self, spec: FlowSpec) -> Result<FlowId, SimError> {
        let n = self.topo.len();
        if spec.source >= n || spec.destination >= n {
            return Err(SimError::InvalidConfig("flow endpoint out of range".into()));
        }
        if spec.source == spec.destination {
            return Err(SimError::SameEndpoints);
        }
        if !(spec.data_rate > 0.0) || spec.packet_size == 0 || !(spec.delay_bound > 0.0) || spec.bw_min < 0.0 {
            return Err(SimError::InvalidConfig(
                "flow rate, packet size and delay bound must be positive".into(),
            ));
        }
        let id = self.flows.len();
        self.engine.schedule(spec.start, Event::FlowStart(id))?;
        self.flows.push(Flow {
            spec,
            state: FlowState::Discovering,
            request_id: 0,
            attempt: 0,
            failures: 0,
            rreq_sent_at: 0.0,
            candidates: CandidateTable::new(),
            epoch: 0,
            probe: None,
            route: None,
            buffer: VecDeque::new(),
            next_seq: 0,
            offered: 0,
            delivered: 0,
            delivered_bits: 0,
            delay_sum: 0.0,
            discoveries: 0,
            activations: 0,
            epochs: BTreeMap::new(),
        });
        Ok(id)
    }

    /// Executes every event up to and including `t_end`.
    pub fn run_until(&mut self, t_end: f64) {
        while let Some(ev) = self.engine.pop_until(t_end) {
            self.dispatch(ev.payload);
        }
        self.engine.finish_at(t_end);
    }

    pub fn now(&self) -> f64 {
        self.engine.now()
    }

    pub fn events_executed(&self) -> u64 {
        self.engine.executed()
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn features(&self) -> Features {
        self.features
    }

    pub fn medium_counters(&self) -> &MediumCounters {
        &self.medium.counters
    }

    pub fn medium(&self) -> &Medium {
        &self.medium
    }

    pub fn stats(&self) -> &NetworkStats {
        &self.stats
    }

    pub fn rreq_log(&self) -> &[RreqLogEntry] {
        &self.rreq_log
    }

    pub fn link_reliability(&self, node: NodeId, neighbor: NodeId) -> f64 {
        self.nodes[node].links.reliability(neighbor)
    }

    pub fn mpr_set(&self, node: NodeId) -> &BTreeSet<NodeId> {
        &self.nodes[node].mprs
    }

    /// Hop count to the node's current gateway, if it has heard one recently.
    pub fn gateway_hops(&self, node: NodeId) -> Option<u32> {
        self.fresh_gateway(node).map(|g| g.hops())
    }

    pub fn flow_reports(&self) -> Vec<FlowReport> {
        self.flows
            .iter()
            .enumerate()
            .map(|(id, f)| FlowReport {
                id,
                source: f.spec.source,
                destination: f.spec.destination,
                selfish: self.topo.nodes[f.spec.source].selfish
                    || self.topo.nodes[f.spec.destination].selfish,
                offered_packets: f.offered,
                delivered_packets: f.delivered,
                delivered_bits: f.delivered_bits,
                mean_delay: (f.delivered > 0).then(|| f.delay_sum / f.delivered as f64),
                state: f.state,
                discoveries: f.discoveries,
                activations: f.activations,
            })
            .collect()
    }

    pub fn epoch_records(&self) -> Vec<EpochRecord> {
        self.flows
            .iter()
            .flat_map(|f| f.epochs.values().cloned())
            .collect()
    }

    /// The path a flow currently sends on, if it is active.
    pub fn active_route(&self, flow: FlowId) -> Option<&[NodeId]> {
        self.flows[flow].route.as_ref().map(|r| r.path.as_slice())
    }

    fn dispatch(&mut self, ev: Event) {
        match ev {
            Event::Hello(node) => self.on_hello_timer(node),
            Event::Beacon(node) => self.on_beacon_timer(node),
            Event::WindowClose => self.on_window_close(),
            Event::MacAttempt { node, token } => self.on_mac_attempt(node, token),
            Event::TxEnd { node, tx } => self.on_tx_end(node, tx),
            Event::MacResume { node, token } => self.on_mac_resume(node, token),
            Event::Relay { node, packet } => self.enqueue(node, *packet, None),
            Event::Wired { node, from, packet } => self.receive(node, from, *packet),
            Event::FlowStart(flow) => self.on_flow_start(flow),
            Event::DataTick(flow) => self.on_data_tick(flow),
            Event::DiscoveryTimeout { flow, request_id } => self.on_discovery_timeout(flow, request_id),
            Event::HoldoffEnd(flow) => self.on_holdoff_end(flow),
            Event::ProbeTick { flow, epoch } => self.on_probe_tick(flow, epoch),
            Event::ProbeTimeout { flow, epoch } => self.on_probe_timeout(flow, epoch),
            Event::ProbeDeadline { node, flow, epoch } => self.finish_destination_probe(node, flow, epoch),
            Event::RepairTimeout {
                node,
                flow,
                request_id,
            } => self.on_repair_timeout(node, flow, request_id),
        }
    }

    fn on_window_close(&mut self) {
        let now = self.now();
        for node in self.nodes.iter_mut() {
            node.links.close_window(now);
        }
        self.medium.roll_window();
        if now - self.last_seen_prune >= 10.0 {
            let horizon = crate::routing::RREQ_CACHE_HORIZON;
            for node in self.nodes.iter_mut() {
                node.rreq_seen.retain(|_, t| now - *t <= horizon);
                node.replies.retain(|_, r| now - r.2 <= horizon);
                node.broken.retain(|_, until| *until > now);
            }
            self.last_seen_prune = now;
        }
        self.engine
            .schedule_in(self.params.reliability_window, Event::WindowClose);
    }

    fn is_wired_pair(&self, a: NodeId, b: NodeId) -> bool {
        a != b && self.topo.nodes[a].role == Role::Igw && self.topo.nodes[b].role == Role::Igw
    }

    fn fresh_gateway(&self, node: NodeId) -> Option<&GatewayRoute> {
        let (g, at) = self.nodes[node].gateway.as_ref()?;
        (self.now() - at <= self.params.gateway_validity).then_some(g)
    }

    fn jitter(&mut self, max: f64) -> f64 {
        if max > 0.0 {
            self.rng.gen_range(0.0..max)
        } else {
            0.0
        }
    }
}
