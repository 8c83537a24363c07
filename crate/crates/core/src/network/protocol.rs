//! Routing-layer message handlers: hellos and GW_INFO, route discovery with probing,
//! source-routed forwarding, and route maintenance.

use std::collections::BTreeSet;

use rand::Rng;

use super::packet::{FlowId, GatewayRoute, Packet, Payload};
use super::{ActiveRoute, DestProbe, EpochRecord, Event, Network, ProbeRun, Repair, RreqAction, RreqLogEntry};
use crate::link_metrics::{is_eligible, path_reliability};
use crate::mpr::{check_bidirectional, select_mprs, HelloMessage, MprState};
use crate::qos::{
    admit_flow, combine_path_loss, congestion_loss_ratio, estimate_bandwidth, mean_abs_deviation,
    AdmitDecision, BandwidthInputs, ProbeSession,
};
use crate::routing::{
    choose_route_domain, discovery_scope, forward_filter, shared_relays, DiscoveryScope, FlowState,
    RouteDomain, RrepOutcome, LOCAL_REPAIR_TTL,
};
use crate::sim::{NodeId, Role};

fn has_repeats(path: &[NodeId]) -> bool {
    let set: BTreeSet<_> = path.iter().collect();
    set.len() != path.len()
}

impl Network {
    fn threshold(&self) -> f64 {
        self.params.reliability_threshold
    }

    /// Whether `node` accepts traffic that `from` sent over the radio.
    fn accepts_from(&self, node: NodeId, from: NodeId) -> bool {
        !self.features.reliability_filter
            || self.is_wired_pair(node, from)
            || forward_filter(self.nodes[node].links.reliability(from), self.threshold())
    }

    fn subnet(&self, node: NodeId) -> NodeId {
        self.topo.nodes[node].subnet_id
    }

    // ---- neighbourhood ----

    /// Refreshes the MPR set of `node` and returns its advertised (neighbours, MPRs).
    fn neighbourhood(&mut self, node: NodeId) -> (Vec<NodeId>, Vec<NodeId>) {
        let now = self.now();
        let validity = self.params.hello_validity_intervals;
        let filter = self.features.reliability_filter;
        let th = self.threshold();
        let st = &self.nodes[node];
        let live: Vec<&HelloMessage> = st
            .heard
            .values()
            .filter(|h| now - h.timestamp <= validity * h.interval)
            .collect();
        // Only links this node would accept traffic on are advertised, so two-hop coverage
        // never counts on a link the covered node would filter out.
        let neighbors: Vec<NodeId> = live
            .iter()
            .filter(|h| !filter || is_eligible(st.links.reliability(h.sender), th))
            .map(|h| h.sender)
            .collect();
        let one_hop: Vec<&HelloMessage> = live
            .iter()
            .copied()
            .filter(|h| check_bidirectional(node, h))
            .filter(|h| !filter || is_eligible(st.links.reliability(h.sender), th))
            .collect();
        let prev = &st.mpr_input;
        let unchanged = prev.one_hop.len() == one_hop.len()
            && one_hop.iter().all(|h| prev.two_hop.get(&h.sender) == Some(&h.neighbor_list));
        if !unchanged {
            let mut mpr = MprState::new(node);
            for h in &one_hop {
                mpr.one_hop.insert(h.sender);
                mpr.two_hop.insert(h.sender, h.neighbor_list.clone());
            }
            let sel = select_mprs(&mpr);
            let st = &mut self.nodes[node];
            st.mpr_input = mpr;
            st.mprs = sel.selected;
            st.mpr_uncovered = sel.uncovered;
        }
        let st = &self.nodes[node];
        self.stats.mpr_uncovered += st.mpr_uncovered as u64;
        let mprs: Vec<NodeId> = st.mprs.iter().copied().collect();
        (neighbors, mprs)
    }

    fn record_hello(&mut self, node: NodeId, from: NodeId, neighbors: &[NodeId], mprs: &[NodeId], interval: f64) {
        let now = self.now();
        let st = &mut self.nodes[node];
        st.links.record_with_interval(from, now, interval);
        let h = st.heard.entry(from).or_insert_with(|| HelloMessage {
            sender: from,
            neighbor_list: BTreeSet::new(),
            mprs: BTreeSet::new(),
            interval,
            timestamp: now,
        });
        if !h.neighbor_list.iter().eq(neighbors) {
            h.neighbor_list = neighbors.iter().copied().collect();
        }
        if !h.mprs.iter().eq(mprs) {
            h.mprs = mprs.iter().copied().collect();
        }
        h.interval = interval;
        h.timestamp = now;
    }

    pub(crate) fn on_hello_timer(&mut self, node: NodeId) {
        let interval = self.params.hello_interval;
        let (neighbors, mprs) = self.neighbourhood(node);
        let packet = Packet::control(Payload::Hello {
            neighbors,
            mprs,
            interval,
        });
        self.enqueue(node, packet, None);
        let next = interval * self.rng.gen_range(0.95..1.05);
        self.engine.schedule_in(next, Event::Hello(node));
    }

    pub(crate) fn on_beacon_timer(&mut self, node: NodeId) {
        let interval = self.params.igw_beacon_interval;
        let (neighbors, mprs) = self.neighbourhood(node);
        self.nodes[node].beacon_seq += 1;
        let packet = Packet::control(Payload::GwInfo {
            igw: node,
            seq: self.nodes[node].beacon_seq,
            path: vec![node],
            link_r: Vec::new(),
            neighbors,
            mprs,
            interval,
        });
        self.enqueue(node, packet, None);
        let next = interval * self.rng.gen_range(0.98..1.02);
        self.engine.schedule_in(next, Event::Beacon(node));
    }

    // ---- reception ----

    pub(crate) fn receive(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        if packet.route.is_some() {
            self.receive_routed(node, from, packet);
            return;
        }
        match packet.payload {
            Payload::Hello {
                ref neighbors,
                ref mprs,
                interval,
            } => {
                self.record_hello(node, from, neighbors, mprs, interval);
            }
            Payload::GwInfo { .. } => self.on_gw_info(node, from, packet),
            Payload::Rreq { .. } => self.on_rreq(node, from, packet),
            _ => {}
        }
    }

    fn on_gw_info(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        let Payload::GwInfo {
            igw,
            seq,
            path,
            link_r,
            neighbors,
            mprs,
            interval,
        } = packet.payload
        else {
            return;
        };
        if path.len() == 1 {
            self.record_hello(node, from, &neighbors, &mprs, interval);
        }
        if self.topo.nodes[node].role == Role::Igw || self.subnet(node) != self.subnet(igw) {
            return;
        }
        let bidirectional = self.nodes[node]
            .heard
            .get(&from)
            .is_some_and(|h| check_bidirectional(node, h));
        if !bidirectional || !self.accepts_from(node, from) || path.contains(&node) {
            return;
        }
        let now = self.engine.now();
        let st = &mut self.nodes[node];
        let r = st.links.reliability(from);
        let mut rs = link_r.clone();
        rs.push(r);
        if st.gw_seen.get(&igw).is_none_or(|s| *s < seq) {
            st.gw_seen.insert(igw, seq);
            let mut to_gateway: Vec<NodeId> = vec![node];
            to_gateway.extend(path.iter().rev());
            st.gateway = Some((
                GatewayRoute {
                    igw,
                    path: to_gateway,
                    link_r: rs.clone(),
                },
                now,
            ));
        }
        if self.topo.nodes[node].selfish || self.nodes[node].gw_relayed.get(&igw).is_some_and(|s| *s >= seq) {
            return;
        }
        // MPR flooding: relay the first copy that comes from a neighbour which selected us.
        let selected = !self.features.mpr
            || self.nodes[node]
                .heard
                .get(&from)
                .is_some_and(|h| h.mprs.contains(&node));
        if !selected {
            return;
        }
        self.nodes[node].gw_relayed.insert(igw, seq);
        let mut fwd_path = path;
        fwd_path.push(node);
        let relay = Packet::control(Payload::GwInfo {
            igw,
            seq,
            path: fwd_path,
            link_r: rs,
            neighbors: Vec::new(),
            mprs: Vec::new(),
            interval,
        });
        let d = self.jitter(self.params.gw_info_jitter);
        self.engine.schedule_in(d, Event::Relay { node, packet: Box::new(relay) });
    }

    // ---- discovery ----

    fn log_rreq(&mut self, node: NodeId, action: RreqAction, source: NodeId, request_id: u64, scope: &DiscoveryScope) {
        self.rreq_log.push(RreqLogEntry {
            time: self.now(),
            node,
            action,
            subnet: self.subnet(node),
            source,
            request_id,
            scope: scope.clone(),
        });
    }

    fn begin_discovery(&mut self, flow: FlowId) {
        let now = self.now();
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        let f = &self.flows[flow];
        let (src, dst) = (f.spec.source, f.spec.destination);
        let scope = discovery_scope(
            src,
            dst,
            self.subnet(src),
            self.subnet(dst),
            self.features.scoped_discovery,
        )
        .unwrap_or(DiscoveryScope::Everywhere);
        let source_gateway = if self.features.circular {
            self.fresh_gateway(src).cloned()
        } else {
            None
        };
        let wait = self.params.discovery_wait * 2f64.powi(f.attempt as i32);
        let f = &mut self.flows[flow];
        f.state = FlowState::Discovering;
        f.request_id = request_id;
        f.rreq_sent_at = now;
        f.candidates = crate::routing::CandidateTable::new();
        f.probe = None;
        f.discoveries += 1;
        self.stats.discoveries += 1;
        self.stats.rreq_originated += 1;
        log::debug!("t={now:.3} flow {flow}: discovery {request_id} attempt {} {src}->{dst}", self.flows[flow].attempt);
        self.log_rreq(src, RreqAction::Originate, src, request_id, &scope);
        self.nodes[src].rreq_seen.insert((src, request_id), now);
        let packet = Packet::control(Payload::Rreq {
            source: src,
            destination: dst,
            request_id,
            hop_list: vec![src],
            link_r: Vec::new(),
            source_gateway,
            scope,
            ttl: self.params.rreq_ttl,
            repair_targets: None,
            flow,
        });
        self.enqueue(src, packet, None);
        self.engine
            .schedule_in(wait, Event::DiscoveryTimeout { flow, request_id });
    }

    fn on_rreq(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        let Payload::Rreq {
            source,
            destination,
            request_id,
            hop_list,
            link_r,
            source_gateway,
            scope,
            ttl,
            repair_targets,
            flow,
        } = packet.payload
        else {
            return;
        };
        if !scope.contains(self.subnet(node)) {
            return;
        }
        self.log_rreq(node, RreqAction::Handle, source, request_id, &scope);
        if node == source || hop_list.contains(&node) || !self.accepts_from(node, from) {
            return;
        }
        let now = self.now();
        let mut hops = hop_list;
        hops.push(node);
        let mut rs = link_r;
        rs.push(self.nodes[node].links.reliability(from));

        let is_target = match &repair_targets {
            Some(t) => t.contains(&node),
            None => node == destination,
        };
        if is_target {
            self.answer_rreq(node, flow, source, request_id, hops, rs, source_gateway, repair_targets.is_some());
            return;
        }
        if self.nodes[node].rreq_seen.contains_key(&(source, request_id)) {
            return;
        }
        // As for GW_INFO, only a copy from a neighbour that selected us counts; others are
        // ignored without being remembered.
        let selected = !self.features.mpr
            || self.nodes[node]
                .heard
                .get(&from)
                .is_some_and(|h| h.mprs.contains(&node));
        if !selected {
            return;
        }
        self.nodes[node].rreq_seen.insert((source, request_id), now);
        if self.topo.nodes[node].selfish || ttl <= 1 {
            return;
        }
        self.stats.rreq_forwarded += 1;
        self.log_rreq(node, RreqAction::Relay, source, request_id, &scope);
        let relay = Packet::control(Payload::Rreq {
            source,
            destination,
            request_id,
            hop_list: hops,
            link_r: rs,
            source_gateway,
            scope,
            ttl: ttl - 1,
            repair_targets,
            flow,
        });
        let d = self.jitter(self.params.rreq_jitter);
        self.engine.schedule_in(d, Event::Relay { node, packet: Box::new(relay) });
    }

    #[allow(clippy::too_many_arguments)]
    fn answer_rreq(
        &mut self,
        node: NodeId,
        flow: FlowId,
        source: NodeId,
        request_id: u64,
        mesh: Vec<NodeId>,
        link_r: Vec<f64>,
        source_gateway: Option<GatewayRoute>,
        repair: bool,
    ) {
        let now = self.now();
        let hops = mesh.len() - 1;
        let max_replies = if repair { 1 } else { self.params.max_replies };
        let hop_count_only = self.features.hop_count_selection;
        let entry = self.nodes[node]
            .replies
            .entry((source, request_id))
            .or_insert((0, usize::MAX, now));
        if entry.0 >= max_replies || (hop_count_only && hops >= entry.1) {
            return;
        }
        entry.0 += 1;
        entry.1 = entry.1.min(hops);

        let mesh_rel = path_reliability(&link_r).unwrap_or(0.0);
        let reverse: Vec<NodeId> = mesh.iter().rev().copied().collect();
        let mut forward = mesh.clone();
        let mut domain = RouteDomain::Mesh;
        let mut reliability = mesh_rel;
        if self.features.circular && !repair {
            if let (Some(sg), Some(dg)) = (source_gateway, self.fresh_gateway(node).cloned()) {
                if sg.igw != dg.igw
                    && choose_route_domain(hops as u32, sg.hops(), dg.hops()) == RouteDomain::WiredForward
                {
                    let mut wired = sg.path.clone();
                    wired.extend(dg.path.iter().rev());
                    if !has_repeats(&wired) && shared_relays(&wired, &mesh).is_empty() {
                        let rs: Vec<f64> = sg.link_r.iter().chain(dg.link_r.iter()).copied().collect();
                        reliability = path_reliability(&rs).unwrap_or(1.0);
                        forward = wired;
                        domain = RouteDomain::WiredForward;
                    }
                }
            }
        }
        let rrep_route: Vec<NodeId> = forward.iter().rev().copied().collect();
        self.stats.rrep_sent += 1;
        let packet = Packet::control(Payload::Rrep {
            flow,
            source,
            destination: node,
            request_id,
            forward,
            reverse,
            reliability,
            domain,
            repair,
        })
        .with_route(rrep_route);
        self.send_routed(node, packet);
    }

    fn on_rrep(&mut self, node: NodeId, packet: Packet) {
        let Payload::Rrep {
            flow,
            source,
            request_id,
            forward,
            reverse,
            reliability,
            domain,
            repair,
            ..
        } = packet.payload
        else {
            return;
        };
        if repair {
            self.on_repair_reply(node, flow, request_id, forward);
            return;
        }
        let now = self.now();
        let f = &mut self.flows[flow];
        if f.spec.source != source || f.request_id != request_id {
            return;
        }
        let min_rel = self
            .features
            .reliability_filter
            .then_some(self.params.reliability_threshold);
        // The naive estimate: time taken to route the RREQ and its RREP along the path.
        let rrep_estimate = now - f.rreq_sent_at;
        self.stats.rrep_received += 1;
        log::debug!(
            "t={now:.3} flow {flow}: rrep {:?} {} hops r={reliability:.2} {domain:?}",
            f.state,
            forward.len() - 1
        );
        match f.state {
            FlowState::Discovering | FlowState::Probing => {}
            FlowState::Active => {
                let shorter = f
                    .route
                    .as_ref()
                    .is_some_and(|r| r.request_id == request_id && forward.len() < r.path.len());
                if self.features.hop_count_selection && !self.features.probing && shorter {
                    let epoch = f.epoch + 1;
                    self.activate(flow, epoch, forward, domain, None, rrep_estimate);
                }
                return;
            }
            FlowState::Failed => return,
        }
        let outcome = f
            .candidates
            .handle_rrep(forward, reverse, reliability, domain, rrep_estimate, min_rel);
        let RrepOutcome::Stored { rank, .. } = outcome else {
            return;
        };
        if f.state != FlowState::Discovering {
            return;
        }
        if self.features.probing {
            self.start_probe(flow);
        } else {
            let c = f.candidates.get_mut(rank).expect("stored candidate");
            c.tried = true;
            let (path, domain) = (c.path.clone(), c.domain);
            let epoch = f.epoch + 1;
            self.activate(flow, epoch, path, domain, None, rrep_estimate);
        }
    }

    pub(crate) fn on_discovery_timeout(&mut self, flow: FlowId, request_id: u64) {
        let f = &self.flows[flow];
        if f.request_id != request_id || f.state != FlowState::Discovering {
            return;
        }
        self.stats.discovery_timeouts += 1;
        log::debug!("t={:.3} flow {flow}: discovery {request_id} timed out", self.now());
        self.retry_or_fail(flow);
    }

    fn retry_or_fail(&mut self, flow: FlowId) {
        let f = &mut self.flows[flow];
        if f.attempt < self.params.discovery_retries {
            f.attempt += 1;
            self.begin_discovery(flow);
        } else {
            log::debug!("t={:.3} flow {flow}: discovery failed", self.engine.now());
            f.state = FlowState::Failed;
            f.probe = None;
            let doublings = f.failures.min(self.params.max_holdoff_doublings);
            f.failures += 1;
            self.stats.discoveries_failed += 1;
            let holdoff = self.params.discovery_holdoff * 2f64.powi(doublings as i32);
            self.engine.schedule_in(holdoff, Event::HoldoffEnd(flow));
        }
    }

    pub(crate) fn on_holdoff_end(&mut self, flow: FlowId) {
        if self.flows[flow].state == FlowState::Failed {
            self.flows[flow].attempt = 0;
            self.begin_discovery(flow);
        }
    }

    // ---- probing ----

    fn start_probe(&mut self, flow: FlowId) {
        let f = &mut self.flows[flow];
        let Some(c) = f.candidates.take_next() else {
            self.retry_or_fail(flow);
            return;
        };
        let (rank, path, reverse, domain, rrep_estimate) =
            (c.arrival_rank, c.path.clone(), c.reverse_path.clone(), c.domain, c.rrep_delay_estimate);
        f.epoch += 1;
        let total = 2 * (path.len() - 1);
        f.probe = Some(ProbeRun {
            epoch: f.epoch,
            rank,
            path,
            reverse,
            domain,
            total,
            sent: 0,
            rrep_estimate,
        });
        f.state = FlowState::Probing;
        let epoch = f.epoch;
        log::debug!("t={:.3} flow {flow}: probing rank {rank} ({total} probes)", self.engine.now());
        self.stats.probe_sessions += 1;
        self.on_probe_tick(flow, epoch);
    }

    pub(crate) fn on_probe_tick(&mut self, flow: FlowId, epoch: u32) {
        let now = self.now();
        let f = &mut self.flows[flow];
        let interval = f.interval();
        let size = f.spec.packet_size;
        let Some(run) = f.probe.as_mut().filter(|p| p.epoch == epoch) else {
            return;
        };
        if run.sent >= run.total {
            return;
        }
        let seq = run.sent as u32;
        run.sent += 1;
        let more = run.sent < run.total;
        let path = run.path.clone();
        let packet = Packet {
            payload: Payload::Probe {
                flow,
                epoch,
                seq,
                sent_at: now,
                link_congestion: Vec::new(),
                reply_route: run.reverse.clone(),
            },
            size_bytes: size,
            route: Some((path, 0)),
        };
        if more {
            self.engine.schedule_in(interval, Event::ProbeTick { flow, epoch });
        } else {
            self.engine.schedule_in(
                self.params.probe_reply_timeout,
                Event::ProbeTimeout { flow, epoch },
            );
        }
        self.send_routed(self.flows[flow].spec.source, packet);
    }

    pub(crate) fn on_probe_timeout(&mut self, flow: FlowId, epoch: u32) {
        let f = &self.flows[flow];
        if f.state == FlowState::Probing && f.probe.as_ref().is_some_and(|p| p.epoch == epoch) {
            self.stats.probe_timeouts += 1;
            log::debug!("t={:.3} flow {flow}: probe reply timed out", self.now());
            self.next_candidate(flow);
        }
    }

    fn next_candidate(&mut self, flow: FlowId) {
        if self.flows[flow].candidates.has_untried() {
            self.start_probe(flow);
        } else {
            self.flows[flow].probe = None;
            self.retry_or_fail(flow);
        }
    }

    fn on_probe_at_destination(&mut self, node: NodeId, packet: Packet) {
        let now = self.now();
        let Payload::Probe {
            flow,
            epoch,
            sent_at,
            link_congestion,
            reply_route,
            ..
        } = packet.payload
        else {
            return;
        };
        let path = packet.route.map(|(r, _)| r).unwrap_or_default();
        let interval = self.flows[flow].interval();
        let Ok(session) = ProbeSession::new(path) else {
            return;
        };
        let dp = self.nodes[node]
            .probes
            .entry((flow, epoch))
            .or_insert_with(|| DestProbe {
                session,
                congestion_sum: 0.0,
                reply_route,
                done: false,
            });
        if dp.done {
            return;
        }
        dp.congestion_sum += combine_path_loss(&link_congestion);
        let deadline = dp.session.record_arrival(now - sent_at, now, interval);
        let complete = dp.session.all_received();
        if let Some(t) = deadline {
            self.engine
                .schedule_in(t - now, Event::ProbeDeadline { node, flow, epoch });
        }
        if complete {
            self.finish_destination_probe(node, flow, epoch);
        }
    }

    pub(crate) fn finish_destination_probe(&mut self, node: NodeId, flow: FlowId, epoch: u32) {
        let now = self.now();
        let Some(dp) = self.nodes[node].probes.get_mut(&(flow, epoch)) else {
            return;
        };
        if dp.done {
            return;
        }
        dp.done = true;
        let Ok(avg_delay) = dp.session.finish() else {
            return;
        };
        let delays = &dp.session.delays_received_at_destination;
        let count = delays.len();
        let mad = mean_abs_deviation(delays);
        let p_congestion = (dp.congestion_sum / count as f64).clamp(0.0, 1.0);
        let route = dp.reply_route.clone();
        let packet = Packet::control(Payload::ProbeReply {
            flow,
            epoch,
            avg_delay,
            mad,
            count,
            p_congestion,
            sent_at: now,
        })
        .with_route(route);
        self.send_routed(node, packet);
    }

    fn on_probe_reply(&mut self, packet: Packet) {
        let now = self.now();
        let Payload::ProbeReply {
            flow,
            epoch,
            avg_delay,
            mad,
            p_congestion,
            sent_at,
            ..
        } = packet.payload
        else {
            return;
        };
        let raw = self.medium.model.raw_bandwidth;
        let k = self.params.k_factor;
        let f = &mut self.flows[flow];
        if f.state != FlowState::Probing {
            return;
        }
        let Some(run) = f.probe.clone().filter(|p| p.epoch == epoch) else {
            return;
        };
        let inputs = BandwidthInputs {
            packet_size: (f.spec.packet_size * 8) as f64,
            rtt_mean: (avg_delay + (now - sent_at)).max(1e-9),
            rtt_var: mad.max(0.0),
            k_factor: k,
            p_congestion,
            raw_bandwidth: raw,
        };
        let est_bw = estimate_bandwidth(&inputs).unwrap_or(0.0);
        if let Some(c) = f.candidates.get_mut(run.rank) {
            c.probe_avg_delay = Some(avg_delay);
            c.est_bandwidth = Some(est_bw);
        }
        let decision = admit_flow(
            avg_delay,
            f.spec.delay_bound,
            est_bw,
            f.spec.bw_min,
            f.candidates.has_untried(),
        );
        log::debug!(
            "t={now:.3} flow {flow}: probe delay {avg_delay:.4} mad {mad:.4} p {p_congestion:.3} bw {est_bw:.0} -> {decision:?}"
        );
        if decision != AdmitDecision::Admit {
            if avg_delay > f.spec.delay_bound {
                self.stats.probe_delay_rejections += 1;
            } else {
                self.stats.probe_bandwidth_rejections += 1;
            }
        }
        match decision {
            AdmitDecision::Admit => {
                f.probe = None;
                self.activate(flow, epoch, run.path, run.domain, Some(avg_delay), run.rrep_estimate);
            }
            AdmitDecision::TryNextPath => self.start_probe(flow),
            AdmitDecision::Reject => {
                f.probe = None;
                self.retry_or_fail(flow);
            }
        }
    }

    fn activate(
        &mut self,
        flow: FlowId,
        epoch: u32,
        path: Vec<NodeId>,
        domain: RouteDomain,
        probe_estimate: Option<f64>,
        rrep_estimate: f64,
    ) {
        log::debug!("t={:.3} flow {flow}: active on {path:?} ({domain:?})", self.engine.now());
        let f = &mut self.flows[flow];
        f.epoch = epoch;
        f.state = FlowState::Active;
        f.attempt = 0;
        f.failures = 0;
        f.activations += 1;
        f.epochs.insert(
            epoch,
            EpochRecord {
                flow,
                epoch,
                domain,
                hops: path.len() - 1,
                probe_estimate,
                rrep_estimate,
                first_seq: f.next_seq,
                delivered: 0,
                delay_sum: 0.0,
            },
        );
        f.route = Some(ActiveRoute {
            epoch,
            path,
            request_id: f.request_id,
        });
        self.stats.route_activations += 1;
        if domain == RouteDomain::WiredForward {
            self.stats.circular_activations += 1;
        }
        let backlog: Vec<u64> = f.buffer.drain(..).collect();
        for seq in backlog {
            self.send_data(flow, seq);
        }
    }

    // ---- data ----

    pub(crate) fn on_flow_start(&mut self, flow: FlowId) {
        self.flows[flow].attempt = 0;
        self.begin_discovery(flow);
        self.on_data_tick(flow);
    }

    pub(crate) fn on_data_tick(&mut self, flow: FlowId) {
        let f = &mut self.flows[flow];
        let interval = f.interval();
        f.offered += 1;
        let seq = f.next_seq;
        f.next_seq += 1;
        if f.state == FlowState::Active {
            self.send_data(flow, seq);
        } else if f.buffer.len() < self.params.source_buffer {
            f.buffer.push_back(seq);
        } else {
            self.stats.source_buffer_drops += 1;
        }
        self.engine.schedule_in(interval, Event::DataTick(flow));
    }

    fn send_data(&mut self, flow: FlowId, seq: u64) {
        let now = self.now();
        let f = &self.flows[flow];
        let Some(route) = f.route.as_ref() else {
            return;
        };
        let packet = Packet {
            payload: Payload::Data {
                flow,
                epoch: route.epoch,
                seq,
                sent_at: now,
            },
            size_bytes: f.spec.packet_size,
            route: Some((route.path.clone(), 0)),
        };
        self.send_routed(f.spec.source, packet);
    }

    fn on_data_delivered(&mut self, packet: Packet) {
        let now = self.now();
        let Payload::Data {
            flow,
            epoch,
            seq,
            sent_at,
        } = packet.payload
        else {
            return;
        };
        let bits = (packet.size_bytes * 8) as u64;
        let f = &mut self.flows[flow];
        let delay = now - sent_at;
        f.delivered += 1;
        f.delivered_bits += bits;
        f.delay_sum += delay;
        if let Some(e) = f.epochs.get_mut(&epoch).filter(|e| seq >= e.first_seq) {
            e.delivered += 1;
            e.delay_sum += delay;
        }
    }

    // ---- source-routed forwarding ----

    /// Sends a routed packet one hop further from `node`, which holds it at its current index.
    fn send_routed(&mut self, node: NodeId, mut packet: Packet) {
        let Some((route, idx)) = packet.route.as_ref() else {
            return;
        };
        let idx = *idx;
        if idx + 1 >= route.len() {
            return;
        }
        let next = route[idx + 1];
        if self.is_wired_pair(node, next) {
            if let Payload::Probe { link_congestion, .. } = &mut packet.payload {
                link_congestion.push(0.0);
            }
            self.send_wired(node, next, packet);
            return;
        }
        if self.nodes[node].broken.get(&next).is_some_and(|t| *t > self.now()) {
            self.undeliverable(node, next, packet);
            return;
        }
        if let Payload::Probe { link_congestion, .. } = &mut packet.payload {
            let ledger = self.medium.recent_ledger(node, next);
            link_congestion.push(congestion_loss_ratio(&ledger).value);
        }
        self.enqueue(node, packet, Some(next));
    }

    fn receive_routed(&mut self, node: NodeId, from: NodeId, mut packet: Packet) {
        let Some((route, idx)) = packet.route.as_mut() else {
            return;
        };
        *idx += 1;
        if route.get(*idx) != Some(&node) {
            return;
        }
        let last = *idx + 1 == route.len();
        if last {
            match packet.payload {
                Payload::Rrep { .. } => self.on_rrep(node, packet),
                Payload::Probe { .. } => self.on_probe_at_destination(node, packet),
                Payload::ProbeReply { .. } => self.on_probe_reply(packet),
                Payload::Data { .. } => self.on_data_delivered(packet),
                Payload::Rerr { flow, epoch } => self.on_rerr(flow, epoch),
                Payload::RouteUpdate { flow, epoch, ref path } => {
                    let path = path.clone();
                    self.on_route_update(flow, epoch, path)
                }
                _ => {}
            }
            return;
        }
        if self.topo.nodes[node].selfish {
            self.stats.selfish_dropped += 1;
            return;
        }
        if !self.accepts_from(node, from) {
            self.stats.selfish_suppressed += 1;
            return;
        }
        if let Payload::Data { flow, .. } = packet.payload {
            if let Some(rep) = self.nodes[node].repairs.get_mut(&flow) {
                let (route, idx) = packet.route.as_ref().expect("routed");
                if *route == rep.old_route && *idx == rep.index {
                    match &rep.new_route {
                        Some(new) => {
                            packet.route = Some((new.clone(), rep.index));
                        }
                        None => {
                            if rep.pending.len() < self.params.repair_buffer {
                                rep.pending.push(packet);
                            } else {
                                self.stats.route_break_drops += 1;
                            }
                            return;
                        }
                    }
                }
            }
        }
        self.send_routed(node, packet);
    }

    // ---- maintenance ----

    /// Called by the MAC when a unicast frame exhausted its retries.
    pub(crate) fn link_failure(&mut self, node: NodeId, next: NodeId, packet: Packet) {
        self.stats.link_breaks += 1;
        log::debug!("t={:.3} link {node}->{next} broke ({:?})", self.now(), packet.kind());
        let until = self.now() + self.params.broken_link_hold;
        self.nodes[node].broken.insert(next, until);
        self.undeliverable(node, next, packet);
        for p in self.drain_frames_to(node, next) {
            self.undeliverable(node, next, p);
        }
    }

    fn undeliverable(&mut self, node: NodeId, _next: NodeId, packet: Packet) {
        let Payload::Data { flow, epoch, seq, .. } = packet.payload else {
            return;
        };
        let idx = packet.route.as_ref().map_or(0, |(_, i)| *i);
        if idx == 0 {
            self.source_route_broken(flow, epoch, Some(seq));
            return;
        }
        if let Some(rep) = self.nodes[node].repairs.get_mut(&flow) {
            let same = packet.route.as_ref().is_some_and(|(r, i)| *r == rep.old_route && *i == rep.index);
            if same && rep.new_route.is_none() {
                if rep.pending.len() < self.params.repair_buffer {
                    rep.pending.push(packet);
                } else {
                    self.stats.route_break_drops += 1;
                }
                return;
            }
            if same || rep.new_route.as_ref().is_some_and(|r| packet.route.as_ref().is_some_and(|(pr, _)| pr == r)) {
                // the repaired route broke as well
                self.nodes[node].repairs.remove(&flow);
            }
        }
        self.start_local_repair(node, packet);
    }

    fn start_local_repair(&mut self, node: NodeId, packet: Packet) {
        let Payload::Data { flow, epoch, .. } = packet.payload else {
            return;
        };
        let Some((route, idx)) = packet.route.clone() else {
            return;
        };
        let targets: Vec<NodeId> = if idx + 2 < route.len() {
            route[idx + 2..].to_vec()
        } else {
            vec![route[route.len() - 1]]
        };
        let request_id = self.next_request_id;
        self.next_request_id += 1;
        self.stats.local_repairs += 1;
        self.nodes[node].repairs.insert(
            flow,
            Repair {
                request_id,
                old_route: route.clone(),
                index: idx,
                epoch,
                new_route: None,
                pending: vec![packet],
            },
        );
        let scope = if self.features.scoped_discovery {
            let f = &self.flows[flow].spec;
            let mut s: BTreeSet<NodeId> = targets.iter().map(|t| self.subnet(*t)).collect();
            s.insert(self.subnet(node));
            s.insert(self.subnet(f.source));
            s.insert(self.subnet(f.destination));
            DiscoveryScope::Subnets(s)
        } else {
            DiscoveryScope::Everywhere
        };
        self.log_rreq(node, RreqAction::Originate, node, request_id, &scope);
        let now = self.now();
        self.nodes[node].rreq_seen.insert((node, request_id), now);
        let rreq = Packet::control(Payload::Rreq {
            source: node,
            destination: *targets.last().expect("nonempty"),
            request_id,
            hop_list: vec![node],
            link_r: Vec::new(),
            source_gateway: None,
            scope,
            ttl: LOCAL_REPAIR_TTL,
            repair_targets: Some(targets),
            flow,
        });
        self.enqueue(node, rreq, None);
        self.engine.schedule_in(
            self.params.repair_wait,
            Event::RepairTimeout {
                node,
                flow,
                request_id,
            },
        );
    }

    fn on_repair_reply(&mut self, node: NodeId, flow: FlowId, request_id: u64, segment: Vec<NodeId>) {
        let Some(rep) = self.nodes[node].repairs.get_mut(&flow) else {
            return;
        };
        if rep.request_id != request_id || rep.new_route.is_some() {
            return;
        }
        let Some(&target) = segment.last() else {
            return;
        };
        let Some(pos) = rep.old_route.iter().position(|n| *n == target) else {
            return;
        };
        let mut new_route: Vec<NodeId> = rep.old_route[..rep.index].to_vec();
        new_route.extend(segment.iter().copied());
        new_route.extend(rep.old_route[pos + 1..].iter().copied());
        if has_repeats(&new_route) {
            return;
        }
        rep.new_route = Some(new_route.clone());
        let pending = std::mem::take(&mut rep.pending);
        let (index, epoch) = (rep.index, rep.epoch);
        let back: Vec<NodeId> = rep.old_route[..=index].iter().rev().copied().collect();
        self.stats.local_repair_successes += 1;
        for mut p in pending {
            p.route = Some((new_route.clone(), index));
            self.send_routed(node, p);
        }
        let update = Packet::control(Payload::RouteUpdate {
            flow,
            epoch,
            path: new_route,
        })
        .with_route(back);
        self.send_routed(node, update);
    }

    pub(crate) fn on_repair_timeout(&mut self, node: NodeId, flow: FlowId, request_id: u64) {
        let Some(rep) = self.nodes[node].repairs.get(&flow) else {
            return;
        };
        if rep.request_id != request_id || rep.new_route.is_some() {
            return;
        }
        let rep = self.nodes[node].repairs.remove(&flow).expect("present");
        log::debug!("t={:.3} flow {flow}: repair at {node} failed", self.now());
        self.stats.route_break_drops += rep.pending.len() as u64;
        let back: Vec<NodeId> = rep.old_route[..=rep.index].iter().rev().copied().collect();
        self.stats.rerr_sent += 1;
        let rerr = Packet::control(Payload::Rerr {
            flow,
            epoch: rep.epoch,
        })
        .with_route(back);
        self.send_routed(node, rerr);
    }

    fn on_rerr(&mut self, flow: FlowId, epoch: u32) {
        self.source_route_broken(flow, epoch, None);
    }

    fn source_route_broken(&mut self, flow: FlowId, epoch: u32, seq: Option<u64>) {
        let f = &mut self.flows[flow];
        let current = f.state == FlowState::Active && f.route.as_ref().map(|r| r.epoch) == Some(epoch);
        if let Some(seq) = seq {
            if f.state == FlowState::Active && !current {
                self.send_data(flow, seq);
                return;
            }
            if f.buffer.len() < self.params.source_buffer {
                f.buffer.push_front(seq);
            } else {
                self.stats.route_break_drops += 1;
            }
        }
        if !current {
            return;
        }
        f.route = None;
        f.attempt = 0;
        self.begin_discovery(flow);
    }

    fn on_route_update(&mut self, flow: FlowId, epoch: u32, path: Vec<NodeId>) {
        let f = &mut self.flows[flow];
        if let Some(r) = f.route.as_mut() {
            if r.epoch == epoch && f.state == FlowState::Active {
                r.path = path;
            }
        }
    }
}
