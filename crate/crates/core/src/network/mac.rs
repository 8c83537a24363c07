//! A slotted CSMA/CA MAC with stop-and-wait ARQ for unicast frames.
//!
//! Nodes sense the channel through `nav`: any transmission marks the sender's neighbours
//! busy until it ends, and a unicast additionally reserves the receiver's neighbourhood for
//! the ACK. Backoff is quantized to slots, so nodes released by the same busy period can pick
//! the same slot and collide. A frame is lost at a receiver if any other transmission
//! audible there overlaps it (collisions, hidden terminals, half duplex), which is labelled
//! as congestion; otherwise the per-link error draw decides.

use std::collections::VecDeque;

use rand::Rng;

use super::packet::Packet;
use super::{Event, Network};
use crate::sim::{LossCause, NodeId};

#[derive(Debug, Clone)]
pub(crate) struct Frame {
    pub packet: Packet,
    /// `None` for broadcast.
    pub next_hop: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub(crate) struct MacState {
    control: VecDeque<Frame>,
    data: VecDeque<Frame>,
    current: Option<Frame>,
    busy: bool,
    retries: u32,
    /// Failed attempts of the current frame, by cause.
    collisions: u32,
    link_errors: u32,
    cw: u32,
    token: u64,
}

impl MacState {
    pub fn new(cw_min: u32) -> Self {
        MacState {
            control: VecDeque::new(),
            data: VecDeque::new(),
            current: None,
            busy: false,
            retries: 0,
            collisions: 0,
            link_errors: 0,
            cw: cw_min,
            token: 0,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct AirTx {
    id: u64,
    sender: NodeId,
    start: f64,
    end: f64,
}

impl Network {
    /// Hands a packet to the MAC of `node`. Full queues drop the newest packet.
    pub(crate) fn enqueue(&mut self, node: NodeId, packet: Packet, next_hop: Option<NodeId>) {
        let cap = self.params.queue_capacity;
        let mac = &mut self.macs[node];
        let queue = if packet.kind().is_data_priority() {
            &mut mac.data
        } else {
            &mut mac.control
        };
        if queue.len() >= cap {
            self.stats.queue_drops += 1;
            if let Some(nh) = next_hop {
                let bits = (packet.size_bytes * 8) as u64;
                self.medium.record(node, nh, bits, Err(LossCause::Congestion));
            }
            return;
        }
        queue.push_back(Frame { packet, next_hop });
        if !mac.busy {
            self.contend(node);
        }
    }

    fn contend(&mut self, node: NodeId) {
        let cw_min = self.medium.model.phy.cw_min;
        let mac = &mut self.macs[node];
        if mac.current.is_none() {
            mac.current = mac.control.pop_front().or_else(|| mac.data.pop_front());
            mac.retries = 0;
            mac.collisions = 0;
            mac.link_errors = 0;
            mac.cw = cw_min;
        }
        if mac.current.is_none() {
            mac.busy = false;
            return;
        }
        mac.busy = true;
        self.schedule_attempt(node);
    }

    fn schedule_attempt(&mut self, node: NodeId) {
        let phy = self.medium.model.phy;
        let base = self.now().max(self.nav[node]);
        let mac = &mut self.macs[node];
        mac.token += 1;
        let slots = self.rng.gen_range(0..=mac.cw);
        let at = base + phy.difs + slots as f64 * phy.slot;
        let token = mac.token;
        self.engine.schedule_in(at - self.engine.now(), Event::MacAttempt { node, token });
    }

    pub(crate) fn on_mac_attempt(&mut self, node: NodeId, token: u64) {
        if self.macs[node].token != token {
            return;
        }
        let now = self.now();
        if self.nav[node] > now {
            self.schedule_attempt(node);
            return;
        }
        let Some(frame) = self.macs[node].current.as_ref() else {
            self.macs[node].busy = false;
            return;
        };
        let phy = self.medium.model.phy;
        let size = frame.packet.size_bytes;
        let kind = frame.packet.kind();
        let next_hop = frame.next_hop;
        let end = now + self.medium.model.frame_time(size);
        let hold_end = if next_hop.is_some() {
            end + phy.sifs + phy.ack
        } else {
            end
        };
        let id = self.next_tx;
        self.next_tx += 1;
        self.air.push(AirTx {
            id,
            sender: node,
            start: now,
            end,
        });
        self.nav[node] = self.nav[node].max(hold_end);
        for &nb in self.topo.neighbors(node) {
            self.nav[nb] = self.nav[nb].max(end);
        }
        if let Some(r) = next_hop {
            for &nb in self.topo.neighbors(r) {
                self.nav[nb] = self.nav[nb].max(hold_end);
            }
        }
        *self.stats.air_bytes.entry(kind.name().to_string()).or_insert(0) += size as u64;
        self.engine.schedule_in(end - now, Event::TxEnd { node, tx: id });
    }

    fn collided(&self, tx: &AirTx, receiver: NodeId) -> bool {
        self.air.iter().any(|o| {
            o.id != tx.id
                && o.sender != tx.sender
                && o.start < tx.end
                && o.end > tx.start
                && (o.sender == receiver || self.topo.adjacent(o.sender, receiver))
        })
    }

    pub(crate) fn on_tx_end(&mut self, node: NodeId, tx_id: u64) {
        let now = self.now();
        let Some(tx) = self.air.iter().find(|t| t.id == tx_id).copied() else {
            return;
        };
        let Some(frame) = self.macs[node].current.take() else {
            return;
        };
        let receivers: Vec<NodeId> = match frame.next_hop {
            Some(r) => vec![r],
            None => self.topo.neighbors(node).to_vec(),
        };
        let saturated = self.macs[node].data.len() as f64
            >= self.params.saturation_fraction * self.params.queue_capacity as f64;
        let bits = (frame.packet.size_bytes * 8) as u64;
        let mut delivered = Vec::new();
        for r in receivers {
            let outcome = if r == node || !self.topo.adjacent(node, r) {
                Err(LossCause::NoLink)
            } else if self.collided(&tx, r) {
                Err(LossCause::Congestion)
            } else {
                self.medium.model.draw(node, r, saturated, &mut self.rng)
            };
            if frame.next_hop.is_some() {
                self.medium.record_attempt(bits, outcome);
                let mac = &mut self.macs[node];
                match outcome {
                    Ok(()) => self.medium.record_packet(node, r, Ok(())),
                    Err(LossCause::Congestion) => mac.collisions += 1,
                    Err(_) => mac.link_errors += 1,
                }
            } else {
                self.medium.record(node, r, bits, outcome);
            }
            if outcome.is_ok() {
                delivered.push(r);
            }
        }
        let horizon = now - 0.05;
        self.air.retain(|t| t.end >= horizon);

        let phy = self.medium.model.phy;
        match frame.next_hop {
            None => {
                self.contend(node);
                for r in delivered {
                    self.receive(r, node, frame.packet.clone());
                }
            }
            Some(r) => {
                let resume = phy.sifs + phy.ack;
                let mac = &mut self.macs[node];
                mac.token += 1;
                let token = mac.token;
                self.engine.schedule_in(resume, Event::MacResume { node, token });
                if !delivered.is_empty() {
                    self.receive(r, node, frame.packet);
                    return;
                }
                mac.retries += 1;
                if mac.retries < phy.retry_limit {
                    mac.cw = (2 * mac.cw + 1).min(phy.cw_max);
                    mac.current = Some(frame);
                    return;
                }
                let cause = if mac.collisions > mac.link_errors {
                    LossCause::Congestion
                } else {
                    LossCause::Link
                };
                self.medium.record_packet(node, r, Err(cause));
                self.link_failure(node, r, frame.packet);
            }
        }
    }

    pub(crate) fn on_mac_resume(&mut self, node: NodeId, token: u64) {
        if self.macs[node].token == token {
            self.contend(node);
        }
    }

    /// Removes queued data frames for `next_hop` after the link to it broke.
    pub(crate) fn drain_frames_to(&mut self, node: NodeId, next_hop: NodeId) -> Vec<Packet> {
        let mac = &mut self.macs[node];
        let mut out = Vec::new();
        mac.data.retain(|f| {
            if f.next_hop == Some(next_hop) {
                out.push(f.packet.clone());
                false
            } else {
                true
            }
        });
        out
    }

    pub(crate) fn send_wired(&mut self, from: NodeId, to: NodeId, packet: Packet) {
        self.stats.wired_bytes += packet.size_bytes as u64;
        let delay = self.medium.model.wired_time(packet.size_bytes);
        self.engine.schedule_in(delay, Event::Wired { node: to, from, packet: Box::new(packet) });
    }
}
