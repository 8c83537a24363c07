//! Abstract radio and wired medium: per-directed-link loss, queue-saturation loss,
//! serialization timing, and the loss counters the rest of the stack reads.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::qos::LossLedger;
use crate::sim::topology::{link_range, NodeId, Topology};

/// 802.11b DSSS timings at the configured raw rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhyTimings {
    pub plcp: f64,
    pub mac_header_bytes: usize,
    pub difs: f64,
    pub sifs: f64,
    pub slot: f64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub ack: f64,
    pub retry_limit: u32,
}

impl Default for PhyTimings {
    fn default() -> Self {
        PhyTimings {
            plcp: 192e-6,
            mac_header_bytes: 28,
            difs: 50e-6,
            sifs: 10e-6,
            slot: 20e-6,
            cw_min: 31,
            cw_max: 1023,
            ack: 304e-6,
            retry_limit: 7,
        }
    }
}

/// Distance-driven loss with a gray zone near the edge of range:
/// `L(d) = base + span / (1 + exp(-(d/r - gray_center) / gray_width))`, then shifted per
/// direction by a uniform draw in `[-asymmetry, asymmetry]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossModel {
    pub base: f64,
    pub span: f64,
    pub gray_center: f64,
    pub gray_width: f64,
    pub asymmetry: f64,
}

impl Default for LossModel {
    fn default() -> Self {
        LossModel {
            base: 0.02,
            span: 0.9,
            gray_center: 0.8,
            gray_width: 0.04,
            asymmetry: 0.05,
        }
    }
}

impl LossModel {
    pub fn symmetric_loss(&self, distance: f64, range: f64) -> f64 {
        let z = (distance / range - self.gray_center) / self.gray_width;
        (self.base + self.span / (1.0 + (-z).exp())).clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossCause {
    Link,
    Congestion,
    NoLink,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DeliveryOutcome {
    Delivered { delay: f64 },
    Lost(LossCause),
}

/// Run-wide transmission tallies, one entry per (attempt, intended receiver).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediumCounters {
    pub sent: u64,
    pub delivered: u64,
    pub lost_link: u64,
    pub lost_congestion: u64,
    pub lost_no_link: u64,
    pub bits_sent: u64,
}

impl MediumCounters {
    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.lost_link + self.lost_congestion + self.lost_no_link
    }
}

#[derive(Debug, Clone)]
pub struct MediumModel {
    n: usize,
    per_link_loss: Vec<f64>,
    pub congestion_loss_rate: f64,
    pub wired_delay: f64,
    pub wired_bandwidth: f64,
    pub raw_bandwidth: f64,
    pub phy: PhyTimings,
}

impl MediumModel {
    /// All links lossless; useful for tests.
    pub fn lossless(n: usize) -> Self {
        MediumModel {
            n,
            per_link_loss: vec![0.0; n * n],
            congestion_loss_rate: 0.0,
            wired_delay: 0.0118,
            wired_bandwidth: 1.0e8,
            raw_bandwidth: 2.0e6,
            phy: PhyTimings::default(),
        }
    }

    /// Draws a directed loss rate for every adjacent pair from `model`.
    pub fn from_topology<R: Rng + ?Sized>(topo: &Topology, model: &LossModel, rng: &mut R) -> Self {
        let n = topo.len();
        let mut m = Self::lossless(n);
        for a in 0..n {
            for b in 0..n {
                if a == b || !topo.adjacent(a, b) {
                    continue;
                }
                let range = link_range(&topo.nodes[a], &topo.nodes[b]);
                let l = model.symmetric_loss(topo.distance(a, b), range);
                let shift = if model.asymmetry > 0.0 {
                    rng.gen_range(-model.asymmetry..=model.asymmetry)
                } else {
                    0.0
                };
                m.per_link_loss[a * n + b] = (l + shift).clamp(0.0, 1.0);
            }
        }
        m
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn link_loss(&self, sender: NodeId, receiver: NodeId) -> f64 {
        self.per_link_loss[sender * self.n + receiver]
    }

    pub fn set_link_loss(&mut self, sender: NodeId, receiver: NodeId, rate: f64) {
        self.per_link_loss[sender * self.n + receiver] = rate.clamp(0.0, 1.0);
    }

    /// Air time of a frame carrying `payload_bytes` at the raw rate.
    pub fn frame_time(&self, payload_bytes: usize) -> f64 {
        self.phy.plcp + ((self.phy.mac_header_bytes + payload_bytes) * 8) as f64 / self.raw_bandwidth
    }

    pub fn wired_time(&self, payload_bytes: usize) -> f64 {
        self.wired_delay + (payload_bytes * 8) as f64 / self.wired_bandwidth
    }

    /// One uniform draw decides the fate of a single attempt over `sender -> receiver`:
    /// link error first, then queue-saturation loss.
    pub fn draw<R: Rng + ?Sized>(
        &self,
        sender: NodeId,
        receiver: NodeId,
        queue_saturated: bool,
        rng: &mut R,
    ) -> Result<(), LossCause> {
        let u: f64 = rng.gen();
        let link = self.link_loss(sender, receiver);
        if u < link {
            return Err(LossCause::Link);
        }
        if queue_saturated && u < link + (1.0 - link) * self.congestion_loss_rate {
            return Err(LossCause::Congestion);
        }
        Ok(())
    }
}

/// Medium model plus the counters fed by every attempt.
#[derive(Debug, Clone)]
pub struct Medium {
    pub model: MediumModel,
    pub counters: MediumCounters,
    current: Vec<LossLedger>,
    previous: Vec<LossLedger>,
    total: Vec<LossLedger>,
}

impl Medium {
    pub fn new(model: MediumModel) -> Self {
        let cells = model.len() * model.len();
        Medium {
            model,
            counters: MediumCounters::default(),
            current: vec![LossLedger::default(); cells],
            previous: vec![LossLedger::default(); cells],
            total: vec![LossLedger::default(); cells],
        }
    }

    fn cell(&self, sender: NodeId, receiver: NodeId) -> usize {
        sender * self.model.len() + receiver
    }

    /// Records a single-shot transmission: one attempt that is also the packet's fate.
    pub fn record(&mut self, sender: NodeId, receiver: NodeId, bits: u64, outcome: Result<(), LossCause>) {
        self.record_attempt(bits, outcome);
        self.record_packet(sender, receiver, outcome);
    }

    /// Counts one attempt towards one intended receiver in the run-wide tallies.
    pub fn record_attempt(&mut self, bits: u64, outcome: Result<(), LossCause>) {
        let c = &mut self.counters;
        c.sent += 1;
        c.bits_sent += bits;
        match outcome {
            Ok(()) => c.delivered += 1,
            Err(LossCause::Link) => c.lost_link += 1,
            Err(LossCause::Congestion) => c.lost_congestion += 1,
            Err(LossCause::NoLink) => c.lost_no_link += 1,
        }
    }

    /// Enters the final fate of a packet handed to `sender -> receiver` (after any link-layer
    /// retries) in the per-link ledgers.
    pub fn record_packet(&mut self, sender: NodeId, receiver: NodeId, outcome: Result<(), LossCause>) {
        if outcome == Err(LossCause::NoLink) {
            return;
        }
        let i = self.cell(sender, receiver);
        for l in [&mut self.current[i], &mut self.total[i]] {
            match outcome {
                Ok(()) => l.delivered += 1,
                Err(LossCause::Link) => l.lost_link += 1,
                _ => l.lost_congestion += 1,
            }
        }
    }

    /// Closes the current ledger window.
    pub fn roll_window(&mut self) {
        std::mem::swap(&mut self.current, &mut self.previous);
        for l in self.current.iter_mut() {
            *l = LossLedger::default();
        }
    }

    /// The last closed window plus the open one for a directed link.
    pub fn recent_ledger(&self, sender: NodeId, receiver: NodeId) -> LossLedger {
        let i = self.cell(sender, receiver);
        self.previous[i].merged(&self.current[i])
    }

    pub fn total_ledger(&self, sender: NodeId, receiver: NodeId) -> LossLedger {
        self.total[self.cell(sender, receiver)]
    }

    /// An isolated attempt with no contention: checks adjacency, draws the outcome,
    /// records it, and returns the delivery delay (serialization only).
    pub fn transmit<R: Rng + ?Sized>(
        &mut self,
        topo: &Topology,
        sender: NodeId,
        receiver: NodeId,
        payload_bytes: usize,
        queue_saturated: bool,
        rng: &mut R,
    ) -> DeliveryOutcome {
        let bits = (payload_bytes * 8) as u64;
        if sender == receiver || !topo.adjacent(sender, receiver) {
            self.record(sender, receiver, bits, Err(LossCause::NoLink));
            return DeliveryOutcome::Lost(LossCause::NoLink);
        }
        let outcome = self.model.draw(sender, receiver, queue_saturated, rng);
        self.record(sender, receiver, bits, outcome);
        match outcome {
            Ok(()) => DeliveryOutcome::Delivered {
                delay: self.model.frame_time(payload_bytes),
            },
            Err(c) => DeliveryOutcome::Lost(c),
        }
    }
}
