//! Probe-based end-to-end delay estimation and available-bandwidth estimation from the
//! congestion share of packet loss, round-trip time, and retransmission timeout.

use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::sim::NodeId;

pub const DEFAULT_K_FACTOR: f64 = 4.0;
pub const MIN_PROBE_TIMER: f64 = 0.1;

/// `2H` probes for an `H`-hop path.
pub fn probe_count(h: usize) -> Result<usize, SimError> {
    if h == 0 {
        return Err(SimError::EmptyPath);
    }
    Ok(2 * h)
}

/// How long the destination waits after the first probe: twice the first probe's delay
/// times the probe count (at least [`MIN_PROBE_TIMER`]), plus the time the source needs to
/// pace out the remaining probes.
pub fn destination_timer(first_delay: f64, hops: usize, probe_interval: f64) -> f64 {
    let n = 2 * hops.max(1);
    (2.0 * first_delay * n as f64).max(MIN_PROBE_TIMER) + (n - 1) as f64 * probe_interval
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSession {
    pub path: Vec<NodeId>,
    pub hops: usize,
    pub probes_sent: usize,
    pub delays_received_at_destination: Vec<f64>,
    pub destination_timer: Option<f64>,
    pub result_avg_delay: Option<f64>,
}

impl ProbeSession {
    pub fn new(path: Vec<NodeId>) -> Result<Self, SimError> {
        let hops = path.len().saturating_sub(1);
        probe_count(hops)?;
        Ok(ProbeSession {
            path,
            hops,
            probes_sent: 0,
            delays_received_at_destination: Vec::new(),
            destination_timer: None,
            result_avg_delay: None,
        })
    }

    pub fn expected(&self) -> usize {
        2 * self.hops
    }

    /// Marks one more probe as sent; false once the `2H` budget is spent.
    pub fn try_send(&mut self) -> bool {
        if self.probes_sent >= self.expected() {
            return false;
        }
        self.probes_sent += 1;
        true
    }

    /// Records a probe's one-way delay at the destination. Returns the timer deadline when
    /// this is the first probe.
    pub fn record_arrival(&mut self, delay: f64, now: f64, probe_interval: f64) -> Option<f64> {
        self.delays_received_at_destination.push(delay);
        if self.destination_timer.is_none() {
            let deadline = now + destination_timer(delay, self.hops, probe_interval);
            self.destination_timer = Some(deadline);
            return Some(deadline);
        }
        None
    }

    pub fn all_received(&self) -> bool {
        self.delays_received_at_destination.len() >= self.expected()
    }

    /// Mean one-way delay over the probes that arrived; also stores it as the result.
    pub fn finish(&mut self) -> Result<f64, SimError> {
        let avg = destination_average_delay(self)?;
        self.result_avg_delay = Some(avg);
        Ok(avg)
    }
}

pub fn destination_average_delay(session: &ProbeSession) -> Result<f64, SimError> {
    let d = &session.delays_received_at_destination;
    if d.is_empty() {
        return Err(SimError::ProbeFailure);
    }
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean absolute deviation around the mean.
pub fn mean_abs_deviation(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    values.iter().map(|v| (v - m).abs()).sum::<f64>() / values.len() as f64
}

/// Per-directed-link delivery tallies for one window.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossLedger {
    pub delivered: u64,
    pub lost_link: u64,
    pub lost_congestion: u64,
}

impl LossLedger {
    pub fn total(&self) -> u64 {
        self.delivered + self.lost_link + self.lost_congestion
    }

    pub fn merged(&self, other: &LossLedger) -> LossLedger {
        LossLedger {
            delivered: self.delivered + other.delivered,
            lost_link: self.lost_link + other.lost_link,
            lost_congestion: self.lost_congestion + other.lost_congestion,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossRatio {
    pub value: f64,
    pub has_data: bool,
}

pub fn congestion_loss_ratio(ledger: &LossLedger) -> LossRatio {
    let total = ledger.total();
    if total == 0 {
        return LossRatio {
            value: 0.0,
            has_data: false,
        };
    }
    LossRatio {
        value: ledger.lost_congestion as f64 / total as f64,
        has_data: true,
    }
}

/// Loss probability of a path whose links lose independently with the given probabilities.
pub fn combine_path_loss(per_link: &[f64]) -> f64 {
    1.0 - per_link.iter().map(|p| 1.0 - p.clamp(0.0, 1.0)).product::<f64>()
}

/// `RTO = rtt_mean + k * rtt_var`.
pub fn compute_rto(rtt_mean: f64, rtt_var: f64, k: f64) -> Result<f64, SimError> {
    if !(rtt_mean > 0.0) {
        return Err(SimError::OutOfRange {
            what: "rtt_mean",
            value: rtt_mean,
        });
    }
    if !(rtt_var >= 0.0) {
        return Err(SimError::OutOfRange {
            what: "rtt_var",
            value: rtt_var,
        });
    }
    Ok(rtt_mean + k * rtt_var)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthInputs {
    pub packet_size: f64,
    pub rtt_mean: f64,
    /// Mean absolute deviation of the RTT, in seconds.
    pub rtt_var: f64,
    pub k_factor: f64,
    pub p_congestion: f64,
    pub raw_bandwidth: f64,
}

impl BandwidthInputs {
    pub fn validate(&self) -> Result<(), SimError> {
        let check = |ok: bool, what: &'static str, value: f64| {
            if ok {
                Ok(())
            } else {
                Err(SimError::OutOfRange { what, value })
            }
        };
        check(self.packet_size > 0.0, "packet_size", self.packet_size)?;
        check(self.rtt_mean > 0.0, "rtt_mean", self.rtt_mean)?;
        check(self.rtt_var >= 0.0, "rtt_var", self.rtt_var)?;
        check(self.k_factor >= 0.0, "k_factor", self.k_factor)?;
        check(
            (0.0..=1.0).contains(&self.p_congestion),
            "p_congestion",
            self.p_congestion,
        )?;
        check(self.raw_bandwidth > 0.0, "raw_bandwidth", self.raw_bandwidth)
    }

    pub fn rto(&self) -> Result<f64, SimError> {
        compute_rto(self.rtt_mean, self.rtt_var, self.k_factor)
    }
}

/// TCP-friendly rate estimate in bits/s:
///
/// ```text
/// X = RTT * sqrt(2p/3)
/// Y = RTO * min(1, 3 sqrt(3p/8)) * p * (1 + 32 p^2)
/// estrat = min(PacketSize / (X + Y), raw)
/// ```
///
/// With `p = 0` the denominator vanishes and the raw bandwidth is returned.
pub fn estimate_bandwidth(inputs: &BandwidthInputs) -> Result<f64, SimError> {
    inputs.validate()?;
    let p = inputs.p_congestion;
    if p == 0.0 {
        return Ok(inputs.raw_bandwidth);
    }
    let rto = inputs.rto()?;
    let x = inputs.rtt_mean * (2.0 * p / 3.0).sqrt();
    let y = rto * (3.0 * (3.0 * p / 8.0).sqrt()).min(1.0) * p * (1.0 + 32.0 * p * p);
    Ok((inputs.packet_size / (x + y)).min(inputs.raw_bandwidth))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdmitDecision {
    Admit,
    TryNextPath,
    Reject,
}

/// Admit iff both the delay bound and the bandwidth floor hold; otherwise fall back to the
/// next candidate while one remains.
pub fn admit_flow(
    avg_delay: f64,
    delay_bound: f64,
    est_bw: f64,
    bw_min: f64,
    candidates_remaining: bool,
) -> AdmitDecision {
    if avg_delay <= delay_bound && est_bw >= bw_min {
        AdmitDecision::Admit
    } else if candidates_remaining {
        AdmitDecision::TryNextPath
    } else {
        AdmitDecision::Reject
    }
}
