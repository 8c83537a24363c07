//! Per-neighbour link reliability from received hello counts, smoothed with an EWMA.

use std::collections::BTreeMap;

use crate::error::SimError;
use crate::sim::NodeId;

pub const DEFAULT_ALPHA: f64 = 0.5;
pub const DEFAULT_WINDOW: f64 = 1.0;
pub const ELIGIBILITY_THRESHOLD: f64 = 0.5;

/// `R = alpha * n_t + (1 - alpha) * n_prev`.
pub fn update_reliability(n_t: f64, n_prev: f64, alpha: f64) -> Result<f64, SimError> {
    for (what, v) in [("n_t", n_t), ("n_prev", n_prev)] {
        if !(0.0..=1.0).contains(&v) {
            return Err(SimError::OutOfRange { what, value: v });
        }
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(SimError::OutOfRange {
            what: "alpha",
            value: alpha,
        });
    }
    Ok(alpha * n_t + (1.0 - alpha) * n_prev)
}

/// Mean of the link values along a path.
pub fn path_reliability(link_values: &[f64]) -> Result<f64, SimError> {
    if link_values.is_empty() {
        return Err(SimError::EmptyPath);
    }
    if let Some(&v) = link_values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(SimError::OutOfRange {
            what: "link reliability",
            value: v,
        });
    }
    Ok(link_values.iter().sum::<f64>() / link_values.len() as f64)
}

/// Eligibility is inclusive at the threshold.
pub fn is_eligible(r: f64, threshold: f64) -> bool {
    r >= threshold
}

/// Received over expected, clamped to `[0, 1]`.
pub fn window_ratio(received: u32, expected: f64) -> f64 {
    if expected <= 0.0 {
        return 0.0;
    }
    (received as f64 / expected).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkEntry {
    pub r: f64,
    pub last_window_count: u32,
    pub window_start: f64,
    /// Hello interval the neighbour advertises.
    pub interval: f64,
    pub first_heard: f64,
    pub last_heard: f64,
    pub initialized: bool,
    pub last_n_t: f64,
}

#[derive(Debug, Clone)]
pub struct LinkReliabilityTable {
    entries: BTreeMap<NodeId, LinkEntry>,
    pub alpha: f64,
    pub window: f64,
    pub default_interval: f64,
    window_start: f64,
}

impl LinkReliabilityTable {
    pub fn new(alpha: f64, window: f64, default_interval: f64) -> Self {
        LinkReliabilityTable {
            entries: BTreeMap::new(),
            alpha,
            window,
            default_interval,
            window_start: 0.0,
        }
    }

    pub fn window_start(&self) -> f64 {
        self.window_start
    }

    /// Counts one control packet from `neighbor` at time `t`, assuming the default interval.
    pub fn record_control_packet(&mut self, neighbor: NodeId, t: f64) {
        let interval = self.default_interval;
        self.record_with_interval(neighbor, t, interval);
    }

    /// Counts one packet from a neighbour that advertises hellos every `interval` seconds.
    pub fn record_with_interval(&mut self, neighbor: NodeId, t: f64, interval: f64) {
        let window_start = self.window_start;
        let e = self.entries.entry(neighbor).or_insert_with(|| LinkEntry {
            r: 0.0,
            last_window_count: 0,
            window_start,
            interval,
            first_heard: t,
            last_heard: t,
            initialized: false,
            last_n_t: 0.0,
        });
        e.last_window_count += 1;
        e.interval = interval;
        e.last_heard = t;
    }

    /// Closes the window ending at `t`: computes each neighbour's `N_t` and folds it into `R`.
    /// A neighbour heard for the first time in this window starts from its `N_t`, with the
    /// expected count scaled to the part of the window it was present for.
    pub fn close_window(&mut self, t: f64) {
        let span = (t - self.window_start).max(f64::EPSILON);
        for e in self.entries.values_mut() {
            let mut expected = span / e.interval;
            if !e.initialized {
                let present = (t - e.first_heard + e.interval).min(span);
                expected = (present / e.interval).max(1.0);
            }
            let n_t = window_ratio(e.last_window_count, expected);
            e.r = if e.initialized {
                update_reliability(n_t, e.r, self.alpha).unwrap_or(n_t)
            } else {
                n_t
            };
            e.initialized = true;
            e.last_n_t = n_t;
            e.last_window_count = 0;
            e.window_start = t;
        }
        self.entries.retain(|_, e| e.r >= 1e-3);
        self.window_start = t;
    }

    /// Current `R` for `neighbor`; zero if never heard.
    pub fn reliability(&self, neighbor: NodeId) -> f64 {
        self.entries.get(&neighbor).map_or(0.0, |e| e.r)
    }

    pub fn entry(&self, neighbor: NodeId) -> Option<&LinkEntry> {
        self.entries.get(&neighbor)
    }

    pub fn neighbors(&self) -> impl Iterator<Item = (&NodeId, &LinkEntry)> {
        self.entries.iter()
    }
}
