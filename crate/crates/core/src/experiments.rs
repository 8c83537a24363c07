//! Scenario harness: builds a network from a [`ScenarioConfig`], runs it, and summarizes
//! the outcome; sweeps and the delay-estimator and selfish-node studies sit on top.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::SimError;
use crate::network::{Features, FlowReport, FlowSpec, Network, NetworkStats, ProtocolParams};
use crate::sim::{build_topology, LossModel, MediumCounters, MediumModel, Role, TopologyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Proposed,
    NoMpr,
    NoCircular,
    FloodBaseline,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Proposed,
        Variant::NoMpr,
        Variant::NoCircular,
        Variant::FloodBaseline,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::Proposed => "proposed",
            Variant::NoMpr => "no-mpr",
            Variant::NoCircular => "no-circular",
            Variant::FloodBaseline => "flood-baseline",
        }
    }

    pub fn features(&self) -> Features {
        let full = Features::full();
        match self {
            Variant::Proposed => full,
            Variant::NoMpr => Features { mpr: false, ..full },
            Variant::NoCircular => Features {
                circular: false,
                ..full
            },
            Variant::FloodBaseline => Features {
                mpr: false,
                circular: false,
                reliability_filter: false,
                scoped_discovery: false,
                probing: false,
                hop_count_selection: true,
            },
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| SimError::UnknownVariant(s.to_string()))
    }
}

/// Node population. Mesh routers plus clients make up `total`; gateways come on top.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeCounts {
    pub total: usize,
    pub mrs: usize,
    pub mcs: usize,
    pub igws: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area: (f64, f64),
    pub node_counts: NodeCounts,
    pub igw_positions: Vec<(f64, f64)>,
    pub mr_positions: Vec<(f64, f64)>,
    pub radio_range: f64,
    pub mr_backbone_range: f64,
    pub placement_factor: f64,
    /// bits/s
    pub raw_bandwidth: f64,
    /// bytes
    pub packet_size: usize,
    /// bits/s per flow
    pub data_rate: f64,
    pub n_sources: usize,
    pub duration: f64,
    pub seed: u64,
    pub protocol_variant: Variant,
    pub selfish_fraction: f64,
    /// Minimum bandwidth a flow asks for; defaults to its own data rate when absent.
    pub bw_min: Option<f64>,
    pub delay_bound: f64,
    /// Flow start times are drawn uniformly from this interval.
    pub flow_start: (f64, f64),
    pub loss: LossModel,
    pub congestion_loss_rate: f64,
    pub wired_delay: f64,
    pub wired_bandwidth: f64,
    pub protocol: ProtocolParams,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        let topo = TopologyConfig::default();
        ScenarioConfig {
            area: topo.area,
            node_counts: NodeCounts {
                total: 50,
                mrs: 5,
                mcs: 45,
                igws: 5,
            },
            igw_positions: topo.igw_positions,
            mr_positions: topo.mr_positions,
            radio_range: topo.radio_range,
            mr_backbone_range: topo.mr_backbone_range,
            placement_factor: topo.placement_factor,
            raw_bandwidth: 2.0e6,
            packet_size: 512,
            data_rate: 32_000.0,
            n_sources: 15,
            duration: 900.0,
            seed: 1,
            protocol_variant: Variant::Proposed,
            selfish_fraction: 0.0,
            bw_min: None,
            delay_bound: 0.2,
            flow_start: (2.0, 12.0),
            loss: LossModel::default(),
            congestion_loss_rate: 0.0,
            wired_delay: 0.0118,
            wired_bandwidth: 1.0e8,
            protocol: ProtocolParams::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        let c = &self.node_counts;
        if c.mrs + c.mcs != c.total {
            return bad(format!(
                "node_counts: mrs ({}) + mcs ({}) must equal total ({})",
                c.mrs, c.mcs, c.total
            ));
        }
        if c.mrs != self.mr_positions.len() || c.igws != self.igw_positions.len() {
            return bad("node_counts must match the number of mr_positions and igw_positions".into());
        }
        for (name, v) in [
            ("raw_bandwidth", self.raw_bandwidth),
            ("data_rate", self.data_rate),
            ("delay_bound", self.delay_bound),
            ("wired_bandwidth", self.wired_bandwidth),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if self.packet_size == 0 {
            return bad("packet_size must be positive".into());
        }
        if !(self.duration >= 0.0 && self.duration.is_finite()) {
            return bad("duration must be nonnegative".into());
        }
        if self.n_sources > c.mcs {
            return bad(format!("n_sources ({}) exceeds the number of clients ({})", self.n_sources, c.mcs));
        }
        if self.n_sources > 0 && c.mcs < 2 {
            return bad("flows need at least two clients".into());
        }
        if self.bw_min.is_some_and(|b| !(b >= 0.0)) {
            return bad("bw_min must be nonnegative".into());
        }
        if !(self.flow_start.0 >= 0.0 && self.flow_start.1 >= self.flow_start.0) {
            return bad("flow_start must be a nonnegative, ordered interval".into());
        }
        if !(0.0..=1.0).contains(&self.congestion_loss_rate) {
            return bad("congestion_loss_rate must lie in [0, 1]".into());
        }
        if !(self.wired_delay >= 0.0) {
            return bad("wired_delay must be nonnegative".into());
        }
        self.topology_config().validate()?;
        self.protocol.validate()
    }

    pub fn topology_config(&self) -> TopologyConfig {
        TopologyConfig {
            area: self.area,
            igw_positions: self.igw_positions.clone(),
            mr_positions: self.mr_positions.clone(),
            n_mcs: self.node_counts.mcs,
            radio_range: self.radio_range,
            mr_backbone_range: self.mr_backbone_range,
            placement_factor: self.placement_factor,
            selfish_fraction: self.selfish_fraction,
            ..TopologyConfig::default()
        }
    }

    pub fn bw_min(&self) -> f64 {
        self.bw_min.unwrap_or(self.data_rate)
    }
}

/// Delay estimates and measured delay of one admitted path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelaySample {
    pub probe: Option<f64>,
    pub rrep: f64,
    pub actual: f64,
}

/// Paths need this many delivered packets before their measured delay is compared.
pub const MIN_SAMPLE_PACKETS: u64 = 10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub variant: Variant,
    pub seed: u64,
    pub duration: f64,
    pub control_overhead_bytes: u64,
    pub hello_overhead_bytes: u64,
    pub throughput_bps: f64,
    pub offered_packets: u64,
    pub delivered_packets: u64,
    pub flows: Vec<FlowReport>,
    pub delay_samples: Vec<DelaySample>,
    pub probe_delay_estimates: Vec<f64>,
    pub rrep_delay_estimates: Vec<f64>,
    pub actual_data_delays: Vec<f64>,
    pub selfish_flow_throughput: f64,
    pub honest_flow_throughput: f64,
    pub selfish_flows: usize,
    pub honest_flows: usize,
    pub medium: MediumCounters,
    pub stats: NetworkStats,
    pub events_executed: u64,
}

impl MetricsReport {
    /// Scalar metrics in a fixed order, as written to CSV.
    pub fn scalar_metrics(&self) -> Vec<(&'static str, f64)> {
        let s = &self.stats;
        let m = &self.medium;
        vec![
            ("control_overhead_bytes", self.control_overhead_bytes as f64),
            ("hello_overhead_bytes", self.hello_overhead_bytes as f64),
            ("throughput_bps", self.throughput_bps),
            ("offered_packets", self.offered_packets as f64),
            ("delivered_packets", self.delivered_packets as f64),
            ("delivery_ratio", ratio(self.delivered_packets, self.offered_packets)),
            ("selfish_flow_throughput", self.selfish_flow_throughput),
            ("honest_flow_throughput", self.honest_flow_throughput),
            ("selfish_flows", self.selfish_flows as f64),
            ("honest_flows", self.honest_flows as f64),
            ("mean_probe_estimate", mean(&self.probe_delay_estimates)),
            ("mean_rrep_estimate", mean(&self.rrep_delay_estimates)),
            ("mean_actual_delay", mean(&self.actual_data_delays)),
            ("frames_sent", m.sent as f64),
            ("frames_delivered", m.delivered as f64),
            ("lost_link", m.lost_link as f64),
            ("lost_congestion", m.lost_congestion as f64),
            ("lost_no_link", m.lost_no_link as f64),
            ("wired_bytes", s.wired_bytes as f64),
            ("queue_drops", s.queue_drops as f64),
            ("selfish_suppressed", s.selfish_suppressed as f64),
            ("selfish_dropped", s.selfish_dropped as f64),
            ("route_break_drops", s.route_break_drops as f64),
            ("source_buffer_drops", s.source_buffer_drops as f64),
            ("link_breaks", s.link_breaks as f64),
            ("discoveries", s.discoveries as f64),
            ("discoveries_failed", s.discoveries_failed as f64),
            ("rreq_forwarded", s.rreq_forwarded as f64),
            ("local_repairs", s.local_repairs as f64),
            ("route_activations", s.route_activations as f64),
            ("circular_activations", s.circular_activations as f64),
            ("probe_sessions", s.probe_sessions as f64),
        ]
    }
}

fn ratio(a: u64, b: u64) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Builds the topology, starts `n_sources` CBR flows between random distinct clients and
/// runs until `duration`.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<MetricsReport, SimError> {
    Ok(summarize(cfg, &build_and_run(cfg)?))
}

/// As [`run_scenario`], returning the network itself for inspection.
pub fn build_and_run(cfg: &ScenarioConfig) -> Result<Network, SimError> {
    let mut net = build_network(cfg)?;
    net.run_until(cfg.duration);
    Ok(net)
}

/// Builds the network with its flows registered, before any event runs.
pub fn build_network(cfg: &ScenarioConfig) -> Result<Network, SimError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let topo = build_topology(&cfg.topology_config(), &mut rng)?;
    let mut model = MediumModel::from_topology(&topo, &cfg.loss, &mut rng);
    model.raw_bandwidth = cfg.raw_bandwidth;
    model.congestion_loss_rate = cfg.congestion_loss_rate;
    model.wired_delay = cfg.wired_delay;
    model.wired_bandwidth = cfg.wired_bandwidth;

    let clients = topo.ids_with_role(Role::Mc);
    let mut sources = clients.clone();
    sources.shuffle(&mut rng);
    sources.truncate(cfg.n_sources);
    let mut flows = Vec::with_capacity(sources.len());
    for &src in &sources {
        let dst = loop {
            let d = clients[rng.gen_range(0..clients.len())];
            if d != src {
                break d;
            }
        };
        let start = if cfg.flow_start.1 > cfg.flow_start.0 {
            rng.gen_range(cfg.flow_start.0..cfg.flow_start.1)
        } else {
            cfg.flow_start.0
        };
        flows.push(FlowSpec {
            source: src,
            destination: dst,
            start,
            data_rate: cfg.data_rate,
            packet_size: cfg.packet_size,
            bw_min: cfg.bw_min(),
            delay_bound: cfg.delay_bound,
        });
    }
    let net_seed = rng.gen();
    let mut net = Network::new(
        topo,
        model,
        cfg.protocol_variant.features(),
        cfg.protocol.clone(),
        net_seed,
    )?;
    for f in flows {
        net.add_flow(f)?;
    }
    Ok(net)
}

pub fn summarize(cfg: &ScenarioConfig, net: &Network) -> MetricsReport {
    let flows = net.flow_reports();
    let stats = net.stats().clone();
    let delivered_bits: u64 = flows.iter().map(|f| f.delivered_bits).sum();
    let throughput_bps = if cfg.duration > 0.0 {
        delivered_bits as f64 / cfg.duration
    } else {
        0.0
    };
    let per_flow = |selfish: bool| {
        let group: Vec<&FlowReport> = flows.iter().filter(|f| f.selfish == selfish).collect();
        let bits: u64 = group.iter().map(|f| f.delivered_bits).sum();
        let tput = if group.is_empty() || cfg.duration <= 0.0 {
            0.0
        } else {
            bits as f64 / cfg.duration / group.len() as f64
        };
        (tput, group.len())
    };
    let (selfish_flow_throughput, selfish_flows) = per_flow(true);
    let (honest_flow_throughput, honest_flows) = per_flow(false);

    let probing = cfg.protocol_variant.features().probing;
    let delay_samples: Vec<DelaySample> = net
        .epoch_records()
        .into_iter()
        .filter(|e| e.delivered >= MIN_SAMPLE_PACKETS && (!probing || e.probe_estimate.is_some()))
        .map(|e| DelaySample {
            probe: e.probe_estimate,
            rrep: e.rrep_estimate,
            actual: e.mean_delay().unwrap_or(0.0),
        })
        .collect();

    MetricsReport {
        variant: cfg.protocol_variant,
        seed: cfg.seed,
        duration: cfg.duration,
        control_overhead_bytes: stats.control_overhead_bytes(),
        hello_overhead_bytes: stats.hello_bytes(),
        throughput_bps,
        offered_packets: flows.iter().map(|f| f.offered_packets).sum(),
        delivered_packets: flows.iter().map(|f| f.delivered_packets).sum(),
        probe_delay_estimates: delay_samples.iter().filter_map(|s| s.probe).collect(),
        rrep_delay_estimates: delay_samples.iter().map(|s| s.rrep).collect(),
        actual_data_delays: delay_samples.iter().map(|s| s.actual).collect(),
        delay_samples,
        flows,
        selfish_flow_throughput,
        honest_flow_throughput,
        selfish_flows,
        honest_flows,
        medium: *net.medium_counters(),
        stats,
        events_executed: net.events_executed(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    NSources,
    DataRate,
    /// One flow per source, so this moves the same knob as `NSources`.
    NFlows,
    SelfishFraction,
}

impl SweepAxis {
    pub const ALL: [SweepAxis; 4] = [
        SweepAxis::NSources,
        SweepAxis::DataRate,
        SweepAxis::NFlows,
        SweepAxis::SelfishFraction,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::NSources => "n_sources",
            SweepAxis::DataRate => "data_rate",
            SweepAxis::NFlows => "n_flows",
            SweepAxis::SelfishFraction => "selfish_fraction",
        }
    }

    /// Returns `base` with this axis set to `value`.
    pub fn apply(&self, base: &ScenarioConfig, value: f64) -> Result<ScenarioConfig, SimError> {
        let mut cfg = base.clone();
        match self {
            SweepAxis::NSources | SweepAxis::NFlows => {
                if !(value >= 0.0 && value.fract() == 0.0) {
                    return Err(SimError::InvalidConfig(format!(
                        "{} needs a nonnegative integer, got {value}",
                        self.name()
                    )));
                }
                cfg.n_sources = value as usize;
            }
            SweepAxis::DataRate => cfg.data_rate = value,
            SweepAxis::SelfishFraction => cfg.selfish_fraction = value,
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

impl FromStr for SweepAxis {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SweepAxis::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| SimError::UnknownAxis(s.to_string()))
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of one sweep cell. The variant is left out on purpose so that all variants of a
/// cell share topology, flows and loss draws.
pub fn cell_seed(base: u64, axis: SweepAxis, value: f64, replicate: u64) -> u64 {
    let mut h = splitmix(base);
    h = splitmix(h ^ axis as u64);
    h = splitmix(h ^ value.to_bits());
    splitmix(h ^ replicate)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepCell {
    pub variant: Variant,
    pub axis: SweepAxis,
    pub value: f64,
    pub replicate: u64,
    pub seed: u64,
    pub report: MetricsReport,
}

/// Runs every (value, replicate, variant) combination.
pub fn run_sweep(
    base: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    variants: &[Variant],
    replicates: u64,
) -> Result<Vec<SweepCell>, SimError> {
    if values.is_empty() || variants.is_empty() || replicates == 0 {
        return Err(SimError::InvalidConfig(
            "a sweep needs at least one value, one variant and one replicate".into(),
        ));
    }
    let mut cells = Vec::new();
    for &value in values {
        let cfg = axis.apply(base, value)?;
        for replicate in 0..replicates {
            let seed = cell_seed(base.seed, axis, value, replicate);
            for &variant in variants {
                let cfg = ScenarioConfig {
                    seed,
                    protocol_variant: variant,
                    ..cfg.clone()
                };
                let report = run_scenario(&cfg)?;
                cells.push(SweepCell {
                    variant,
                    axis,
                    value,
                    replicate,
                    seed,
                    report,
                });
            }
        }
    }
    Ok(cells)
}

/// Median of a metric over replicates, per (variant, value).
pub fn median_by_cell<F>(cells: &[SweepCell], metric: F) -> BTreeMap<(Variant, u64), f64>
where
    F: Fn(&MetricsReport) -> f64,
{
    let mut groups: BTreeMap<(Variant, u64), Vec<f64>> = BTreeMap::new();
    for c in cells {
        groups
            .entry((c.variant, c.value.to_bits()))
            .or_default()
            .push(metric(&c.report));
    }
    groups.into_iter().map(|(k, v)| (k, median(v))).collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Writes the long-format table: `variant,axis,value,seed,metric,metric_value`.
pub fn write_sweep_csv<W: Write>(cells: &[SweepCell], out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["variant", "axis", "value", "seed", "metric", "metric_value"])?;
    for c in cells {
        for (name, v) in c.report.scalar_metrics() {
            w.write_record([
                c.variant.name(),
                c.axis.name(),
                &c.value.to_string(),
                &c.seed.to_string(),
                name,
                &v.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes one report in the same long format, with `axis` and `value` left empty.
pub fn write_report_csv<W: Write>(report: &MetricsReport, out: W) -> Result<(), csv::Error> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    w.write_record(["variant", "axis", "value", "seed", "metric", "metric_value"])?;
    for (name, v) in report.scalar_metrics() {
        w.write_record([
            report.variant.name(),
            "",
            "",
            &report.seed.to_string(),
            name,
            &v.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Probe and RREP errors of one run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayRun {
    pub seed: u64,
    pub samples: Vec<DelaySample>,
    /// Mean of |probe - actual| over the run's paths.
    pub probe_error: f64,
    pub rrep_error: f64,
}

impl DelayRun {
    pub fn probe_better(&self) -> bool {
        self.probe_error < self.rrep_error
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DelayStudy {
    pub runs: Vec<DelayRun>,
    pub mean_probe: f64,
    pub mean_rrep: f64,
    pub mean_actual: f64,
}

impl DelayStudy {
    /// Share of runs (with at least one sample) where probes beat the RREP timing.
    pub fn probe_better_fraction(&self) -> f64 {
        let with: Vec<&DelayRun> = self.runs.iter().filter(|r| !r.samples.is_empty()).collect();
        if with.is_empty() {
            return 0.0;
        }
        with.iter().filter(|r| r.probe_better()).count() as f64 / with.len() as f64
    }
}

/// Runs the proposed protocol over `runs` seeds derived from `cfg.seed` and compares each
/// admitted path's probe estimate and RREP timing with its measured data delay.
pub fn delay_estimator_study(cfg: &ScenarioConfig, runs: u64) -> Result<DelayStudy, SimError> {
    let mut out = Vec::new();
    let mut all = Vec::new();
    for r in 0..runs {
        let seed = splitmix(cfg.seed ^ splitmix(r));
        let run_cfg = ScenarioConfig {
            seed,
            protocol_variant: Variant::Proposed,
            ..cfg.clone()
        };
        let report = run_scenario(&run_cfg)?;
        let samples: Vec<DelaySample> = report.delay_samples.clone();
        let err = |f: &dyn Fn(&DelaySample) -> f64| {
            mean(&samples.iter().map(|s| (f(s) - s.actual).abs()).collect::<Vec<_>>())
        };
        let probe_error = err(&|s| s.probe.unwrap_or(0.0));
        let rrep_error = err(&|s| s.rrep);
        all.extend(samples.iter().copied());
        out.push(DelayRun {
            seed,
            samples,
            probe_error,
            rrep_error,
        });
    }
    Ok(DelayStudy {
        runs: out,
        mean_probe: mean(&all.iter().filter_map(|s| s.probe).collect::<Vec<_>>()),
        mean_rrep: mean(&all.iter().map(|s| s.rrep).collect::<Vec<_>>()),
        mean_actual: mean(&all.iter().map(|s| s.actual).collect::<Vec<_>>()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SelfishCell {
    pub variant: Variant,
    pub selfish: bool,
    pub flows: usize,
    /// Mean per-flow throughput in bits/s.
    pub throughput: f64,
}

/// Honest versus selfish flow throughput under the proposed protocol and the
/// flood baseline, pooled over `runs` seeds shared by both variants.
pub fn selfish_study(cfg: &ScenarioConfig, runs: u64) -> Result<Vec<SelfishCell>, SimError> {
    if !(cfg.selfish_fraction > 0.0) {
        return Err(SimError::InvalidConfig("selfish study needs selfish_fraction > 0".into()));
    }
    let mut cells = Vec::new();
    for variant in [Variant::Proposed, Variant::FloodBaseline] {
        let mut bits = [0u64; 2];
        let mut counts = [0usize; 2];
        for r in 0..runs {
            let seed = splitmix(cfg.seed ^ splitmix(r));
            let run_cfg = ScenarioConfig {
                seed,
                protocol_variant: variant,
                ..cfg.clone()
            };
            let report = run_scenario(&run_cfg)?;
            for f in &report.flows {
                let i = f.selfish as usize;
                bits[i] += f.delivered_bits;
                counts[i] += 1;
            }
        }
        for selfish in [false, true] {
            let i = selfish as usize;
            let throughput = if counts[i] == 0 || cfg.duration <= 0.0 {
                0.0
            } else {
                bits[i] as f64 / cfg.duration / counts[i] as f64
            };
            cells.push(SelfishCell {
                variant,
                selfish,
                flows: counts[i],
                throughput,
            });
        }
    }
    Ok(cells)
}
