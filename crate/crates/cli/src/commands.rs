//! The subcommands. Each writes its files only after all simulation work is done.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anon_auth::{
    client_confirm_round3, encode_signature, keygen_user, server_verify_round2, sign_round1,
    SecurityProfile, ServerKeyMaterial, UserPublicKey, DEFAULT_BLOCK_BITS,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wmn_core::experiments::{
    delay_estimator_study, median, run_scenario, run_sweep, selfish_study, write_report_csv,
    write_sweep_csv, MetricsReport, ScenarioConfig, SweepAxis, SweepCell, Variant,
};
use wmn_core::routing::FlowState;

use crate::CliError;

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", dir.display())))?;
    let path = dir.join(name);
    let f = File::create(&path).map_err(|e| CliError::Runtime(format!("cannot write {}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

pub fn summary_text(cfg: &ScenarioConfig, r: &MetricsReport) -> String {
    let count = |s: FlowState| r.flows.iter().filter(|f| f.state == s).count();
    let ratio = if r.offered_packets == 0 {
        0.0
    } else {
        r.delivered_packets as f64 / r.offered_packets as f64
    };
    let mut s = String::new();
    let _ = writeln!(s, "variant            {}", r.variant);
    let _ = writeln!(s, "seed               {}", r.seed);
    let _ = writeln!(s, "duration           {} s", r.duration);
    let _ = writeln!(
        s,
        "flows              {} ({} active, {} failed, {} still discovering or probing)",
        r.flows.len(),
        count(FlowState::Active),
        count(FlowState::Failed),
        count(FlowState::Discovering) + count(FlowState::Probing)
    );
    let _ = writeln!(s, "offered rate       {} bit/s per flow", cfg.data_rate);
    let _ = writeln!(s, "throughput         {:.1} bit/s", r.throughput_bps);
    let _ = writeln!(s, "delivery ratio     {:.4}", ratio);
    let _ = writeln!(s, "control overhead   {} bytes", r.control_overhead_bytes);
    let _ = writeln!(s, "hello overhead     {} bytes", r.hello_overhead_bytes);
    let _ = writeln!(
        s,
        "frames             {} sent, {} delivered, {} link loss, {} collision/congestion",
        r.medium.sent, r.medium.delivered, r.medium.lost_link, r.medium.lost_congestion
    );
    if r.selfish_flows > 0 {
        let _ = writeln!(
            s,
            "per-flow rate      honest {:.1} bit/s ({} flows), selfish {:.1} bit/s ({} flows)",
            r.honest_flow_throughput, r.honest_flows, r.selfish_flow_throughput, r.selfish_flows
        );
    }
    s
}

/// Runs one scenario; writes `metrics.csv`, `flows.csv` and `summary.txt`.
pub fn run(cfg: &ScenarioConfig, out_dir: &Path) -> Result<MetricsReport, CliError> {
    let report = run_scenario(cfg)?;
    write_report_csv(&report, create(out_dir, "metrics.csv")?)?;
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(create(out_dir, "flows.csv")?);
    for f in &report.flows {
        w.serialize(f)?;
    }
    w.flush()?;
    create(out_dir, "summary.txt")?.write_all(summary_text(cfg, &report).as_bytes())?;
    Ok(report)
}

/// Median, minimum and maximum of every scalar metric per (variant, value).
pub fn write_aggregate<W: Write>(cells: &[SweepCell], out: W) -> Result<(), CliError> {
    let mut groups: BTreeMap<(Variant, u64, usize), (f64, &'static str, Vec<f64>)> = BTreeMap::new();
    for c in cells {
        for (i, (name, v)) in c.report.scalar_metrics().into_iter().enumerate() {
            groups
                .entry((c.variant, c.value.to_bits(), i))
                .or_insert_with(|| (c.value, name, Vec::new()))
                .2
                .push(v);
        }
    }
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record(["variant", "axis", "value", "metric", "median", "min", "max", "runs"])?;
    let axis = cells.first().map_or("", |c| c.axis.name());
    for ((variant, _, _), (value, name, vs)) in groups {
        let lo = vs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = vs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let n = vs.len();
        w.write_record([
            variant.name(),
            axis,
            &value.to_string(),
            name,
            &median(vs).to_string(),
            &lo.to_string(),
            &hi.to_string(),
            &n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Runs a sweep; writes `sweep.csv` (one row per run and metric) and `aggregate.csv`.
pub fn sweep(
    cfg: &ScenarioConfig,
    axis: SweepAxis,
    values: &[f64],
    variants: &[Variant],
    replicates: u64,
    out_dir: &Path,
) -> Result<Vec<SweepCell>, CliError> {
    let cells = run_sweep(cfg, axis, values, variants, replicates)?;
    write_sweep_csv(&cells, create(out_dir, "sweep.csv")?)?;
    write_aggregate(&cells, create(out_dir, "aggregate.csv")?)?;
    Ok(cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Study {
    Delay,
    Selfish,
}

/// Runs the delay-estimator or selfish-node study and writes its table.
pub fn study(kind: Study, cfg: &ScenarioConfig, runs: u64, out_dir: &Path) -> Result<String, CliError> {
    let mut text = String::new();
    match kind {
        Study::Delay => {
            let s = delay_estimator_study(cfg, runs)?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(create(out_dir, "delay_study.csv")?);
            w.write_record(["seed", "probe_estimate", "rrep_estimate", "actual_delay"])?;
            for r in &s.runs {
                for x in &r.samples {
                    w.write_record([
                        r.seed.to_string(),
                        x.probe.map_or(String::new(), |p| p.to_string()),
                        x.rrep.to_string(),
                        x.actual.to_string(),
                    ])?;
                }
            }
            w.flush()?;
            let _ = writeln!(text, "mean probe estimate  {:.4} s", s.mean_probe);
            let _ = writeln!(text, "mean rrep estimate   {:.4} s", s.mean_rrep);
            let _ = writeln!(text, "mean actual delay    {:.4} s", s.mean_actual);
            let _ = writeln!(text, "probe closer in      {:.0}% of runs", 100.0 * s.probe_better_fraction());
        }
        Study::Selfish => {
            let cells = selfish_study(cfg, runs)?;
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(create(out_dir, "selfish_study.csv")?);
            for c in &cells {
                w.serialize(c)?;
                let _ = writeln!(
                    text,
                    "{:<15} {:<8} {:>4} flows  {:>10.1} bit/s",
                    c.variant.name(),
                    if c.selfish { "selfish" } else { "honest" },
                    c.flows,
                    c.throughput
                );
            }
            w.flush()?;
        }
    }
    create(out_dir, "study.txt")?.write_all(text.as_bytes())?;
    Ok(text)
}

/// Decimal for small values, abbreviated hex for large ones.
fn abbrev(v: &num_bigint::BigUint) -> String {
    if v.bits() <= 64 {
        return v.to_string();
    }
    let h = v.to_str_radix(16);
    format!("0x{}..{} ({} bits)", &h[..10], &h[h.len() - 10..], v.bits())
}

/// Generates a ring and a server, runs the three rounds with `signer`, and prints the
/// transcript. Fails with the round that went wrong.
pub fn auth_demo<W: Write>(
    ring_size: usize,
    profile: SecurityProfile,
    signer: usize,
    seed: u64,
    out: &mut W,
) -> Result<(), CliError> {
    if ring_size == 0 {
        return Err(CliError::Usage("ring size must be at least 1".into()));
    }
    if signer >= ring_size {
        return Err(CliError::Usage(format!("signer {signer} is outside a ring of {ring_size}")));
    }
    let block_bits = match profile {
        SecurityProfile::Test => 256,
        _ => DEFAULT_BLOCK_BITS,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let setup = |e: anon_auth::AuthError| CliError::Runtime(format!("key generation failed: {e}"));
    let server = ServerKeyMaterial::generate(profile, block_bits, &mut rng).map_err(setup)?;
    let users = (0..ring_size)
        .map(|i| keygen_user(format!("client-{i}"), profile, &mut rng))
        .collect::<Result<Vec<_>, _>>()
        .map_err(setup)?;
    let ring: Vec<UserPublicKey> = users.iter().map(|u| u.public().clone()).collect();

    writeln!(out, "server group p = {}", abbrev(&server.public().group.p))?;
    writeln!(out, "server key   yB = {}", abbrev(&server.public().y_b))?;
    for u in &ring {
        writeln!(out, "ring member  {} y = {}", u.id, abbrev(&u.y))?;
    }
    writeln!(out, "signer       index {signer} (not revealed to the server)")?;

    let (sigma, client) = sign_round1(signer, &users[signer], &ring, server.public(), b"client", &mut rng)
        .map_err(|e| CliError::Runtime(format!("round 1 failed: {e}")))?;
    writeln!(
        out,
        "round 1      signature sent: {} bytes, nu = {}",
        encode_signature(&sigma).len(),
        abbrev(&sigma.nu)
    )?;
    let (response, server_session) = server_verify_round2(&server, &sigma, b"client", b"server", &mut rng)
        .map_err(|e| CliError::Runtime(format!("round 2 failed: {e}")))?;
    writeln!(out, "round 2      ring equation verified, Y = {}", abbrev(&response.y_pub))?;
    let client_key = client_confirm_round3(client, &response)
        .map_err(|e| CliError::Runtime(format!("round 3 failed: {e}")))?;
    writeln!(out, "round 3      confirmation hash matched")?;
    writeln!(out, "client key   {}", abbrev(&client_key.0))?;
    writeln!(out, "server key   {}", abbrev(&server_session.session_key.0))?;
    if client_key != server_session.session_key {
        return Err(CliError::Runtime("round 3 failed: session keys differ".into()));
    }
    writeln!(out, "session keys match")?;
    Ok(())
}
