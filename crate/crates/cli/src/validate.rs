//! Built-in self-checks run by `wmnsim validate`: equation oracles, the bandwidth
//! monotonicity grid, the exhaustive trapdoor round trip on a toy group, and the MPR cover
//! property on random graphs.

use std::collections::BTreeSet;
use std::fmt;

use anon_auth::{invert_with_nonce, trapdoor_forward, GroupParams, UserKeyMaterial};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use wmn_core::link_metrics::update_reliability;
use wmn_core::mpr::{flood_retransmissions, select_mprs, states_from_adjacency};
use wmn_core::qos::{compute_rto, estimate_bandwidth, BandwidthInputs};
use wmn_core::SimError;

use crate::oracle;
use crate::CliError;

pub const ORACLE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "{verdict} {}: {}", self.name, self.detail)
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    (a - b).abs() / a.abs().max(b.abs())
}

pub type Estimator = fn(&BandwidthInputs) -> Result<f64, SimError>;

/// Draws `points` random inputs and compares the reliability update, the timeout and the
/// bandwidth estimate with the double-double oracle. The `p = 0` clamp is checked apart.
pub fn equation_oracles(seed: u64, points: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = [0.0f64; 3];
    let mut clamped = 0;
    let mut errors = Vec::new();
    for _ in 0..points {
        let (n_t, n_prev) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let alpha = rng.gen_range(0.001..0.999);
        match update_reliability(n_t, n_prev, alpha) {
            Ok(r) => worst[0] = worst[0].max(rel_err(r, oracle::reliability(n_t, n_prev, alpha))),
            Err(e) => errors.push(e.to_string()),
        }

        let rtt = 10f64.powf(rng.gen_range(-3.0..0.5));
        let var = rng.gen_range(0.0..1.0) * rtt;
        let k = rng.gen_range(0.0..8.0);
        match compute_rto(rtt, var, k) {
            Ok(r) => worst[1] = worst[1].max(rel_err(r, oracle::rto(rtt, var, k))),
            Err(e) => errors.push(e.to_string()),
        }

        let inputs = BandwidthInputs {
            packet_size: 8.0 * rng.gen_range(64..12_000) as f64,
            rtt_mean: rtt,
            rtt_var: var,
            k_factor: k,
            p_congestion: 10f64.powf(rng.gen_range(-4.0..0.0)),
            raw_bandwidth: 10f64.powf(rng.gen_range(6.0..10.0)),
        };
        let want = oracle::bandwidth(
            inputs.packet_size,
            inputs.rtt_mean,
            inputs.rtt_var,
            inputs.k_factor,
            inputs.p_congestion,
            inputs.raw_bandwidth,
        );
        if want == inputs.raw_bandwidth {
            clamped += 1;
        }
        match estimate_bandwidth(&inputs) {
            Ok(b) => worst[2] = worst[2].max(rel_err(b, want)),
            Err(e) => errors.push(e.to_string()),
        }
    }
    let zero = BandwidthInputs {
        packet_size: 4096.0,
        rtt_mean: 0.1,
        rtt_var: 0.01,
        k_factor: 4.0,
        p_congestion: 0.0,
        raw_bandwidth: 2.0e6,
    };
    let clamp_ok = estimate_bandwidth(&zero) == Ok(2.0e6);
    let passed = errors.is_empty() && clamp_ok && worst.iter().all(|w| *w <= ORACLE_TOLERANCE);
    SuiteReport {
        name: "equation oracles",
        passed,
        detail: format!(
            "{points} points, max rel err reliability {:.1e}, rto {:.1e}, bandwidth {:.1e} \
             ({clamped} at the raw cap), p=0 clamp {}{}",
            worst[0],
            worst[1],
            worst[2],
            if clamp_ok { "ok" } else { "wrong" },
            if errors.is_empty() {
                String::new()
            } else {
                format!(", {} errors: {}", errors.len(), errors[0])
            }
        ),
    }
}

/// The 50-point loss grid from 1e-3 to 0.5, log-spaced.
pub fn loss_grid() -> Vec<f64> {
    let (lo, hi) = (1e-3f64.log10(), 0.5f64.log10());
    (0..50).map(|i| 10f64.powf(lo + (hi - lo) * i as f64 / 49.0)).collect()
}

/// Default-traffic inputs: 512-byte packets at 2 Mbit/s raw, 100 ms RTT, 10 ms deviation.
pub fn default_inputs(p: f64) -> BandwidthInputs {
    BandwidthInputs {
        packet_size: 4096.0,
        rtt_mean: 0.1,
        rtt_var: 0.01,
        k_factor: 4.0,
        p_congestion: p,
        raw_bandwidth: 2.0e6,
    }
}

/// Requires `estimator` to fall strictly as the congestion loss grows along the grid and
/// to agree with the oracle at every grid point.
pub fn bandwidth_monotonicity(estimator: Estimator) -> SuiteReport {
    let grid = loss_grid();
    let mut values = Vec::with_capacity(grid.len());
    for &p in &grid {
        match estimator(&default_inputs(p)) {
            Ok(v) => values.push(v),
            Err(e) => {
                return SuiteReport {
                    name: "bandwidth monotonicity",
                    passed: false,
                    detail: format!("estimator failed at p={p}: {e}"),
                }
            }
        }
    }
    let rises: Vec<usize> = (1..values.len()).filter(|&i| values[i] >= values[i - 1]).collect();
    let worst = grid
        .iter()
        .zip(&values)
        .map(|(&p, &v)| {
            let i = default_inputs(p);
            rel_err(v, oracle::bandwidth(i.packet_size, i.rtt_mean, i.rtt_var, i.k_factor, p, i.raw_bandwidth))
        })
        .fold(0.0, f64::max);
    let passed = rises.is_empty() && worst <= ORACLE_TOLERANCE;
    SuiteReport {
        name: "bandwidth monotonicity",
        passed,
        detail: format!(
            "{} points from p=1e-3 to 0.5, {:.4e} -> {:.4e} bit/s, {} non-decreasing steps, \
             max rel err vs oracle {:.1e}",
            grid.len(),
            values[0],
            values[values.len() - 1],
            rises.len(),
            worst
        ),
    }
}

/// Toy group and private key for the exhaustive trapdoor check.
#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapdoorParams {
    pub p: u64,
    pub q: u64,
    pub g: u64,
    pub x: u64,
}

impl Default for TrapdoorParams {
    fn default() -> Self {
        TrapdoorParams { p: 23, q: 11, g: 4, x: 3 }
    }
}

impl TrapdoorParams {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("trapdoor parameters: {e}")))
    }
}

/// `f(f^-1(y)) = y` for every subgroup element `y` and every nonce `K` in `Z_q`.
pub fn trapdoor_round_trip(params: &TrapdoorParams) -> Result<SuiteReport, CliError> {
    if params.q > 1 << 16 {
        return Err(CliError::Usage("trapdoor check is exhaustive; q must be at most 65536".into()));
    }
    let group = GroupParams {
        p: BigUint::from(params.p),
        q: BigUint::from(params.q),
        g: BigUint::from(params.g),
    };
    let keys = UserKeyMaterial::from_secret("validate", group.clone(), BigUint::from(params.x))
        .map_err(|e| CliError::Usage(format!("trapdoor parameters: {e}")))?;
    let mut cases = 0;
    let mut failures = Vec::new();
    for y in group.subgroup_elements() {
        for k in 0..params.q {
            cases += 1;
            let ok = invert_with_nonce(&keys, &y, &BigUint::from(k))
                .and_then(|(a, b)| trapdoor_forward(keys.public(), &a, &b).ok())
                .is_some_and(|back| back == y);
            if !ok {
                failures.push(format!("y={y} K={k}"));
            }
        }
    }
    Ok(SuiteReport {
        name: "trapdoor round trip",
        passed: failures.is_empty() && cases == params.q * params.q,
        detail: format!(
            "p={} q={} g={} x={}: {cases} cases, {} failures{}",
            params.p,
            params.q,
            params.g,
            params.x,
            failures.len(),
            failures.first().map(|f| format!(" (first {f})")).unwrap_or_default()
        ),
    })
}

/// Random graph with `n` nodes where each pair is linked with probability `density`.
fn random_graph(n: usize, density: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut adj = vec![Vec::new(); n];
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen_bool(density) {
                adj[i].push(j);
                adj[j].push(i);
            }
        }
    }
    adj
}

/// Every strict two-hop neighbour is covered by a selected relay, relays are one-hop
/// neighbours, and a lossless MPR flood reaches whatever a blind flood reaches.
pub fn mpr_cover(seed: u64, graphs: usize) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes_checked = 0;
    let mut failures = Vec::new();
    let (mut blind_total, mut mpr_total) = (0, 0);
    for g in 0..graphs {
        let n = rng.gen_range(5..60);
        let density = rng.gen_range(0.03..0.4);
        let adj = random_graph(n, density, &mut rng);
        for st in states_from_adjacency(&adj) {
            nodes_checked += 1;
            let sel = select_mprs(&st).selected;
            let covered: BTreeSet<usize> = sel.iter().flat_map(|m| adj[*m].iter().copied()).collect();
            let missing = st.strict_two_hop().difference(&covered).count();
            if missing > 0 || !sel.is_subset(&st.one_hop) {
                failures.push(format!("graph {g} node {}", st.owner));
            }
        }
        let (blind, blind_reach) = flood_retransmissions(&adj, 0, false);
        let (mpr, mpr_reach) = flood_retransmissions(&adj, 0, true);
        if mpr_reach != blind_reach || mpr > blind {
            failures.push(format!("graph {g} flood"));
        }
        blind_total += blind;
        mpr_total += mpr;
    }
    SuiteReport {
        name: "mpr cover",
        passed: failures.is_empty(),
        detail: format!(
            "{graphs} graphs, {nodes_checked} nodes, {} failures, flood relays {mpr_total} with MPR vs {blind_total} blind",
            failures.len()
        ),
    }
}

/// All four suites with their standard sizes.
pub fn run_all(trapdoor: &TrapdoorParams) -> Result<Vec<SuiteReport>, CliError> {
    Ok(vec![
        equation_oracles(0x5eed, 1000),
        bandwidth_monotonicity(estimate_bandwidth),
        trapdoor_round_trip(trapdoor)?,
        mpr_cover(0x5eed, 200),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pristine_suites_pass() {
        for r in run_all(&TrapdoorParams::default()).unwrap() {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn grid_endpoints() {
        let g = loss_grid();
        assert_eq!(g.len(), 50);
        assert!((g[0] - 1e-3).abs() < 1e-15 && (g[49] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn missing_parameter_is_a_usage_error() {
        assert!(matches!(TrapdoorParams::parse("p = 23\nq = 11\ng = 4"), Err(CliError::Usage(_))));
        assert_eq!(TrapdoorParams::parse("p = 23\nq = 11\ng = 4\nx = 3").unwrap(), TrapdoorParams::default());
    }
}
