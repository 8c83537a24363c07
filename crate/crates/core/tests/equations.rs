use proptest::prelude::*;
use wmn_core::link_metrics::{
    is_eligible, path_reliability, update_reliability, window_ratio, LinkReliabilityTable,
};
use wmn_core::qos::{
    admit_flow, combine_path_loss, compute_rto, congestion_loss_ratio, destination_average_delay,
    estimate_bandwidth, probe_count, AdmitDecision, BandwidthInputs, LossLedger, ProbeSession,
};
use wmn_core::SimError;

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}

fn inputs(p: f64) -> BandwidthInputs {
    BandwidthInputs {
        packet_size: 4096.0,
        rtt_mean: 0.1,
        rtt_var: 0.01,
        k_factor: 4.0,
        p_congestion: p,
        raw_bandwidth: 2.0e6,
    }
}

#[test]
fn reliability_update_examples() {
    assert!(close(update_reliability(0.8, 0.6, 0.5).unwrap(), 0.7, 1e-15));
    assert_eq!(update_reliability(1.0, 1.0, 0.5).unwrap(), 1.0);
    assert_eq!(update_reliability(0.0, 0.0, 0.3).unwrap(), 0.0);
    assert!(matches!(update_reliability(1.2, 0.5, 0.5), Err(SimError::OutOfRange { .. })));
    assert!(update_reliability(0.5, -0.1, 0.5).is_err());
    assert!(update_reliability(0.5, 0.5, 0.0).is_err());
    assert!(update_reliability(0.5, 0.5, 1.0).is_err());
}

#[test]
fn path_reliability_examples() {
    assert!(close(path_reliability(&[0.9, 0.7, 0.8]).unwrap(), 0.8, 1e-15));
    assert_eq!(path_reliability(&[0.4]).unwrap(), 0.4);
    assert!(matches!(path_reliability(&[]), Err(SimError::EmptyPath)));
    assert!(path_reliability(&[0.5, 1.5]).is_err());
}

#[test]
fn eligibility_is_inclusive() {
    assert!(is_eligible(0.5, 0.5));
    assert!(!is_eligible(0.49, 0.5));
    assert!(is_eligible(1.0, 0.5));
}

#[test]
fn window_ratio_clamps() {
    assert_eq!(window_ratio(3, 4.0), 0.75);
    assert_eq!(window_ratio(6, 4.0), 1.0);
    assert_eq!(window_ratio(2, 0.0), 0.0);
}

#[test]
fn table_counts_hellos_per_window() {
    let mut t = LinkReliabilityTable::new(0.5, 1.0, 0.25);
    for k in 0..3 {
        t.record_control_packet(7, 0.25 * k as f64);
    }
    t.close_window(1.0);
    assert!(close(t.reliability(7), 0.75, 1e-12));
    for k in 0..4 {
        t.record_control_packet(7, 1.0 + 0.25 * k as f64);
    }
    t.close_window(2.0);
    assert!(close(t.reliability(7), 0.875, 1e-12));
    assert_eq!(t.reliability(8), 0.0);
}

#[test]
fn silent_neighbour_decays_below_threshold() {
    let mut t = LinkReliabilityTable::new(0.5, 1.0, 0.25);
    for k in 0..4 {
        t.record_control_packet(3, 0.25 * k as f64);
    }
    t.close_window(1.0);
    assert_eq!(t.reliability(3), 1.0);
    t.close_window(2.0);
    assert_eq!(t.reliability(3), 0.5);
    t.close_window(3.0);
    assert!(!is_eligible(t.reliability(3), 0.5));
}

#[test]
fn rto_examples() {
    assert!(close(compute_rto(0.1, 0.01, 4.0).unwrap(), 0.14, 1e-15));
    assert_eq!(compute_rto(0.2, 0.0, 4.0).unwrap(), 0.2);
    assert!(compute_rto(0.0, 0.01, 4.0).is_err());
    assert!(compute_rto(0.1, -0.01, 4.0).is_err());
}

#[test]
fn bandwidth_zero_loss_returns_raw() {
    assert_eq!(estimate_bandwidth(&inputs(0.0)).unwrap(), 2.0e6);
}

#[test]
fn bandwidth_regression_value() {
    let bw = estimate_bandwidth(&inputs(0.01)).unwrap();
    assert!(close(bw, 4.863e5, 1e-3), "got {bw}");
}

#[test]
fn bandwidth_rejects_bad_inputs() {
    assert!(estimate_bandwidth(&inputs(1.5)).is_err());
    assert!(estimate_bandwidth(&BandwidthInputs {
        rtt_mean: 0.0,
        ..inputs(0.1)
    })
    .is_err());
    assert!(estimate_bandwidth(&BandwidthInputs {
        packet_size: 0.0,
        ..inputs(0.1)
    })
    .is_err());
}

#[test]
fn bandwidth_decreases_on_grid() {
    let grid: Vec<f64> = (0..50)
        .map(|i| 10f64.powf(-3.0 + i as f64 * (0.5f64.log10() + 3.0) / 49.0))
        .collect();
    let bws: Vec<f64> = grid.iter().map(|&p| estimate_bandwidth(&inputs(p)).unwrap()).collect();
    for w in bws.windows(2) {
        assert!(w[1] < w[0], "{} !< {}", w[1], w[0]);
    }
}

#[test]
fn probe_and_delay_examples() {
    assert_eq!(probe_count(3).unwrap(), 6);
    assert!(probe_count(0).is_err());
    let mut s = ProbeSession::new(vec![1, 2, 3]).unwrap();
    for d in [0.01, 0.02, 0.03, 0.04] {
        s.record_arrival(d, 1.0, 0.05);
    }
    assert!(close(destination_average_delay(&s).unwrap(), 0.025, 1e-12));
    let empty = ProbeSession::new(vec![1, 2]).unwrap();
    assert!(matches!(destination_average_delay(&empty), Err(SimError::ProbeFailure)));
}

#[test]
fn congestion_ratio_examples() {
    let l = LossLedger {
        delivered: 90,
        lost_link: 5,
        lost_congestion: 5,
    };
    assert!(close(congestion_loss_ratio(&l).value, 0.05, 1e-15));
    assert!(!congestion_loss_ratio(&LossLedger::default()).has_data);
    assert!(close(combine_path_loss(&[0.1, 0.1]), 0.19, 1e-12));
    assert_eq!(combine_path_loss(&[]), 0.0);
}

#[test]
fn admission_examples() {
    assert_eq!(admit_flow(0.05, 0.1, 6e4, 5e4, true), AdmitDecision::Admit);
    assert_eq!(admit_flow(0.15, 0.1, 6e4, 5e4, true), AdmitDecision::TryNextPath);
    assert_eq!(admit_flow(0.05, 0.1, 4e4, 5e4, false), AdmitDecision::Reject);
    assert_eq!(admit_flow(0.1, 0.1, 5e4, 5e4, false), AdmitDecision::Admit);
}

proptest! {
    #[test]
    fn ewma_stays_between_inputs(n_t in 0.0f64..=1.0, prev in 0.0f64..=1.0, alpha in 0.01f64..0.99) {
        let r = update_reliability(n_t, prev, alpha).unwrap();
        prop_assert!(r >= n_t.min(prev) - 1e-15 && r <= n_t.max(prev) + 1e-15);
    }

    #[test]
    fn ewma_converges_geometrically(start in 0.0f64..=1.0, target in 0.0f64..=1.0, alpha in 0.05f64..0.95, k in 1usize..40) {
        let mut r = start;
        for _ in 0..k {
            r = update_reliability(target, r, alpha).unwrap();
        }
        let bound = (1.0 - alpha).powi(k as i32) * (start - target).abs();
        prop_assert!((r - target).abs() <= bound + 1e-12);
    }

    #[test]
    fn path_reliability_is_order_free(mut v in prop::collection::vec(0.0f64..=1.0, 1..12), rot in 0usize..12) {
        let a = path_reliability(&v).unwrap();
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(a >= lo - 1e-12 && a <= hi + 1e-12);
        let n = v.len();
        v.rotate_left(rot % n);
        v.reverse();
        prop_assert!(close(a, path_reliability(&v).unwrap(), 1e-12));
    }

    #[test]
    fn rto_never_below_rtt(rtt in 1e-4f64..2.0, var in 0.0f64..1.0, k in 0.0f64..8.0) {
        prop_assert!(compute_rto(rtt, var, k).unwrap() >= rtt);
    }

    #[test]
    fn bandwidth_strictly_decreasing_in_p(p in 1e-4f64..0.99, dp in 1e-4f64..0.5, rtt in 1e-3f64..1.0, var in 0.0f64..0.5) {
        let q = (p + dp).min(1.0);
        prop_assume!(q > p);
        let mk = |p| BandwidthInputs {
            packet_size: 4096.0,
            rtt_mean: rtt,
            rtt_var: var,
            k_factor: 4.0,
            p_congestion: p,
            raw_bandwidth: f64::MAX,
        };
        prop_assert!(estimate_bandwidth(&mk(q)).unwrap() < estimate_bandwidth(&mk(p)).unwrap());
    }

    #[test]
    fn bandwidth_linear_in_packet_size(size in 64.0f64..16384.0, factor in 1.5f64..8.0, p in 1e-3f64..1.0) {
        let mk = |s| BandwidthInputs {
            packet_size: s,
            raw_bandwidth: f64::MAX,
            ..inputs(p)
        };
        let a = estimate_bandwidth(&mk(size)).unwrap();
        let b = estimate_bandwidth(&mk(size * factor)).unwrap();
        prop_assert!(close(b, a * factor, 1e-12));
    }

    #[test]
    fn bandwidth_never_exceeds_raw(p in 0.0f64..=1.0, raw in 1e3f64..1e8) {
        let bw = estimate_bandwidth(&BandwidthInputs { raw_bandwidth: raw, ..inputs(p) }).unwrap();
        prop_assert!(bw > 0.0 && bw <= raw);
    }
}
