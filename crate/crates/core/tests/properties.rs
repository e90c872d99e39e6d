use proptest::prelude::*;

use qkdnet::netsim::{run_network, LogDetail, LogKind, NetworkSpec};
use qkdnet::photonics::{expected_qber, transmittance, DetectorModel, LinkBudget, SourceModel};
use qkdnet::protocol::{run_session, DirectNetwork, SessionConfig, SessionError};
use qkdnet::router::{build_assignment, PortId};

fn permutation(n: usize) -> impl Strategy<Value = Vec<usize>> {
    Just((0..n).collect::<Vec<_>>()).prop_shuffle()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn routing_is_an_involution(n in 2usize..=24) {
        let a = build_assignment(n).unwrap();
        for i in a.ports() {
            for ch in a.channels_at(i) {
                let j = a.route(i, ch).unwrap();
                prop_assert_eq!(a.route(j, ch).unwrap(), i);
            }
            for j in a.ports().filter(|&j| j != i) {
                prop_assert_eq!(a.route(i, a.wavelength_for(i, j).unwrap()).unwrap(), j);
            }
        }
    }

    #[test]
    fn relabeling_preserves_validity((n, perm) in (2usize..=20).prop_flat_map(|n| {
        let k = if n % 2 == 0 { n - 1 } else { n };
        (Just(n), permutation(k))
    })) {
        let a = build_assignment(n).unwrap();
        let report = a.relabel_channels(&perm).unwrap().verify();
        prop_assert!(report.passed(), "{}", report);
    }

    #[test]
    fn qber_bounded_and_monotone(
        p_dark in 1e-7f64..1e-2,
        e_opt in 0.0f64..0.49,
        p1 in 1e-7f64..0.5,
        p2 in 1e-7f64..0.5,
    ) {
        let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
        let q_lo = expected_qber(lo, p_dark, e_opt).unwrap();
        let q_hi = expected_qber(hi, p_dark, e_opt).unwrap();
        prop_assert!(q_hi <= q_lo + 1e-15);
        for q in [q_lo, q_hi] {
            prop_assert!(q >= e_opt.min(0.5) - 1e-15 && q <= 0.5 + 1e-15);
        }
    }

    #[test]
    fn transmittance_multiplies(a in 0.0f64..40.0, b in 0.0f64..40.0) {
        let joined = LinkBudget::new().with("a", a).unwrap().then(&LinkBudget::new().with("b", b).unwrap());
        let prod = transmittance(a).unwrap() * transmittance(b).unwrap();
        prop_assert!((joined.transmittance() - prod).abs() <= 1e-12 * prod);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn noiseless_sessions_agree(seed in any::<u64>()) {
        let src = SourceModel::new(20.0, 1e6, 0.0).unwrap();
        let det = DetectorModel::new(1.0, 0.0, 2.5, 1e6).unwrap();
        let mut net = DirectNetwork::new(build_assignment(4).unwrap(), src, seed);
        for p in 1..4 {
            net = net.with_client(PortId(p), det.clone(), &LinkBudget::new());
        }
        let cfg = SessionConfig::broadcast(PortId(0), 4, 4000, seed);
        let r = run_session(&cfg, &mut net).unwrap();
        for l in &r.links {
            prop_assert_eq!(l.sifted_qber, Some(0.0));
        }
        for k in r.client_keys.values() {
            prop_assert_eq!(k, &r.shared_key);
        }
        prop_assert!(!r.transcript.exposes(&r.shared_key));
    }

    #[test]
    fn event_log_invariants(seed in any::<u64>(), eatt in 0.0f64..10.0, delay in 0u64..2000) {
        let mut spec = NetworkSpec::reference_four_user();
        spec.log_detail = LogDetail::Full;
        spec.classical_delay_ns = delay;
        spec.clients.get_mut(&PortId(2)).unwrap().extra_attenuation_db = eatt;
        let cfg = SessionConfig::broadcast(PortId(3), 4, 3000, seed);
        let run = run_network(&spec, &cfg, seed).unwrap();
        let again = run_network(&spec, &cfg, seed).unwrap();
        prop_assert_eq!(run.log.render(), again.log.render());

        let entries = run.log.entries();
        prop_assert!(entries.windows(2).all(|w| w[0].time_ns <= w[1].time_ns));
        prop_assert!(run.log.guard_band_violations(spec.guard_ns).is_empty());
        let period = spec.frame_period_ns();
        for g in run.log.of_kind(LogKind::GateOpen) {
            let port = g.port.unwrap();
            prop_assert_eq!(g.time_ns % period, spec.channel_offsets_ns[&g.channel.unwrap()]);
            let want = spec.router.path_loss_db(spec.server, port).unwrap()
                + spec.clients[&port].extra_attenuation_db;
            let got: f64 = g.detail.split_whitespace()
                .find_map(|kv| kv.strip_prefix("loss_db=")).unwrap().parse().unwrap();
            prop_assert_eq!(got, want);
        }
        // every message arrives once, in send order
        let logged: Vec<&str> = run.log.of_kind(LogKind::ClassicalMessage).map(|e| e.detail.as_str()).collect();
        let transcript = match &run.outcome {
            Ok(r) => r.transcript.messages().iter().map(|m| m.to_string()).collect::<Vec<_>>(),
            Err(_) => logged.iter().map(|s| s.to_string()).collect(),
        };
        prop_assert_eq!(logged, transcript);
    }

    #[test]
    fn full_intercept_always_aborts(seed in any::<u64>()) {
        let mut spec = NetworkSpec::reference_four_user();
        spec.log_detail = LogDetail::Off;
        spec.clients.get_mut(&PortId(1)).unwrap().intercept_fraction = 1.0;
        let cfg = SessionConfig::broadcast(PortId(3), 4, 200_000, seed);
        let run = run_network(&spec, &cfg, seed).unwrap();
        let aborted = matches!(run.outcome, Err(SessionError::QberAbort { .. }));
        prop_assert!(aborted);
    }
}
