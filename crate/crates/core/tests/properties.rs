use dmrf_core::model::{Confidence, RateClass};
use dmrf_core::protocol::{apply_jump_result, compute_lambda, jump_probabilities, DecisionEnv};
use dmrf_core::topology::{disjoint_paths, hop_counts_to_sink};
use dmrf_core::{
    build_fcs, carve_void, deploy, make_packet, CandidateEntry, Distribution, DmrfNode, DmrfParams, ForwardDecision,
    NodeId, NodeState, Point, Topology,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const MU: f64 = 1.28;

fn random_topology() -> impl Strategy<Value = Topology> {
    (10usize..80, 1.0f64..3.0, any::<u64>()).prop_map(|(n, r, seed)| {
        deploy(n, (8.0, 8.0), Distribution::Random, seed).unwrap().with_radio(r, 30.0).unwrap()
    })
}

fn state() -> impl Strategy<Value = NodeState> {
    prop_oneof![
        4 => Just(NodeState::Normal),
        1 => Just(NodeState::Cong),
        1 => Just(NodeState::Faulty),
        1 => Just(NodeState::JFaulty),
        1 => Just(NodeState::JCong),
        1 => Just(NodeState::Void),
    ]
}

fn rate() -> impl Strategy<Value = RateClass> {
    prop_oneof![Just(RateClass::Low), Just(RateClass::Medium), Just(RateClass::High)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn fcs_members_are_closer_neighbours(topo in random_topology()) {
        for n in topo.node_ids() {
            for m in build_fcs(&topo, n).unwrap().ids() {
                prop_assert!(topo.distance(n, m) <= topo.comm_radius());
                prop_assert!(topo.distance_to_sink(m) < topo.distance_to_sink(n));
            }
        }
    }

    #[test]
    fn carving_keeps_endpoints_and_outside_nodes(
        topo in random_topology(),
        cx in 0.0f64..8.0,
        cy in 0.0f64..8.0,
        radius in 0.0f64..6.0,
    ) {
        let c = Point::new(cx, cy);
        let carved = carve_void(&topo, c, radius);
        prop_assert!(carved.contains(topo.source()) && carved.contains(topo.sink()));
        let outside = topo
            .node_ids()
            .filter(|&n| topo.position(n).unwrap().dist(&c) >= radius || n == topo.source() || n == topo.sink())
            .count();
        prop_assert_eq!(carved.len(), outside);
        for n in carved.node_ids() {
            prop_assert_eq!(carved.position(n), topo.position(n));
        }
    }

    #[test]
    fn disjoint_paths_share_no_interior_node(topo in random_topology(), m in 1usize..6) {
        let ps = disjoint_paths(&topo, m, MU);
        prop_assert!(ps.len() <= m);
        let mut seen = std::collections::HashSet::new();
        for p in &ps.paths {
            for v in &p[1..p.len() - 1] {
                prop_assert!(seen.insert(*v));
            }
            prop_assert!(p.windows(2).all(|w| topo.is_neighbor(w[0], w[1])));
        }
        let reachable = hop_counts_to_sink(&topo)[topo.source().index()].is_some();
        prop_assert_eq!(ps.is_empty(), !reachable);
    }

    #[test]
    fn jump_table_updates_keep_counters_consistent(
        n in 1usize..8,
        events in prop::collection::vec((0usize..8, any::<bool>()), 0..60),
    ) {
        let mut es: Vec<CandidateEntry> = (0..n).map(|i| CandidateEntry::new(NodeId(i as u32))).collect();
        jump_probabilities(&mut es);
        for (k, ok) in events {
            let target = NodeId((k % n) as u32);
            prop_assert!(apply_jump_result(&mut es, target, ok));
            let sum: f64 = es.iter().map(|e| e.jump_p).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-9);
            for e in &es {
                prop_assert!(e.successes <= e.attempts);
                prop_assert!((0.0..=1.0).contains(&e.suc));
                prop_assert!((0.0..=1.0).contains(&e.jump_p));
            }
        }
    }

    #[test]
    fn confidence_only_falls_between_resets(
        threshold in 1u8..=100,
        steps in prop::collection::vec(prop_oneof![3 => (1u8..=60).prop_map(Some), 1 => Just(None)], 0..40),
    ) {
        let mut c = Confidence::new(threshold);
        for s in steps {
            let before = c;
            match s {
                Some(step) => {
                    let crossed = c.miss(step);
                    prop_assert!(c.value() <= before.value());
                    prop_assert_eq!(crossed, !before.is_faulty() && c.is_faulty());
                }
                None => {
                    c.reset();
                    prop_assert_eq!(c.value(), Confidence::FULL);
                }
            }
            prop_assert_eq!(c.is_faulty(), c.value() < threshold);
        }
    }

    #[test]
    fn rate_steps_never_skip_medium(start in rate(), wants in prop::collection::vec(rate(), 0..30)) {
        let mut r = start;
        for w in wants {
            let next = r.step_towards(w);
            prop_assert!(!matches!((r, next), (RateClass::Low, RateClass::High) | (RateClass::High, RateClass::Low)));
            r = next;
        }
    }

    #[test]
    fn lambda_is_the_slack_ratio(l in 0.001f64..1e4, t in 0.001f64..1e4) {
        prop_assert_eq!(compute_lambda(l, t).unwrap(), l / t);
        prop_assert_eq!(compute_lambda(-l, t).unwrap(), 0.0);
    }

    #[test]
    fn forward_decisions_respect_state_and_deadline(
        states in prop::collection::vec(state(), 3),
        delays in prop::collection::vec(0.1f64..20.0, 3),
        faulty in prop::collection::vec(any::<bool>(), 3),
        lifetime in 0.5f64..60.0,
        elapsed in 0.0f64..60.0,
        seed in any::<u64>(),
    ) {
        // Node 12 at the centre of a 5x5 unit grid has three FCS members.
        let pts: Vec<Point> = (0..25).map(|k| Point::new(f64::from(k % 5), f64::from(k / 5))).collect();
        let topo = Topology::from_positions(pts, (4.0, 4.0), 1.5, 30.0, NodeId(0), NodeId(24)).unwrap();
        let est: Vec<f64> = hop_counts_to_sink(&topo).iter().map(|h| f64::from(h.unwrap()) * MU).collect();
        let mut node = DmrfNode::new(&topo, NodeId(12), DmrfParams::with_mean_hop_delay(MU), est[12]);
        prop_assert_eq!(node.table.fcs.members.len(), 3);
        for (i, e) in node.table.fcs.members.iter_mut().enumerate() {
            e.cached_state = states[i];
            e.delay_est = delays[i];
            if faulty[i] {
                e.confidence = Confidence::with_value(0, 50);
            }
        }
        let before = node.table.fcs.members.clone();
        let mut packet = make_packet(0, NodeId(0), 256, 0.0, lifetime).unwrap();
        let remaining = packet.remaining_time(elapsed);
        let env = DecisionEnv { topo: &topo, estimates: &est };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match node.select_next_hop(&mut packet, elapsed, &env, &mut rng) {
            ForwardDecision::Forward { next, rate } => {
                let e = before.iter().find(|e| e.candidate == next).unwrap();
                prop_assert_eq!(e.cached_state, NodeState::Normal);
                prop_assert!(!e.confidence.is_faulty());
                prop_assert!(e.delay_est <= remaining);
                prop_assert_eq!(rate, packet.rate_class);
            }
            ForwardDecision::Jump { next } => {
                // The sink is the last resort even when no target is feasible.
                prop_assert!(next == topo.sink() || MU + est[next.index()] <= remaining);
            }
            ForwardDecision::Drop { .. } => {}
        }
        if remaining <= 0.0 {
            let again = node.select_next_hop(&mut packet, elapsed, &env, &mut rng);
            prop_assert!(matches!(again, ForwardDecision::Drop { .. }), "{:?}", again);
        }
    }
}
