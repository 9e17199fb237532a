mod common;

use common::{brute_force_delay, brute_force_hops, graph, lattice, random_graph, EARTH_RADIUS_KM};
use leotwin::pathcomp::{
    route, shortest_delays, NoRouteReason, PathAlgorithm, PathTable, RouteError, ShortestDelay,
    StateAware,
};
use leotwin::topology::NodeId;
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn shortest_delays_match_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut compared = 0;
    for _ in 0..300 {
        let n = rng.random_range(2..=10);
        let snap = random_graph(&mut rng, n, 0.35, 0.2);
        for d in 0..n {
            let tree = shortest_delays(&snap, NodeId(d));
            for s in 0..n {
                let want = if s == d {
                    0.0
                } else {
                    brute_force_delay(&snap, NodeId(s), NodeId(d))
                };
                let got = tree.delay_s[s as usize];
                if want.is_infinite() {
                    assert!(got.is_infinite(), "{s}->{d}");
                    assert!(tree.next[s as usize].is_none());
                } else {
                    assert!(
                        (got - want).abs() <= 1e-12 * want.max(1e-9),
                        "{s}->{d}: {got} vs {want}"
                    );
                    compared += 1;
                }
                if s != d && want.is_finite() {
                    let rec = route(&snap, NodeId(s), NodeId(d), &ShortestDelay).unwrap();
                    assert!((rec.theoretical_rtt_s - 2.0 * want).abs() <= 1e-12 * want);
                }
            }
        }
    }
    assert!(compared > 2000, "only {compared} reachable pairs");
}

#[test]
fn routes_never_use_failed_links() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let algs: Vec<Box<dyn PathAlgorithm>> = vec![
        Box::new(ShortestDelay),
        Box::new(StateAware::new(1)),
        Box::new(StateAware::new(2)),
    ];
    let mut routed = 0;
    for _ in 0..1000 {
        let n = rng.random_range(3..=20);
        let q = rng.random_range(0.0..0.6);
        let snap = random_graph(&mut rng, n, 0.3, q);
        let s = NodeId(rng.random_range(0..n));
        let d = NodeId(rng.random_range(0..n));
        if s == d {
            assert_eq!(
                route(&snap, s, d, &ShortestDelay),
                Err(RouteError::SameEndpoints)
            );
            continue;
        }
        let best = route(&snap, s, d, &ShortestDelay)
            .ok()
            .map(|r| r.theoretical_rtt_s);
        for alg in &algs {
            match route(&snap, s, d, alg.as_ref()) {
                Ok(rec) => {
                    routed += 1;
                    for w in rec.hops.windows(2) {
                        assert!(!snap.link_between(w[0], w[1]).unwrap().failed);
                    }
                    // anything found is no shorter than the optimum
                    let opt = best.expect("a route exists, so the optimum does too");
                    assert!(rec.theoretical_rtt_s >= opt * (1.0 - 1e-12));
                }
                Err(RouteError::NoRoute { .. }) => {}
                Err(e) => panic!("{e}"),
            }
        }
    }
    assert!(routed > 500);
}

#[test]
fn greedy_on_lattice_is_hop_optimal() {
    let snap = lattice(5, 5);
    let greedy = StateAware::new(1);
    for s in 0..25 {
        for d in 0..25 {
            if s == d {
                continue;
            }
            let (s, d) = (NodeId(s), NodeId(d));
            let want = brute_force_hops(&snap, s, d).unwrap();
            let manhattan = (s.0 / 5).abs_diff(d.0 / 5) + (s.0 % 5).abs_diff(d.0 % 5);
            assert_eq!(want, manhattan as usize);
            let g = route(&snap, s, d, &greedy).unwrap();
            let c = route(&snap, s, d, &ShortestDelay).unwrap();
            assert_eq!(g.hop_count(), want, "{s:?}->{d:?}");
            assert_eq!(c.hop_count(), want, "{s:?}->{d:?}");
            assert!(g.theoretical_rtt_s >= c.theoretical_rtt_s * (1.0 - 1e-12));
        }
    }
}

#[test]
fn stations_do_not_transit_unless_relaying() {
    let r = EARTH_RADIUS_KM + 550.0;
    let at = |lon: f64| {
        let l = lon.to_radians();
        Vector3::new(r * l.cos(), r * l.sin(), 0.0)
    };
    let ground = |lon: f64| at(lon) * (EARTH_RADIUS_KM / r);
    // sats 0, 1; stations 2 (gs0), 3 (gs1), 4 (gs2). gs1 bridges the sats.
    let positions = vec![at(0.0), at(10.0), ground(-2.0), ground(5.0), ground(12.0)];
    let edges = [(0, 2, false), (0, 3, false), (1, 3, false), (1, 4, false)];
    let isl_mode = graph(2, positions.clone(), &edges, false);
    let relay = graph(2, positions, &edges, true);
    for alg in [&ShortestDelay as &dyn PathAlgorithm, &StateAware::new(1)] {
        assert!(matches!(
            route(&isl_mode, NodeId(2), NodeId(4), alg),
            Err(RouteError::NoRoute {
                reason: NoRouteReason::Disconnected,
                ..
            })
        ));
        let rec = route(&relay, NodeId(2), NodeId(4), alg).unwrap();
        assert_eq!(
            rec.hops,
            vec![NodeId(2), NodeId(0), NodeId(3), NodeId(1), NodeId(4)]
        );
        // the bridge station itself is still a valid endpoint
        assert!(route(&isl_mode, NodeId(2), NodeId(3), alg).is_ok());
    }
}

#[test]
fn path_table_entries_reach_their_destination() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let snap = random_graph(&mut rng, 15, 0.25, 0.3);
        let dsts: Vec<NodeId> = (0..15).map(NodeId).collect();
        for alg in [&ShortestDelay as &dyn PathAlgorithm, &StateAware::new(1)] {
            let table = PathTable::compute(alg, &snap, &dsts);
            for &(node, dst) in table.entries.keys() {
                let path = table.path(node, dst).expect("entry chains terminate");
                assert_eq!(*path.last().unwrap(), dst);
                let mut seen = std::collections::BTreeSet::new();
                assert!(path.iter().all(|n| seen.insert(*n)));
                for w in path.windows(2) {
                    assert!(!snap.link_between(w[0], w[1]).unwrap().failed);
                }
            }
            // centralized covers exactly the reachable pairs
            if alg.name() == "centralized" {
                for d in 0..15u32 {
                    for s in 0..15u32 {
                        if s != d {
                            let reach = brute_force_delay(&snap, NodeId(s), NodeId(d)).is_finite();
                            assert_eq!(table.next_hop(NodeId(s), NodeId(d)).is_some(), reach);
                        }
                    }
                }
            }
        }
    }
}
