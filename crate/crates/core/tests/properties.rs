use std::collections::BTreeSet;
use std::io::Write;

use jointfleet::demand::{Request, RequestKind};
use jointfleet::dispatch::checkpoint::{params_digest, read_checkpoint, write_checkpoint};
use jointfleet::dispatch::{AgentMode, QNetwork};
use jointfleet::engine::{run_episode, BaselineMode, EpisodeLog, EventKind, GridConfig, SimConfig};
use jointfleet::fleet::Slot;
use jointfleet::hopplan::plan_legs;
use jointfleet::matching::{match_requests, MatchCandidate};
use jointfleet::metrics::{accept_rate, compute_metrics, MetricsOptions};
use jointfleet::{GridWorld, ZoneId};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn zone(side: u32) -> impl Strategy<Value = ZoneId> {
    (0..side, 0..side).prop_map(|(r, c)| ZoneId::new(r, c))
}

fn small_sim(seed: u64, baseline: BaselineMode) -> SimConfig {
    SimConfig {
        grid: GridConfig {
            width: 8,
            height: 8,
            ..GridConfig::default()
        },
        fleet_size: 6,
        ticks: 60,
        warmup: 5,
        seed,
        baseline,
        ..SimConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hop_trips_chain_through_hop_zones(
        hops in prop::collection::btree_set(zone(12), 0..8),
        o in zone(12),
        d in zone(12),
        depth in 0u32..5,
    ) {
        prop_assume!(o != d);
        let mut grid = GridWorld::new(12, 12, 150.0, 1).unwrap();
        grid.set_hop_zones(hops.clone()).unwrap();
        let trip = plan_legs(0, o, d, &grid, depth).unwrap();
        prop_assert_eq!(trip.legs[0].0, o);
        prop_assert_eq!(trip.legs[trip.legs.len() - 1].1, d);
        for w in trip.legs.windows(2) {
            prop_assert_eq!(w[0].1, w[1].0);
            prop_assert!(hops.contains(&w[0].1));
        }
        prop_assert!(trip.total_distance() <= (1 << depth) * o.manhattan(d));
        if depth == 0 {
            prop_assert_eq!(trip.legs.len(), 1);
        }
    }

    #[test]
    fn matching_respects_capacity_and_slots(
        reqs in prop::collection::vec((zone(10), zone(10), any::<bool>()), 0..12),
        vehs in prop::collection::vec((zone(10), 0u32..3, 0u32..3), 0..6),
        radius in 0u32..20,
        seed in any::<u64>(),
    ) {
        let grid = GridWorld::new(10, 10, 150.0, 1).unwrap();
        let requests: Vec<Request> = reqs
            .iter()
            .enumerate()
            .filter(|(_, (o, d, _))| o != d)
            .map(|(i, (o, d, p))| {
                let kind = if *p { RequestKind::Passenger } else { RequestKind::Goods };
                Request::new(i as u64, kind, *o, *d, 0, 1.0).unwrap()
            })
            .collect();
        let vehicles: Vec<MatchCandidate> = vehs
            .iter()
            .enumerate()
            .map(|(i, (loc, s, t))| MatchCandidate { vehicle_id: i as u32, location: *loc, seats_free: *s, trunk_free: *t })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let out = match_requests(&requests, &vehicles, &grid, radius, &mut rng).unwrap();
        let mut again = ChaCha8Rng::seed_from_u64(seed);
        prop_assert_eq!(&out, &match_requests(&requests, &vehicles, &grid, radius, &mut again).unwrap());

        let ids: BTreeSet<u64> = out.iter().map(|a| a.request_id).collect();
        prop_assert_eq!(ids.len(), out.len());
        for v in &vehicles {
            let seats = out.iter().filter(|a| a.vehicle_id == v.vehicle_id && a.slot == Slot::Seat).count();
            let trunk = out.iter().filter(|a| a.vehicle_id == v.vehicle_id && a.slot == Slot::Trunk).count();
            prop_assert!(seats as u32 <= v.seats_free && trunk as u32 <= v.trunk_free);
        }
        for a in &out {
            let r = requests.iter().find(|r| r.id == a.request_id).unwrap();
            prop_assert_eq!(a.slot == Slot::Seat, r.kind == RequestKind::Passenger);
            let v = &vehicles[a.vehicle_id as usize];
            prop_assert!(v.location.manhattan(r.origin) <= radius);
        }
    }

    #[test]
    fn checkpoints_round_trip(sizes in prop::collection::vec(1usize..6, 2..5), nets in 1usize..3, step in any::<u64>(), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let saved: Vec<QNetwork> = (0..nets).map(|_| QNetwork::new(&sizes, &mut rng)).collect();
        let mut bytes = Vec::new();
        write_checkpoint(&mut bytes, &saved.iter().collect::<Vec<_>>(), step).unwrap();
        let mut loaded: Vec<QNetwork> = (0..nets).map(|_| QNetwork::new(&sizes, &mut rng)).collect();
        let header = read_checkpoint(bytes.as_slice(), &mut loaded).unwrap();
        prop_assert_eq!(header.step, step);
        prop_assert_eq!(&loaded, &saved);
        prop_assert_eq!(
            params_digest(&loaded.iter().collect::<Vec<_>>()),
            params_digest(&saved.iter().collect::<Vec<_>>())
        );
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn short_episodes_hold_their_invariants(seed in 0u64..10_000, which in 0usize..3) {
        let cfg = small_sim(seed, BaselineMode::ALL[which]);
        let out = run_episode(&cfg, None, AgentMode::Eval).unwrap();
        let log: &EpisodeLog = &out.log;
        let ticks: Vec<u64> = log.events.iter().map(|e| e.tick).collect();
        prop_assert!(ticks.windows(2).all(|w| w[0] <= w[1]));
        prop_assert_eq!(EpisodeLog::from_jsonl(&log.to_jsonl()).unwrap(), log.clone());

        let m = compute_metrics(log, &MetricsOptions::default());
        let (p, g) = (m.passenger_requests as f64, m.goods_requests as f64);
        if p + g > 0.0 {
            let weighted = (m.accept_rate.passenger * p + m.accept_rate.goods * g) / (p + g);
            prop_assert!((weighted - m.accept_rate.overall).abs() < 1e-12);
            prop_assert_eq!(accept_rate(log, None), m.accept_rate.overall);
        }
        prop_assert!((0.0..=1.0).contains(&m.active_vehicle_ratio));
        if cfg.baseline != BaselineMode::FlexHops {
            prop_assert_eq!(m.hop_transfers, 0);
        }
    }
}

#[test]
fn solo_direct_trips_have_unit_effective_distance() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trips.csv");
    let mut f = std::fs::File::create(&path).unwrap();
    writeln!(
        f,
        "pickup_tick,kind,origin_row,origin_col,dest_row,dest_col"
    )
    .unwrap();
    let trips = [
        (0, 0, 0, 5, 7),
        (2, 7, 7, 1, 2),
        (3, 4, 0, 4, 6),
        (9, 2, 6, 6, 1),
        (15, 0, 3, 7, 3),
    ];
    for (t, r0, c0, r1, c1) in trips {
        writeln!(f, "{t},passenger,{r0},{c0},{r1},{c1}").unwrap();
    }
    drop(f);

    let cfg = SimConfig {
        seats: 1,
        trunk: 0,
        warmup: 0,
        ticks: 120,
        trip_records: Some(path),
        ..small_sim(1, BaselineMode::FlexNohops)
    };
    let out = run_episode(&cfg, None, AgentMode::Eval).unwrap();
    let delivered = out
        .log
        .events
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Delivered { .. }))
        .count();
    assert_eq!(delivered, trips.len());
    assert_eq!(out.metrics.effective_distance_ratio, 1.0);
}
