use std::sync::Arc;

use flowctl_core::roadnet::{build_default_network, EdgeId, RoadNetwork};
use flowctl_core::simcore::{
    classify_od_pairs, read_schedule, spawn_schedule, write_schedule, Phase, SimParams, SimState,
    VehicleType,
};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn net() -> Arc<RoadNetwork> {
    Arc::new(build_default_network())
}

/// Smallest bumper-to-bumper gap between consecutive vehicles sharing a lane.
fn min_same_lane_gap(sim: &SimState) -> f64 {
    let mut worst = f64::INFINITY;
    for (i, edge) in sim.network().edges().iter().enumerate() {
        for lane in 0..edge.lanes {
            let mut on_lane: Vec<_> = sim
                .lane_vehicles(EdgeId(i), lane)
                .map(|id| sim.vehicle(id).unwrap())
                .collect();
            on_lane.sort_by(|a, b| b.position.total_cmp(&a.position));
            for pair in on_lane.windows(2) {
                worst = worst.min(pair[0].rear() - pair[1].position);
            }
        }
    }
    worst
}

struct EpisodeCheck {
    min_gap: f64,
    yellow_runs: Vec<u32>,
    conserved: bool,
}

/// Random schedule driven by random phase requests until finished.
fn random_episode(seed: u64, count: usize, horizon: u32) -> EpisodeCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let net = net();
    let schedule = spawn_schedule(&net, count, seed, horizon).unwrap();
    let mut sim = SimState::new(net, &schedule, SimParams::default()).unwrap();
    let mut check = EpisodeCheck {
        min_gap: f64::INFINITY,
        yellow_runs: Vec::new(),
        conserved: true,
    };
    let mut yellow_count: Option<u32> = None;
    while !sim.finished() {
        if !sim.signal().in_yellow() && rng.random_range(0..6) == 0 {
            let phase = Phase::new(rng.random_range(0..Phase::COUNT)).unwrap();
            if sim.set_phase(phase).unwrap() {
                yellow_count = Some(0);
            }
        }
        let in_yellow = sim.signal().in_yellow();
        sim.step().unwrap();
        if let Some(c) = yellow_count.as_mut() {
            if in_yellow {
                *c += 1;
            } else {
                check.yellow_runs.push(*c);
                yellow_count = None;
            }
        }
        let counts = sim.counts();
        check.conserved &= counts.total() == count
            && counts.active
                == sim
                    .vehicles()
                    .iter()
                    .filter(|v| v.status == flowctl_core::simcore::VehicleStatus::Active)
                    .count();
        check.min_gap = check.min_gap.min(min_same_lane_gap(&sim));
    }
    check
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn conservation_gaps_and_yellow(seed in any::<u64>(), count in 20usize..250, horizon in 30u32..400) {
        let c = random_episode(seed, count, horizon);
        prop_assert!(c.conserved);
        prop_assert!(c.min_gap >= 2.5 - 1e-9, "gap {}", c.min_gap);
        prop_assert!(c.yellow_runs.iter().all(|&y| y == 2), "{:?}", c.yellow_runs);
    }
}

#[test]
fn identical_inputs_give_identical_states() {
    let net = net();
    let schedule = spawn_schedule(&net, 300, 4, 200).unwrap();
    let run = || {
        let mut sim = SimState::new(net.clone(), &schedule, SimParams::default()).unwrap();
        for t in 0..400 {
            if t % 17 == 0 && !sim.signal().in_yellow() {
                sim.set_phase(Phase::new((t / 17) % 4).unwrap()).unwrap();
            }
            sim.step().unwrap();
        }
        sim
    };
    assert_eq!(run(), run());
}

#[test]
fn schedule_mix_and_round_trip() {
    let net = net();
    let s = spawn_schedule(&net, 1000, 3, 300).unwrap();
    assert_eq!(s.len(), 1000);
    assert!(s.windows(2).all(|w| w[0].depart <= w[1].depart));
    assert!(s.iter().all(|v| v.depart < 300));
    let classes = classify_od_pairs(&net).unwrap();
    let signalised = s
        .iter()
        .filter(|v| classes.signalised.contains(&(v.origin, v.destination)))
        .count();
    assert_eq!(signalised, 600);
    let buses = s.iter().filter(|v| v.vtype == VehicleType::Bus).count();
    assert_eq!(buses, 50);
    let mut buf = Vec::new();
    write_schedule(&net, &s, &mut buf).unwrap();
    assert_eq!(read_schedule(&net, buf.as_slice()).unwrap(), s);
}

#[test]
fn empty_schedule_is_complete_at_once() {
    let sim = SimState::new(net(), &[], SimParams::default()).unwrap();
    assert!(sim.is_complete());
    assert_eq!(sim.cumulative_wait(), 0);
}

#[test]
fn step_past_cap_is_an_error() {
    let net = net();
    let schedule = spawn_schedule(&net, 50, 1, 100).unwrap();
    let params = SimParams {
        time_cap: 5,
        ..SimParams::default()
    };
    let mut sim = SimState::new(net, &schedule, params).unwrap();
    for _ in 0..5 {
        sim.step().unwrap();
    }
    assert!(sim.finished());
    assert!(sim.step().is_err());
}
