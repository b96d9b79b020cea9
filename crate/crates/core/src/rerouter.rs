//! Congestion-triggered rerouting of vehicles upstream of the junction.
//!
//! At every detector window boundary each arm whose window density exceeds
//! the threshold is flagged. Vehicles that have yet to reach a flagged
//! approach compare their updated total wait (free-flow time of the rest of
//! their route plus the arm's mean residual wait) with the fastest
//! alternative from the end of their current edge, priced with a density
//! surcharge on flagged approaches, and switch when the alternative is
//! strictly faster. A vehicle is rerouted at most once per trip.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;

use crate::roadnet::{
    enumerate_routes_excluding, route_travel_time, EdgeId, EdgeWeights, NodeId, Route,
    DEFAULT_ROUTE_COUNT,
};
use crate::simcore::{Arm, DetectorReading, SimError, SimState, VehicleId, VehicleStatus};

pub const DEFAULT_DENSITY_THRESHOLD: f64 = 0.05;
/// Seconds of surcharge per vehicle expected on a flagged edge.
pub const SURCHARGE_S_PER_VEHICLE: f64 = 2.0;

pub const REROUTE_LOG_HEADER: &str =
    "time,vehicle,old_route,new_route,u_twt,best_alt_time,decision";

#[derive(Debug, Clone, PartialEq)]
pub struct CongestionMonitor {
    threshold: f64,
    history: Vec<DetectorReading>,
}

impl CongestionMonitor {
    pub fn new(threshold: f64) -> Result<Self, SimError> {
        if !(threshold > 0.0 && threshold.is_finite()) {
            return Err(SimError::InvalidReroute(format!(
                "density threshold must be positive, got {threshold}"
            )));
        }
        Ok(CongestionMonitor {
            threshold,
            history: Vec::new(),
        })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    /// Readings seen so far.
    pub fn history(&self) -> &[DetectorReading] {
        &self.history
    }

    /// Arms whose window density is strictly above the threshold.
    pub fn check_congestion(&mut self, readings: &[DetectorReading]) -> BTreeSet<Arm> {
        self.history.extend(readings.iter().cloned());
        readings
            .iter()
            .filter(|r| r.density > self.threshold)
            .map(|r| r.arm)
            .collect()
    }
}

/// Route time plus the expected wait at the junction.
pub fn updated_total_wait(route_time: f64, intersection_wait: f64) -> f64 {
    route_time + intersection_wait
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Stay,
    Switch,
}

impl Decision {
    pub fn as_str(self) -> &'static str {
        match self {
            Decision::Stay => "stay",
            Decision::Switch => "switch",
        }
    }
}

/// Switch to the fastest alternative iff it beats `u_twt` strictly.
/// `alternatives` must be sorted ascending.
pub fn reroute_decision(u_twt: f64, alternatives: &[f64]) -> Decision {
    match alternatives.first() {
        Some(&best) if u_twt > best => Decision::Switch,
        _ => Decision::Stay,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RerouteDecision {
    pub time: u32,
    pub vehicle: VehicleId,
    pub old_route: Route,
    /// Equal to `old_route` when staying.
    pub new_route: Route,
    pub decision: Decision,
    pub u_twt: f64,
    /// Whole-trip-remainder times of the alternatives, ascending.
    pub alternatives: Vec<f64>,
}

/// Mean accumulated wait of the halted vehicles on `arm`.
pub fn arm_wait_estimate(sim: &SimState, arm: Arm) -> f64 {
    let queue = sim.queue_length(arm);
    if queue == 0 {
        0.0
    } else {
        sim.arm_cumulative_wait(arm) as f64 / queue as f64
    }
}

/// Evaluates and applies rerouting at a window boundary. Does nothing
/// between boundaries.
pub fn apply_rerouting(
    sim: &mut SimState,
    monitor: &mut CongestionMonitor,
) -> Result<Vec<RerouteDecision>, SimError> {
    let readings = sim.read_detectors().to_vec();
    if readings.is_empty() {
        return Ok(Vec::new());
    }
    let congested = monitor.check_congestion(&readings);
    if congested.is_empty() {
        return Ok(Vec::new());
    }
    let net = sim.network().clone();
    let layout = sim.layout().clone();
    let free = EdgeWeights::free_flow(&net);
    let mut priced = free.clone();
    for r in &readings {
        if congested.contains(&r.arm) {
            let e = layout.approach(r.arm);
            priced.add_surcharge(e, r.density * net.edge(e).length * SURCHARGE_S_PER_VEHICLE);
        }
    }

    let mut decisions = Vec::new();
    let mut options: BTreeMap<(EdgeId, NodeId), Vec<(Route, f64)>> = BTreeMap::new();
    for arm in congested {
        let approach = layout.approach(arm);
        let t_wt = arm_wait_estimate(sim, arm);
        let candidates: Vec<VehicleId> = sim
            .vehicles()
            .iter()
            .filter(|v| {
                v.status == VehicleStatus::Active
                    && !v.rerouted
                    && v.route.edges()[v.route_index + 1..].contains(&approach)
            })
            .map(|v| v.id)
            .collect();
        for id in candidates {
            let v = sim.vehicle(id).expect("candidate exists");
            let current = v.current_edge();
            let edge = net.edge(current);
            let on_edge = (edge.length - v.position).max(0.0) / edge.speed_limit;
            let remainder = &v.route.edges()[v.route_index + 1..];
            let remainder_time: f64 = remainder
                .iter()
                .map(|&e| free.get(e).expect("free-flow weight for every edge"))
                .fold(0.0, |a, b| a + b);
            let u_twt = updated_total_wait(on_edge + remainder_time, t_wt);
            let destination = v.route.destination();
            let key = (current, destination);
            if let std::collections::btree_map::Entry::Vacant(e) = options.entry(key) {
                let alts = match enumerate_routes_excluding(
                    &net,
                    edge.to,
                    destination,
                    &priced,
                    DEFAULT_ROUTE_COUNT,
                    &[current],
                ) {
                    Ok(routes) => routes
                        .into_iter()
                        .filter_map(|r| {
                            let mut edges = vec![current];
                            edges.extend_from_slice(r.edges());
                            let full = Route::new(&net, edges).ok()?;
                            let t = route_travel_time(&net, &r, &priced).ok()?;
                            Some((full, t))
                        })
                        .collect(),
                    Err(_) => Vec::new(),
                };
                e.insert(alts);
            }
            let old_route = v.route.clone();
            let current_tail = &old_route.edges()[v.route_index..];
            let alternatives: Vec<(Route, f64)> = options[&key]
                .iter()
                .filter(|(r, _)| r.edges() != current_tail)
                .map(|(r, t)| (r.clone(), on_edge + t))
                .collect();
            let times: Vec<f64> = alternatives.iter().map(|(_, t)| *t).collect();
            let decision = reroute_decision(u_twt, &times);
            let new_route = match decision {
                Decision::Switch => {
                    let r = alternatives[0].0.clone();
                    sim.reroute_vehicle(id, r.clone())?;
                    r
                }
                Decision::Stay => old_route.clone(),
            };
            decisions.push(RerouteDecision {
                time: sim.clock(),
                vehicle: id,
                old_route,
                new_route,
                decision,
                u_twt,
                alternatives: times,
            });
        }
    }
    Ok(decisions)
}

#[derive(Serialize)]
struct LogRow<'a> {
    time: u32,
    vehicle: String,
    old_route: &'a str,
    new_route: &'a str,
    u_twt: f64,
    best_alt_time: Option<f64>,
    decision: &'a str,
}

/// Writes the reroute log CSV. Route names are edge names joined by `>`;
/// the alternative time is empty when none existed.
pub fn write_reroute_log<W: Write>(
    sim_net: &crate::roadnet::RoadNetwork,
    decisions: &[RerouteDecision],
    out: W,
) -> Result<(), SimError> {
    let err = |e: csv::Error| SimError::Output(format!("reroute log: {e}"));
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_writer(out);
    w.write_record(REROUTE_LOG_HEADER.split(',')).map_err(err)?;
    for d in decisions {
        let old = d.old_route.display(sim_net);
        let new = d.new_route.display(sim_net);
        w.serialize(LogRow {
            time: d.time,
            vehicle: d.vehicle.to_string(),
            old_route: &old,
            new_route: &new,
            u_twt: d.u_twt,
            best_alt_time: d.alternatives.first().copied(),
            decision: d.decision.as_str(),
        })
        .map_err(err)?;
    }
    w.flush()
        .map_err(|e| SimError::Output(format!("reroute log: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reading(arm: Arm, density: f64) -> DetectorReading {
        DetectorReading {
            window_start: 0,
            arm,
            count: 0,
            mean_speed: 0.0,
            density,
        }
    }

    #[test]
    fn threshold_is_strict() {
        let mut m = CongestionMonitor::new(0.02).unwrap();
        assert!(m
            .check_congestion(&Arm::ALL.map(|a| reading(a, 0.0)))
            .is_empty());
        assert!(m.check_congestion(&[reading(Arm::W, 0.02)]).is_empty());
        let flagged = m.check_congestion(&[reading(Arm::W, 0.04), reading(Arm::N, 0.01)]);
        assert_eq!(flagged.into_iter().collect::<Vec<_>>(), vec![Arm::W]);
        assert_eq!(m.history().len(), 7);
        assert!(CongestionMonitor::new(0.0).is_err());
    }

    #[test]
    fn wait_and_decision_examples() {
        assert_eq!(updated_total_wait(158.0, 42.0), 200.0);
        assert_eq!(updated_total_wait(31.5, 0.0), 31.5);
        assert_eq!(reroute_decision(200.0, &[180.0, 250.0]), Decision::Switch);
        assert_eq!(reroute_decision(150.0, &[180.0]), Decision::Stay);
        assert_eq!(reroute_decision(180.0, &[180.0]), Decision::Stay);
        assert_eq!(reroute_decision(1e9, &[]), Decision::Stay);
    }
}
