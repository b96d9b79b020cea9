use std::collections::{BTreeMap, HashSet, VecDeque};
use std::sync::Arc;

use crate::roadnet::{shortest_route, EdgeId, EdgeWeights, NodeId, RoadNetwork, Route};

use super::sensors::DetectorBank;
use super::{
    cell_index, lane_group, Arm, DetectorReading, IntersectionLayout, Light, Phase,
    ScheduledVehicle, SignalController, SimError, SimParams, Vehicle, VehicleId, VehicleStatus,
    VehicleType, SENSOR_COUNT,
};

/// Highest speed from which a driver can still stop within `gap` meters
/// behind a leader moving at `leader_speed`, capped so that one step of
/// travel never exceeds the gap itself.
pub fn krauss_speed(gap: f64, leader_speed: f64, decel: f64, tau: f64) -> f64 {
    let gap = gap.max(0.0);
    let bt = decel * tau;
    let v = -bt + (bt * bt + leader_speed * leader_speed + 2.0 * decel * gap).sqrt();
    v.max(0.0).min(gap / tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct VehicleCounts {
    pub pending: usize,
    pub active: usize,
    pub arrived: usize,
}

impl VehicleCounts {
    pub fn total(&self) -> usize {
        self.pending + self.active + self.arrived
    }
}

/// The simulated world.
#[derive(Debug, Clone, PartialEq)]
pub struct SimState {
    net: Arc<RoadNetwork>,
    layout: IntersectionLayout,
    params: SimParams,
    clock: u32,
    vehicles: Vec<Vehicle>,
    /// Not yet inserted, in departure order.
    pending: VecDeque<VehicleId>,
    /// `lanes[edge][lane]`, front of the deque is the most downstream vehicle.
    lanes: Vec<Vec<VecDeque<VehicleId>>>,
    signal: SignalController,
    detectors: DetectorBank,
    last_readings: Vec<DetectorReading>,
    detector_log: Vec<DetectorReading>,
    total_delay: u64,
    counts: VehicleCounts,
}

impl SimState {
    /// Builds a world whose vehicles follow free-flow shortest routes for
    /// their scheduled O-D pairs.
    pub fn new(
        net: Arc<RoadNetwork>,
        schedule: &[ScheduledVehicle],
        params: SimParams,
    ) -> Result<Self, SimError> {
        let weights = EdgeWeights::free_flow(&net);
        let mut routes: BTreeMap<(NodeId, NodeId), Route> = BTreeMap::new();
        let mut planned = Vec::with_capacity(schedule.len());
        for s in schedule {
            let key = (s.origin, s.destination);
            if let std::collections::btree_map::Entry::Vacant(e) = routes.entry(key) {
                e.insert(shortest_route(&net, s.origin, s.destination, &weights)?);
            }
            planned.push((s.depart, s.vtype, routes[&key].clone()));
        }
        Self::with_routes(net, planned, params)
    }

    /// Builds a world from explicit `(depart, vtype, route)` triples.
    pub fn with_routes(
        net: Arc<RoadNetwork>,
        planned: Vec<(u32, VehicleType, Route)>,
        params: SimParams,
    ) -> Result<Self, SimError> {
        let layout = IntersectionLayout::from_network(&net)?;
        let span = Arm::ALL.map(|a| net.edge(layout.approach(a)).length);
        let lanes = net
            .edges()
            .iter()
            .map(|e| vec![VecDeque::new(); e.lanes as usize])
            .collect();
        let mut vehicles: Vec<Vehicle> = planned
            .into_iter()
            .enumerate()
            .map(|(i, (depart, vtype, route))| Vehicle {
                id: VehicleId(i),
                vtype,
                route,
                route_index: 0,
                lane: 0,
                position: 0.0,
                speed: 0.0,
                depart_time: depart,
                accumulated_wait: 0,
                status: VehicleStatus::Pending,
                arrival_time: None,
                rerouted: false,
            })
            .collect();
        let mut order: Vec<usize> = (0..vehicles.len()).collect();
        order.sort_by_key(|&i| (vehicles[i].depart_time, i));
        vehicles.shrink_to_fit();
        let counts = VehicleCounts {
            pending: vehicles.len(),
            ..Default::default()
        };
        Ok(SimState {
            signal: SignalController::new(params.initial_phase, params.yellow_duration),
            detectors: DetectorBank::new(span),
            net,
            layout,
            params,
            clock: 0,
            vehicles,
            pending: order.into_iter().map(VehicleId).collect(),
            lanes,
            last_readings: Vec::new(),
            detector_log: Vec::new(),
            total_delay: 0,
            counts,
        })
    }

    pub fn network(&self) -> &Arc<RoadNetwork> {
        &self.net
    }

    pub fn layout(&self) -> &IntersectionLayout {
        &self.layout
    }

    pub fn params(&self) -> &SimParams {
        &self.params
    }

    pub fn clock(&self) -> u32 {
        self.clock
    }

    pub fn signal(&self) -> &SignalController {
        &self.signal
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: VehicleId) -> Option<&Vehicle> {
        self.vehicles.get(id.0)
    }

    pub fn counts(&self) -> VehicleCounts {
        self.counts
    }

    /// Vehicle ids on `edge`/`lane`, most downstream first.
    pub fn lane_vehicles(&self, edge: EdgeId, lane: u8) -> impl Iterator<Item = VehicleId> + '_ {
        self.lanes[edge.0]
            .get(lane as usize)
            .into_iter()
            .flat_map(|q| q.iter().copied())
    }

    /// Every vehicle has arrived.
    pub fn is_complete(&self) -> bool {
        self.counts.arrived == self.vehicles.len()
    }

    /// Complete or out of time.
    pub fn finished(&self) -> bool {
        self.is_complete() || self.clock >= self.params.time_cap
    }

    /// Halted-vehicle seconds on the approaches since the start.
    pub fn total_delay(&self) -> u64 {
        self.total_delay
    }

    /// Requests a phase; see [`SignalController::set_phase`].
    pub fn set_phase(&mut self, phase: Phase) -> Result<bool, SimError> {
        self.signal.set_phase(phase)
    }

    /// Steps until `seconds` have elapsed or the world is complete. Returns
    /// the number of steps taken.
    pub fn advance(&mut self, seconds: u32) -> Result<u32, SimError> {
        let mut taken = 0;
        while taken < seconds && !self.is_complete() {
            self.step()?;
            taken += 1;
        }
        Ok(taken)
    }

    fn approach_ids(&self, arm: Arm) -> impl Iterator<Item = VehicleId> + '_ {
        self.lanes[self.layout.approach(arm).0]
            .iter()
            .flat_map(|q| q.iter().copied())
    }

    /// Halted vehicles on `arm`'s approach.
    pub fn queue_length(&self, arm: Arm) -> usize {
        self.approach_ids(arm)
            .filter(|id| self.vehicles[id.0].speed < self.params.halt_speed)
            .count()
    }

    /// Summed accumulated wait of the vehicles currently on `arm`'s approach.
    pub fn arm_cumulative_wait(&self, arm: Arm) -> u64 {
        self.approach_ids(arm)
            .map(|id| u64::from(self.vehicles[id.0].accumulated_wait))
            .sum()
    }

    /// Summed accumulated wait of all vehicles currently on approaches;
    /// vehicles that have left an approach no longer contribute.
    pub fn cumulative_wait(&self) -> u64 {
        Arm::ALL.iter().map(|&a| self.arm_cumulative_wait(a)).sum()
    }

    /// Occupancy of the 80 cells.
    pub fn read_sensors(&self) -> [bool; SENSOR_COUNT] {
        let mut cells = [false; SENSOR_COUNT];
        for arm in Arm::ALL {
            let edge = self.layout.approach(arm);
            let length = self.net.edge(edge).length;
            for id in self.approach_ids(arm) {
                let v = &self.vehicles[id.0];
                if let Some(i) = cell_index(arm, lane_group(v.lane), length - v.position) {
                    cells[i] = true;
                }
            }
        }
        cells
    }

    /// The four arm readings of the window that closed at the current
    /// clock; empty between window boundaries.
    pub fn read_detectors(&self) -> &[DetectorReading] {
        if self.clock > 0 && self.clock.is_multiple_of(self.params.detector_window) {
            &self.last_readings
        } else {
            &[]
        }
    }

    /// Every closed window so far.
    pub fn detector_log(&self) -> &[DetectorReading] {
        &self.detector_log
    }

    /// Puts a vehicle directly onto the network. Intended for scripted
    /// scenarios; the vehicle must fit between its lane neighbours.
    pub fn place_vehicle(
        &mut self,
        vtype: VehicleType,
        route: Route,
        lane: u8,
        position: f64,
        speed: f64,
    ) -> Result<VehicleId, SimError> {
        let edge_id = route.edges()[0];
        let edge = self.net.edge(edge_id);
        if lane >= edge.lanes {
            return Err(SimError::Placement(format!(
                "lane {lane} on `{}` with {} lanes",
                edge.name, edge.lanes
            )));
        }
        if !(0.0..=edge.length).contains(&position) {
            return Err(SimError::Placement(format!(
                "position {position} outside `{}`",
                edge.name
            )));
        }
        if !(0.0..=vtype.max_speed()).contains(&speed) {
            return Err(SimError::Placement(format!("speed {speed} out of range")));
        }
        let queue = &self.lanes[edge_id.0][lane as usize];
        let slot = queue
            .iter()
            .position(|id| self.vehicles[id.0].position < position)
            .unwrap_or(queue.len());
        let gap = self.params.min_gap;
        if slot > 0 {
            let ahead = &self.vehicles[queue[slot - 1].0];
            if ahead.rear() - position < gap {
                return Err(SimError::Placement(format!(
                    "too close behind {}",
                    ahead.id
                )));
            }
        }
        if let Some(behind) = queue.get(slot) {
            let behind = &self.vehicles[behind.0];
            if position - vtype.length() - behind.position < gap {
                return Err(SimError::Placement(format!(
                    "too close ahead of {}",
                    behind.id
                )));
            }
        }
        let id = VehicleId(self.vehicles.len());
        self.vehicles.push(Vehicle {
            id,
            vtype,
            route,
            route_index: 0,
            lane,
            position,
            speed,
            depart_time: self.clock,
            accumulated_wait: 0,
            status: VehicleStatus::Active,
            arrival_time: None,
            rerouted: false,
        });
        self.lanes[edge_id.0][lane as usize].insert(slot, id);
        self.counts.active += 1;
        Ok(id)
    }

    /// Replaces the rest of an active vehicle's trip. `route` must start
    /// with the vehicle's current edge and end at its destination.
    pub fn reroute_vehicle(&mut self, id: VehicleId, route: Route) -> Result<(), SimError> {
        let v = self
            .vehicles
            .get_mut(id.0)
            .ok_or(SimError::UnknownVehicle(id))?;
        if v.status != VehicleStatus::Active {
            return Err(SimError::InvalidReroute(format!("{id} is not active")));
        }
        if route.edges()[0] != v.current_edge() {
            return Err(SimError::InvalidReroute(format!(
                "{id}: new route does not start on its current edge"
            )));
        }
        if route.destination() != v.route.destination() {
            return Err(SimError::InvalidReroute(format!(
                "{id}: new route changes the destination"
            )));
        }
        v.route = route;
        v.route_index = 0;
        v.rerouted = true;
        Ok(())
    }

    /// Advances one second.
    pub fn step(&mut self) -> Result<(), SimError> {
        if self.clock >= self.params.time_cap {
            return Err(SimError::TimeCap(self.params.time_cap));
        }
        self.insert_departures();
        let speeds = self.plan_speeds();
        self.move_vehicles(&speeds);
        self.clock += 1;
        self.signal.tick();
        self.account();
        Ok(())
    }

    /// Free room behind the last vehicle of a lane, measured from the start
    /// of the edge. A vehicle sitting past its edge end is treated as if held
    /// at the end.
    fn lane_room(&self, edge: EdgeId, lane: u8) -> f64 {
        let length = self.net.edge(edge).length;
        match self.lanes[edge.0][lane as usize].back() {
            Some(id) => {
                let v = &self.vehicles[id.0];
                v.position.min(length) - v.length() - self.params.min_gap
            }
            None => f64::INFINITY,
        }
    }

    /// Lane taken when `vehicle` enters `edge` (the `route_index`-th edge of
    /// its route). On the approaches the lane follows the turning movement;
    /// elsewhere it is the lane with most room, lowest index on ties.
    fn entry_lane(&self, vehicle: &Vehicle, route_index: usize) -> u8 {
        let edges = vehicle.route.edges();
        let edge = edges[route_index];
        let lanes = self.net.edge(edge).lanes;
        let allowed = if self.layout.arm_of_approach(edge).is_some() {
            let movement = self
                .layout
                .movement(edge, edges.get(route_index + 1).copied());
            movement.lanes(lanes)
        } else {
            0..=lanes - 1
        };
        let mut best = *allowed.start();
        let mut best_room = f64::NEG_INFINITY;
        for lane in allowed {
            let room = self.lane_room(edge, lane);
            if room > best_room {
                best = lane;
                best_room = room;
            }
        }
        best
    }

    fn insert_departures(&mut self) {
        let mut blocked: HashSet<EdgeId> = HashSet::new();
        let mut retained = VecDeque::new();
        while let Some(&id) = self.pending.front() {
            if self.vehicles[id.0].depart_time > self.clock {
                break;
            }
            self.pending.pop_front();
            let edge = self.vehicles[id.0].route.edges()[0];
            if blocked.contains(&edge) || !self.try_insert(id) {
                blocked.insert(edge);
                retained.push_back(id);
            }
        }
        while let Some(id) = retained.pop_back() {
            self.pending.push_front(id);
        }
    }

    fn try_insert(&mut self, id: VehicleId) -> bool {
        let lane = self.entry_lane(&self.vehicles[id.0], 0);
        let edge = self.vehicles[id.0].route.edges()[0];
        let room = self.lane_room(edge, lane);
        if room < 0.0 {
            return false;
        }
        let vmax = self.vehicles[id.0].vtype.max_speed();
        let speed = match self.lanes[edge.0][lane as usize].back() {
            Some(tail) => krauss_speed(
                room,
                self.vehicles[tail.0].speed,
                self.params.decel,
                self.params.tau,
            )
            .min(vmax),
            None => vmax,
        };
        let v = &mut self.vehicles[id.0];
        v.lane = lane;
        v.position = 0.0;
        v.speed = speed;
        v.status = VehicleStatus::Active;
        self.lanes[edge.0][lane as usize].push_back(id);
        self.counts.pending -= 1;
        self.counts.active += 1;
        if let Some(arm) = self.layout.arm_of_approach(edge) {
            self.detectors.record_entry(arm, lane);
        }
        true
    }

    /// New speed of every active vehicle, computed from the current state.
    fn plan_speeds(&self) -> Vec<(VehicleId, f64)> {
        let p = &self.params;
        let mut out = Vec::with_capacity(self.counts.active);
        for (e, lanes) in self.lanes.iter().enumerate() {
            let edge = self.net.edge(EdgeId(e));
            for queue in lanes {
                let mut leader: Option<&Vehicle> = None;
                for id in queue {
                    let v = &self.vehicles[id.0];
                    let mut limit = (v.speed + p.accel).min(v.vtype.max_speed());
                    match leader {
                        Some(l) => {
                            let gap = l.rear() - v.position - p.min_gap;
                            limit = limit.min(krauss_speed(gap, l.speed, p.decel, p.tau));
                        }
                        None => limit = limit.min(self.front_limit(v, edge.length)),
                    }
                    out.push((*id, limit.max(0.0)));
                    leader = Some(v);
                }
            }
        }
        out
    }

    /// Speed bound for the most downstream vehicle of a lane: the stop line
    /// if its light holds it, else room at the tail of the lane it will take
    /// next.
    fn front_limit(&self, v: &Vehicle, length: f64) -> f64 {
        let p = &self.params;
        let to_end = length - v.position;
        if let Some(arm) = self.layout.arm_of_approach(v.current_edge()) {
            let stop_gap = to_end - p.stop_margin;
            let stop = krauss_speed(stop_gap, 0.0, p.decel, p.tau);
            match self.signal.light(arm, lane_group(v.lane)) {
                Light::Red => return stop,
                Light::Yellow if stop >= v.speed - p.decel => return stop,
                _ => {}
            }
        }
        let Some(next) = v.next_edge() else {
            return f64::INFINITY;
        };
        let lane = self.entry_lane(v, v.route_index + 1);
        match self.lanes[next.0][lane as usize].back() {
            Some(tail) => {
                let t = &self.vehicles[tail.0];
                let gap =
                    to_end + t.position.min(self.net.edge(next).length) - t.length() - p.min_gap;
                krauss_speed(gap, t.speed, p.decel, p.tau)
            }
            None => f64::INFINITY,
        }
    }

    fn move_vehicles(&mut self, speeds: &[(VehicleId, f64)]) {
        for &(id, speed) in speeds {
            let v = &mut self.vehicles[id.0];
            v.speed = speed;
            v.position += speed;
        }
        for e in 0..self.lanes.len() {
            let edge = EdgeId(e);
            let length = self.net.edge(edge).length;
            for lane in 0..self.lanes[e].len() {
                while let Some(&id) = self.lanes[e][lane].front() {
                    let v = &self.vehicles[id.0];
                    if v.on_last_edge() {
                        if v.position < length {
                            break;
                        }
                        self.lanes[e][lane].pop_front();
                        let v = &mut self.vehicles[id.0];
                        v.status = VehicleStatus::Arrived;
                        v.arrival_time = Some(self.clock + 1);
                        v.position = length;
                        self.counts.active -= 1;
                        self.counts.arrived += 1;
                        continue;
                    }
                    if v.position <= length {
                        break;
                    }
                    self.cross(id, edge, lane, length);
                    if self.lanes[e][lane].front() == Some(&id) {
                        break;
                    }
                }
            }
        }
    }

    /// Moves a vehicle whose front passed the end of `edge` onto its next
    /// edge, or holds it at the end when the next lane has no room.
    fn cross(&mut self, id: VehicleId, edge: EdgeId, lane: usize, length: f64) {
        let v = &self.vehicles[id.0];
        let next_index = v.route_index + 1;
        let next = v.route.edges()[next_index];
        let new_lane = self.entry_lane(v, next_index);
        let room = self.lane_room(next, new_lane);
        let overshoot = v.position - length;
        let start = v.position - v.speed;
        if room < 0.0 {
            let v = &mut self.vehicles[id.0];
            v.position = length;
            v.speed = length - start;
            return;
        }
        let entered_at = overshoot.min(room);
        self.lanes[edge.0][lane].pop_front();
        self.lanes[next.0][new_lane as usize].push_back(id);
        let v = &mut self.vehicles[id.0];
        v.route_index = next_index;
        v.lane = new_lane;
        v.position = entered_at;
        v.speed = length - start + entered_at;
        if let Some(arm) = self.layout.arm_of_approach(next) {
            self.detectors.record_entry(arm, new_lane);
        }
    }

    fn account(&mut self) {
        for arm in Arm::ALL {
            let edge = self.layout.approach(arm);
            for lane in 0..self.lanes[edge.0].len() {
                for &id in &self.lanes[edge.0][lane] {
                    let v = &mut self.vehicles[id.0];
                    if v.speed < self.params.halt_speed {
                        v.accumulated_wait += 1;
                        self.total_delay += 1;
                    }
                    self.detectors.sample(arm, v.lane, v.speed);
                }
            }
        }
        self.detectors.end_step();
        let window = self.params.detector_window;
        if self.clock.is_multiple_of(window) {
            self.last_readings = self.detectors.finish_window(self.clock - window);
            self.detector_log.extend(self.last_readings.iter().cloned());
        }
    }
}
