//! Discrete-time microscopic simulation of the signalised junction.
//!
//! One call to [`SimState::step`] advances the world by one second:
//! pending departures are inserted, every active vehicle picks a new speed
//! from the previous state (car following, stop lines, downstream room),
//! vehicles move and change edges, then the signal clock, wait counters,
//! occupancy cells and detector windows are updated.

mod engine;
mod layout;
mod schedule;
mod sensors;
mod signal;
mod vehicle;

use thiserror::Error;

use crate::roadnet::NetworkError;

pub use engine::{krauss_speed, SimState, VehicleCounts};
pub use layout::{lane_group, Arm, IntersectionLayout, LaneGroup, Movement};
pub use schedule::{
    classify_od_pairs, read_schedule, spawn_schedule, write_schedule, OdClasses, ScheduledVehicle,
    SIGNALISED_SHARE,
};
pub use sensors::{
    cell_index, sensor_cells, DetectorReading, SensorCell, CELLS_PER_GROUP, CELL_BOUNDS,
    SENSOR_COUNT,
};
pub use signal::{Light, Phase, SignalController, SignalState};
pub use vehicle::{Vehicle, VehicleId, VehicleStatus, VehicleType};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("intersection layout: {0}")]
    Layout(String),
    #[error("phase change requested during yellow clearance")]
    YellowInterlock,
    #[error("phase index {0} out of range 0..4")]
    InvalidPhase(usize),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("cannot place vehicle: {0}")]
    Placement(String),
    #[error("simulation reached its {0} s time cap")]
    TimeCap(u32),
    #[error("schedule: {0}")]
    Schedule(String),
    #[error("unknown vehicle {0}")]
    UnknownVehicle(VehicleId),
    #[error("invalid reroute: {0}")]
    InvalidReroute(String),
    #[error("writing {0}")]
    Output(String),
}

/// Physical and timing constants of the simulator.
#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// m/s².
    pub accel: f64,
    /// Maximum comfortable deceleration, m/s².
    pub decel: f64,
    /// Driver reaction time, s.
    pub tau: f64,
    /// Standstill gap to the leader's rear, m.
    pub min_gap: f64,
    /// Distance short of the stop line at which vehicles halt for red.
    pub stop_margin: f64,
    /// Below this speed a vehicle counts as halted.
    pub halt_speed: f64,
    pub yellow_duration: u32,
    pub detector_window: u32,
    /// Hard upper bound on simulated seconds.
    pub time_cap: u32,
    pub initial_phase: Phase,
}

impl Default for SimParams {
    fn default() -> Self {
        SimParams {
            accel: 2.6,
            decel: 4.5,
            tau: 1.0,
            min_gap: 2.5,
            stop_margin: 1.0,
            halt_speed: 0.1,
            yellow_duration: 2,
            detector_window: 30,
            time_cap: 9000,
            initial_phase: Phase::ALL[0],
        }
    }
}
