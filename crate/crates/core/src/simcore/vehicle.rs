use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::roadnet::Route;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VehicleId(pub usize);

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "veh{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VehicleType {
    Car,
    Bus,
    Trailer,
    Ambulance,
}

impl VehicleType {
    pub const ALL: [VehicleType; 4] = [
        VehicleType::Car,
        VehicleType::Bus,
        VehicleType::Trailer,
        VehicleType::Ambulance,
    ];

    pub fn max_speed(self) -> f64 {
        match self {
            VehicleType::Car | VehicleType::Ambulance => 13.9,
            VehicleType::Bus => 11.1,
            VehicleType::Trailer => 10.0,
        }
    }

    /// Body length in meters.
    pub fn length(self) -> f64 {
        match self {
            VehicleType::Car => 5.0,
            VehicleType::Ambulance => 6.5,
            VehicleType::Bus => 12.0,
            VehicleType::Trailer => 16.5,
        }
    }

    /// Share of the generated fleet.
    pub fn share(self) -> f64 {
        match self {
            VehicleType::Car => 0.90,
            VehicleType::Bus => 0.05,
            VehicleType::Trailer => 0.04,
            VehicleType::Ambulance => 0.01,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VehicleType::Car => "car",
            VehicleType::Bus => "bus",
            VehicleType::Trailer => "trailer",
            VehicleType::Ambulance => "ambulance",
        }
    }
}

impl FromStr for VehicleType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        VehicleType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown vehicle type `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VehicleStatus {
    /// Scheduled but not yet inserted (departure in the future, or the
    /// first lane had no room).
    Pending,
    Active,
    Arrived,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub id: VehicleId,
    pub vtype: VehicleType,
    pub route: Route,
    pub route_index: usize,
    pub lane: u8,
    /// Front bumper, meters from the start of the current edge.
    pub position: f64,
    pub speed: f64,
    pub depart_time: u32,
    /// Seconds spent halted on signalised approaches.
    pub accumulated_wait: u32,
    pub status: VehicleStatus,
    pub arrival_time: Option<u32>,
    pub rerouted: bool,
}

impl Vehicle {
    pub fn current_edge(&self) -> crate::roadnet::EdgeId {
        self.route.edges()[self.route_index]
    }

    pub fn next_edge(&self) -> Option<crate::roadnet::EdgeId> {
        self.route.edges().get(self.route_index + 1).copied()
    }

    pub fn on_last_edge(&self) -> bool {
        self.route_index + 1 == self.route.edges().len()
    }

    pub fn length(&self) -> f64 {
        self.vtype.length()
    }

    pub fn rear(&self) -> f64 {
        self.position - self.vtype.length()
    }
}
