//! Occupancy cells and lane-area detectors on the signalised approaches.

use serde::{Deserialize, Serialize};

use super::{Arm, LaneGroup};

/// Total occupancy cells: 4 arms x 2 lane groups x 10 cells.
pub const SENSOR_COUNT: usize = 80;
pub const CELLS_PER_GROUP: usize = 10;

/// Cell boundaries in meters upstream of the stop line. Cell `k` covers
/// `[CELL_BOUNDS[k], CELL_BOUNDS[k + 1])`; the last cell also includes its
/// upper bound.
pub const CELL_BOUNDS: [f64; CELLS_PER_GROUP + 1] = [
    0.0, 7.0, 14.0, 21.0, 28.0, 40.0, 60.0, 100.0, 160.0, 400.0, 1000.0,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorCell {
    pub index: usize,
    pub arm: Arm,
    pub group: LaneGroup,
    /// Meters upstream of the stop line.
    pub from_m: f64,
    pub to_m: f64,
}

/// Cell index for a vehicle front `distance` meters upstream of the stop
/// line of `arm`, in lane group `group`.
pub fn cell_index(arm: Arm, group: LaneGroup, distance: f64) -> Option<usize> {
    if !(0.0..=CELL_BOUNDS[CELLS_PER_GROUP]).contains(&distance) {
        return None;
    }
    let k = CELL_BOUNDS[1..]
        .iter()
        .position(|&hi| distance < hi)
        .unwrap_or(CELLS_PER_GROUP - 1);
    let g = match group {
        LaneGroup::Left => 0,
        LaneGroup::Through => 1,
    };
    Some(arm.index() * 2 * CELLS_PER_GROUP + g * CELLS_PER_GROUP + k)
}

/// The full cell map, ordered by index.
pub fn sensor_cells() -> Vec<SensorCell> {
    let mut cells = Vec::with_capacity(SENSOR_COUNT);
    for arm in Arm::ALL {
        for group in [LaneGroup::Left, LaneGroup::Through] {
            for k in 0..CELLS_PER_GROUP {
                cells.push(SensorCell {
                    index: cells.len(),
                    arm,
                    group,
                    from_m: CELL_BOUNDS[k],
                    to_m: CELL_BOUNDS[k + 1],
                });
            }
        }
    }
    cells
}

/// One arm's aggregate over a completed detector window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorReading {
    pub window_start: u32,
    #[serde(with = "arm_serde")]
    pub arm: Arm,
    /// Vehicles that entered the detector span during the window.
    pub count: u32,
    /// Time-mean speed of vehicles inside the span, m/s.
    pub mean_speed: f64,
    /// Time-mean vehicles inside the span per meter of approach.
    pub density: f64,
}

mod arm_serde {
    use super::Arm;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(arm: &Arm, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(arm.as_str())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arm, D::Error> {
        let s = String::deserialize(d)?;
        Arm::parse(&s).ok_or_else(|| serde::de::Error::custom(format!("unknown arm `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct LaneAccumulator {
    entered: u32,
    occupancy: u64,
    speed_sum: f64,
}

/// Sixteen lane-area detectors (four lanes per arm).
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct DetectorBank {
    lanes: [[LaneAccumulator; 4]; 4],
    steps: u32,
    span: [f64; 4],
}

impl DetectorBank {
    pub fn new(span: [f64; 4]) -> Self {
        DetectorBank {
            lanes: Default::default(),
            steps: 0,
            span,
        }
    }

    pub fn record_entry(&mut self, arm: Arm, lane: u8) {
        self.lanes[arm.index()][lane.min(3) as usize].entered += 1;
    }

    pub fn sample(&mut self, arm: Arm, lane: u8, speed: f64) {
        let acc = &mut self.lanes[arm.index()][lane.min(3) as usize];
        acc.occupancy += 1;
        acc.speed_sum += speed;
    }

    pub fn end_step(&mut self) {
        self.steps += 1;
    }

    pub fn finish_window(&mut self, window_start: u32) -> Vec<DetectorReading> {
        let steps = self.steps.max(1) as f64;
        let readings = Arm::ALL
            .iter()
            .map(|&arm| {
                let lanes = &self.lanes[arm.index()];
                let count = lanes.iter().map(|l| l.entered).sum();
                let occupancy: u64 = lanes.iter().map(|l| l.occupancy).sum();
                let speed_sum: f64 = lanes.iter().map(|l| l.speed_sum).sum();
                DetectorReading {
                    window_start,
                    arm,
                    count,
                    mean_speed: if occupancy > 0 {
                        speed_sum / occupancy as f64
                    } else {
                        0.0
                    },
                    density: occupancy as f64 / steps / self.span[arm.index()],
                }
            })
            .collect();
        self.lanes = Default::default();
        self.steps = 0;
        readings
    }
}
