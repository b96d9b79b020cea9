use std::fmt;

use super::{Arm, LaneGroup, SimError};

/// One of the four signal phases.
///
/// | phase | green movements            |
/// |-------|----------------------------|
/// | 0     | N + S straight and right   |
/// | 1     | N + S left                 |
/// | 2     | E + W straight and right   |
/// | 3     | E + W left                 |
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phase(u8);

impl Phase {
    pub const COUNT: usize = 4;
    pub const ALL: [Phase; 4] = [Phase(0), Phase(1), Phase(2), Phase(3)];

    pub fn new(index: usize) -> Result<Self, SimError> {
        if index < Self::COUNT {
            Ok(Phase(index as u8))
        } else {
            Err(SimError::InvalidPhase(index))
        }
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    /// Whether this phase serves `group` on `arm`.
    pub fn serves(self, arm: Arm, group: LaneGroup) -> bool {
        let north_south = matches!(arm, Arm::N | Arm::S);
        match self.0 {
            0 => north_south && group == LaneGroup::Through,
            1 => north_south && group == LaneGroup::Left,
            2 => !north_south && group == LaneGroup::Through,
            _ => !north_south && group == LaneGroup::Left,
        }
    }
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "P{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SignalState {
    Green,
    Yellow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Light {
    Green,
    Yellow,
    Red,
}

/// Four-phase controller with a fixed yellow clearance between different
/// greens.
///
/// The state read during a simulation step is the state *before* that
/// step's [`SignalController::tick`], so `set_phase` to a new phase yields
/// exactly `yellow_duration` yellow steps followed by the new green.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalController {
    phase: Phase,
    state: SignalState,
    time_in_state: u32,
    pending: Option<Phase>,
    yellow_duration: u32,
}

impl SignalController {
    pub fn new(initial: Phase, yellow_duration: u32) -> Self {
        SignalController {
            phase: initial,
            state: SignalState::Green,
            time_in_state: 0,
            pending: None,
            yellow_duration: yellow_duration.max(1),
        }
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn state(&self) -> SignalState {
        self.state
    }

    pub fn time_in_state(&self) -> u32 {
        self.time_in_state
    }

    pub fn pending(&self) -> Option<Phase> {
        self.pending
    }

    pub fn in_yellow(&self) -> bool {
        self.state == SignalState::Yellow
    }

    /// Requests `phase`. Returns whether a yellow interval was started.
    /// Re-selecting the current green just keeps it running.
    pub fn set_phase(&mut self, phase: Phase) -> Result<bool, SimError> {
        if self.in_yellow() {
            return Err(SimError::YellowInterlock);
        }
        if phase == self.phase {
            return Ok(false);
        }
        self.state = SignalState::Yellow;
        self.time_in_state = 0;
        self.pending = Some(phase);
        Ok(true)
    }

    /// Advances the controller clock by one second.
    pub fn tick(&mut self) {
        self.time_in_state += 1;
        if self.state == SignalState::Yellow && self.time_in_state >= self.yellow_duration {
            self.phase = self
                .pending
                .take()
                .expect("yellow always has a pending phase");
            self.state = SignalState::Green;
            self.time_in_state = 0;
        }
    }

    pub fn light(&self, arm: Arm, group: LaneGroup) -> Light {
        if !self.phase.serves(arm, group) {
            Light::Red
        } else if self.in_yellow() {
            Light::Yellow
        } else {
            Light::Green
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_partition_movements() {
        for arm in Arm::ALL {
            for group in [LaneGroup::Left, LaneGroup::Through] {
                let serving = Phase::ALL.iter().filter(|p| p.serves(arm, group)).count();
                assert_eq!(serving, 1, "{arm:?} {group:?}");
            }
        }
        assert!(Phase::new(4).is_err());
    }

    #[test]
    fn reselect_keeps_green() {
        let mut sig = SignalController::new(Phase(0), 2);
        sig.tick();
        assert!(!sig.set_phase(Phase(0)).unwrap());
        assert_eq!(sig.state(), SignalState::Green);
        assert_eq!(sig.time_in_state(), 1);
    }

    #[test]
    fn change_inserts_exactly_two_yellow_steps() {
        let mut sig = SignalController::new(Phase(0), 2);
        assert!(sig.set_phase(Phase(2)).unwrap());
        let mut observed = Vec::new();
        for _ in 0..5 {
            observed.push((sig.state(), sig.phase()));
            sig.tick();
        }
        assert_eq!(
            observed,
            vec![
                (SignalState::Yellow, Phase(0)),
                (SignalState::Yellow, Phase(0)),
                (SignalState::Green, Phase(2)),
                (SignalState::Green, Phase(2)),
                (SignalState::Green, Phase(2)),
            ]
        );
    }

    #[test]
    fn rejects_change_during_yellow() {
        let mut sig = SignalController::new(Phase(0), 2);
        sig.set_phase(Phase(1)).unwrap();
        assert!(matches!(
            sig.set_phase(Phase(3)),
            Err(SimError::YellowInterlock)
        ));
        assert!(matches!(
            sig.set_phase(Phase(1)),
            Err(SimError::YellowInterlock)
        ));
    }

    #[test]
    fn yellow_only_for_current_movements() {
        let mut sig = SignalController::new(Phase(0), 2);
        sig.set_phase(Phase(2)).unwrap();
        assert_eq!(sig.light(Arm::N, LaneGroup::Through), Light::Yellow);
        assert_eq!(sig.light(Arm::E, LaneGroup::Through), Light::Red);
        sig.tick();
        sig.tick();
        assert_eq!(sig.light(Arm::N, LaneGroup::Through), Light::Red);
        assert_eq!(sig.light(Arm::E, LaneGroup::Through), Light::Green);
        assert_eq!(sig.light(Arm::W, LaneGroup::Through), Light::Green);
        assert_eq!(sig.light(Arm::W, LaneGroup::Left), Light::Red);
    }
}
