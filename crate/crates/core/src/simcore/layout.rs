use std::collections::HashMap;
use std::fmt;

use crate::roadnet::{EdgeId, NodeId, RoadNetwork};

use super::SimError;

/// Intersection arm, indexed clockwise from north.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Arm {
    N,
    E,
    S,
    W,
}

impl Arm {
    pub const ALL: [Arm; 4] = [Arm::N, Arm::E, Arm::S, Arm::W];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Arm {
        Arm::ALL[i % 4]
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Arm::N => "N",
            Arm::E => "E",
            Arm::S => "S",
            Arm::W => "W",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        Arm::ALL.into_iter().find(|a| a.as_str() == s)
    }

    fn from_offset(dx: f64, dy: f64) -> Arm {
        if dy.abs() >= dx.abs() {
            if dy > 0.0 {
                Arm::N
            } else {
                Arm::S
            }
        } else if dx > 0.0 {
            Arm::E
        } else {
            Arm::W
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Signal group a lane belongs to: the left-turn lane, or the shared
/// straight/right lanes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LaneGroup {
    Left,
    Through,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Movement {
    Left,
    Straight,
    Right,
    UTurn,
}

impl Movement {
    pub fn between(from: Arm, to: Arm) -> Movement {
        match (to.index() + 4 - from.index()) % 4 {
            0 => Movement::UTurn,
            1 => Movement::Left,
            2 => Movement::Straight,
            _ => Movement::Right,
        }
    }

    pub fn group(self) -> LaneGroup {
        match self {
            Movement::Left | Movement::UTurn => LaneGroup::Left,
            Movement::Straight | Movement::Right => LaneGroup::Through,
        }
    }

    /// Lanes a vehicle making this movement may occupy on an approach
    /// with `lanes` lanes (lane 0 is the leftmost).
    pub fn lanes(self, lanes: u8) -> std::ops::RangeInclusive<u8> {
        let top = lanes.saturating_sub(1);
        match self {
            Movement::Left | Movement::UTurn => 0..=0,
            Movement::Straight => 1.min(top)..=2.min(top),
            Movement::Right => 3.min(top)..=3.min(top),
        }
    }
}

pub fn lane_group(lane: u8) -> LaneGroup {
    if lane == 0 {
        LaneGroup::Left
    } else {
        LaneGroup::Through
    }
}

/// Which edges feed and leave the single signalised junction, by arm.
#[derive(Debug, Clone, PartialEq)]
pub struct IntersectionLayout {
    junction: NodeId,
    approaches: [EdgeId; 4],
    approach_arm: HashMap<EdgeId, Arm>,
    exit_arm: HashMap<EdgeId, Arm>,
}

impl IntersectionLayout {
    /// Derives arms from node coordinates: every signalised edge must end
    /// at the same junction, and the four approaches must come from four
    /// distinct compass directions.
    pub fn from_network(net: &RoadNetwork) -> Result<Self, SimError> {
        let signalized: Vec<EdgeId> = net
            .edges()
            .iter()
            .filter(|e| e.signalized)
            .map(|e| e.id)
            .collect();
        if signalized.len() != 4 {
            return Err(SimError::Layout(format!(
                "expected 4 signalised approaches, found {}",
                signalized.len()
            )));
        }
        let junction = net.edge(signalized[0]).to;
        let position = |n: NodeId| {
            net.node(n).position.ok_or_else(|| {
                SimError::Layout(format!("node `{}` has no coordinates", net.node(n).name))
            })
        };
        let (jx, jy) = position(junction)?;
        let mut approaches: [Option<EdgeId>; 4] = [None; 4];
        let mut approach_arm = HashMap::new();
        for &e in &signalized {
            let edge = net.edge(e);
            if edge.to != junction {
                return Err(SimError::Layout(
                    "signalised edges end at different junctions".into(),
                ));
            }
            let (x, y) = position(edge.from)?;
            let arm = Arm::from_offset(x - jx, y - jy);
            if approaches[arm.index()].replace(e).is_some() {
                return Err(SimError::Layout(format!("two approaches from arm {arm}")));
            }
            approach_arm.insert(e, arm);
        }
        let mut exit_arm = HashMap::new();
        for &e in net.outgoing(junction) {
            let (x, y) = position(net.edge(e).to)?;
            exit_arm.insert(e, Arm::from_offset(x - jx, y - jy));
        }
        Ok(IntersectionLayout {
            junction,
            approaches: approaches.map(|a| a.expect("all four arms present")),
            approach_arm,
            exit_arm,
        })
    }

    pub fn junction(&self) -> NodeId {
        self.junction
    }

    pub fn approach(&self, arm: Arm) -> EdgeId {
        self.approaches[arm.index()]
    }

    pub fn approaches(&self) -> [EdgeId; 4] {
        self.approaches
    }

    pub fn arm_of_approach(&self, edge: EdgeId) -> Option<Arm> {
        self.approach_arm.get(&edge).copied()
    }

    pub fn arm_of_exit(&self, edge: EdgeId) -> Option<Arm> {
        self.exit_arm.get(&edge).copied()
    }

    /// Movement made when leaving `approach` onto `exit`; straight when the
    /// route ends at the junction.
    pub fn movement(&self, approach: EdgeId, exit: Option<EdgeId>) -> Movement {
        match (
            self.arm_of_approach(approach),
            exit.and_then(|e| self.arm_of_exit(e)),
        ) {
            (Some(a), Some(b)) => Movement::between(a, b),
            _ => Movement::Straight,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::build_default_network;

    #[test]
    fn movements_are_clockwise_consistent() {
        assert_eq!(Movement::between(Arm::W, Arm::E), Movement::Straight);
        assert_eq!(Movement::between(Arm::W, Arm::N), Movement::Left);
        assert_eq!(Movement::between(Arm::W, Arm::S), Movement::Right);
        assert_eq!(Movement::between(Arm::N, Arm::E), Movement::Left);
        assert_eq!(Movement::between(Arm::N, Arm::N), Movement::UTurn);
    }

    #[test]
    fn movement_lanes_on_four_lane_approach() {
        assert_eq!(Movement::Left.lanes(4), 0..=0);
        assert_eq!(Movement::Straight.lanes(4), 1..=2);
        assert_eq!(Movement::Right.lanes(4), 3..=3);
        assert_eq!(Movement::Straight.lanes(1), 0..=0);
    }

    #[test]
    fn default_layout() {
        let net = build_default_network();
        let layout = IntersectionLayout::from_network(&net).unwrap();
        for arm in Arm::ALL {
            assert_eq!(net.edge(layout.approach(arm)).name, format!("{arm}_app"));
        }
        let w = net.edge_id("W_app").unwrap();
        let e_exit = net.edge_id("E_exit").unwrap();
        let n_exit = net.edge_id("N_exit").unwrap();
        assert_eq!(layout.movement(w, Some(e_exit)), Movement::Straight);
        assert_eq!(layout.movement(w, Some(n_exit)), Movement::Left);
    }

    #[test]
    fn layout_requires_coordinates() {
        let text = crate::roadnet::build_default_network()
            .to_spec_string()
            .lines()
            .map(|l| {
                if l.starts_with("node") {
                    l.split_whitespace().take(2).collect::<Vec<_>>().join(" ")
                } else {
                    l.to_string()
                }
            })
            .collect::<Vec<_>>()
            .join("\n");
        let net = RoadNetwork::parse(&text).unwrap();
        assert!(matches!(
            IntersectionLayout::from_network(&net),
            Err(SimError::Layout(_))
        ));
    }
}
