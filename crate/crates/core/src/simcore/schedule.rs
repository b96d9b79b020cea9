//! Vehicle demand generation.

use std::io::{Read, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::roadnet::{shortest_route, EdgeWeights, NodeId, RoadNetwork};

use super::{SimError, VehicleType};

/// Share of vehicles whose origin-destination pair routes through the
/// signal.
pub const SIGNALISED_SHARE: f64 = 0.6;

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduledVehicle {
    pub depart: u32,
    pub vtype: VehicleType,
    pub origin: NodeId,
    pub destination: NodeId,
}

/// Boundary O-D pairs split by whether their free-flow shortest route
/// crosses a signalised edge.
#[derive(Debug, Clone, PartialEq)]
pub struct OdClasses {
    pub signalised: Vec<(NodeId, NodeId)>,
    pub bypass: Vec<(NodeId, NodeId)>,
}

pub fn classify_od_pairs(net: &RoadNetwork) -> Result<OdClasses, SimError> {
    let w = EdgeWeights::free_flow(net);
    let boundary = net.boundary_nodes();
    let mut classes = OdClasses {
        signalised: Vec::new(),
        bypass: Vec::new(),
    };
    for &o in &boundary {
        for &d in &boundary {
            if o == d {
                continue;
            }
            let route = shortest_route(net, o, d, &w)?;
            if route.crosses_signal(net) {
                classes.signalised.push((o, d));
            } else {
                classes.bypass.push((o, d));
            }
        }
    }
    Ok(classes)
}

/// `count` departures over `[0, horizon)`.
///
/// Departure times are Weibull(shape 2) draws min-max rescaled onto the
/// horizon and sorted. Exactly `round(0.6 * count)` vehicles get an O-D
/// pair routed through the signal; the rest get pairs whose shortest route
/// uses the bypasses. Vehicle types follow the fleet shares exactly (up to
/// rounding, remainder to cars).
pub fn spawn_schedule(
    net: &RoadNetwork,
    count: usize,
    seed: u64,
    horizon: u32,
) -> Result<Vec<ScheduledVehicle>, SimError> {
    if horizon == 0 {
        return Err(SimError::Schedule("horizon must be at least 1 step".into()));
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    let classes = classify_od_pairs(net)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let weibull = Weibull::new(1.0, 2.0).expect("valid Weibull parameters");
    let mut draws: Vec<f64> = (0..count).map(|_| weibull.sample(&mut rng)).collect();
    draws.sort_by(f64::total_cmp);
    let (lo, hi) = (draws[0], draws[count - 1]);
    let top = f64::from(horizon - 1);
    let departs: Vec<u32> = draws
        .iter()
        .map(|&x| {
            if hi > lo {
                ((x - lo) / (hi - lo) * top).round() as u32
            } else {
                0
            }
        })
        .collect();

    let n_signalised = if classes.bypass.is_empty() {
        count
    } else if classes.signalised.is_empty() {
        0
    } else {
        (SIGNALISED_SHARE * count as f64).round() as usize
    };
    if n_signalised > 0 && classes.signalised.is_empty() {
        return Err(SimError::Schedule("network has no O-D pairs".into()));
    }
    let mut through_signal: Vec<bool> = (0..count).map(|i| i < n_signalised).collect();
    through_signal.shuffle(&mut rng);

    let mut types = Vec::with_capacity(count);
    for t in &VehicleType::ALL[1..] {
        let n = (t.share() * count as f64).floor() as usize;
        types.extend(std::iter::repeat_n(*t, n));
    }
    types.resize(count.max(types.len()), VehicleType::Car);
    types.truncate(count);
    types.shuffle(&mut rng);

    let schedule = departs
        .into_iter()
        .zip(through_signal)
        .zip(types)
        .map(|((depart, signalised), vtype)| {
            let pool = if signalised {
                &classes.signalised
            } else {
                &classes.bypass
            };
            let (origin, destination) = pool[rng.random_range(0..pool.len())];
            ScheduledVehicle {
                depart,
                vtype,
                origin,
                destination,
            }
        })
        .collect();
    Ok(schedule)
}

#[derive(Debug, Serialize, Deserialize)]
struct ScheduleRow {
    depart: u32,
    vtype: VehicleType,
    origin: String,
    destination: String,
}

/// Writes `depart,vtype,origin,destination` CSV.
pub fn write_schedule<W: Write>(
    net: &RoadNetwork,
    schedule: &[ScheduledVehicle],
    out: W,
) -> Result<(), SimError> {
    let mut w = csv::Writer::from_writer(out);
    for v in schedule {
        w.serialize(ScheduleRow {
            depart: v.depart,
            vtype: v.vtype,
            origin: net.node(v.origin).name.clone(),
            destination: net.node(v.destination).name.clone(),
        })
        .map_err(|e| SimError::Schedule(e.to_string()))?;
    }
    w.flush().map_err(|e| SimError::Schedule(e.to_string()))
}

/// Reads a schedule CSV; rows are re-sorted by departure time.
pub fn read_schedule<R: Read>(
    net: &RoadNetwork,
    input: R,
) -> Result<Vec<ScheduledVehicle>, SimError> {
    let mut r = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for (i, row) in r.deserialize::<ScheduleRow>().enumerate() {
        let row = row.map_err(|e| SimError::Schedule(format!("row {}: {e}", i + 1)))?;
        let node = |name: &str| {
            net.node_id(name)
                .ok_or_else(|| SimError::Schedule(format!("row {}: unknown node `{name}`", i + 1)))
        };
        out.push(ScheduledVehicle {
            depart: row.depart,
            vtype: row.vtype,
            origin: node(&row.origin)?,
            destination: node(&row.destination)?,
        });
    }
    out.sort_by_key(|v| v.depart);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::roadnet::build_default_network;

    #[test]
    fn full_size_split() {
        let net = build_default_network();
        let s = spawn_schedule(&net, 4000, 1, 5400).unwrap();
        assert_eq!(s.len(), 4000);
        let classes = classify_od_pairs(&net).unwrap();
        let through = s
            .iter()
            .filter(|v| classes.signalised.contains(&(v.origin, v.destination)))
            .count();
        assert_eq!(through, 2400);
        assert!(s.windows(2).all(|w| w[0].depart <= w[1].depart));
        assert!(s.iter().all(|v| v.depart < 5400));
        assert_eq!(s.first().unwrap().depart, 0);
        assert_eq!(s.last().unwrap().depart, 5399);
        let count = |t| s.iter().filter(|v| v.vtype == t).count();
        assert_eq!(count(VehicleType::Bus), 200);
        assert_eq!(count(VehicleType::Trailer), 160);
        assert_eq!(count(VehicleType::Ambulance), 40);
        assert_eq!(count(VehicleType::Car), 3600);
    }

    #[test]
    fn default_network_classes() {
        let net = build_default_network();
        let classes = classify_od_pairs(&net).unwrap();
        // opposite arms go straight through; adjacent arms take a diagonal
        assert_eq!(classes.signalised.len(), 4);
        assert_eq!(classes.bypass.len(), 8);
    }

    #[test]
    fn empty_and_deterministic() {
        let net = build_default_network();
        assert!(spawn_schedule(&net, 0, 3, 100).unwrap().is_empty());
        assert_eq!(
            spawn_schedule(&net, 300, 9, 600).unwrap(),
            spawn_schedule(&net, 300, 9, 600).unwrap()
        );
        assert_ne!(
            spawn_schedule(&net, 300, 9, 600).unwrap(),
            spawn_schedule(&net, 300, 10, 600).unwrap()
        );
        assert!(spawn_schedule(&net, 3, 1, 0).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let net = build_default_network();
        let s = spawn_schedule(&net, 50, 4, 200).unwrap();
        let mut buf = Vec::new();
        write_schedule(&net, &s, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("depart,vtype,origin,destination\n"));
        assert_eq!(read_schedule(&net, buf.as_slice()).unwrap(), s);
    }

    #[test]
    fn csv_unknown_node() {
        let net = build_default_network();
        let text = "depart,vtype,origin,destination\n3,car,W,Q\n";
        assert!(read_schedule(&net, text.as_bytes()).is_err());
    }
}
