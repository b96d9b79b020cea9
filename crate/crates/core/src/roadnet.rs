//! Road-network graph, travel-time weights and route search.
//!
//! A [`RoadNetwork`] is a directed graph of [`Edge`]s between named nodes.
//! Edges carry a length, a lane count, a free-flow speed and a flag marking
//! whether a signal stop line sits at their downstream end.
//!
//! Route search is Dijkstra over [`EdgeWeights`] (seconds per edge). Ties
//! between equal-cost routes are broken by comparing the edge-id sequences
//! lexicographically, so every query has exactly one answer. Alternate
//! routes come from Yen's loopless k-shortest-paths procedure built on the
//! same search.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Free-flow speed used for every edge of the default network (50 km/h).
pub const DEFAULT_SPEED_MPS: f64 = 13.89;

/// Number of alternate routes enumerated per origin-destination query.
pub const DEFAULT_ROUTE_COUNT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NetworkError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("edge `{edge}` references undefined node `{node}`")]
    DanglingNode { edge: String, node: String },
    #[error("edge `{edge}` has non-positive length {length}")]
    NonPositiveLength { edge: String, length: f64 },
    #[error("edge `{edge}` has non-positive speed limit {speed}")]
    NonPositiveSpeed { edge: String, speed: f64 },
    #[error("edge `{edge}` has {lanes} lanes, expected 1..=4")]
    InvalidLaneCount { edge: String, lanes: u32 },
    #[error("node `{0}` is defined twice")]
    DuplicateNode(String),
    #[error("edge `{0}` is defined twice")]
    DuplicateEdge(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("origin and destination are both `{0}`")]
    SameEndpoints(String),
    #[error("no route from `{from}` to `{to}`")]
    Unreachable { from: String, to: String },
    #[error("edge {0} has no weight")]
    MissingWeight(EdgeId),
    #[error("weight {weight} for edge `{edge}` is below its free-flow time {free_flow}")]
    WeightBelowFreeFlow {
        edge: String,
        weight: f64,
        free_flow: f64,
    },
    #[error("invalid route: {0}")]
    InvalidRoute(String),
    #[error("k must be at least 1")]
    ZeroRouteCount,
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    pub name: String,
    /// Planar position in meters; only needed to derive the signal layout.
    pub position: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Edge {
    pub id: EdgeId,
    pub name: String,
    pub from: NodeId,
    pub to: NodeId,
    /// Meters.
    pub length: f64,
    pub lanes: u8,
    /// Meters per second.
    pub speed_limit: f64,
    /// A signal stop line sits at the downstream end of this edge.
    pub signalized: bool,
}

impl Edge {
    pub fn free_flow_time(&self) -> f64 {
        self.length / self.speed_limit
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoadNetwork {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    outgoing: Vec<Vec<EdgeId>>,
    incoming: Vec<Vec<EdgeId>>,
    node_index: HashMap<String, NodeId>,
    edge_index: HashMap<String, EdgeId>,
}

/// Incrementally assembles a [`RoadNetwork`]; validation happens in
/// [`NetworkBuilder::build`].
#[derive(Debug, Default)]
pub struct NetworkBuilder {
    nodes: Vec<Node>,
    edges: Vec<RawEdge>,
}

#[derive(Debug)]
struct RawEdge {
    name: String,
    from: String,
    to: String,
    length: f64,
    lanes: u32,
    speed: f64,
    signalized: bool,
}

impl NetworkBuilder {
    pub fn node(mut self, name: &str) -> Self {
        self.nodes.push(Node {
            name: name.to_string(),
            position: None,
        });
        self
    }

    pub fn node_at(mut self, name: &str, x: f64, y: f64) -> Self {
        self.nodes.push(Node {
            name: name.to_string(),
            position: Some((x, y)),
        });
        self
    }

    #[allow(clippy::too_many_arguments)]
    pub fn edge(
        mut self,
        name: &str,
        from: &str,
        to: &str,
        length: f64,
        lanes: u32,
        speed: f64,
        signalized: bool,
    ) -> Self {
        self.edges.push(RawEdge {
            name: name.to_string(),
            from: from.to_string(),
            to: to.to_string(),
            length,
            lanes,
            speed,
            signalized,
        });
        self
    }

    pub fn build(self) -> Result<RoadNetwork, NetworkError> {
        let mut node_index = HashMap::new();
        for (i, node) in self.nodes.iter().enumerate() {
            if node_index.insert(node.name.clone(), NodeId(i)).is_some() {
                return Err(NetworkError::DuplicateNode(node.name.clone()));
            }
        }
        let mut edges = Vec::with_capacity(self.edges.len());
        let mut edge_index = HashMap::new();
        let lookup = |edge: &str, node: &str| {
            node_index
                .get(node)
                .copied()
                .ok_or_else(|| NetworkError::DanglingNode {
                    edge: edge.to_string(),
                    node: node.to_string(),
                })
        };
        for (i, raw) in self.edges.into_iter().enumerate() {
            let from = lookup(&raw.name, &raw.from)?;
            let to = lookup(&raw.name, &raw.to)?;
            if !raw.length.is_finite() || raw.length <= 0.0 {
                return Err(NetworkError::NonPositiveLength {
                    edge: raw.name,
                    length: raw.length,
                });
            }
            if !raw.speed.is_finite() || raw.speed <= 0.0 {
                return Err(NetworkError::NonPositiveSpeed {
                    edge: raw.name,
                    speed: raw.speed,
                });
            }
            if !(1..=4).contains(&raw.lanes) {
                return Err(NetworkError::InvalidLaneCount {
                    edge: raw.name,
                    lanes: raw.lanes,
                });
            }
            if edge_index.insert(raw.name.clone(), EdgeId(i)).is_some() {
                return Err(NetworkError::DuplicateEdge(raw.name));
            }
            edges.push(Edge {
                id: EdgeId(i),
                name: raw.name,
                from,
                to,
                length: raw.length,
                lanes: raw.lanes as u8,
                speed_limit: raw.speed,
                signalized: raw.signalized,
            });
        }
        let mut outgoing = vec![Vec::new(); self.nodes.len()];
        let mut incoming = vec![Vec::new(); self.nodes.len()];
        for e in &edges {
            outgoing[e.from.0].push(e.id);
            incoming[e.to.0].push(e.id);
        }
        Ok(RoadNetwork {
            nodes: self.nodes,
            edges,
            outgoing,
            incoming,
            node_index,
            edge_index,
        })
    }
}

impl RoadNetwork {
    pub fn builder() -> NetworkBuilder {
        NetworkBuilder::default()
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn edge(&self, id: EdgeId) -> &Edge {
        &self.edges[id.0]
    }

    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn node_id(&self, name: &str) -> Option<NodeId> {
        self.node_index.get(name).copied()
    }

    pub fn edge_id(&self, name: &str) -> Option<EdgeId> {
        self.edge_index.get(name).copied()
    }

    /// Outgoing edge ids of `node`, in ascending id order.
    pub fn outgoing(&self, node: NodeId) -> &[EdgeId] {
        &self.outgoing[node.0]
    }

    pub fn incoming(&self, node: NodeId) -> &[EdgeId] {
        &self.incoming[node.0]
    }

    /// Dead-end stubs where traffic enters and leaves the network: nodes
    /// with exactly one incoming and one outgoing edge, both to the same
    /// neighbour.
    pub fn boundary_nodes(&self) -> Vec<NodeId> {
        (0..self.nodes.len())
            .map(NodeId)
            .filter(|&n| {
                let (out, inc) = (self.outgoing(n), self.incoming(n));
                out.len() == 1 && inc.len() == 1 && self.edge(out[0]).to == self.edge(inc[0]).from
            })
            .collect()
    }

    /// Parses the line-oriented network description.
    ///
    /// ```text
    /// # comment
    /// node <id> [<x> <y>]
    /// edge <id> <from> <to> <length_m> <lanes> <speed_mps> <signalized:0|1>
    /// ```
    pub fn parse(text: &str) -> Result<Self, NetworkError> {
        let mut builder = NetworkBuilder::default();
        for (idx, raw_line) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = match raw_line.find('#') {
                Some(pos) => &raw_line[..pos],
                None => raw_line,
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            let err = |message: String| NetworkError::Parse {
                line: line_no,
                message,
            };
            match fields.as_slice() {
                [] => {}
                ["node", id] => builder = builder.node(id),
                ["node", id, x, y] => {
                    let x = parse_num::<f64>(x, "x").map_err(err)?;
                    let y = parse_num::<f64>(y, "y").map_err(err)?;
                    builder = builder.node_at(id, x, y);
                }
                ["edge", id, from, to, length, lanes, speed, signalized] => {
                    let length = parse_num::<f64>(length, "length").map_err(err)?;
                    let lanes = parse_num::<u32>(lanes, "lanes").map_err(err)?;
                    let speed = parse_num::<f64>(speed, "speed").map_err(err)?;
                    let signalized = match *signalized {
                        "0" => false,
                        "1" => true,
                        other => {
                            return Err(err(format!(
                                "signalized flag must be 0 or 1, got `{other}`"
                            )))
                        }
                    };
                    builder = builder.edge(id, from, to, length, lanes, speed, signalized);
                }
                ["node", ..] => return Err(err("expected `node <id> [<x> <y>]`".into())),
                ["edge", ..] => {
                    return Err(err(
                        "expected `edge <id> <from> <to> <length_m> <lanes> <speed_mps> <0|1>`"
                            .into(),
                    ))
                }
                [keyword, ..] => return Err(err(format!("unknown directive `{keyword}`"))),
            }
        }
        builder.build()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, NetworkError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| NetworkError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    /// Serialises back into the text format accepted by [`RoadNetwork::parse`].
    pub fn to_spec_string(&self) -> String {
        let mut out = String::new();
        for node in &self.nodes {
            match node.position {
                Some((x, y)) => out.push_str(&format!("node {} {} {}\n", node.name, x, y)),
                None => out.push_str(&format!("node {}\n", node.name)),
            }
        }
        for e in &self.edges {
            out.push_str(&format!(
                "edge {} {} {} {} {} {} {}\n",
                e.name,
                self.nodes[e.from.0].name,
                self.nodes[e.to.0].name,
                e.length,
                e.lanes,
                e.speed_limit,
                u8::from(e.signalized)
            ));
        }
        out
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse::<T>()
        .map_err(|_| format!("cannot parse {what} from `{s}`"))
}

/// Compass arms of the default intersection, clockwise from north.
pub const ARM_NAMES: [&str; 4] = ["N", "E", "S", "W"];

/// The four-leg test network.
///
/// Each arm `X` has a boundary node `X` 1100 m from the centre `C` and a
/// bypass junction `X_j` 1000 m from the centre. Per arm:
///
/// * `X_in`   `X -> X_j`, 100 m entry edge
/// * `X_app`  `X_j -> C`, 1000 m approach ending at the signal stop line
/// * `X_exit` `C -> X_j`, 1000 m
/// * `X_out`  `X_j -> X`, 100 m
///
/// Adjacent bypass junctions are joined by single-lane 1414 m diagonals in
/// both directions (`NE_diag`, `EN_diag`, ...), which never touch the signal.
pub fn build_default_network() -> RoadNetwork {
    let positions = [(0.0, 1.0), (1.0, 0.0), (0.0, -1.0), (-1.0, 0.0)];
    let mut b = RoadNetwork::builder().node_at("C", 0.0, 0.0);
    for (arm, (dx, dy)) in ARM_NAMES.iter().zip(positions) {
        b = b.node_at(arm, dx * 1100.0, dy * 1100.0).node_at(
            &format!("{arm}_j"),
            dx * 1000.0,
            dy * 1000.0,
        );
    }
    let s = DEFAULT_SPEED_MPS;
    for arm in ARM_NAMES {
        let j = format!("{arm}_j");
        b = b
            .edge(&format!("{arm}_in"), arm, &j, 100.0, 4, s, false)
            .edge(&format!("{arm}_app"), &j, "C", 1000.0, 4, s, true)
            .edge(&format!("{arm}_exit"), "C", &j, 1000.0, 4, s, false)
            .edge(&format!("{arm}_out"), &j, arm, 100.0, 4, s, false);
    }
    for i in 0..4 {
        let (a, c) = (ARM_NAMES[i], ARM_NAMES[(i + 1) % 4]);
        b = b
            .edge(
                &format!("{a}{c}_diag"),
                &format!("{a}_j"),
                &format!("{c}_j"),
                1414.0,
                1,
                s,
                false,
            )
            .edge(
                &format!("{c}{a}_diag"),
                &format!("{c}_j"),
                &format!("{a}_j"),
                1414.0,
                1,
                s,
                false,
            );
    }
    b.build().expect("default network is well formed")
}

/// Edge id → travel time in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeWeights(Vec<f64>);

impl EdgeWeights {
    pub fn free_flow(net: &RoadNetwork) -> Self {
        EdgeWeights(net.edges().iter().map(Edge::free_flow_time).collect())
    }

    /// Validates that every weight is at least the edge's free-flow time.
    pub fn from_vec(net: &RoadNetwork, weights: Vec<f64>) -> Result<Self, NetworkError> {
        if weights.len() != net.edges().len() {
            return Err(NetworkError::MissingWeight(EdgeId(
                weights.len().min(net.edges().len()),
            )));
        }
        for (e, &w) in net.edges().iter().zip(&weights) {
            let ff = e.free_flow_time();
            // allow one ulp of slack so `free_flow` round-trips
            if !w.is_finite() || w < ff * (1.0 - 1e-12) {
                return Err(NetworkError::WeightBelowFreeFlow {
                    edge: e.name.clone(),
                    weight: w,
                    free_flow: ff,
                });
            }
        }
        Ok(EdgeWeights(weights))
    }

    pub fn get(&self, edge: EdgeId) -> Option<f64> {
        self.0.get(edge.0).copied()
    }

    /// Adds `seconds` to one edge's weight.
    pub fn add_surcharge(&mut self, edge: EdgeId, seconds: f64) {
        if let Some(w) = self.0.get_mut(edge.0) {
            *w += seconds.max(0.0);
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        EdgeWeights(self.0.iter().map(|w| w * factor).collect())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

/// A loopless sequence of edges from `origin` to `destination`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Route {
    edges: Vec<EdgeId>,
    origin: NodeId,
    destination: NodeId,
}

impl Route {
    /// Checks adjacency and edge uniqueness.
    pub fn new(net: &RoadNetwork, edges: Vec<EdgeId>) -> Result<Self, NetworkError> {
        let first = *edges
            .first()
            .ok_or_else(|| NetworkError::InvalidRoute("route has no edges".into()))?;
        for &e in &edges {
            if e.0 >= net.edges().len() {
                return Err(NetworkError::InvalidRoute(format!("unknown edge {e}")));
            }
        }
        for pair in edges.windows(2) {
            if net.edge(pair[0]).to != net.edge(pair[1]).from {
                return Err(NetworkError::InvalidRoute(format!(
                    "`{}` does not lead into `{}`",
                    net.edge(pair[0]).name,
                    net.edge(pair[1]).name
                )));
            }
        }
        let mut seen = edges.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(NetworkError::InvalidRoute("route repeats an edge".into()));
        }
        let last = *edges.last().expect("non-empty");
        Ok(Route {
            origin: net.edge(first).from,
            destination: net.edge(last).to,
            edges,
        })
    }

    pub fn edges(&self) -> &[EdgeId] {
        &self.edges
    }

    pub fn origin(&self) -> NodeId {
        self.origin
    }

    pub fn destination(&self) -> NodeId {
        self.destination
    }

    pub fn length(&self, net: &RoadNetwork) -> f64 {
        self.edges.iter().map(|&e| net.edge(e).length).sum()
    }

    pub fn crosses_signal(&self, net: &RoadNetwork) -> bool {
        self.edges.iter().any(|&e| net.edge(e).signalized)
    }

    /// `A>B>C` using edge names.
    pub fn display(&self, net: &RoadNetwork) -> String {
        self.edges
            .iter()
            .map(|&e| net.edge(e).name.as_str())
            .collect::<Vec<_>>()
            .join(">")
    }
}

/// Sum of per-edge weights along `route`, accumulated front to back.
pub fn route_travel_time(
    _net: &RoadNetwork,
    route: &Route,
    weights: &EdgeWeights,
) -> Result<f64, NetworkError> {
    path_cost(route.edges(), weights)
}

fn path_cost(edges: &[EdgeId], weights: &EdgeWeights) -> Result<f64, NetworkError> {
    edges.iter().try_fold(0.0, |acc, &e| {
        weights
            .get(e)
            .map(|w| acc + w)
            .ok_or(NetworkError::MissingWeight(e))
    })
}

#[derive(Debug, Clone, PartialEq)]
struct Label {
    cost: f64,
    path: Vec<EdgeId>,
}

impl Label {
    fn cmp_key(&self, other: &Self) -> Ordering {
        self.cost
            .total_cmp(&other.cost)
            .then_with(|| self.path.cmp(&other.path))
    }
}

struct HeapEntry {
    label: Label,
    node: NodeId,
}

impl PartialEq for HeapEntry {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for HeapEntry {}

impl Ord for HeapEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap
        other.label.cmp_key(&self.label)
    }
}

impl PartialOrd for HeapEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dijkstra over (cost, edge-sequence) labels. Because weights are strictly
/// positive, lexicographic order on paths is preserved under extension and
/// the minimum label per node is well defined.
fn search(
    net: &RoadNetwork,
    origin: NodeId,
    dest: NodeId,
    weights: &EdgeWeights,
    banned_edges: &[bool],
    banned_nodes: &[bool],
) -> Result<Option<Label>, NetworkError> {
    let mut best: Vec<Option<Label>> = vec![None; net.nodes().len()];
    let mut heap = BinaryHeap::new();
    let start = Label {
        cost: 0.0,
        path: Vec::new(),
    };
    best[origin.0] = Some(start.clone());
    heap.push(HeapEntry {
        label: start,
        node: origin,
    });
    while let Some(HeapEntry { label, node }) = heap.pop() {
        if best[node.0].as_ref() != Some(&label) {
            continue;
        }
        if node == dest {
            return Ok(Some(label));
        }
        for &e in net.outgoing(node) {
            if banned_edges[e.0] {
                continue;
            }
            let next = net.edge(e).to;
            if banned_nodes[next.0] {
                continue;
            }
            let w = weights.get(e).ok_or(NetworkError::MissingWeight(e))?;
            let mut path = label.path.clone();
            path.push(e);
            let cand = Label {
                cost: label.cost + w,
                path,
            };
            let better = match &best[next.0] {
                None => true,
                Some(cur) => cand.cmp_key(cur) == Ordering::Less,
            };
            if better {
                best[next.0] = Some(cand.clone());
                heap.push(HeapEntry {
                    label: cand,
                    node: next,
                });
            }
        }
    }
    Ok(None)
}

fn check_endpoints(net: &RoadNetwork, origin: NodeId, dest: NodeId) -> Result<(), NetworkError> {
    for n in [origin, dest] {
        if n.0 >= net.nodes().len() {
            return Err(NetworkError::UnknownNode(n.to_string()));
        }
    }
    if origin == dest {
        return Err(NetworkError::SameEndpoints(net.node(origin).name.clone()));
    }
    Ok(())
}

fn unreachable(net: &RoadNetwork, origin: NodeId, dest: NodeId) -> NetworkError {
    NetworkError::Unreachable {
        from: net.node(origin).name.clone(),
        to: net.node(dest).name.clone(),
    }
}

/// Minimum-weight route; equal-cost routes are ordered by edge-id sequence.
pub fn shortest_route(
    net: &RoadNetwork,
    origin: NodeId,
    dest: NodeId,
    weights: &EdgeWeights,
) -> Result<Route, NetworkError> {
    check_endpoints(net, origin, dest)?;
    let banned_edges = vec![false; net.edges().len()];
    let banned_nodes = vec![false; net.nodes().len()];
    let label = search(net, origin, dest, weights, &banned_edges, &banned_nodes)?
        .ok_or_else(|| unreachable(net, origin, dest))?;
    Route::new(net, label.path)
}

/// Up to `k` distinct loopless routes in ascending weight order.
pub fn enumerate_routes(
    net: &RoadNetwork,
    origin: NodeId,
    dest: NodeId,
    weights: &EdgeWeights,
    k: usize,
) -> Result<Vec<Route>, NetworkError> {
    enumerate_routes_excluding(net, origin, dest, weights, k, &[])
}

/// As [`enumerate_routes`], but no returned route uses an edge in `excluded`.
pub fn enumerate_routes_excluding(
    net: &RoadNetwork,
    origin: NodeId,
    dest: NodeId,
    weights: &EdgeWeights,
    k: usize,
    excluded: &[EdgeId],
) -> Result<Vec<Route>, NetworkError> {
    if k == 0 {
        return Err(NetworkError::ZeroRouteCount);
    }
    check_endpoints(net, origin, dest)?;
    let mut base_banned = vec![false; net.edges().len()];
    for e in excluded {
        if let Some(slot) = base_banned.get_mut(e.0) {
            *slot = true;
        }
    }
    let no_nodes = vec![false; net.nodes().len()];
    let first = search(net, origin, dest, weights, &base_banned, &no_nodes)?
        .ok_or_else(|| unreachable(net, origin, dest))?;

    let mut accepted: Vec<Label> = vec![first];
    let mut candidates: Vec<Label> = Vec::new();
    while accepted.len() < k {
        let prev = accepted.last().expect("non-empty").clone();
        let mut path_nodes = vec![origin];
        path_nodes.extend(prev.path.iter().map(|&e| net.edge(e).to));
        for i in 0..prev.path.len() {
            let spur = path_nodes[i];
            let root = &prev.path[..i];
            let mut banned_edges = base_banned.clone();
            for p in &accepted {
                if p.path.len() > i && &p.path[..i] == root {
                    banned_edges[p.path[i].0] = true;
                }
            }
            let mut banned_nodes = no_nodes.clone();
            for n in &path_nodes[..i] {
                banned_nodes[n.0] = true;
            }
            if let Some(spur_label) =
                search(net, spur, dest, weights, &banned_edges, &banned_nodes)?
            {
                let mut path = root.to_vec();
                path.extend_from_slice(&spur_label.path);
                let cost = path_cost(&path, weights)?;
                let cand = Label { cost, path };
                if !accepted
                    .iter()
                    .chain(&candidates)
                    .any(|l| l.path == cand.path)
                {
                    candidates.push(cand);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        let best_idx = (0..candidates.len())
            .min_by(|&a, &b| candidates[a].cmp_key(&candidates[b]))
            .expect("non-empty");
        accepted.push(candidates.swap_remove(best_idx));
    }
    accepted
        .into_iter()
        .map(|l| Route::new(net, l.path))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn triangle() -> RoadNetwork {
        // lengths chosen so free-flow time equals the weight at speed 1
        RoadNetwork::builder()
            .node("A")
            .node("B")
            .node("C")
            .edge("ab", "A", "B", 5.0, 1, 1.0, false)
            .edge("ac", "A", "C", 2.0, 1, 1.0, false)
            .edge("cb", "C", "B", 2.0, 1, 1.0, false)
            .build()
            .unwrap()
    }

    fn n(net: &RoadNetwork, name: &str) -> NodeId {
        net.node_id(name).unwrap()
    }

    #[test]
    fn default_network_geometry() {
        let net = build_default_network();
        for arm in ARM_NAMES {
            let inn = net.edge(net.edge_id(&format!("{arm}_in")).unwrap());
            let app = net.edge(net.edge_id(&format!("{arm}_app")).unwrap());
            assert_eq!(inn.length + app.length, 1100.0);
            assert_eq!(app.lanes, 4);
            assert!(app.signalized);
            assert!(!inn.signalized);
        }
        let diag = net.edge(net.edge_id("NE_diag").unwrap());
        assert_eq!(diag.length, 1414.0);
        assert_eq!(diag.lanes, 1);
        assert!(!diag.signalized);
        assert_eq!(
            net.edges()
                .iter()
                .filter(|e| e.name.ends_with("_diag"))
                .count(),
            8
        );
        assert_eq!(net.boundary_nodes().len(), 4);
    }

    #[test]
    fn default_network_is_connected_between_boundaries() {
        let net = build_default_network();
        let w = EdgeWeights::free_flow(&net);
        let boundary = net.boundary_nodes();
        for &o in &boundary {
            for &d in &boundary {
                if o != d {
                    shortest_route(&net, o, d, &w).unwrap();
                }
            }
        }
    }

    #[test]
    fn spec_file_matches_builder() {
        let parsed = RoadNetwork::parse(include_str!("../data/default.net")).unwrap();
        assert_eq!(parsed, build_default_network());
        let again = RoadNetwork::parse(&parsed.to_spec_string()).unwrap();
        assert_eq!(again, parsed);
    }

    #[test]
    fn minimal_spec() {
        let net = RoadNetwork::parse("node a\nnode b\nedge x a b 10 1 5 0\n").unwrap();
        assert_eq!(net.edges().len(), 1);
    }

    #[test]
    fn parse_errors() {
        let err = RoadNetwork::parse("node a\nedge x a b 10 1 5 0\n").unwrap_err();
        assert!(matches!(err, NetworkError::DanglingNode { ref node, .. } if node == "b"));

        let err = RoadNetwork::parse("node a\nnode b\nedge x a b 0 1 5 0\n").unwrap_err();
        assert!(matches!(err, NetworkError::NonPositiveLength { .. }));

        let err = RoadNetwork::parse("node a\n# fine\nedge x a\n").unwrap_err();
        assert!(matches!(err, NetworkError::Parse { line: 3, .. }));

        let err = RoadNetwork::parse("node a\nnode b\nedge x a b 10 five 5 0\n").unwrap_err();
        assert!(matches!(err, NetworkError::Parse { line: 3, .. }));

        let err = RoadNetwork::parse("node a\nnode b\nedge x a b 10 5 5 0\n").unwrap_err();
        assert!(matches!(
            err,
            NetworkError::InvalidLaneCount { lanes: 5, .. }
        ));

        let err = RoadNetwork::parse("node a\nnode a\n").unwrap_err();
        assert_eq!(err, NetworkError::DuplicateNode("a".into()));
    }

    #[test]
    fn single_edge_route() {
        let net = RoadNetwork::parse("node A\nnode B\nedge x A B 10 1 1 0\n").unwrap();
        let w = EdgeWeights::free_flow(&net);
        let r = shortest_route(&net, n(&net, "A"), n(&net, "B"), &w).unwrap();
        assert_eq!(r.edges(), &[EdgeId(0)]);
        assert_eq!(route_travel_time(&net, &r, &w).unwrap(), 10.0);
    }

    #[test]
    fn triangle_prefers_two_hop() {
        let net = triangle();
        let w = EdgeWeights::free_flow(&net);
        let r = shortest_route(&net, n(&net, "A"), n(&net, "B"), &w).unwrap();
        assert_eq!(r.display(&net), "ac>cb");
        assert_eq!(route_travel_time(&net, &r, &w).unwrap(), 4.0);

        let all = enumerate_routes(&net, n(&net, "A"), n(&net, "B"), &w, 2).unwrap();
        let costs: Vec<f64> = all
            .iter()
            .map(|r| route_travel_time(&net, r, &w).unwrap())
            .collect();
        assert_eq!(costs, vec![4.0, 5.0]);
        assert_eq!(all[1].display(&net), "ab");

        let one = enumerate_routes(&net, n(&net, "A"), n(&net, "B"), &w, 1).unwrap();
        assert_eq!(one, vec![r]);
    }

    #[test]
    fn unreachable_and_bad_queries() {
        let net = triangle();
        let w = EdgeWeights::free_flow(&net);
        assert!(matches!(
            shortest_route(&net, n(&net, "B"), n(&net, "A"), &w),
            Err(NetworkError::Unreachable { .. })
        ));
        assert!(matches!(
            shortest_route(&net, n(&net, "A"), n(&net, "A"), &w),
            Err(NetworkError::SameEndpoints(_))
        ));
        assert_eq!(
            enumerate_routes(&net, n(&net, "A"), n(&net, "B"), &w, 0),
            Err(NetworkError::ZeroRouteCount)
        );
    }

    #[test]
    fn straight_route_through_intersection() {
        let net = build_default_network();
        let w = EdgeWeights::free_flow(&net);
        let r = shortest_route(&net, n(&net, "W"), n(&net, "E"), &w).unwrap();
        assert_eq!(r.display(&net), "W_in>W_app>E_exit>E_out");
        assert_eq!(r.length(&net), 2200.0);
        // exhaustive: every other simple W->E route is longer
        let all = enumerate_routes(&net, n(&net, "W"), n(&net, "E"), &w, 50).unwrap();
        assert!(all.len() > 1);
        for other in &all[1..] {
            assert!(other.length(&net) > 2200.0);
        }
    }

    #[test]
    fn k3_always_offers_a_signal_free_route() {
        let net = build_default_network();
        let w = EdgeWeights::free_flow(&net);
        let boundary = net.boundary_nodes();
        for &o in &boundary {
            for &d in &boundary {
                if o == d {
                    continue;
                }
                let routes = enumerate_routes(&net, o, d, &w, 3).unwrap();
                assert!(routes.iter().any(|r| !r.crosses_signal(&net)));
            }
        }
    }

    #[test]
    fn free_flow_time_of_straight_route() {
        let net = build_default_network();
        let w = EdgeWeights::free_flow(&net);
        let r = shortest_route(&net, n(&net, "W"), n(&net, "E"), &w).unwrap();
        let t = route_travel_time(&net, &r, &w).unwrap();
        assert!((t - 2200.0 / 13.89).abs() < 1e-9);
        assert!((t - 158.3).abs() < 0.1);
        let doubled = route_travel_time(&net, &r, &w.scaled(2.0)).unwrap();
        assert!((doubled - 2.0 * t).abs() < 1e-9);
    }

    #[test]
    fn missing_weight_is_reported() {
        let net = triangle();
        let r = Route::new(&net, vec![EdgeId(1), EdgeId(2)]).unwrap();
        let short = EdgeWeights(vec![5.0, 2.0]);
        assert_eq!(
            route_travel_time(&net, &r, &short),
            Err(NetworkError::MissingWeight(EdgeId(2)))
        );
    }

    #[test]
    fn weights_below_free_flow_rejected() {
        let net = triangle();
        assert!(EdgeWeights::from_vec(&net, vec![5.0, 2.0, 2.0]).is_ok());
        assert!(matches!(
            EdgeWeights::from_vec(&net, vec![4.0, 2.0, 2.0]),
            Err(NetworkError::WeightBelowFreeFlow { .. })
        ));
    }

    #[test]
    fn route_validation() {
        let net = triangle();
        assert!(Route::new(&net, vec![EdgeId(0), EdgeId(2)]).is_err());
        assert!(Route::new(&net, vec![]).is_err());
    }
}
