use flowctl_core::roadnet::{
    build_default_network, enumerate_routes, route_travel_time, shortest_route, EdgeId,
    EdgeWeights, NodeId, RoadNetwork, DEFAULT_ROUTE_COUNT,
};
use proptest::prelude::*;

/// Random digraph on `n` nodes with unit-length, unit-speed edges, so the
/// free-flow floor of every weight is 1.
fn graph(n: usize, arcs: &[(usize, usize, u32)]) -> (RoadNetwork, Vec<f64>) {
    let mut b = RoadNetwork::builder();
    for i in 0..n {
        b = b.node(&format!("n{i}"));
    }
    let mut weights = Vec::new();
    for (k, &(u, v, w)) in arcs.iter().enumerate() {
        if u == v {
            continue;
        }
        b = b.edge(
            &format!("e{k}"),
            &format!("n{u}"),
            &format!("n{v}"),
            1.0,
            1,
            1.0,
            false,
        );
        weights.push(f64::from(w));
    }
    (b.build().unwrap(), weights)
}

/// Cheapest simple path by exhaustive depth-first search.
fn brute_force(net: &RoadNetwork, w: &[f64], from: NodeId, to: NodeId) -> Option<f64> {
    fn go(
        net: &RoadNetwork,
        w: &[f64],
        at: NodeId,
        to: NodeId,
        visited: &mut Vec<bool>,
        cost: f64,
        best: &mut Option<f64>,
    ) {
        if at == to {
            *best = Some(best.map_or(cost, |b: f64| b.min(cost)));
            return;
        }
        for &e in net.outgoing(at) {
            let next = net.edge(e).to;
            if !visited[next.0] {
                visited[next.0] = true;
                go(net, w, next, to, visited, cost + w[e.0], best);
                visited[next.0] = false;
            }
        }
    }
    let mut visited = vec![false; net.nodes().len()];
    visited[from.0] = true;
    let mut best = None;
    go(net, w, from, to, &mut visited, 0.0, &mut best);
    best
}

fn arb_graph() -> impl Strategy<Value = (usize, Vec<(usize, usize, u32)>)> {
    (2usize..=10).prop_flat_map(|n| {
        (
            Just(n),
            prop::collection::vec((0..n, 0..n, 1u32..50), 1..=n * 3),
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn dijkstra_matches_brute_force((n, arcs) in arb_graph(), s in 0usize..10, t in 0usize..10) {
        let (s, t) = (s % n, t % n);
        prop_assume!(s != t);
        let (net, w) = graph(n, &arcs);
        let weights = EdgeWeights::from_vec(&net, w.clone()).unwrap();
        let oracle = brute_force(&net, &w, NodeId(s), NodeId(t));
        match shortest_route(&net, NodeId(s), NodeId(t), &weights) {
            Ok(r) => {
                let cost = route_travel_time(&net, &r, &weights).unwrap();
                prop_assert_eq!(Some(cost), oracle);
            }
            Err(_) => prop_assert_eq!(oracle, None),
        }
    }

    #[test]
    fn enumerated_routes_are_sorted_distinct_and_connected(
        (n, arcs) in arb_graph(), s in 0usize..10, t in 0usize..10, k in 1usize..6,
    ) {
        let (s, t) = (s % n, t % n);
        prop_assume!(s != t);
        let (net, w) = graph(n, &arcs);
        let weights = EdgeWeights::from_vec(&net, w.clone()).unwrap();
        let Ok(routes) = enumerate_routes(&net, NodeId(s), NodeId(t), &weights, k) else {
            prop_assert_eq!(brute_force(&net, &w, NodeId(s), NodeId(t)), None);
            return Ok(());
        };
        prop_assert!(!routes.is_empty() && routes.len() <= k);
        let costs: Vec<f64> = routes
            .iter()
            .map(|r| route_travel_time(&net, r, &weights).unwrap())
            .collect();
        prop_assert!(costs.windows(2).all(|c| c[0] <= c[1]));
        prop_assert_eq!(Some(costs[0]), brute_force(&net, &w, NodeId(s), NodeId(t)));
        for (i, r) in routes.iter().enumerate() {
            prop_assert_eq!(r.origin(), NodeId(s));
            prop_assert_eq!(r.destination(), NodeId(t));
            for pair in r.edges().windows(2) {
                prop_assert_eq!(net.edge(pair[0]).to, net.edge(pair[1]).from);
            }
            for other in &routes[..i] {
                prop_assert_ne!(other.edges(), r.edges());
            }
        }
    }
}

#[test]
fn default_network_routes() {
    let net = build_default_network();
    let free = EdgeWeights::free_flow(&net);
    let (w, e) = (net.node_id("W").unwrap(), net.node_id("E").unwrap());
    let straight = shortest_route(&net, w, e, &free).unwrap();
    assert_eq!(straight.length(&net), 2200.0);
    assert!(straight.crosses_signal(&net));
    let routes = enumerate_routes(&net, w, e, &free, DEFAULT_ROUTE_COUNT).unwrap();
    assert_eq!(routes[0], straight);
    let bypass = routes.iter().find(|r| !r.crosses_signal(&net)).unwrap();
    assert_eq!(bypass.length(&net), 3028.0);

    let n = net.node_id("N").unwrap();
    let adjacent = shortest_route(&net, w, n, &free).unwrap();
    assert!(!adjacent.crosses_signal(&net));
    assert_eq!(adjacent.display(&net), "W_in>WN_diag>N_out");
}

#[test]
fn network_file_matches_builder() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/data/default.net");
    let loaded = RoadNetwork::load(path).unwrap();
    assert_eq!(loaded, build_default_network());
    assert_eq!(
        RoadNetwork::parse(&loaded.to_spec_string()).unwrap(),
        loaded
    );
}

#[test]
fn weights_below_free_flow_are_rejected() {
    let (net, _) = graph(2, &[(0, 1, 1)]);
    assert!(EdgeWeights::from_vec(&net, vec![0.5]).is_err());
    let ok = EdgeWeights::from_vec(&net, vec![1.0]).unwrap();
    assert_eq!(ok.get(EdgeId(0)), Some(1.0));
}
