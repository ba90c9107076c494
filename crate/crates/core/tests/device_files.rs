use std::collections::BTreeSet;

use teleport_lab::pathfinder::{
    best_device_paths, edge_weights, find_best_paths, heavy_hex_127_edges, parse_device,
    CouplingGraph, WeightProtocol,
};
use teleport_lab::Error;

const MINIMAL: &str = r#"{
  "qubits": [
    {"id": 0, "readout_err_0to1": 0.01, "readout_err_1to0": 0.02, "t1_us": 100.0, "t2_us": 80.0},
    {"id": 1, "readout_err_0to1": null, "readout_err_1to0": null, "t1_us": null, "t2_us": null}
  ],
  "edges": [
    {"a": 0, "b": 1, "gate_error": 0.01, "neg": 0.45, "neg_qrem": 0.48}
  ]
}"#;

fn schema_location(err: Error) -> String {
    match err {
        Error::Schema { location, .. } => location,
        other => panic!("expected a schema error, got {other}"),
    }
}

#[test]
fn minimal_file_has_one_edge() {
    let dev = parse_device(MINIMAL).unwrap();
    assert_eq!(dev.qubits.len(), 2);
    assert_eq!(dev.edges.len(), 1);
    assert_eq!(dev.qubit(1).unwrap().t1_us, None);
    assert_eq!(dev.edge(1, 0).unwrap().neg_qrem, Some(0.48));
}

#[test]
fn reverse_duplicates_merge_or_conflict() {
    let twice = |gate_error: f64| {
        format!(
            r#"{{"qubits": [{{"id": 0}}, {{"id": 1}}],
                 "edges": [{{"a": 0, "b": 1, "gate_error": 0.02}},
                           {{"a": 1, "b": 0, "gate_error": {gate_error}}}]}}"#
        )
    };
    let dev = parse_device(&twice(0.02 + 1e-12)).unwrap();
    assert_eq!(dev.edges.len(), 1);
    let err = parse_device(&twice(0.03)).unwrap_err();
    assert_eq!(schema_location(err), "edges[1]");
}

#[test]
fn schema_errors_point_at_the_problem() {
    let unknown = r#"{"qubits": [{"id": 0}], "edges": [{"a": 0, "b": 5, "gate_error": 0.1}]}"#;
    assert_eq!(schema_location(parse_device(unknown).unwrap_err()), "edges[0].b");
    let bad_t2 = r#"{"qubits": [{"id": 0, "t1_us": 10, "t2_us": 30}], "edges": []}"#;
    assert_eq!(schema_location(parse_device(bad_t2).unwrap_err()), "qubits[0]");
    let extra = "{\"qubits\": [],\n \"edges\": [], \"colour\": 1}";
    assert!(schema_location(parse_device(extra).unwrap_err()).starts_with("line 2"));
}

#[test]
fn heavy_hex_file_round_trips_with_144_edges() {
    let qubits: Vec<String> = (0..127).map(|id| format!(r#"{{"id": {id}}}"#)).collect();
    let edges: Vec<String> = heavy_hex_127_edges()
        .into_iter()
        .map(|(a, b)| format!(r#"{{"a": {b}, "b": {a}, "gate_error": 0.01}}"#))
        .collect();
    let text = format!(r#"{{"qubits": [{}], "edges": [{}]}}"#, qubits.join(","), edges.join(","));
    let dev = parse_device(&text).unwrap();
    assert_eq!(dev.edges.len(), 144);
    assert_eq!(parse_device(&dev.to_json().unwrap()).unwrap(), dev);
    let degrees = (0..127u32).map(|q| dev.edges.iter().filter(|e| e.a == q || e.b == q).count());
    assert!(degrees.clone().all(|d| (1..=3).contains(&d)));
}

#[test]
fn line_example() {
    let g = CouplingGraph::from_edges(&[0, 1, 2, 3], &[(0, 1, 0.9), (1, 2, 0.8), (2, 3, 0.7)]).unwrap();
    let found = find_best_paths(&g, 3, 2).unwrap();
    assert_eq!(found.paths[0].qubits, vec![0, 1, 2]);
    assert_eq!(found.paths[1].qubits, vec![1, 2, 3]);
    assert!((found.paths[0].weight_product - 0.72).abs() < 1e-12);
    assert!((found.paths[1].weight_product - 0.56).abs() < 1e-12);
}

/// Two hexagons sharing an edge, plus a pendant qubit on each.
fn twelve_node_graph() -> CouplingGraph {
    let edges = [
        (0, 1, 0.91), (1, 2, 0.87), (2, 3, 0.95), (3, 4, 0.82), (4, 5, 0.9), (5, 0, 0.88),
        (3, 6, 0.93), (6, 7, 0.86), (7, 8, 0.92), (8, 9, 0.84), (9, 2, 0.89),
        (0, 10, 0.97), (8, 11, 0.96),
    ];
    CouplingGraph::from_edges(&(0..12).collect::<Vec<u32>>(), &edges).unwrap()
}

fn brute_force(g: &CouplingGraph, n: usize) -> Vec<(f64, Vec<u32>)> {
    fn extend(g: &CouplingGraph, n: usize, path: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if path.len() == n {
            out.push(path.clone());
            return;
        }
        for v in g.labels().to_vec() {
            if !path.contains(&v) && g.weight(*path.last().unwrap(), v).is_some() {
                path.push(v);
                extend(g, n, path, out);
                path.pop();
            }
        }
    }
    let mut all = Vec::new();
    for &start in g.labels() {
        extend(g, n, &mut vec![start], &mut all);
    }
    let mut scored: Vec<(f64, Vec<u32>)> = all
        .into_iter()
        .filter(|p| p[0] < p[n - 1])
        .map(|p| (p.windows(2).map(|e| g.weight(e[0], e[1]).unwrap()).product(), p))
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(&b.1)));
    scored
}

#[test]
fn twelve_node_graph_matches_brute_force() {
    let g = twelve_node_graph();
    let want = brute_force(&g, 5);
    let found = find_best_paths(&g, 5, 4).unwrap();
    assert_eq!(found.paths.len(), 4);
    for (p, (w, q)) in found.paths.iter().zip(&want) {
        assert_eq!(&p.qubits, q);
        assert!((p.weight_product - w).abs() < 1e-12);
    }
}

#[test]
fn dominant_chain_ranks_first() {
    let mut text = String::from(r#"{"qubits": ["#);
    text.push_str(&(0..8).map(|i| format!(r#"{{"id": {i}}}"#)).collect::<Vec<_>>().join(","));
    text.push_str(r#"], "edges": ["#);
    let mut edges = Vec::new();
    for (a, b) in [(0, 1), (1, 2), (2, 3)] {
        edges.push(format!(r#"{{"a": {a}, "b": {b}, "gate_error": 0.001}}"#));
    }
    for (a, b) in [(3, 4), (4, 5), (5, 6), (6, 7), (7, 0), (1, 5), (2, 6)] {
        edges.push(format!(r#"{{"a": {a}, "b": {b}, "gate_error": 0.05}}"#));
    }
    text.push_str(&edges.join(","));
    text.push_str("]}");
    let dev = parse_device(&text).unwrap();
    let found = best_device_paths(&dev, WeightProtocol::GateFid, 4, 3).unwrap();
    assert_eq!(found.paths[0].qubits, vec![0, 1, 2, 3]);
    assert_eq!(found.paths[0].protocol, Some(WeightProtocol::GateFid));
    assert!(found.paths[0].weight_product > found.paths[1].weight_product);
}

#[test]
fn uniform_weights_resolve_ties_lexicographically() {
    let edges: Vec<(u32, u32, f64)> = heavy_hex_127_edges().into_iter().map(|(a, b)| (a, b, 0.9)).collect();
    let g = CouplingGraph::from_edges(&(0..127).collect::<Vec<u32>>(), &edges).unwrap();
    let first = find_best_paths(&g, 6, 4).unwrap();
    let again = find_best_paths(&g, 6, 4).unwrap();
    assert_eq!(first, again);
    assert_eq!(first.paths[0].qubits, vec![0, 1, 2, 3, 4, 5]);
    let distinct: BTreeSet<&Vec<u32>> = first.paths.iter().map(|p| &p.qubits).collect();
    assert_eq!(distinct.len(), 4);
}

#[test]
fn too_long_paths_report_a_shortfall() {
    let dev = parse_device(MINIMAL).unwrap();
    let found = best_device_paths(&dev, WeightProtocol::Neg, 3, 4).unwrap();
    assert!(found.paths.is_empty());
    assert!(found.fewer_than_requested);
    assert!(edge_weights(&dev, WeightProtocol::NegQrem).is_ok());
}
