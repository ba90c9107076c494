use num_complex::Complex64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use teleport_lab::harness::{aggregate, ResultRow};
use teleport_lab::metrics::{negativity, DensityMatrix, DENSITY_TOLERANCE};
use teleport_lab::pathfinder::{find_best_paths, find_best_paths_log, CouplingGraph};
use teleport_lab::protocols::{discriminator, teleported_state, OutcomeVector};
use teleport_lab::sim::{Basis, GateKind, GateOp, PureState};
use teleport_lab::tomography::{reconstruct, BasisDistributions, BASIS_PAIRS};

const KINDS: [GateKind; 9] = [
    GateKind::H,
    GateKind::X,
    GateKind::Y,
    GateKind::Z,
    GateKind::S,
    GateKind::Sdg,
    GateKind::CZ,
    GateKind::CNOT,
    GateKind::SWAP,
];

fn random_state(n: usize, rng: &mut impl Rng) -> PureState {
    let amps = (0..1 << n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    PureState::from_amplitudes(amps).unwrap()
}

fn gate_strategy(n: usize) -> impl Strategy<Value = GateOp> {
    let kinds = if n == 1 { 6 } else { KINDS.len() };
    (0..kinds, 0..n, 1..n.max(2)).prop_map(move |(k, a, shift)| {
        let kind = KINDS[k];
        if kind.arity() == 2 {
            GateOp::new(kind, &[a, (a + shift) % n]).unwrap()
        } else {
            GateOp::new(kind, &[a]).unwrap()
        }
    })
}

fn circuit_strategy() -> impl Strategy<Value = (usize, u64, Vec<GateOp>)> {
    (1usize..=6).prop_flat_map(|n| (Just(n), any::<u64>(), prop::collection::vec(gate_strategy(n), 0..40)))
}

fn graph_strategy() -> impl Strategy<Value = (usize, Vec<(u32, u32, f64)>)> {
    (2usize..=9).prop_flat_map(|v| {
        let pairs: Vec<(u32, u32)> = (0..v as u32)
            .flat_map(|a| (a + 1..v as u32).map(move |b| (a, b)))
            .collect();
        let count = pairs.len();
        (
            Just(v),
            Just(pairs),
            prop::collection::vec(prop::option::weighted(0.45, 0.01f64..1.0), count),
        )
            .prop_map(|(v, pairs, weights)| {
                let edges = pairs
                    .into_iter()
                    .zip(weights)
                    .filter_map(|((a, b), w)| w.map(|w| (a, b, w)))
                    .collect();
                (v, edges)
            })
    })
}

fn graph(v: usize, edges: &[(u32, u32, f64)]) -> CouplingGraph {
    let labels: Vec<u32> = (0..v as u32).collect();
    CouplingGraph::from_edges(&labels, edges).unwrap()
}

fn row(mode: &str, hops: usize, negativity: f64, status: &str) -> ResultRow {
    ResultRow {
        mode: mode.into(),
        protocol: "none".into(),
        hops,
        path_rank: 0,
        path: "-".into(),
        trial: 0,
        qrem: "on".into(),
        configuration: "-".into(),
        negativity: Some(negativity),
        fidelity: None,
        shots: 1,
        seed: 0,
        status: status.into(),
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10_000))]

    #[test]
    fn gates_preserve_the_norm((n, seed, gates) in circuit_strategy()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut s = random_state(n, &mut rng);
        for g in &gates {
            s.apply(g).unwrap();
        }
        prop_assert!((s.norm() - 1.0).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn log_space_search_agrees((v, edges) in graph_strategy(), n in 2usize..6, m in 1usize..5) {
        let g = graph(v, &edges);
        let a = find_best_paths(&g, n, m).unwrap();
        let b = find_best_paths_log(&g, n, m).unwrap();
        prop_assert_eq!(a.paths.len(), b.paths.len());
        for (x, y) in a.paths.iter().zip(&b.paths) {
            prop_assert!((x.weight_product - y.weight_product).abs() <= 1e-9 * x.weight_product.max(1e-300));
        }
    }

    #[test]
    fn longer_paths_never_score_higher((v, edges) in graph_strategy(), n in 2usize..8) {
        let g = graph(v, &edges);
        let short = find_best_paths(&g, n, 1).unwrap();
        let long = find_best_paths(&g, n + 1, 1).unwrap();
        if let (Some(s), Some(l)) = (short.paths.first(), long.paths.first()) {
            prop_assert!(l.weight_product <= s.weight_product);
        }
    }

    #[test]
    fn aggregation_matches_recomputation(
        values in prop::collection::vec((0usize..3, 1usize..5, 0.0f64..0.5, prop::bool::weighted(0.9)), 0..60)
    ) {
        let modes = ["dynamic", "postselect", "swap"];
        let rows: Vec<ResultRow> = values
            .iter()
            .map(|&(m, h, n, ok)| row(modes[m], h, n, if ok { "ok" } else { "error" }))
            .collect();
        let stats = aggregate(&rows);
        for s in &stats {
            let mode = s.label.split(' ').next().unwrap();
            for p in &s.points {
                let xs: Vec<f64> = values
                    .iter()
                    .filter(|&&(m, h, _, ok)| ok && modes[m] == mode && h == p.hops)
                    .map(|v| v.2)
                    .collect();
                let k = xs.len() as f64;
                let mean = xs.iter().sum::<f64>() / k;
                // single-pass sums as an independent recomputation
                let (s1, s2) = xs.iter().fold((0.0, 0.0), |(a, b), x| (a + x, b + x * x));
                let var = if xs.len() > 1 { (s2 - s1 * s1 / k) / (k - 1.0) } else { 0.0 };
                let stderr = (var.max(0.0) / k).sqrt();
                prop_assert_eq!(p.count, xs.len());
                prop_assert!((p.mean - mean).abs() < 1e-12);
                prop_assert!((p.stderr - stderr).abs() < 1e-9);
                prop_assert_eq!(p.min, xs.iter().copied().fold(f64::INFINITY, f64::min));
                prop_assert_eq!(p.max, xs.iter().copied().fold(f64::NEG_INFINITY, f64::max));
            }
        }
        let ok_points: usize = stats.iter().map(|s| s.points.iter().map(|p| p.count).sum::<usize>()).sum();
        prop_assert_eq!(ok_points, values.iter().filter(|v| v.3).count());
    }

    #[test]
    fn reconstruction_is_always_physical(raw in prop::collection::vec(0.0f64..1.0, 36)) {
        let mut dists = BasisDistributions::new();
        for (k, pair) in BASIS_PAIRS.into_iter().enumerate() {
            let p = &raw[4 * k..4 * k + 4];
            let total: f64 = p.iter().sum::<f64>().max(1e-12);
            dists.insert(pair, [p[0] / total, p[1] / total, p[2] / total, p[3] / total]);
        }
        let rho = reconstruct(&dists).unwrap();
        let m = rho.matrix();
        prop_assert!(m.hermiticity_error() < DENSITY_TOLERANCE);
        prop_assert!((m.trace().re - 1.0).abs() < DENSITY_TOLERANCE);
        prop_assert!(rho.min_eigenvalue() > -DENSITY_TOLERANCE);
    }
}

#[test]
fn measurement_frequencies_follow_born_rule() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let state = random_state(3, &mut rng);
    for (q, basis) in [(0, Basis::Z), (1, Basis::X), (2, Basis::Z)] {
        let p1 = state.born_probabilities(&[q], &[basis]).unwrap()[1];
        let shots = 100_000;
        let ones = (0..shots)
            .filter(|_| state.measure(q, basis, &mut rng).unwrap().bit == 1)
            .count() as f64;
        let sigma = (p1 * (1.0 - p1) / shots as f64).sqrt();
        assert!((ones / shots as f64 - p1).abs() <= 5.0 * sigma, "qubit {q}");
    }
}

#[test]
fn equal_classes_give_equal_states() {
    for hops in 1..=8 {
        let mut reps: Vec<Option<PureState>> = vec![None; 4];
        for w in 0..1u64 << hops {
            let s = OutcomeVector::from_word(w, hops);
            let state = teleported_state(&s).unwrap();
            let k = discriminator(&s).index();
            match &reps[k] {
                Some(r) => assert!(r.distance_up_to_phase(&state) < 1e-9, "hops {hops}, word {w}"),
                None => reps[k] = Some(state),
            }
        }
        let found: Vec<&PureState> = reps.iter().flatten().collect();
        for (i, a) in found.iter().enumerate() {
            let n = negativity(&DensityMatrix::from_pure(a).unwrap()).unwrap();
            assert!((n - 0.5).abs() < 1e-9);
            for b in &found[i + 1..] {
                assert!(a.inner(b).norm() < 1.0 - 1e-6, "two classes share a state at {hops} hops");
            }
        }
    }
}
