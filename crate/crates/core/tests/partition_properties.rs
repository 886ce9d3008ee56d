use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dirpart::datasets::random_connected_graph;
use dirpart::dirichlet::{
    brute_force_partition, dirichlet_eigenvalue, dirichlet_eigenvalue_with, partition_objective,
    perimeter_volume_bound, DirichletOptions, SolvePath, VertexSubset,
};
use dirpart::graph::{lattice_graph, LatticeKind};
use dirpart::metrics::{nmf_identity_check, purity};
use dirpart::rearrangement::{init_random, init_voronoi, resolve_alpha, run, AlphaPolicy, Problem, RunConfig};
use dirpart::SimilarityGraph;

fn graph(seed: u64, n: usize) -> SimilarityGraph {
    random_connected_graph(n, 0.2, 0.05, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn dense() -> DirichletOptions {
    DirichletOptions {
        path: SolvePath::Dense,
        ..DirichletOptions::default()
    }
}

/// Minimum over every labeling in `0..k`^n that uses all labels, without any
/// symmetry reduction.
fn naive_optimum(g: &SimilarityGraph, r: f64, k: usize) -> f64 {
    let n = g.n();
    let mut best = f64::INFINITY;
    for code in 0..k.pow(n as u32) {
        let labels: Vec<usize> = (0..n).map(|v| code / k.pow(v as u32) % k).collect();
        if (0..k).all(|c| labels.contains(&c)) {
            best = best.min(partition_objective(g, r, &labels, k).unwrap().total);
        }
    }
    best
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dirichlet_eigenvalue_grows_under_removal(seed in any::<u64>(), n in 3usize..40, r in 0.0f64..=1.0) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 7);
        let mut mask = vec![true; n];
        let mut prev = dirichlet_eigenvalue_with(&g, r, &VertexSubset::from_mask(mask.clone()), &dense()).unwrap().lambda;
        while mask.iter().filter(|&&m| m).count() > 1 {
            let members: Vec<usize> = (0..n).filter(|&v| mask[v]).collect();
            mask[members[rng.random_range(0..members.len())]] = false;
            let subset = VertexSubset::from_mask(mask.clone());
            let lambda = dirichlet_eigenvalue_with(&g, r, &subset, &dense()).unwrap().lambda;
            prop_assert!(lambda >= prev - 1e-10);
            let bound = perimeter_volume_bound(&g, r, &subset).unwrap();
            prop_assert!(lambda <= bound.bound + 1e-10);
            prev = lambda;
        }
    }

    #[test]
    fn dirichlet_eigenvector_is_positive_on_connected_subsets(seed in any::<u64>(), n in 4usize..40, r in 0.0f64..=1.0) {
        let g = graph(seed, n);
        let labels = init_voronoi(&g, 2, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let subset = VertexSubset::from_labels(&labels, 0);
        prop_assert!(g.is_connected_subset(subset.mask()));
        let d = dirichlet_eigenvalue(&g, r, &subset).unwrap();
        for v in 0..n {
            if subset.contains(v) {
                prop_assert!(d.psi[v] > 0.0);
            } else {
                prop_assert_eq!(d.psi[v], 0.0);
            }
        }
        let mass: f64 = (0..n).map(|v| g.degree(v).powf(r) * d.psi[v] * d.psi[v]).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn brute_force_matches_naive_enumeration(seed in any::<u64>(), n in 3usize..8, r in 0.0f64..=1.0, k in 2usize..4) {
        let g = graph(seed, n);
        let best = brute_force_partition(&g, r, k).unwrap();
        let naive = naive_optimum(&g, r, k);
        prop_assert!((best.objective - naive).abs() <= 1e-12 * naive.max(1.0));
        let again = partition_objective(&g, r, &best.labels, k).unwrap().total;
        prop_assert!((again - best.objective).abs() <= 1e-12 * again.max(1.0));
    }

    #[test]
    fn objective_and_purity_ignore_label_names(seed in any::<u64>(), n in 4usize..30, k in 2usize..4) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 9);
        let labels = init_random(n, k, &mut rng).unwrap();
        let truth = init_random(n, k, &mut rng).unwrap();
        let shift: Vec<usize> = labels.iter().map(|&l| (l + 1) % k).collect();
        let a = partition_objective(&g, 0.5, &labels, k).unwrap().total;
        let b = partition_objective(&g, 0.5, &shift, k).unwrap().total;
        prop_assert!((a - b).abs() <= 1e-12 * a.max(1.0));
        prop_assert_eq!(purity(&labels, &truth).unwrap(), purity(&shift, &truth).unwrap());
        prop_assert_eq!(purity(&labels, &labels).unwrap(), 1.0);
    }

    #[test]
    fn nmf_identity_on_connected_partitions(seed in any::<u64>(), n in 4usize..30, k in 2usize..4) {
        let g = graph(seed, n);
        let labels = init_voronoi(&g, k, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        let check = nmf_identity_check(&g, &labels).unwrap();
        prop_assert!(check.residual <= 1e-8, "{:?}", check);
    }

    #[test]
    fn rearrangement_invariants(seed in any::<u64>(), n in 6usize..40, k in 2usize..4, r in 0.0f64..=1.0) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 11);
        let alpha = resolve_alpha(AlphaPolicy::Scale(k as f64), &g, r).unwrap();
        let labels = init_random(n, k, &mut rng).unwrap();
        let pinned: Vec<Option<usize>> = (0..n).map(|v| (v % 5 == 0).then_some(labels[v])).collect();
        let problem = Problem::new(&g, k, r, alpha)
            .unwrap()
            .with_tolerance(1e-10, 200_000)
            .with_supervision(pinned.clone())
            .unwrap();
        let mut state = problem.initial_state(labels).unwrap();
        for _ in 0..100 {
            let lambdas: f64 = state.eigenpairs.iter().map(|e| e.lambda).sum();
            prop_assert!((state.energy - lambdas).abs() <= 1e-10);
            let phis = state.phis();
            for v in 0..n {
                let total: f64 = phis.iter().map(|p| p[v]).sum();
                prop_assert_eq!(total, 1.0);
                prop_assert!(phis.iter().all(|p| p[v] == 0.0 || p[v] == 1.0));
                if let Some(l) = pinned[v] {
                    prop_assert_eq!(state.labels[v], l);
                }
            }
            let outcome = problem.step(&state).unwrap();
            if !outcome.changed {
                break;
            }
            if outcome.reseeds.is_empty() {
                prop_assert!(outcome.state.energy < state.energy + 1e-8);
            }
            state = outcome.state;
        }
        // At the fixed point the relaxed energy lies below the exact objective.
        let exact = partition_objective(&g, r, &state.labels, k).unwrap().total;
        prop_assert!(state.energy <= exact + 1e-8);
    }
}

#[test]
fn two_triangles_split_into_components() {
    let e = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
    let g = SimilarityGraph::from_edges(6, e.iter().map(|&(i, j)| (i, j, 1.0))).unwrap();
    let best = brute_force_partition(&g, 0.0, 2).unwrap();
    assert_eq!(best.labels, vec![0, 0, 0, 1, 1, 1]);
    assert!(best.objective.abs() < 1e-12);
    for alpha in [0.1, 1.0, 10.0] {
        let mut cfg = RunConfig::new(2, 0.0);
        cfg.alpha = AlphaPolicy::Explicit(alpha);
        cfg.restarts = 5;
        let report = run(&g, &cfg).unwrap();
        assert_eq!(report.labels[0..3], [report.labels[0]; 3]);
        assert_eq!(report.labels[3..6], [report.labels[3]; 3]);
        assert_ne!(report.labels[0], report.labels[3]);
        let exact = partition_objective(&g, 0.0, &report.labels, 2).unwrap().total;
        assert!(exact.abs() < 1e-12);
    }
}

#[test]
fn runs_are_deterministic_under_a_seed() {
    let g = lattice_graph(LatticeKind::Grid, &[8, 8]).unwrap();
    let mut cfg = RunConfig::new(3, 0.0);
    cfg.restarts = 4;
    cfg.seed = 42;
    let a = run(&g, &cfg).unwrap();
    let b = run(&g, &cfg).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.energy_history, b.energy_history);
    assert_eq!(a.confidences, b.confidences);
    assert_eq!(a.restart, b.restart);
}

#[test]
fn path_run_finds_the_balanced_split() {
    let g = lattice_graph(LatticeKind::Path, &[10]).unwrap();
    let mut cfg = RunConfig::new(2, 0.0);
    cfg.alpha = AlphaPolicy::Scale(2.0);
    cfg.restarts = 10;
    cfg.seed = 7;
    let report = run(&g, &cfg).unwrap();
    let first = report.labels[0];
    assert!(report.labels[..5].iter().all(|&l| l == first));
    assert!(report.labels[5..].iter().all(|&l| l != first));
    assert_eq!(report.representatives.len(), 2);
    for (i, &rep) in report.representatives.iter().enumerate() {
        assert_eq!(report.labels[rep], i);
    }
}

#[test]
fn brute_force_budget_guard() {
    let g = lattice_graph(LatticeKind::Path, &[13]).unwrap();
    assert!(brute_force_partition(&g, 0.0, 2).is_err());
    let g = lattice_graph(LatticeKind::Path, &[12]).unwrap();
    assert!(brute_force_partition(&g, 0.0, 2).is_ok());
}
