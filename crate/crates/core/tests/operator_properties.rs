use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dirpart::datasets::random_connected_graph;
use dirpart::eigen::{ground_state, ground_state_dense, SymmetricOperator};
use dirpart::rearrangement::relaxed_energy_with;
use dirpart::{LaplacianOperator, SchrodingerOperator, SimilarityGraph};

fn graph(seed: u64, n: usize) -> SimilarityGraph {
    random_connected_graph(n, 0.3, 0.05, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn random_phi(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(0.0..=1.0)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn standard_form_is_symmetric_and_psd(seed in any::<u64>(), n in 2usize..30, r in 0.0f64..=1.0, alpha in 0.0f64..5.0) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 1);
        let phi = random_phi(&mut rng, n);
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, r).unwrap(), alpha, phi).unwrap();
        let h = op.standard_form();
        let dense = h.to_dense();
        prop_assert_eq!(&dense, &dense.transpose());
        for _ in 0..5 {
            let (x, y) = (random_vec(&mut rng, n), random_vec(&mut rng, n));
            let (mut hx, mut hy) = (vec![0.0; n], vec![0.0; n]);
            h.apply(&x, &mut hx);
            h.apply(&y, &mut hy);
            let scale = dense.norm() * dot(&x, &x).sqrt() * dot(&y, &y).sqrt();
            prop_assert!((dot(&hx, &y) - dot(&x, &hy)).abs() <= 1e-10 * scale.max(1.0));
            prop_assert!(dot(&hx, &x) / dot(&x, &x) >= -1e-10);
            let assembled = &dense * DVector::from_vec(x.clone());
            for i in 0..n {
                prop_assert!((assembled[i] - hx[i]).abs() <= 1e-10 * dense.norm().max(1.0));
            }
        }
    }

    #[test]
    fn standard_form_spectrum_matches_the_operator(seed in any::<u64>(), r in 0.0f64..=1.0) {
        let g = graph(seed, 6);
        let lap = LaplacianOperator::new(&g, r).unwrap();
        let mut expected: Vec<f64> = lap.to_dense().complex_eigenvalues().iter().map(|c| c.re).collect();
        let mut got: Vec<f64> = lap.standard_form().to_dense().symmetric_eigenvalues().iter().copied().collect();
        expected.sort_by(f64::total_cmp);
        got.sort_by(f64::total_cmp);
        for (a, b) in expected.iter().zip(&got) {
            prop_assert!((a - b).abs() <= 1e-10, "{:?} vs {:?}", expected, got);
        }
    }

    #[test]
    fn matrix_free_apply_matches_assembled(seed in any::<u64>(), n in 2usize..25, r in 0.0f64..=1.0) {
        let g = graph(seed, n);
        let lap = LaplacianOperator::new(&g, r).unwrap();
        let x = random_vec(&mut ChaCha8Rng::seed_from_u64(seed ^ 2), n);
        let free = lap.apply(&x).unwrap();
        let assembled = lap.to_dense() * DVector::from_vec(x);
        for i in 0..n {
            prop_assert!((free[i] - assembled[i]).abs() <= 1e-10);
        }
    }

    #[test]
    fn zero_potential_ground_state_is_the_kernel(seed in any::<u64>(), n in 2usize..30, r in 0.0f64..=1.0) {
        let g = graph(seed, n);
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, r).unwrap(), 0.0, vec![1.0; n]).unwrap();
        let gs = ground_state_dense(&op).unwrap();
        prop_assert!(gs.lambda.abs() <= 1e-10);
        // eta = D^{r/2} psi is proportional to d^{r/2}, so psi is constant.
        let c = gs.psi[0];
        for &p in &gs.psi {
            prop_assert!((p - c).abs() <= 1e-8);
        }
        let mass: f64 = g.degrees().iter().map(|d| d.powf(r) * c * c).sum();
        prop_assert!((mass - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn ground_state_is_rayleigh_optimal_and_positive(seed in any::<u64>(), n in 3usize..40, r in 0.0f64..=1.0, alpha in 0.01f64..10.0) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 3);
        let phi = random_phi(&mut rng, n);
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, r).unwrap(), alpha, phi).unwrap();
        let gs = ground_state(&op, 1e-10, 100_000).unwrap();
        let oracle = ground_state_dense(&op).unwrap();
        prop_assert!((gs.lambda - oracle.lambda).abs() <= 1e-8 * oracle.lambda.abs().max(1.0));
        let h: DMatrix<f64> = op.standard_form().to_dense();
        for _ in 0..100 {
            let x = DVector::from_vec(random_vec(&mut rng, n));
            let q = x.dot(&(&h * &x)) / x.dot(&x);
            prop_assert!(q >= gs.lambda - 1e-8);
        }
        // The potential is finite everywhere and the graph connected.
        prop_assert!(gs.psi.iter().all(|&p| p > 0.0), "{:?}", gs.psi);
    }

    #[test]
    fn relaxed_energy_increases_with_alpha(seed in any::<u64>(), n in 3usize..30, r in 0.0f64..=1.0) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 4);
        let mut phi = random_phi(&mut rng, n);
        phi[0] = 0.0;
        let mut prev = f64::NEG_INFINITY;
        for alpha in [0.1, 0.5, 2.0, 10.0, 50.0] {
            let lambda = relaxed_energy_with(&g, r, alpha, &phi, 1e-11, 200_000).unwrap().lambda;
            prop_assert!(lambda > prev - 1e-8);
            prev = lambda;
        }
    }

    #[test]
    fn relaxed_energy_is_concave_in_phi(seed in any::<u64>(), n in 3usize..30, r in 0.0f64..=1.0, alpha in 0.1f64..20.0) {
        let g = graph(seed, n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 5);
        let (a, b) = (random_phi(&mut rng, n), random_phi(&mut rng, n));
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| 0.5 * (x + y)).collect();
        let energy = |phi: &[f64]| relaxed_energy_with(&g, r, alpha, phi, 1e-11, 200_000).unwrap().lambda;
        prop_assert!(energy(&mid) >= 0.5 * energy(&a) + 0.5 * energy(&b) - 1e-8);
    }
}
