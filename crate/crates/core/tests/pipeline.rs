use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dirpart::datasets::{gen_gmm, gen_moons, random_connected_graph, DatasetSpec, MOON_NOISE};
use dirpart::graph::gaussian_similarity;
use dirpart::io::{
    read_labels, read_matrix_market, read_points_csv, write_labels_csv, write_matrix_market, write_points_csv,
};
use dirpart::metrics::purity;
use dirpart::rearrangement::{run, AlphaPolicy, RunConfig};
use dirpart::{Metric, SimilarityGraph};

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("dirpart-pipeline-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn separated_clouds_are_recovered() {
    let data = gen_gmm(&[80, 60], &[vec![0.0, 0.0], vec![4.0, 0.0]], 0.5, 3).unwrap();
    let g = gaussian_similarity(&data.points, 1.0).unwrap();
    let mut cfg = RunConfig::new(2, 1.0);
    cfg.alpha = AlphaPolicy::Scale(2.0);
    cfg.restarts = 5;
    let report = run(&g, &cfg).unwrap();
    assert!(report.converged);
    assert!(purity(&report.labels, &data.labels).unwrap() >= 0.99);
}

#[test]
fn five_moons_converge_quickly() {
    let data = gen_moons(5, 300, MOON_NOISE, 11).unwrap();
    let g = gaussian_similarity(&data.points, 1.0).unwrap();
    let mut cfg = RunConfig::new(5, 1.0);
    cfg.alpha = AlphaPolicy::Scale(5.0);
    cfg.seed = 11;
    let report = run(&g, &cfg).unwrap();
    assert!(report.converged);
    assert!(report.iterations <= 30, "{} iterations", report.iterations);
    for pair in report.energy_history.windows(2) {
        assert!(pair[1] < pair[0]);
    }
}

#[test]
fn generators_are_deterministic() {
    let a = gen_moons(3, 40, 0.2, 5).unwrap();
    let b = gen_moons(3, 40, 0.2, 5).unwrap();
    assert_eq!(a.points, b.points);
    assert_eq!(a.labels, b.labels);
    let c = gen_gmm(&[10, 20], &[vec![0.0], vec![1.0]], 1.0, 9).unwrap();
    let d = gen_gmm(&[10, 20], &[vec![0.0], vec![1.0]], 1.0, 9).unwrap();
    assert_eq!(c.points, d.points);
    assert_ne!(a.points, gen_moons(3, 40, 0.2, 6).unwrap().points);
}

#[test]
fn dataset_spec_round_trips_through_json() {
    let data = gen_moons(2, 10, 0.1, 1).unwrap();
    let json = serde_json::to_string(&data.spec).unwrap();
    assert!(json.contains("\"kind\":\"moons\""));
    let back: DatasetSpec = serde_json::from_str(&json).unwrap();
    assert_eq!(back, data.spec);
}

#[test]
fn files_round_trip() {
    let dir = scratch("io");
    let g = random_connected_graph(25, 0.2, 0.05, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
    let mtx = dir.join("g.mtx");
    write_matrix_market(&mtx, g.weights()).unwrap();
    let back = SimilarityGraph::from_symmetric(read_matrix_market(&mtx).unwrap()).unwrap();
    assert_eq!(back.n(), g.n());
    for i in 0..g.n() {
        for j in 0..g.n() {
            assert_eq!(back.weight(i, j), g.weight(i, j));
        }
    }

    let data = gen_gmm(&[5, 7], &[vec![0.0, 1.0, 2.0], vec![3.0, 4.0, 5.0]], 0.3, 2).unwrap();
    let csv = dir.join("points.csv");
    write_points_csv(&csv, &data.points).unwrap();
    assert_eq!(read_points_csv(&csv, Metric::Euclidean).unwrap(), data.points);

    let labels = dir.join("labels.csv");
    write_labels_csv(&labels, &data.labels).unwrap();
    assert_eq!(read_labels(&labels, 12).unwrap(), data.labels);
    assert!(read_labels(&labels, 13).is_err());
    std::fs::remove_dir_all(dir).unwrap();
}
