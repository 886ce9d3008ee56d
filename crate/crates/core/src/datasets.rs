//! Synthetic inputs: Gaussian mixtures, interleaved moons, quasi-uniform sphere
//! points, and random connected weighted graphs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Metric, PointCloud, SimilarityGraph};

/// Points together with the labels of the component that generated them.
#[derive(Debug, Clone)]
pub struct LabeledPoints {
    pub points: PointCloud,
    pub labels: Vec<usize>,
    pub spec: DatasetSpec,
}

/// Parameters of a generated dataset, emitted as a sidecar next to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DatasetSpec {
    Gmm {
        sizes: Vec<usize>,
        means: Vec<Vec<f64>>,
        std_dev: f64,
        seed: u64,
    },
    Moons {
        n_moons: usize,
        n_per_moon: usize,
        noise: f64,
        radius: f64,
        horizontal_offset: f64,
        vertical_interleave: f64,
        seed: u64,
    },
    Sphere {
        n: usize,
        construction: String,
    },
}

fn rng_for(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Isotropic Gaussian clouds, `sizes[c]` points around `means[c]` with standard
/// deviation `std_dev` per coordinate.
pub fn gen_gmm(sizes: &[usize], means: &[Vec<f64>], std_dev: f64, seed: u64) -> Result<LabeledPoints> {
    if sizes.is_empty() || sizes.len() != means.len() {
        return Err(Error::input("need one mean per cloud and at least one cloud"));
    }
    if sizes.iter().any(|&s| s == 0) {
        return Err(Error::input("every cloud needs at least one point"));
    }
    let dim = means[0].len();
    if dim == 0 || means.iter().any(|m| m.len() != dim) {
        return Err(Error::input("means must share a positive dimension"));
    }
    let normal = Normal::new(0.0, std_dev).map_err(|e| Error::input(format!("bad std_dev: {e}")))?;
    let mut rng = rng_for(seed);
    let mut coords = Vec::new();
    let mut labels = Vec::new();
    for (c, (&size, mean)) in sizes.iter().zip(means).enumerate() {
        for _ in 0..size {
            coords.extend(mean.iter().map(|m| m + normal.sample(&mut rng)));
            labels.push(c);
        }
    }
    Ok(LabeledPoints {
        points: PointCloud::from_flat(dim, coords, Metric::Euclidean)?,
        labels,
        spec: DatasetSpec::Gmm {
            sizes: sizes.to_vec(),
            means: means.to_vec(),
            std_dev,
            seed,
        },
    })
}

/// Default geometry of the interleaved moons. Lengths are five times the
/// textbook unit-radius construction so that neighboring moons sit about three
/// kernel widths apart under a unit Gaussian bandwidth.
pub const MOON_RADIUS: f64 = 5.0;
pub const MOON_OFFSET: f64 = 5.0;
pub const MOON_INTERLEAVE: f64 = 2.0;
pub const MOON_NOISE: f64 = 0.5;

/// `n_moons` half-circles of radius [`MOON_RADIUS`]: moon `m` is centered at
/// `(m * MOON_OFFSET, MOON_INTERLEAVE * (m mod 2))` and is the upper
/// half-circle for even `m`, the lower one for odd `m`, so neighboring moons
/// interleave.
/// Arc parameters are evenly spaced on `[0, pi]` and Gaussian noise is added
/// to both coordinates.
pub fn gen_moons(n_moons: usize, n_per_moon: usize, noise: f64, seed: u64) -> Result<LabeledPoints> {
    if n_moons == 0 || n_per_moon == 0 {
        return Err(Error::input("need at least one moon with at least one point"));
    }
    if !(noise >= 0.0) {
        return Err(Error::input("noise must be nonnegative"));
    }
    let mut rng = rng_for(seed);
    let normal = Normal::new(0.0, noise.max(f64::MIN_POSITIVE)).unwrap();
    let mut coords = Vec::with_capacity(2 * n_moons * n_per_moon);
    let mut labels = Vec::with_capacity(n_moons * n_per_moon);
    for m in 0..n_moons {
        let cx = m as f64 * MOON_OFFSET;
        let cy = if m % 2 == 1 { MOON_INTERLEAVE } else { 0.0 };
        let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
        for j in 0..n_per_moon {
            let t = if n_per_moon == 1 {
                std::f64::consts::FRAC_PI_2
            } else {
                std::f64::consts::PI * j as f64 / (n_per_moon - 1) as f64
            };
            let mut x = cx + MOON_RADIUS * t.cos();
            let mut y = cy + sign * MOON_RADIUS * t.sin();
            if noise > 0.0 {
                x += normal.sample(&mut rng);
                y += normal.sample(&mut rng);
            }
            coords.extend([x, y]);
            labels.push(m);
        }
    }
    Ok(LabeledPoints {
        points: PointCloud::from_flat(2, coords, Metric::Euclidean)?,
        labels,
        spec: DatasetSpec::Moons {
            n_moons,
            n_per_moon,
            noise,
            radius: MOON_RADIUS,
            horizontal_offset: MOON_OFFSET,
            vertical_interleave: MOON_INTERLEAVE,
            seed,
        },
    })
}

/// Golden-angle spiral on the unit sphere with the geodesic metric.
pub fn gen_sphere_points(n: usize) -> Result<PointCloud> {
    if n < 4 {
        return Err(Error::input("sphere lattice needs n >= 4"));
    }
    let golden = std::f64::consts::PI * (3.0 - 5.0f64.sqrt());
    let mut coords = Vec::with_capacity(3 * n);
    for i in 0..n {
        let z = 1.0 - (2.0 * i as f64 + 1.0) / n as f64;
        let rho = (1.0 - z * z).sqrt();
        let theta = golden * i as f64;
        let (x, y) = (rho * theta.cos(), rho * theta.sin());
        let norm = (x * x + y * y + z * z).sqrt();
        coords.extend([x / norm, y / norm, z / norm]);
    }
    PointCloud::from_flat(3, coords, Metric::SphereGeodesic)
}

pub fn sphere_spec(n: usize) -> DatasetSpec {
    DatasetSpec::Sphere {
        n,
        construction: "golden-angle spiral".into(),
    }
}

/// Random connected graph: a random spanning tree plus each remaining pair
/// independently with probability `p`; weights uniform in `[w_min, 1]`.
pub fn random_connected_graph<R: Rng + ?Sized>(n: usize, p: f64, w_min: f64, rng: &mut R) -> Result<SimilarityGraph> {
    if n == 0 {
        return Err(Error::input("graph needs at least one vertex"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        order.swap(i, rng.random_range(0..=i));
    }
    let mut edges = Vec::new();
    let mut present = std::collections::HashSet::new();
    for i in 1..n {
        let parent = order[rng.random_range(0..i)];
        let (a, b) = (order[i].min(parent), order[i].max(parent));
        present.insert((a, b));
        edges.push((a, b, rng.random_range(w_min..=1.0)));
    }
    for a in 0..n {
        for b in a + 1..n {
            if !present.contains(&(a, b)) && rng.random_bool(p) {
                edges.push((a, b, rng.random_range(w_min..=1.0)));
            }
        }
    }
    SimilarityGraph::from_edges(n, edges)
}
