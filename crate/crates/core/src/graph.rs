//! Weighted similarity graphs: construction, validation, and connectivity.
//!
//! Every constructor returns a [`SimilarityGraph`] whose weight matrix is
//! exactly symmetric, nonnegative, and free of self-loops, with degrees
//! cached alongside.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

/// Kernel weights below this are not stored.
pub const DEFAULT_DROP_BELOW: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityGraph {
    weights: CsrMatrix,
    degrees: Vec<f64>,
}

impl SimilarityGraph {
    /// Wraps an already symmetric weight matrix. The diagonal is discarded.
    pub fn from_symmetric(weights: CsrMatrix) -> Result<Self> {
        validate_entries(&weights)?;
        if !weights.is_symmetric() {
            return Err(Error::input("weight matrix is not symmetric"));
        }
        Ok(Self::from_valid(strip_diagonal(weights)))
    }

    fn from_valid(weights: CsrMatrix) -> Self {
        let degrees = weights.row_sums();
        SimilarityGraph { weights, degrees }
    }

    /// Builds a graph from an undirected edge list; repeated edges keep the largest weight.
    pub fn from_edges(n: usize, edges: impl IntoIterator<Item = (usize, usize, f64)>) -> Result<Self> {
        let mut triplets = Vec::new();
        for (i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::input(format!("edge ({i}, {j}) out of range for n = {n}")));
            }
            triplets.push((i, j, w));
            triplets.push((j, i, w));
        }
        symmetrize(&CsrMatrix::from_triplets_with(n, triplets, f64::max))
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.weights.dim()
    }

    #[inline]
    pub fn weights(&self) -> &CsrMatrix {
        &self.weights
    }

    #[inline]
    pub fn degrees(&self) -> &[f64] {
        &self.degrees
    }

    #[inline]
    pub fn degree(&self, v: usize) -> f64 {
        self.degrees[v]
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> f64 {
        self.weights.get(i, j)
    }

    pub fn neighbors(&self, v: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.row(v)
    }

    /// Number of undirected edges.
    pub fn edge_count(&self) -> usize {
        self.weights.nnz() / 2
    }

    /// Sum of weights over undirected edges.
    pub fn total_edge_weight(&self) -> f64 {
        self.weights
            .triplets()
            .filter(|&(i, j, _)| i < j)
            .map(|(_, _, w)| w)
            .sum()
    }

    /// Labels of connected components, numbered in order of their smallest vertex.
    pub fn connected_components(&self) -> Vec<usize> {
        let mask = vec![true; self.n()];
        self.components_within(&mask)
    }

    pub fn component_count(&self) -> usize {
        count_labels(&self.connected_components())
    }

    pub fn is_connected(&self) -> bool {
        self.n() > 0 && self.component_count() == 1
    }

    /// Component labels of the subgraph induced on `mask`; vertices outside get `usize::MAX`.
    pub fn components_within(&self, mask: &[bool]) -> Vec<usize> {
        let n = self.n();
        assert_eq!(mask.len(), n);
        let mut label = vec![usize::MAX; n];
        let mut next = 0;
        let mut queue = VecDeque::new();
        for start in 0..n {
            if !mask[start] || label[start] != usize::MAX {
                continue;
            }
            label[start] = next;
            queue.push_back(start);
            while let Some(u) = queue.pop_front() {
                for (v, w) in self.neighbors(u) {
                    if w > 0.0 && mask[v] && label[v] == usize::MAX {
                        label[v] = next;
                        queue.push_back(v);
                    }
                }
            }
            next += 1;
        }
        label
    }

    /// Whether the vertices with `mask[v]` form a nonempty connected induced subgraph.
    pub fn is_connected_subset(&self, mask: &[bool]) -> bool {
        let labels = self.components_within(mask);
        let mut seen = labels.iter().filter(|&&l| l != usize::MAX);
        match seen.next() {
            None => false,
            Some(_) => seen.all(|&l| l == 0),
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        self.weights.to_dense()
    }
}

fn count_labels(labels: &[usize]) -> usize {
    labels.iter().copied().filter(|&l| l != usize::MAX).max().map_or(0, |m| m + 1)
}

fn validate_entries(m: &CsrMatrix) -> Result<()> {
    for (i, j, w) in m.triplets() {
        if !w.is_finite() {
            return Err(Error::input(format!("non-finite weight at ({i}, {j})")));
        }
        if w < 0.0 {
            return Err(Error::input(format!("negative weight {w} at ({i}, {j})")));
        }
    }
    Ok(())
}

fn strip_diagonal(m: CsrMatrix) -> CsrMatrix {
    if m.triplets().all(|(i, j, _)| i != j) {
        return m;
    }
    let n = m.dim();
    CsrMatrix::from_triplets(n, m.triplets().filter(|&(i, j, _)| i != j).collect::<Vec<_>>())
}

/// Max-symmetrization `w_ij = max(W_ij, W_ji)` with the diagonal removed.
pub fn symmetrize(raw: &CsrMatrix) -> Result<SimilarityGraph> {
    validate_entries(raw)?;
    let n = raw.dim();
    let triplets: Vec<_> = raw
        .triplets()
        .filter(|&(i, j, _)| i != j)
        .flat_map(|(i, j, w)| [(i, j, w), (j, i, w)])
        .collect();
    Ok(SimilarityGraph::from_valid(CsrMatrix::from_triplets_with(
        n,
        triplets,
        f64::max,
    )))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    /// Great-circle distance between unit vectors.
    SphereGeodesic,
}

/// Points in R^dim stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    dim: usize,
    coords: Vec<f64>,
    metric: Metric,
}

impl PointCloud {
    pub fn new(rows: &[Vec<f64>], metric: Metric) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::input("point rows have differing lengths"));
        }
        Self::from_flat(dim, rows.concat(), metric)
    }

    pub fn from_flat(dim: usize, coords: Vec<f64>, metric: Metric) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::input("point coordinates do not form whole rows"));
        }
        if let Some(pos) = coords.iter().position(|c| !c.is_finite()) {
            return Err(Error::input(format!(
                "non-finite coordinate in point {}",
                pos / dim
            )));
        }
        let cloud = PointCloud { dim, coords, metric };
        if metric == Metric::SphereGeodesic {
            for i in 0..cloud.len() {
                let norm = cloud.point(i).iter().map(|x| x * x).sum::<f64>().sqrt();
                if (norm - 1.0).abs() > 1e-9 {
                    return Err(Error::input(format!(
                        "point {i} has norm {norm}, sphere metric needs unit vectors"
                    )));
                }
            }
        }
        Ok(cloud)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.coords.chunks_exact(self.dim)
    }

    /// Squared distance under the cloud's metric.
    pub fn distance_sq(&self, i: usize, j: usize) -> f64 {
        let (a, b) = (self.point(i), self.point(j));
        match self.metric {
            Metric::Euclidean => a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum(),
            Metric::SphereGeodesic => {
                let d = geodesic_distance(a, b);
                d * d
            }
        }
    }
}

/// Great-circle distance between two unit vectors.
pub fn geodesic_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos()
}

fn check_kernel_input(points: &PointCloud, sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::input(format!("sigma must be positive, got {sigma}")));
    }
    if points.len() < 2 {
        return Err(Error::input("need at least two points"));
    }
    Ok(())
}

/// Complete Gaussian-kernel graph `w_ij = exp(-d(x_i, x_j)^2 / sigma^2)`.
pub fn gaussian_similarity(points: &PointCloud, sigma: f64) -> Result<SimilarityGraph> {
    gaussian_similarity_with(points, sigma, DEFAULT_DROP_BELOW)
}

/// As [`gaussian_similarity`], dropping weights below `drop_below`.
pub fn gaussian_similarity_with(
    points: &PointCloud,
    sigma: f64,
    drop_below: f64,
) -> Result<SimilarityGraph> {
    check_kernel_input(points, sigma)?;
    let n = points.len();
    let inv_s2 = 1.0 / (sigma * sigma);
    // Each unordered pair is evaluated once and mirrored, so symmetry is exact.
    let upper: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            (i + 1..n).filter_map(move |j| {
                let w = (-points.distance_sq(i, j) * inv_s2).exp();
                (w >= drop_below && w > 0.0).then_some((i, j, w))
            })
        })
        .collect();
    Ok(mirror(n, upper))
}

fn mirror(n: usize, upper: Vec<(usize, usize, f64)>) -> SimilarityGraph {
    let mut triplets = Vec::with_capacity(2 * upper.len());
    for (i, j, w) in upper {
        triplets.push((i, j, w));
        triplets.push((j, i, w));
    }
    SimilarityGraph::from_valid(CsrMatrix::from_triplets_with(n, triplets, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EdgeWeight {
    Gaussian { sigma: f64 },
    Unit,
}

/// k-nearest-neighbor graph, max-symmetrized. Distance ties go to the lower index.
pub fn knn_graph(points: &PointCloud, k_nn: usize, weight: EdgeWeight) -> Result<SimilarityGraph> {
    let n = points.len();
    if let EdgeWeight::Gaussian { sigma } = weight {
        check_kernel_input(points, sigma)?;
    } else if n < 2 {
        return Err(Error::input("need at least two points"));
    }
    if k_nn == 0 || k_nn >= n {
        return Err(Error::input(format!("k_nn must satisfy 1 <= k_nn < n = {n}, got {k_nn}")));
    }
    let directed: Vec<(usize, usize, f64)> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (points.distance_sq(i, j), j))
                .collect();
            let by_dist = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
            cand.select_nth_unstable_by(k_nn - 1, by_dist);
            cand.truncate(k_nn);
            cand.into_iter().filter_map(move |(d2, j)| {
                let w = match weight {
                    EdgeWeight::Unit => 1.0,
                    EdgeWeight::Gaussian { sigma } => (-d2 / (sigma * sigma)).exp(),
                };
                (w >= DEFAULT_DROP_BELOW).then_some((i, j, w))
            })
        })
        .collect();
    symmetrize(&CsrMatrix::from_triplets_with(n, directed, f64::max))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatticeKind {
    Path,
    Cycle,
    Grid,
    Torus,
}

/// Unit-weight nearest-neighbor lattice. Path and cycle take one size, grid and
/// torus take two (rows, cols) laid out row-major.
pub fn lattice_graph(kind: LatticeKind, dims: &[usize]) -> Result<SimilarityGraph> {
    let expected = match kind {
        LatticeKind::Path | LatticeKind::Cycle => 1,
        LatticeKind::Grid | LatticeKind::Torus => 2,
    };
    if dims.len() != expected {
        return Err(Error::input(format!(
            "{kind:?} lattice takes {expected} dimension(s), got {}",
            dims.len()
        )));
    }
    if dims.iter().any(|&d| d == 0) {
        return Err(Error::input("lattice dimensions must be positive"));
    }
    let mut edges = Vec::new();
    match kind {
        LatticeKind::Path | LatticeKind::Cycle => {
            let n = dims[0];
            edges.extend((1..n).map(|i| (i - 1, i)));
            if kind == LatticeKind::Cycle && n > 2 {
                edges.push((n - 1, 0));
            }
        }
        LatticeKind::Grid | LatticeKind::Torus => {
            let (rows, cols) = (dims[0], dims[1]);
            let wrap = kind == LatticeKind::Torus;
            let id = |r: usize, c: usize| r * cols + c;
            for r in 0..rows {
                for c in 0..cols {
                    if c + 1 < cols {
                        edges.push((id(r, c), id(r, c + 1)));
                    } else if wrap && cols > 1 {
                        edges.push((id(r, c), id(r, 0)));
                    }
                    if r + 1 < rows {
                        edges.push((id(r, c), id(r + 1, c)));
                    } else if wrap && rows > 1 {
                        edges.push((id(r, c), id(0, c)));
                    }
                }
            }
        }
    }
    let n = dims.iter().product();
    SimilarityGraph::from_edges(n, edges.into_iter().map(|(i, j)| (i, j, 1.0)))
}

impl std::str::FromStr for LatticeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "path" => Ok(LatticeKind::Path),
            "cycle" => Ok(LatticeKind::Cycle),
            "grid" => Ok(LatticeKind::Grid),
            "torus" => Ok(LatticeKind::Torus),
            other => Err(Error::input(format!("unknown lattice kind '{other}'"))),
        }
    }
}

/// Parses `kind:dims` such as `path:10` or `torus:30x30`.
pub fn parse_lattice(spec: &str) -> Result<(LatticeKind, Vec<usize>)> {
    let (kind, dims) = spec
        .split_once(':')
        .ok_or_else(|| Error::input(format!("lattice '{spec}' is not of the form kind:dims")))?;
    let dims = dims
        .split('x')
        .map(|d| {
            d.trim()
                .parse::<usize>()
                .map_err(|_| Error::input(format!("bad lattice dimension '{d}'")))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((kind.parse()?, dims))
}
