//! Exact Dirichlet eigenvalues of vertex subsets and the partition objective
//! `sum_i lambda(V_i)`, with an exhaustive oracle for small graphs.

use rayon::prelude::*;
use serde::Serialize;

use crate::eigen::{self, dense_lowest};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::laplacian::StandardForm;

/// Subsets up to this size are solved densely under [`SolvePath::Auto`].
pub const DENSE_SUBSET_MAX: usize = 500;
/// Default cap on `k^n` for [`brute_force_partition`]: admits n <= 12 at k = 2 and n <= 8 at k = 3.
pub const DEFAULT_BRUTE_FORCE_BUDGET: u128 = 6561;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VertexSubset {
    mask: Vec<bool>,
    size: usize,
}

impl VertexSubset {
    pub fn from_mask(mask: Vec<bool>) -> Self {
        let size = mask.iter().filter(|&&m| m).count();
        VertexSubset { mask, size }
    }

    pub fn from_indices(n: usize, members: &[usize]) -> Result<Self> {
        let mut mask = vec![false; n];
        for &v in members {
            if v >= n {
                return Err(Error::input(format!("vertex {v} out of range for n = {n}")));
            }
            mask[v] = true;
        }
        Ok(Self::from_mask(mask))
    }

    /// Vertices carrying `label`.
    pub fn from_labels(labels: &[usize], label: usize) -> Self {
        Self::from_mask(labels.iter().map(|&l| l == label).collect())
    }

    pub fn full(n: usize) -> Self {
        Self::from_mask(vec![true; n])
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn contains(&self, v: usize) -> bool {
        self.mask[v]
    }

    pub fn members(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(v, &m)| m.then_some(v))
            .collect()
    }

    pub fn complement(&self) -> Self {
        Self::from_mask(self.mask.iter().map(|m| !m).collect())
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DirichletResult {
    pub lambda: f64,
    /// Eigenvector on all of V, zero off the subset, with `sum_S d^r psi^2 = 1`.
    pub psi: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolvePath {
    /// Dense up to [`DENSE_SUBSET_MAX`] members, iterative above.
    #[default]
    Auto,
    Dense,
    Iterative,
}

#[derive(Debug, Clone, Copy)]
pub struct DirichletOptions {
    pub path: SolvePath,
    pub tol: f64,
    pub max_matvecs: usize,
}

impl Default for DirichletOptions {
    fn default() -> Self {
        DirichletOptions {
            path: SolvePath::Auto,
            tol: 1e-9,
            max_matvecs: 200_000,
        }
    }
}

pub fn dirichlet_eigenvalue(graph: &SimilarityGraph, r: f64, subset: &VertexSubset) -> Result<DirichletResult> {
    dirichlet_eigenvalue_with(graph, r, subset, &DirichletOptions::default())
}

/// Smallest eigenpair of the principal submatrix of `Delta_r` on `subset`.
pub fn dirichlet_eigenvalue_with(
    graph: &SimilarityGraph,
    r: f64,
    subset: &VertexSubset,
    opts: &DirichletOptions,
) -> Result<DirichletResult> {
    if subset.mask().len() != graph.n() {
        return Err(Error::input("subset mask does not match the graph size"));
    }
    if subset.is_empty() {
        return Err(Error::input("Dirichlet eigenvalue of an empty subset"));
    }
    let members = subset.members();
    let h = StandardForm::restricted(graph, r, &members)?;
    let dense = match opts.path {
        SolvePath::Dense => true,
        SolvePath::Iterative => false,
        SolvePath::Auto => members.len() <= DENSE_SUBSET_MAX,
    };
    let (lambda, eta) = if dense {
        dense_lowest(h.to_dense())
    } else {
        let scale = (r != 0.0).then(|| h.scale());
        let pair = eigen::lowest_eigenpair(&h, None, &[], scale, opts.tol, opts.max_matvecs)?;
        (pair.value, pair.vector)
    };
    let mut local = h.back_transform(&eta);
    if local.iter().sum::<f64>() < 0.0 {
        local.iter_mut().for_each(|x| *x = -*x);
    }
    let mut psi = vec![0.0; graph.n()];
    for (&v, x) in members.iter().zip(local) {
        psi[v] = x;
    }
    Ok(DirichletResult { lambda, psi })
}

/// Exact objective of a labeling and its per-cluster Dirichlet eigenvalues.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionObjective {
    pub total: f64,
    pub per_cluster: Vec<f64>,
}

/// Checks that `labels` covers all of V with values in `0..k` and no empty cluster.
pub fn validate_labels(labels: &[usize], n: usize, k: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::input(format!(
            "{} labels for {n} vertices",
            labels.len()
        )));
    }
    let mut counts = vec![0usize; k];
    for (v, &l) in labels.iter().enumerate() {
        if l >= k {
            return Err(Error::input(format!("vertex {v} has label {l}, expected < {k}")));
        }
        counts[l] += 1;
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(Error::input(format!("cluster {empty} is empty")));
    }
    Ok(())
}

pub fn partition_objective(graph: &SimilarityGraph, r: f64, labels: &[usize], k: usize) -> Result<PartitionObjective> {
    partition_objective_with(graph, r, labels, k, &DirichletOptions::default())
}

pub fn partition_objective_with(
    graph: &SimilarityGraph,
    r: f64,
    labels: &[usize],
    k: usize,
    opts: &DirichletOptions,
) -> Result<PartitionObjective> {
    validate_labels(labels, graph.n(), k)?;
    let per_cluster = (0..k)
        .into_par_iter()
        .map(|i| dirichlet_eigenvalue_with(graph, r, &VertexSubset::from_labels(labels, i), opts).map(|d| d.lambda))
        .collect::<Result<Vec<_>>>()?;
    Ok(PartitionObjective {
        total: per_cluster.iter().sum(),
        per_cluster,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct PerimeterBound {
    /// `sum_{i in S, j not in S} w_ij`
    pub boundary: f64,
    /// `sum_{i in S} d_i^r`
    pub volume: f64,
    pub bound: f64,
}

/// Upper bound on `lambda(S)` from the indicator test function.
pub fn perimeter_volume_bound(graph: &SimilarityGraph, r: f64, subset: &VertexSubset) -> Result<PerimeterBound> {
    if subset.is_empty() {
        return Err(Error::input("perimeter bound of an empty subset"));
    }
    let mut boundary = 0.0;
    let mut volume = 0.0;
    for v in subset.members() {
        volume += graph.degree(v).powf(r);
        boundary += graph
            .neighbors(v)
            .filter(|&(u, _)| !subset.contains(u))
            .map(|(_, w)| w)
            .sum::<f64>();
    }
    Ok(PerimeterBound {
        boundary,
        volume,
        bound: boundary / volume,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BruteForceResult {
    pub labels: Vec<usize>,
    pub objective: f64,
    pub per_cluster: Vec<f64>,
    /// Number of set partitions evaluated.
    pub evaluated: usize,
}

pub fn brute_force_partition(graph: &SimilarityGraph, r: f64, k: usize) -> Result<BruteForceResult> {
    brute_force_partition_with_budget(graph, r, k, DEFAULT_BRUTE_FORCE_BUDGET)
}

/// Exhaustive minimum of the exact objective over all partitions into `k`
/// nonempty parts. Labelings are enumerated as restricted growth strings (vertex 0
/// in cluster 0, each new cluster opened in order), one per partition; among
/// equal objectives the lexicographically smallest labeling wins.
pub fn brute_force_partition_with_budget(
    graph: &SimilarityGraph,
    r: f64,
    k: usize,
    budget: u128,
) -> Result<BruteForceResult> {
    let n = graph.n();
    if k == 0 || k > n {
        return Err(Error::input(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let size = (k as u128).checked_pow(n as u32);
    if size.is_none_or(|s| s > budget) {
        return Err(Error::input(format!(
            "brute force over k^n = {k}^{n} labelings exceeds the budget of {budget}"
        )));
    }
    let labelings = restricted_growth_strings(n, k);
    let opts = DirichletOptions {
        path: SolvePath::Dense,
        ..DirichletOptions::default()
    };
    let scored: Vec<PartitionObjective> = labelings
        .par_iter()
        .map(|labels| partition_objective_with(graph, r, labels, k, &opts))
        .collect::<Result<_>>()?;

    let mut best = 0;
    for (i, obj) in scored.iter().enumerate().skip(1) {
        let incumbent = scored[best].total;
        if obj.total < incumbent - 1e-12 * incumbent.abs().max(1.0) {
            best = i;
        }
    }
    Ok(BruteForceResult {
        labels: labelings[best].clone(),
        objective: scored[best].total,
        per_cluster: scored[best].per_cluster.clone(),
        evaluated: labelings.len(),
    })
}

/// All surjective labelings onto `0..k` in canonical form, in lexicographic order.
fn restricted_growth_strings(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn extend(prefix: &mut Vec<usize>, used: usize, n: usize, k: usize, out: &mut Vec<Vec<usize>>) {
        let left = n - prefix.len();
        if left == 0 {
            if used == k {
                out.push(prefix.clone());
            }
            return;
        }
        // Not enough vertices left to open the remaining clusters.
        if k - used > left {
            return;
        }
        for l in 0..=used.min(k - 1) {
            prefix.push(l);
            extend(prefix, used.max(l + 1), n, k, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    let mut prefix = Vec::with_capacity(n);
    extend(&mut prefix, 0, n, k, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{lattice_graph, LatticeKind};
    use approx::assert_relative_eq;

    fn two_triangles() -> SimilarityGraph {
        let e = [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)];
        SimilarityGraph::from_edges(6, e.iter().map(|&(i, j)| (i, j, 1.0))).unwrap()
    }

    #[test]
    fn p3_values() {
        let g = lattice_graph(LatticeKind::Path, &[3]).unwrap();
        let end = VertexSubset::from_indices(3, &[0]).unwrap();
        let d = dirichlet_eigenvalue(&g, 0.0, &end).unwrap();
        assert_relative_eq!(d.lambda, 1.0, epsilon = 1e-14);
        assert_eq!(&d.psi[1..], &[0.0, 0.0]);

        let pair = VertexSubset::from_indices(3, &[0, 1]).unwrap();
        let d = dirichlet_eigenvalue(&g, 0.0, &pair).unwrap();
        assert_relative_eq!(d.lambda, (3.0 - 5.0f64.sqrt()) / 2.0, epsilon = 1e-14);
        assert!(d.psi[0] > 0.0 && d.psi[1] > 0.0 && d.psi[2] == 0.0);

        let all = dirichlet_eigenvalue(&g, 0.0, &VertexSubset::full(3)).unwrap();
        assert!(all.lambda.abs() < 1e-14);

        let b = perimeter_volume_bound(&g, 0.0, &end).unwrap();
        assert_eq!((b.boundary, b.volume, b.bound), (1.0, 1.0, 1.0));
        let b = perimeter_volume_bound(&g, 1.0, &VertexSubset::full(3)).unwrap();
        assert_eq!(b.boundary, 0.0);
        assert_eq!(b.bound, 0.0);
    }

    #[test]
    fn empty_inputs_rejected() {
        let g = lattice_graph(LatticeKind::Path, &[3]).unwrap();
        let empty = VertexSubset::from_mask(vec![false; 3]);
        assert!(matches!(dirichlet_eigenvalue(&g, 0.0, &empty), Err(Error::Input(_))));
        assert!(perimeter_volume_bound(&g, 0.0, &empty).is_err());
        let err = partition_objective(&g, 0.0, &[0, 0, 2], 3).unwrap_err();
        assert!(err.to_string().contains("cluster 1"));
    }

    #[test]
    fn normalization_with_r() {
        let g = lattice_graph(LatticeKind::Grid, &[3, 4]).unwrap();
        let s = VertexSubset::from_indices(12, &[0, 1, 4, 5, 6]).unwrap();
        for r in [0.0, 0.5, 1.0] {
            let d = dirichlet_eigenvalue(&g, r, &s).unwrap();
            let mass: f64 = d.psi.iter().zip(g.degrees()).map(|(p, deg)| deg.powf(r) * p * p).sum();
            assert_relative_eq!(mass, 1.0, epsilon = 1e-10);
            let it = dirichlet_eigenvalue_with(
                &g,
                r,
                &s,
                &DirichletOptions {
                    path: SolvePath::Iterative,
                    ..Default::default()
                },
            )
            .unwrap();
            assert_relative_eq!(it.lambda, d.lambda, epsilon = 1e-9);
        }
    }

    #[test]
    fn components_have_zero_objective() {
        let g = two_triangles();
        let obj = partition_objective(&g, 0.0, &[0, 0, 0, 1, 1, 1], 2).unwrap();
        assert!(obj.total.abs() < 1e-12);
        let bf = brute_force_partition(&g, 0.0, 2).unwrap();
        assert_eq!(bf.labels, vec![0, 0, 0, 1, 1, 1]);
        assert!(bf.objective.abs() < 1e-12);
    }

    #[test]
    fn brute_force_on_path10() {
        let g = lattice_graph(LatticeKind::Path, &[10]).unwrap();
        let bf = brute_force_partition(&g, 0.0, 2).unwrap();
        assert_eq!(bf.labels, vec![0, 0, 0, 0, 0, 1, 1, 1, 1, 1]);
        // Stirling number S(10, 2) = 2^9 - 1.
        assert_eq!(bf.evaluated, 511);
        let k1 = brute_force_partition(&g, 0.0, 1).unwrap();
        assert!(k1.objective.abs() < 1e-12);
    }

    #[test]
    fn brute_force_budget() {
        let p12 = lattice_graph(LatticeKind::Path, &[12]).unwrap();
        assert!(brute_force_partition(&p12, 0.0, 2).is_ok());
        let p13 = lattice_graph(LatticeKind::Path, &[13]).unwrap();
        assert!(matches!(brute_force_partition(&p13, 0.0, 2), Err(Error::Input(_))));
        let p8 = lattice_graph(LatticeKind::Path, &[8]).unwrap();
        assert!(brute_force_partition(&p8, 0.0, 3).is_ok());
        let p9 = lattice_graph(LatticeKind::Path, &[9]).unwrap();
        assert!(brute_force_partition(&p9, 0.0, 3).is_err());
    }

    #[test]
    fn growth_strings_count_set_partitions() {
        // Stirling numbers of the second kind.
        assert_eq!(restricted_growth_strings(5, 2).len(), 15);
        assert_eq!(restricted_growth_strings(6, 3).len(), 90);
        assert_eq!(restricted_growth_strings(4, 4).len(), 1);
        assert!(restricted_growth_strings(3, 4).is_empty());
    }
}
