//! Clustering evaluation and the check that Dirichlet eigenvectors of a
//! partition turn the `r = 1` objective into a symmetric orthogonal NMF residual.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::dirichlet::{dirichlet_eigenvalue_with, DirichletOptions, SolvePath, VertexSubset};
use crate::eigen::DENSE_MAX_N;
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;

fn check_pair(pred: &[usize], truth: &[usize]) -> Result<()> {
    if pred.len() != truth.len() {
        return Err(Error::input(format!(
            "label length mismatch: {} predicted vs {} true",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::input("empty labelings"));
    }
    Ok(())
}

/// Contingency counts `counts[(p, t)]` keyed by label values.
fn contingency(pred: &[usize], truth: &[usize]) -> BTreeMap<usize, BTreeMap<usize, usize>> {
    let mut table: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&p, &t) in pred.iter().zip(truth) {
        *table.entry(p).or_default().entry(t).or_default() += 1;
    }
    table
}

/// `(1/n) sum_p max_t |pred_p ∩ true_t|`.
pub fn purity(pred: &[usize], truth: &[usize]) -> Result<f64> {
    check_pair(pred, truth)?;
    let hits: usize = contingency(pred, truth)
        .values()
        .map(|row| row.values().copied().max().unwrap_or(0))
        .sum();
    Ok(hits as f64 / pred.len() as f64)
}

/// Column-normalized confusion matrix: `entries[i][j] = |pred_i ∩ true_j| / |true_j|`.
#[derive(Debug, Clone, Serialize)]
pub struct ConfusionMatrix {
    /// Predicted label of each row.
    pub pred_labels: Vec<usize>,
    /// True label of each column.
    pub true_labels: Vec<usize>,
    pub entries: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.true_labels.len())
            .map(|j| self.entries.iter().map(|row| row[j]).sum())
            .collect()
    }
}

/// Rows are the labels `0..=max(pred)` and columns `0..=max(truth)`; a true class
/// with no members has no defined column and is rejected.
pub fn confusion(pred: &[usize], truth: &[usize]) -> Result<ConfusionMatrix> {
    check_pair(pred, truth)?;
    let k_pred = pred.iter().max().unwrap() + 1;
    let k_true = truth.iter().max().unwrap() + 1;
    let mut counts = vec![vec![0usize; k_true]; k_pred];
    let mut col_totals = vec![0usize; k_true];
    for (&p, &t) in pred.iter().zip(truth) {
        counts[p][t] += 1;
        col_totals[t] += 1;
    }
    if let Some(j) = col_totals.iter().position(|&c| c == 0) {
        return Err(Error::input(format!("true class {j} has no members")));
    }
    let entries = counts
        .iter()
        .map(|row| {
            row.iter()
                .zip(&col_totals)
                .map(|(&c, &total)| c as f64 / total as f64)
                .collect()
        })
        .collect();
    Ok(ConfusionMatrix {
        pred_labels: (0..k_pred).collect(),
        true_labels: (0..k_true).collect(),
        entries,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct NmfIdentity {
    /// `|| D^{-1/2} W D^{-1/2} - U U^T ||_F^2` with `U = D^{1/2} [psi_1 | ... | psi_k]`.
    pub lhs: f64,
    /// `|| D^{-1/2} W D^{-1/2} ||_F^2 + 2 sum_i lambda(V_i) - k`.
    pub rhs: f64,
    pub residual: f64,
    /// `sum_i lambda(V_i)` at `r = 1`.
    pub objective: f64,
}

/// Builds the Dirichlet eigenvector matrix of the labeled partition at `r = 1`
/// and evaluates both sides of the NMF identity densely. Every cluster must be
/// connected, so that its eigenvector is unique and positive on the cluster.
pub fn nmf_identity_check(graph: &SimilarityGraph, labels: &[usize]) -> Result<NmfIdentity> {
    nmf_identity(graph, labels, true)
}

/// [`nmf_identity_check`] without the connectivity requirement. On a
/// disconnected cluster the eigenvector is one of possibly several, and the
/// identity holds for whichever is chosen.
pub fn nmf_identity_any_support(graph: &SimilarityGraph, labels: &[usize]) -> Result<NmfIdentity> {
    nmf_identity(graph, labels, false)
}

fn nmf_identity(graph: &SimilarityGraph, labels: &[usize], require_connected: bool) -> Result<NmfIdentity> {
    let n = graph.n();
    if labels.len() != n {
        return Err(Error::input(format!("{} labels for {n} vertices", labels.len())));
    }
    if n > DENSE_MAX_N {
        return Err(Error::input(format!("identity check is dense, limited to n <= {DENSE_MAX_N}")));
    }
    if let Some(v) = graph.degrees().iter().position(|&d| d <= 0.0) {
        return Err(Error::degenerate(format!("vertex {v} has zero degree")));
    }
    let k = labels.iter().max().map_or(0, |m| m + 1);
    let opts = DirichletOptions {
        path: SolvePath::Dense,
        ..DirichletOptions::default()
    };
    let sqrt_d: Vec<f64> = graph.degrees().iter().map(|d| d.sqrt()).collect();
    let mut u = DMatrix::<f64>::zeros(n, k);
    let mut objective = 0.0;
    for i in 0..k {
        let subset = VertexSubset::from_labels(labels, i);
        if subset.is_empty() {
            return Err(Error::input(format!("cluster {i} is empty")));
        }
        if require_connected && !graph.is_connected_subset(subset.mask()) {
            return Err(Error::input(format!("cluster {i} is not connected")));
        }
        let d = dirichlet_eigenvalue_with(graph, 1.0, &subset, &opts)?;
        objective += d.lambda;
        for v in 0..n {
            u[(v, i)] = sqrt_d[v] * d.psi[v];
        }
    }

    let mut a = DMatrix::<f64>::zeros(n, n);
    for (i, j, w) in graph.weights().triplets() {
        a[(i, j)] = w / (sqrt_d[i] * sqrt_d[j]);
    }
    let a_norm_sq = a.norm_squared();
    let lhs = (&a - &u * u.transpose()).norm_squared();
    let rhs = a_norm_sq + 2.0 * objective - k as f64;
    Ok(NmfIdentity {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        objective,
    })
}
