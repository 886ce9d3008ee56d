//! Ground states of symmetric positive-semidefinite operators.
//!
//! The iterative solver is a thick-restart Krylov method: the search space is
//! grown by the residual of the current lowest Ritz vector, which spans the same
//! space as a Lanczos recurrence, and on restart the lowest few Ritz vectors are
//! retained. Vectors are fully reorthogonalized.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::laplacian::SchrodingerOperator;

/// Matrix-free symmetric operator.
pub trait SymmetricOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
}

/// Default residual tolerance of the ground-state solves.
pub const DEFAULT_TOL: f64 = 1e-4;
pub const DEFAULT_MAX_MATVECS: usize = 50_000;
/// Size guard for the dense oracle.
pub const DENSE_MAX_N: usize = 2000;

const MAX_BASIS: usize = 40;
const KEEP_ON_RESTART: usize = 6;

/// Smallest eigenpair of `Delta_r + alpha (1 - phi)`.
#[derive(Debug, Clone, Serialize)]
pub struct GroundState {
    pub lambda: f64,
    /// Eigenvector in vertex coordinates, normalized so `psi^T D^r psi = 1`
    /// and signed so that its entries sum to a positive value.
    pub psi: Vec<f64>,
    /// `|| (Delta_r + alpha (1 - phi)) psi - lambda psi || / || psi ||`.
    pub residual: f64,
    /// Operator applications used.
    pub iterations: usize,
}

/// Raw eigenpair of a [`SymmetricOperator`].
#[derive(Debug, Clone)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
    pub matvecs: usize,
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Two passes of modified Gram-Schmidt against `basis`; returns the norm that remains.
fn orthogonalize(v: &mut [f64], basis: &[Vec<f64>]) -> f64 {
    for _ in 0..2 {
        for b in basis {
            let c = dot(b, v);
            axpy(-c, b, v);
        }
    }
    norm(v)
}

/// `|| s .* r || / || s .* y ||`, or the plain ratio without scaling.
fn scaled_residual(r: &[f64], y: &[f64], scale: Option<&[f64]>) -> f64 {
    match scale {
        None => norm(r) / norm(y),
        Some(s) => {
            let nr: f64 = r.iter().zip(s).map(|(a, b)| (a * b) * (a * b)).sum();
            let ny: f64 = y.iter().zip(s).map(|(a, b)| (a * b) * (a * b)).sum();
            (nr / ny).sqrt()
        }
    }
}

/// Deterministic filler used when the Krylov space closes before convergence.
fn filler_vector(n: usize, salt: usize) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let x = ((i + 1) as f64 * 12.9898 + salt as f64 * 78.233).sin() * 43758.5453;
            x - x.floor() - 0.5
        })
        .collect()
}

fn lowest_ritz(h: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = h.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(h.nrows(), order.len(), |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

fn combine(columns: &[Vec<f64>], coeffs: impl Iterator<Item = f64>) -> Vec<f64> {
    let mut out = vec![0.0; columns[0].len()];
    for (col, c) in columns.iter().zip(coeffs) {
        axpy(c, col, &mut out);
    }
    out
}

/// Lowest eigenpair of `op` restricted to the orthogonal complement of `deflate`
/// (whose vectors need not be normalized but must be mutually orthogonal).
///
/// Convergence is declared when the residual, measured after elementwise
/// multiplication by `residual_scale` if given, falls to `tol` relative to the
/// equally scaled vector.
pub fn lowest_eigenpair<O: SymmetricOperator + ?Sized>(
    op: &O,
    start: Option<Vec<f64>>,
    deflate: &[Vec<f64>],
    residual_scale: Option<&[f64]>,
    tol: f64,
    max_matvecs: usize,
) -> Result<Eigenpair> {
    let n = op.dim();
    if n == 0 {
        return Err(Error::input("operator has dimension zero"));
    }
    if !(tol > 0.0) {
        return Err(Error::input(format!("tol must be positive, got {tol}")));
    }
    let deflate: Vec<Vec<f64>> = deflate
        .iter()
        .map(|d| {
            let nd = norm(d);
            d.iter().map(|x| x / nd).collect()
        })
        .collect();
    let space_dim = n.saturating_sub(deflate.len());
    if space_dim == 0 {
        return Err(Error::input("deflation removes the whole space"));
    }
    let max_basis = MAX_BASIS.min(space_dim);
    let keep = KEEP_ON_RESTART.min(max_basis.saturating_sub(1)).max(1);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(max_basis);
    let mut projected = DMatrix::<f64>::zeros(0, 0);
    let mut matvecs = 0usize;
    let mut best_residual = f64::INFINITY;
    let mut fillers = 0usize;

    let mut next = start.unwrap_or_else(|| vec![1.0; n]);
    assert_eq!(next.len(), n, "start vector has the wrong length");

    loop {
        // Expand the search space with `next`.
        let before = norm(&next).max(f64::MIN_POSITIVE);
        let mut v = next;
        let mut remaining = orthogonalize(&mut v, &deflate);
        remaining = remaining.min(orthogonalize(&mut v, &basis));
        if !(remaining > 1e-12 * before) || !remaining.is_finite() {
            if basis.len() >= space_dim {
                // Whole space spanned; the Ritz pair is exact up to rounding.
                v = Vec::new();
            } else {
                fillers += 1;
                v = filler_vector(n, fillers);
                orthogonalize(&mut v, &deflate);
                remaining = orthogonalize(&mut v, &basis);
                if remaining <= 1e-12 {
                    v = Vec::new();
                }
            }
        }
        if !v.is_empty() {
            let nv = norm(&v);
            v.iter_mut().for_each(|x| *x /= nv);
            let mut av = vec![0.0; n];
            op.apply(&v, &mut av);
            matvecs += 1;
            let m = basis.len();
            let mut grown = DMatrix::zeros(m + 1, m + 1);
            grown.view_mut((0, 0), (m, m)).copy_from(&projected);
            for (i, b) in basis.iter().enumerate() {
                let h = dot(b, &av);
                grown[(i, m)] = h;
                grown[(m, i)] = h;
            }
            grown[(m, m)] = dot(&v, &av);
            projected = grown;
            basis.push(v);
            images.push(av);
        } else if basis.is_empty() {
            return Err(Error::degenerate("no admissible start direction"));
        }

        let (values, vectors) = lowest_ritz(&projected);
        let theta = values[0];
        let s0 = vectors.column(0);
        let y = combine(&basis, s0.iter().copied());
        let ay = combine(&images, s0.iter().copied());
        let mut r: Vec<f64> = ay.iter().zip(&y).map(|(a, b)| a - theta * b).collect();
        orthogonalize(&mut r, &deflate);
        let res = scaled_residual(&r, &y, residual_scale);
        best_residual = best_residual.min(res);

        let exhausted = basis.len() >= space_dim;
        if res <= tol || exhausted {
            // Confirm against a fresh application; accumulated images drift over restarts.
            let mut fresh = vec![0.0; n];
            op.apply(&y, &mut fresh);
            matvecs += 1;
            let rayleigh = dot(&y, &fresh) / dot(&y, &y);
            let mut true_r: Vec<f64> = fresh.iter().zip(&y).map(|(a, b)| a - rayleigh * b).collect();
            orthogonalize(&mut true_r, &deflate);
            let true_res = scaled_residual(&true_r, &y, residual_scale);
            best_residual = best_residual.min(true_res);
            if true_res <= tol {
                let ny = norm(&y);
                return Ok(Eigenpair {
                    value: rayleigh,
                    vector: y.iter().map(|x| x / ny).collect(),
                    residual: true_res,
                    matvecs,
                });
            }
            // Drifted: restart from the current Ritz vector alone.
            if matvecs >= max_matvecs {
                break;
            }
            basis.clear();
            images.clear();
            projected = DMatrix::zeros(0, 0);
            next = y;
            continue;
        }
        if matvecs >= max_matvecs {
            break;
        }

        if basis.len() >= max_basis {
            let kept = keep.min(values.len());
            let new_basis: Vec<Vec<f64>> = (0..kept)
                .map(|c| combine(&basis, vectors.column(c).iter().copied()))
                .collect();
            let new_images: Vec<Vec<f64>> = (0..kept)
                .map(|c| combine(&images, vectors.column(c).iter().copied()))
                .collect();
            basis = new_basis;
            images = new_images;
            projected = DMatrix::from_fn(kept, kept, |i, j| {
                if i == j {
                    values[i]
                } else {
                    0.0
                }
            });
        }
        next = r;
    }
    Err(Error::NoConvergence {
        matvecs,
        best_residual,
        tol,
    })
}

fn finish(op: &SchrodingerOperator<'_>, lambda: f64, mut psi: Vec<f64>, iterations: usize) -> Result<GroundState> {
    if psi.iter().sum::<f64>() < 0.0 {
        psi.iter_mut().for_each(|x| *x = -*x);
    }
    let hpsi = op.apply(&psi)?;
    let r: Vec<f64> = hpsi.iter().zip(&psi).map(|(a, b)| a - lambda * b).collect();
    let residual = norm(&r) / norm(&psi);
    Ok(GroundState {
        lambda,
        psi,
        residual,
        iterations,
    })
}

/// Iterative ground state, started from `start` (a vertex function, e.g. the
/// previous eigenvector) when given.
pub fn ground_state_from(
    op: &SchrodingerOperator<'_>,
    start: Option<&[f64]>,
    tol: f64,
    max_matvecs: usize,
) -> Result<GroundState> {
    let h = op.standard_form();
    let start_eta = start.map(|psi| h.forward_transform(psi));
    let scale = (op.base().r() != 0.0).then(|| h.scale());
    let pair = lowest_eigenpair(&h, start_eta, &[], scale, tol, max_matvecs)?;
    let psi = h.back_transform(&pair.vector);
    finish(op, pair.value, psi, pair.matvecs)
}

pub fn ground_state(op: &SchrodingerOperator<'_>, tol: f64, max_matvecs: usize) -> Result<GroundState> {
    ground_state_from(op, None, tol, max_matvecs)
}

/// Ground state from a full dense eigendecomposition of the standard form.
pub fn ground_state_dense(op: &SchrodingerOperator<'_>) -> Result<GroundState> {
    let n = op.n();
    if n > DENSE_MAX_N {
        return Err(Error::input(format!(
            "dense solve limited to n <= {DENSE_MAX_N}, got {n}"
        )));
    }
    let h = op.standard_form();
    let (value, eta) = dense_lowest(h.to_dense());
    finish(op, value, h.back_transform(&eta), 0)
}

/// Lowest eigenpair of a dense symmetric matrix, eigenvector unit-normalized.
pub fn dense_lowest(m: DMatrix<f64>) -> (f64, Vec<f64>) {
    let eig = m.symmetric_eigen();
    let (idx, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty matrix");
    let v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
    (eig.eigenvalues[idx], v.iter().copied().collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{lattice_graph, LatticeKind, SimilarityGraph};
    use crate::laplacian::LaplacianOperator;
    use approx::assert_relative_eq;

    #[test]
    fn p2_with_potential() {
        // [[1, -1], [-1, 2]] has characteristic polynomial t^2 - 3t + 1.
        let expected = (3.0 - 5.0f64.sqrt()) / 2.0;
        let g = lattice_graph(LatticeKind::Path, &[2]).unwrap();
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, 0.0).unwrap(), 1.0, vec![1.0, 0.0]).unwrap();
        let it = ground_state(&op, 1e-10, 100).unwrap();
        let de = ground_state_dense(&op).unwrap();
        assert_relative_eq!(it.lambda, expected, epsilon = 1e-12);
        assert_relative_eq!(de.lambda, expected, epsilon = 1e-12);
        assert!(it.psi.iter().all(|&x| x > 0.0));
    }

    #[test]
    fn zero_potential_gives_constant_ground_state() {
        let g = lattice_graph(LatticeKind::Grid, &[4, 6]).unwrap();
        for r in [0.0, 0.5, 1.0] {
            let op = SchrodingerOperator::new(LaplacianOperator::new(&g, r).unwrap(), 3.0, vec![1.0; 24]).unwrap();
            let gs = ground_state(&op, 1e-9, 5000).unwrap();
            assert!(gs.lambda.abs() < 1e-9);
            let c = 1.0 / g.degrees().iter().map(|d| d.powf(r)).sum::<f64>().sqrt();
            for x in &gs.psi {
                assert_relative_eq!(*x, c, epsilon = 1e-6);
            }
            let dense = ground_state_dense(&op).unwrap();
            assert!(dense.lambda.abs() < 1e-12);
        }
    }

    #[test]
    fn contract_invariants() {
        let g = lattice_graph(LatticeKind::Cycle, &[30]).unwrap();
        let phi: Vec<f64> = (0..30).map(|i| if i < 10 { 1.0 } else { 0.0 }).collect();
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, 1.0).unwrap(), 0.5, phi).unwrap();
        let gs = ground_state(&op, 1e-6, 5000).unwrap();
        let mass: f64 = gs.psi.iter().zip(g.degrees()).map(|(p, d)| d * p * p).sum();
        assert_relative_eq!(mass, 1.0, epsilon = 1e-8);
        assert!(gs.residual <= 1e-6);
        assert!(gs.psi.iter().sum::<f64>() > 0.0);
    }

    #[test]
    fn dense_guard() {
        let g = lattice_graph(LatticeKind::Path, &[DENSE_MAX_N + 1]).unwrap();
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, 0.0).unwrap(), 1.0, vec![1.0; DENSE_MAX_N + 1]).unwrap();
        assert!(matches!(ground_state_dense(&op), Err(Error::Input(_))));
    }

    #[test]
    fn budget_exhaustion_reports_best_residual() {
        let g = lattice_graph(LatticeKind::Path, &[400]).unwrap();
        let phi: Vec<f64> = (0..400).map(|i| if i % 7 == 0 { 1.0 } else { 0.0 }).collect();
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, 0.0).unwrap(), 0.01, phi).unwrap();
        match ground_state(&op, 1e-14, 5) {
            Err(Error::NoConvergence { best_residual, matvecs, .. }) => {
                assert!(best_residual.is_finite());
                assert!(matvecs >= 5);
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }

    #[test]
    fn isolated_vertices_with_r0() {
        let g = SimilarityGraph::from_edges(3, vec![(0, 1, 1.0)]).unwrap();
        let op = SchrodingerOperator::new(LaplacianOperator::new(&g, 0.0).unwrap(), 2.0, vec![0.0, 0.0, 1.0]).unwrap();
        let gs = ground_state(&op, 1e-10, 100).unwrap();
        assert!(gs.lambda.abs() < 1e-10);
    }
}
