//! The graph Laplacian family `D^{-r}(D - W)`, its Schrödinger perturbation by a
//! potential `alpha (1 - phi)`, and the symmetric standard form
//!
//! ```text
//! H = D^{1-r} - D^{-r/2} W D^{-r/2} + alpha (1 - phi),   eta = D^{r/2} psi
//! ```
//!
//! `H` is similar to the (generally non-symmetric) Laplacian plus potential, so
//! all spectral work happens on `H`.

use std::borrow::Cow;

use nalgebra::DMatrix;

use crate::eigen::{self, SymmetricOperator};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::sparse::CsrMatrix;

/// Graphs up to this size get a dense second-eigenvalue computation.
const DENSE_LAMBDA2_MAX_N: usize = 400;

fn check_r(r: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&r) {
        return Err(Error::input(format!("r must lie in [0, 1], got {r}")));
    }
    Ok(())
}

fn check_degrees(graph: &SimilarityGraph, r: f64, vertices: impl Iterator<Item = usize>) -> Result<()> {
    if r > 0.0 {
        for v in vertices {
            if graph.degree(v) <= 0.0 {
                return Err(Error::degenerate(format!(
                    "vertex {v} has zero degree, D^-r is undefined for r = {r}"
                )));
            }
        }
    }
    Ok(())
}

/// `Delta_r = D^{-r} (D - W)` as a matrix-free operator.
#[derive(Debug, Clone, Copy)]
pub struct LaplacianOperator<'g> {
    graph: &'g SimilarityGraph,
    r: f64,
}

impl<'g> LaplacianOperator<'g> {
    pub fn new(graph: &'g SimilarityGraph, r: f64) -> Result<Self> {
        check_r(r)?;
        check_degrees(graph, r, 0..graph.n())?;
        Ok(LaplacianOperator { graph, r })
    }

    pub fn graph(&self) -> &'g SimilarityGraph {
        self.graph
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn n(&self) -> usize {
        self.graph.n()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n() {
            return Err(Error::input(format!(
                "vector length {} does not match {} vertices",
                x.len(),
                self.n()
            )));
        }
        let wx = self.graph.weights().matvec(x);
        let d = self.graph.degrees();
        Ok((0..self.n())
            .map(|i| {
                let lx = d[i] * x[i] - wx[i];
                if self.r == 0.0 {
                    lx
                } else {
                    lx / d[i].powf(self.r)
                }
            })
            .collect())
    }

    /// `D^r` as a vector; the mass weights of the vertex inner product.
    pub fn mass(&self) -> Vec<f64> {
        self.graph.degrees().iter().map(|d| d.powf(self.r)).collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.n();
        let w = self.graph.to_dense();
        let d = self.graph.degrees();
        DMatrix::from_fn(n, n, |i, j| {
            let l = if i == j { d[i] - w[(i, j)] } else { -w[(i, j)] };
            if self.r == 0.0 {
                l
            } else {
                l / d[i].powf(self.r)
            }
        })
    }

    /// Symmetric form with zero potential.
    pub fn standard_form(&self) -> StandardForm<'g> {
        StandardForm::build(
            Cow::Borrowed(self.graph.weights()),
            self.graph.degrees(),
            self.r,
            None,
        )
    }

    /// Second smallest eigenvalue of `Delta_r`, zero for disconnected graphs.
    pub fn second_eigenvalue(&self) -> Result<f64> {
        self.second_eigenvalue_with(1e-10, 200_000)
    }

    pub fn second_eigenvalue_with(&self, tol: f64, max_matvecs: usize) -> Result<f64> {
        let n = self.n();
        if n < 2 {
            return Err(Error::input("second eigenvalue needs at least two vertices"));
        }
        if self.graph.component_count() > 1 {
            return Ok(0.0);
        }
        let h = self.standard_form();
        if n <= DENSE_LAMBDA2_MAX_N {
            let eig = h.to_dense().symmetric_eigen();
            let mut values: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            values.sort_by(f64::total_cmp);
            return Ok(values[1].max(0.0));
        }
        // Connected: the kernel of H is spanned by D^{r/2} 1.
        let kernel: Vec<f64> = self.graph.degrees().iter().map(|d| d.powf(self.r / 2.0)).collect();
        let pair = eigen::lowest_eigenpair(&h, None, &[kernel], None, tol, max_matvecs)?;
        Ok(pair.value.max(0.0))
    }
}

/// `Delta_r + alpha (1 - phi)`.
#[derive(Debug, Clone)]
pub struct SchrodingerOperator<'g> {
    base: LaplacianOperator<'g>,
    alpha: f64,
    phi: Vec<f64>,
}

impl<'g> SchrodingerOperator<'g> {
    /// `phi` must take values in `[0, 1]`; values are validated, never clamped.
    pub fn new(base: LaplacianOperator<'g>, alpha: f64, phi: Vec<f64>) -> Result<Self> {
        if !(alpha >= 0.0 && alpha.is_finite()) {
            return Err(Error::input(format!("alpha must be finite and nonnegative, got {alpha}")));
        }
        if phi.len() != base.n() {
            return Err(Error::input(format!(
                "phi has length {}, graph has {} vertices",
                phi.len(),
                base.n()
            )));
        }
        if let Some(v) = phi.iter().position(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::input(format!("phi({v}) = {} is outside [0, 1]", phi[v])));
        }
        Ok(SchrodingerOperator { base, alpha, phi })
    }

    /// Potential `alpha (1 - phi)` supported off the indicator of `members`.
    pub fn indicator(base: LaplacianOperator<'g>, alpha: f64, members: &[bool]) -> Result<Self> {
        let phi = members.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect();
        Self::new(base, alpha, phi)
    }

    pub fn base(&self) -> &LaplacianOperator<'g> {
        &self.base
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn potential(&self) -> Vec<f64> {
        self.phi.iter().map(|p| self.alpha * (1.0 - p)).collect()
    }

    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut y = self.base.apply(x)?;
        for ((yi, xi), p) in y.iter_mut().zip(x).zip(&self.phi) {
            *yi += self.alpha * (1.0 - p) * xi;
        }
        Ok(y)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = self.base.to_dense();
        for (i, v) in self.potential().into_iter().enumerate() {
            m[(i, i)] += v;
        }
        m
    }

    pub fn standard_form(&self) -> StandardForm<'g> {
        let potential = self.potential();
        StandardForm::build(
            Cow::Borrowed(self.base.graph.weights()),
            self.base.graph.degrees(),
            self.base.r,
            Some(&potential),
        )
    }
}

/// The symmetric operator `diag - S W S` with `S = D^{-r/2}`, possibly restricted
/// to a vertex subset (Dirichlet condition on the complement).
#[derive(Debug, Clone)]
pub struct StandardForm<'a> {
    weights: Cow<'a, CsrMatrix>,
    diag: Vec<f64>,
    scale: Vec<f64>,
    r: f64,
}

impl<'a> StandardForm<'a> {
    fn build(weights: Cow<'a, CsrMatrix>, degrees: &[f64], r: f64, potential: Option<&[f64]>) -> Self {
        let diag = degrees
            .iter()
            .enumerate()
            .map(|(i, d)| d.powf(1.0 - r) + potential.map_or(0.0, |p| p[i]))
            .collect();
        let scale = degrees
            .iter()
            .map(|d| if r == 0.0 { 1.0 } else { d.powf(-r / 2.0) })
            .collect();
        StandardForm {
            weights,
            diag,
            scale,
            r,
        }
    }

    /// Standard form of `Delta_r` restricted to `members` (given as sorted vertex ids).
    /// Degrees are those of the full graph.
    pub fn restricted(graph: &SimilarityGraph, r: f64, members: &[usize]) -> Result<StandardForm<'static>> {
        check_r(r)?;
        check_degrees(graph, r, members.iter().copied())?;
        let sub = graph.weights().principal_submatrix(members);
        let degrees: Vec<f64> = members.iter().map(|&v| graph.degree(v)).collect();
        Ok(StandardForm::build(Cow::Owned(sub), &degrees, r, None))
    }

    pub fn r(&self) -> f64 {
        self.r
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    /// `D^{-r/2}`, which maps `eta` back to `psi`.
    pub fn scale(&self) -> &[f64] {
        &self.scale
    }

    pub fn back_transform(&self, eta: &[f64]) -> Vec<f64> {
        eta.iter().zip(&self.scale).map(|(e, s)| e * s).collect()
    }

    pub fn forward_transform(&self, psi: &[f64]) -> Vec<f64> {
        psi.iter().zip(&self.scale).map(|(p, s)| p / s).collect()
    }

    /// Off-diagonal entry `s_i w_ij s_j`, evaluated in an order independent of
    /// `(i, j)` versus `(j, i)` so the assembled matrix is exactly symmetric.
    fn coupling(&self, i: usize, j: usize, w: f64) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        self.scale[a] * self.scale[b] * w
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        let mut m = DMatrix::zeros(n, n);
        for (i, j, w) in self.weights.triplets() {
            m[(i, j)] -= self.coupling(i, j, w);
        }
        for i in 0..n {
            m[(i, i)] += self.diag[i];
        }
        m
    }

    /// Assembled sparse `H`.
    pub fn to_csr(&self) -> CsrMatrix {
        let n = self.diag.len();
        let off = self
            .weights
            .triplets()
            .map(|(i, j, w)| (i, j, -self.coupling(i, j, w)));
        let diag = (0..n).map(|i| (i, i, self.diag[i]));
        CsrMatrix::from_triplets(n, off.chain(diag).collect::<Vec<_>>())
    }
}

impl SymmetricOperator for StandardForm<'_> {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        if self.r == 0.0 {
            self.weights.matvec_into(x, y);
        } else {
            let sx: Vec<f64> = x.iter().zip(&self.scale).map(|(a, s)| a * s).collect();
            self.weights.matvec_into(&sx, y);
            for (yi, s) in y.iter_mut().zip(&self.scale) {
                *yi *= s;
            }
        }
        for ((yi, xi), di) in y.iter_mut().zip(x).zip(&self.diag) {
            *yi = di * xi - *yi;
        }
    }
}
