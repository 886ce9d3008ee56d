//! Graph partitioning by minimizing the sum of the Dirichlet eigenvalues of the
//! parts.
//!
//! The exact objective `sum_i lambda(V_i)` is combinatorial. It is relaxed by
//! replacing each Dirichlet problem with the ground state of a Schrödinger
//! operator `Delta_r + alpha (1 - phi_i)` and minimized with a rearrangement
//! iteration: solve the `k` ground states, then move every vertex to the part
//! whose eigenvector is largest there. Each non-trivial step strictly lowers the
//! relaxed energy and the iteration stops at a local minimum after finitely many
//! steps.
//!
//! | Module | Contents |
//! |--------|----------|
//! | [`graph`] | similarity graphs, kernels, kNN, lattices, components |
//! | [`laplacian`] | `D^{-r}(D - W)`, the Schrödinger operator, symmetric standard form |
//! | [`eigen`] | ground-state solvers (iterative and dense oracle) |
//! | [`dirichlet`] | exact Dirichlet eigenvalues, partition objective, brute force |
//! | [`rearrangement`] | relaxed energy, initializations, the rearrangement iteration |
//! | [`metrics`] | purity, confusion matrices, the NMF identity check |
//! | [`datasets`] | synthetic point clouds and random graphs |
//! | [`io`] | Matrix Market and CSV readers and writers |

pub mod datasets;
pub mod dirichlet;
pub mod eigen;
pub mod error;
pub mod graph;
pub mod io;
pub mod laplacian;
pub mod metrics;
pub mod rearrangement;
pub mod sparse;

pub use error::{Error, Result};
pub use graph::{Metric, PointCloud, SimilarityGraph};
pub use laplacian::{LaplacianOperator, SchrodingerOperator};
