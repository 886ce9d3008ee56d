//! The relaxed objective and the rearrangement iteration that minimizes it.
//!
//! For a labeling with clusters `V_1..V_k` the relaxed energy is
//! `sum_i lambda^alpha(chi_{V_i})`, where `lambda^alpha(phi)` is the ground-state
//! energy of `Delta_r + alpha (1 - phi)`. One step solves the `k` ground states
//! and relabels every free vertex by `argmax_i psi_i(v)`. A step that changes the
//! labeling strictly lowers the energy, so the iteration reaches a fixed point
//! in finitely many steps.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};
use std::time::Instant;

use log::{debug, info, warn};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dirichlet::validate_labels;
use crate::eigen::{self, GroundState, DEFAULT_MAX_MATVECS, DEFAULT_TOL};
use crate::error::{Error, Result};
use crate::graph::SimilarityGraph;
use crate::laplacian::{LaplacianOperator, SchrodingerOperator};

/// Ground state of `Delta_r + alpha (1 - phi)`; its eigenvalue is `lambda^alpha(phi)`.
pub fn relaxed_energy(graph: &SimilarityGraph, r: f64, alpha: f64, phi: &[f64]) -> Result<GroundState> {
    relaxed_energy_with(graph, r, alpha, phi, DEFAULT_TOL, DEFAULT_MAX_MATVECS)
}

pub fn relaxed_energy_with(
    graph: &SimilarityGraph,
    r: f64,
    alpha: f64,
    phi: &[f64],
    tol: f64,
    max_matvecs: usize,
) -> Result<GroundState> {
    let op = SchrodingerOperator::new(LaplacianOperator::new(graph, r)?, alpha, phi.to_vec())?;
    eigen::ground_state(&op, tol, max_matvecs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaPolicy {
    Explicit(f64),
    /// `alpha = c * lambda_2(Delta_r)`.
    Scale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[default]
    Random,
    Voronoi,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub k: usize,
    pub r: f64,
    pub alpha: AlphaPolicy,
    pub tol: f64,
    pub max_matvecs: usize,
    pub max_iter: usize,
    pub restarts: usize,
    pub init: InitStrategy,
    pub seed: u64,
    /// Vertices whose labels are pinned.
    pub supervision: BTreeMap<usize, usize>,
}

impl RunConfig {
    /// Defaults: `alpha = k lambda_2`, tol 1e-4, 100 iterations, one random start.
    pub fn new(k: usize, r: f64) -> Self {
        RunConfig {
            k,
            r,
            alpha: AlphaPolicy::Scale(k as f64),
            tol: DEFAULT_TOL,
            max_matvecs: DEFAULT_MAX_MATVECS,
            max_iter: 100,
            restarts: 1,
            init: InitStrategy::Random,
            seed: 0,
            supervision: BTreeMap::new(),
        }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if self.k == 0 || self.k > n {
            return Err(Error::input(format!("need 1 <= k <= n = {n}, got k = {}", self.k)));
        }
        if self.max_iter == 0 {
            return Err(Error::input("max_iter must be at least 1"));
        }
        if self.restarts == 0 {
            return Err(Error::input("restarts must be at least 1"));
        }
        if !(self.tol > 0.0) {
            return Err(Error::input("tol must be positive"));
        }
        match self.alpha {
            AlphaPolicy::Explicit(a) | AlphaPolicy::Scale(a) if !(a > 0.0 && a.is_finite()) => {
                return Err(Error::input(format!("alpha setting must be positive, got {a}")));
            }
            _ => {}
        }
        for (&v, &l) in &self.supervision {
            if v >= n || l >= self.k {
                return Err(Error::input(format!(
                    "supervised pair ({v}, {l}) out of range for n = {n}, k = {}",
                    self.k
                )));
            }
        }
        Ok(())
    }

    fn supervision_vec(&self, n: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; n];
        for (&v, &l) in &self.supervision {
            out[v] = Some(l);
        }
        out
    }
}

/// Resolves the alpha policy on `graph`; scale policies need `lambda_2 > 0`.
pub fn resolve_alpha(policy: AlphaPolicy, graph: &SimilarityGraph, r: f64) -> Result<f64> {
    match policy {
        AlphaPolicy::Explicit(a) => Ok(a),
        AlphaPolicy::Scale(c) => {
            let lambda2 = LaplacianOperator::new(graph, r)?.second_eigenvalue()?;
            if lambda2 <= 0.0 {
                return Err(Error::degenerate(
                    "lambda_2 = 0 (disconnected graph); give an explicit alpha instead",
                ));
            }
            Ok(c * lambda2)
        }
    }
}

/// Independent uniform labels, then each missing label takes a random vertex
/// from a cluster that can spare one.
pub fn init_random<R: Rng + ?Sized>(n: usize, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    if k == 0 || k > n {
        return Err(Error::input(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let mut labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    repair_empty(&mut labels, k, &vec![None; n], rng);
    Ok(labels)
}

fn repair_empty<R: Rng + ?Sized>(labels: &mut [usize], k: usize, fixed: &[Option<usize>], rng: &mut R) {
    let mut counts = vec![0usize; k];
    for &l in labels.iter() {
        counts[l] += 1;
    }
    for missing in 0..k {
        if counts[missing] > 0 {
            continue;
        }
        let donors: Vec<usize> = (0..labels.len())
            .filter(|&v| fixed[v].is_none() && counts[labels[v]] > 1)
            .collect();
        if donors.is_empty() {
            continue;
        }
        let v = donors[rng.random_range(0..donors.len())];
        counts[labels[v]] -= 1;
        labels[v] = missing;
        counts[missing] += 1;
    }
}

/// Voronoi cells of `k` distinct uniformly drawn generators, see [`voronoi_labels`].
pub fn init_voronoi<R: Rng + ?Sized>(graph: &SimilarityGraph, k: usize, rng: &mut R) -> Result<Vec<usize>> {
    let n = graph.n();
    if k == 0 || k > n {
        return Err(Error::input(format!("need 1 <= k <= n = {n}, got k = {k}")));
    }
    let generators = sample(rng, n, k).into_vec();
    voronoi_labels(graph, &generators)
}

/// Settled-vertex key: path length, hop count, generator index, vertex.
#[derive(Debug, Clone, Copy, PartialEq)]
struct VoronoiKey(f64, usize, usize, usize);

impl Eq for VoronoiKey {}

impl PartialOrd for VoronoiKey {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for VoronoiKey {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0
            .total_cmp(&other.0)
            .then(self.1.cmp(&other.1))
            .then(self.2.cmp(&other.2))
            .then(self.3.cmp(&other.3))
    }
}

/// Multi-source shortest paths: vertex `v` gets the index of the nearest
/// generator. Edges have length `sqrt(ln(w_max / w))`, which is `d / sigma` for
/// Gaussian kernel weights and zero on unweighted graphs; ties are broken by
/// hop count, then by the lowest generator index. On an unweighted graph this
/// is the hop-distance Voronoi diagram. Every cell is connected.
pub fn voronoi_labels(graph: &SimilarityGraph, generators: &[usize]) -> Result<Vec<usize>> {
    let n = graph.n();
    let w_max = graph.weights().triplets().map(|(_, _, w)| w).fold(0.0, f64::max);
    let mut label = vec![usize::MAX; n];
    let mut heap = BinaryHeap::new();
    let mut seen = vec![false; n];
    for (i, &g) in generators.iter().enumerate() {
        if g >= n {
            return Err(Error::input(format!("generator {g} out of range")));
        }
        if seen[g] {
            return Err(Error::input(format!("generator {g} listed twice")));
        }
        seen[g] = true;
        heap.push(Reverse(VoronoiKey(0.0, 0, i, g)));
    }
    while let Some(Reverse(VoronoiKey(dist, hops, owner, u))) = heap.pop() {
        if label[u] != usize::MAX {
            continue;
        }
        label[u] = owner;
        for (v, w) in graph.neighbors(u) {
            if w <= 0.0 || label[v] != usize::MAX {
                continue;
            }
            let length = (w_max / w).ln().max(0.0).sqrt();
            heap.push(Reverse(VoronoiKey(dist + length, hops + 1, owner, v)));
        }
    }
    if let Some(v) = label.iter().position(|&l| l == usize::MAX) {
        return Err(Error::input(format!(
            "vertex {v} is unreachable from every generator (graph disconnected)"
        )));
    }
    Ok(label)
}

/// Current labels and the `k` ground states of their indicator potentials.
#[derive(Debug, Clone)]
pub struct PartitionState {
    pub labels: Vec<usize>,
    pub eigenpairs: Vec<GroundState>,
    /// `sum_i lambda^alpha(chi_{V_i})`.
    pub energy: f64,
    pub iteration: usize,
}

impl PartitionState {
    pub fn k(&self) -> usize {
        self.eigenpairs.len()
    }

    /// Indicator of cluster `i`.
    pub fn phi(&self, i: usize) -> Vec<f64> {
        self.labels.iter().map(|&l| if l == i { 1.0 } else { 0.0 }).collect()
    }

    pub fn phis(&self) -> Vec<Vec<f64>> {
        (0..self.k()).map(|i| self.phi(i)).collect()
    }

    /// `argmax_{v in V_i} psi_i(v)` per cluster.
    pub fn representatives(&self) -> Vec<usize> {
        self.eigenpairs
            .iter()
            .enumerate()
            .map(|(i, gs)| {
                let mut best = None::<(usize, f64)>;
                for (v, &x) in gs.psi.iter().enumerate() {
                    if self.labels[v] == i && best.is_none_or(|(_, b)| x > b) {
                        best = Some((v, x));
                    }
                }
                best.map_or(usize::MAX, |(v, _)| v)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reseed {
    pub iteration: usize,
    pub cluster: usize,
    pub vertex: usize,
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: PartitionState,
    pub changed: bool,
    pub reseeds: Vec<Reseed>,
}

/// Fixed data of one relaxed partitioning problem.
#[derive(Debug, Clone)]
pub struct Problem<'g> {
    laplacian: LaplacianOperator<'g>,
    pub k: usize,
    pub alpha: f64,
    pub tol: f64,
    pub max_matvecs: usize,
    supervision: Vec<Option<usize>>,
}

impl<'g> Problem<'g> {
    pub fn new(graph: &'g SimilarityGraph, k: usize, r: f64, alpha: f64) -> Result<Self> {
        if k == 0 || k > graph.n() {
            return Err(Error::input(format!("need 1 <= k <= n = {}, got k = {k}", graph.n())));
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::input(format!("alpha must be positive, got {alpha}")));
        }
        Ok(Problem {
            laplacian: LaplacianOperator::new(graph, r)?,
            k,
            alpha,
            tol: DEFAULT_TOL,
            max_matvecs: DEFAULT_MAX_MATVECS,
            supervision: vec![None; graph.n()],
        })
    }

    pub fn with_tolerance(mut self, tol: f64, max_matvecs: usize) -> Self {
        self.tol = tol;
        self.max_matvecs = max_matvecs;
        self
    }

    /// Pins `supervision[v] = Some(label)` vertices.
    pub fn with_supervision(mut self, supervision: Vec<Option<usize>>) -> Result<Self> {
        if supervision.len() != self.n() {
            return Err(Error::input("supervision length does not match the graph"));
        }
        if let Some((v, l)) = supervision
            .iter()
            .enumerate()
            .find_map(|(v, l)| l.filter(|&l| l >= self.k).map(|l| (v, l)))
        {
            return Err(Error::input(format!("vertex {v} pinned to label {l} >= k")));
        }
        self.supervision = supervision;
        Ok(self)
    }

    pub fn graph(&self) -> &'g SimilarityGraph {
        self.laplacian.graph()
    }

    pub fn n(&self) -> usize {
        self.laplacian.n()
    }

    pub fn r(&self) -> f64 {
        self.laplacian.r()
    }

    pub fn supervision(&self) -> &[Option<usize>] {
        &self.supervision
    }

    fn solve_cluster(&self, labels: &[usize], i: usize, warm: Option<&[f64]>) -> Result<GroundState> {
        let members: Vec<bool> = labels.iter().map(|&l| l == i).collect();
        let op = SchrodingerOperator::indicator(self.laplacian, self.alpha, &members)?;
        let start: Vec<f64> = match warm {
            Some(psi) => psi.to_vec(),
            None => members.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect(),
        };
        eigen::ground_state_from(&op, Some(&start), self.tol, self.max_matvecs)
    }

    fn solve_all(&self, labels: &[usize], warm: Option<&[GroundState]>, iteration: usize) -> Result<Vec<GroundState>> {
        (0..self.k)
            .into_par_iter()
            .map(|i| {
                self.solve_cluster(labels, i, warm.map(|w| w[i].psi.as_slice()))
                    .map_err(|e| Error::Solver {
                        iteration,
                        cluster: i,
                        source: Box::new(e),
                    })
            })
            .collect()
    }

    /// Solves the ground states for `labels`, which must use every label in `0..k`
    /// and respect the supervision.
    pub fn initial_state(&self, labels: Vec<usize>) -> Result<PartitionState> {
        validate_labels(&labels, self.n(), self.k)?;
        if let Some(v) = (0..self.n()).find(|&v| self.supervision[v].is_some_and(|l| l != labels[v])) {
            return Err(Error::input(format!("vertex {v} violates its pinned label")));
        }
        let eigenpairs = self.solve_all(&labels, None, 0)?;
        let energy = eigenpairs.iter().map(|g| g.lambda).sum();
        Ok(PartitionState {
            labels,
            eigenpairs,
            energy,
            iteration: 0,
        })
    }

    /// New labels from the current eigenvectors, before empty-cluster repair.
    pub fn assign(&self, state: &PartitionState) -> Vec<usize> {
        (0..self.n())
            .map(|v| {
                if let Some(l) = self.supervision[v] {
                    return l;
                }
                let current = state.labels[v];
                let values = state.eigenpairs.iter().map(|g| g.psi[v]);
                let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
                if state.eigenpairs[current].psi[v] >= max {
                    current
                } else {
                    values.clone().position(|x| x == max).unwrap_or(current)
                }
            })
            .collect()
    }

    /// Moves the least confident free vertex, `argmin_v max_j psi_j(v)`, into each
    /// emptied cluster.
    fn reseed_empty(&self, state: &PartitionState, labels: &mut [usize], iteration: usize) -> Vec<Reseed> {
        let mut counts = vec![0usize; self.k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let confidence: Vec<f64> = (0..self.n())
            .map(|v| state.eigenpairs.iter().map(|g| g.psi[v]).fold(f64::NEG_INFINITY, f64::max))
            .collect();
        let mut reseeds = Vec::new();
        for cluster in 0..self.k {
            if counts[cluster] > 0 {
                continue;
            }
            let pick = (0..self.n())
                .filter(|&v| self.supervision[v].is_none() && counts[labels[v]] > 1)
                .min_by(|&a, &b| confidence[a].total_cmp(&confidence[b]).then(a.cmp(&b)));
            if let Some(vertex) = pick {
                counts[labels[vertex]] -= 1;
                labels[vertex] = cluster;
                counts[cluster] += 1;
                warn!("iteration {iteration}: cluster {cluster} emptied, reseeded with vertex {vertex}");
                reseeds.push(Reseed {
                    iteration,
                    cluster,
                    vertex,
                });
            }
        }
        reseeds
    }

    /// One rearrangement step. When the labels do not change the returned state
    /// is the input state and `changed` is false.
    pub fn step(&self, state: &PartitionState) -> Result<StepOutcome> {
        let iteration = state.iteration + 1;
        let mut labels = self.assign(state);
        let reseeds = self.reseed_empty(state, &mut labels, iteration);
        if labels == state.labels {
            return Ok(StepOutcome {
                state: state.clone(),
                changed: false,
                reseeds,
            });
        }
        let eigenpairs = self.solve_all(&labels, Some(&state.eigenpairs), iteration)?;
        let energy = eigenpairs.iter().map(|g| g.lambda).sum();
        Ok(StepOutcome {
            state: PartitionState {
                labels,
                eigenpairs,
                energy,
                iteration,
            },
            changed: true,
            reseeds,
        })
    }

    /// Whether `psi_{label(v)}(v) >= max_j psi_j(v) - slack` at every vertex.
    pub fn is_first_order_optimal(&self, state: &PartitionState, slack: f64) -> bool {
        (0..self.n()).all(|v| {
            let own = state.eigenpairs[state.labels[v]].psi[v];
            state.eigenpairs.iter().all(|g| own >= g.psi[v] - slack)
        })
    }

    /// Iterates [`Problem::step`] from `labels` until the labels stop changing or
    /// `max_iter` changing steps have been taken.
    pub fn iterate(&self, labels: Vec<usize>, max_iter: usize) -> Result<Trajectory> {
        let mut state = self.initial_state(labels)?;
        let mut energy_history = vec![state.energy];
        let mut reseeds = Vec::new();
        let mut converged = false;
        loop {
            let outcome = self.step(&state)?;
            reseeds.extend(outcome.reseeds.iter().copied());
            if !outcome.changed {
                converged = true;
                break;
            }
            if state.iteration >= max_iter {
                break;
            }
            state = outcome.state;
            debug!("iteration {}: energy {:.10}", state.iteration, state.energy);
            energy_history.push(state.energy);
        }
        Ok(Trajectory {
            state,
            energy_history,
            reseeds,
            converged,
        })
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    pub state: PartitionState,
    /// Energy after each iteration, starting with the initial labeling.
    pub energy_history: Vec<f64>,
    pub reseeds: Vec<Reseed>,
    pub converged: bool,
}

/// Per-restart outcome.
#[derive(Debug, Clone, Serialize)]
pub struct RestartSummary {
    pub restart: usize,
    pub energy: Option<f64>,
    pub iterations: Option<usize>,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub k: usize,
    pub r: f64,
    pub alpha: f64,
    pub iterations: usize,
    pub converged: bool,
    pub energy_history: Vec<f64>,
    pub labels: Vec<usize>,
    /// `confidences[i][v] = psi_i(v)`.
    pub confidences: Vec<Vec<f64>>,
    pub representatives: Vec<usize>,
    pub reseeds: Vec<Reseed>,
    pub wall_time_s: f64,
    /// Index of the restart that produced this report.
    pub restart: usize,
    pub restarts: Vec<RestartSummary>,
}

impl RunReport {
    /// Final relaxed energy.
    pub fn energy(&self) -> f64 {
        *self.energy_history.last().expect("history is never empty")
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Generator for restart `restart` under base seed `seed`.
pub fn restart_rng(seed: u64, restart: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(restart as u64);
    rng
}

fn initial_labels(problem: &Problem<'_>, config: &RunConfig, rng: &mut ChaCha8Rng) -> Result<Vec<usize>> {
    let n = problem.n();
    let mut labels = match config.init {
        InitStrategy::Random => init_random(n, config.k, rng)?,
        InitStrategy::Voronoi => init_voronoi(problem.graph(), config.k, rng)?,
    };
    let fixed = problem.supervision();
    if fixed.iter().any(Option::is_some) {
        for (v, l) in fixed.iter().enumerate() {
            if let Some(l) = *l {
                labels[v] = l;
            }
        }
        repair_empty(&mut labels, config.k, fixed, rng);
    }
    Ok(labels)
}

/// Runs the rearrangement from `config.restarts` independent starts and returns
/// the lowest-energy result. Alpha is resolved once for all restarts.
pub fn run(graph: &SimilarityGraph, config: &RunConfig) -> Result<RunReport> {
    config.validate(graph.n())?;
    let alpha = resolve_alpha(config.alpha, graph, config.r)?;
    run_with_alpha(graph, config, alpha)
}

pub fn run_with_alpha(graph: &SimilarityGraph, config: &RunConfig, alpha: f64) -> Result<RunReport> {
    config.validate(graph.n())?;
    let problem = Problem::new(graph, config.k, config.r, alpha)?
        .with_tolerance(config.tol, config.max_matvecs)
        .with_supervision(config.supervision_vec(graph.n()))?;
    info!(
        "partitioning n = {} into k = {} (r = {}, alpha = {alpha:.6e}), {} restart(s)",
        graph.n(),
        config.k,
        config.r,
        config.restarts
    );

    let outcomes: Vec<(usize, Result<Trajectory>, f64)> = (0..config.restarts)
        .into_par_iter()
        .map(|restart| {
            let started = Instant::now();
            let mut rng = restart_rng(config.seed, restart);
            let result = initial_labels(&problem, config, &mut rng)
                .and_then(|labels| problem.iterate(labels, config.max_iter));
            (restart, result, started.elapsed().as_secs_f64())
        })
        .collect();

    let summaries: Vec<RestartSummary> = outcomes
        .iter()
        .map(|(restart, result, _)| match result {
            Ok(t) => RestartSummary {
                restart: *restart,
                energy: Some(t.state.energy),
                iterations: Some(t.state.iteration),
                converged: t.converged,
                error: None,
            },
            Err(e) => RestartSummary {
                restart: *restart,
                energy: None,
                iterations: None,
                converged: false,
                error: Some(e.to_string()),
            },
        })
        .collect();

    let mut best: Option<(usize, &Trajectory, f64)> = None;
    let mut first_error = None;
    for (restart, result, secs) in &outcomes {
        match result {
            Ok(t) => {
                if best.is_none_or(|(_, b, _)| t.state.energy < b.state.energy) {
                    best = Some((*restart, t, *secs));
                }
            }
            Err(e) => {
                warn!("restart {restart} failed: {e}");
                first_error.get_or_insert_with(|| e.to_string());
            }
        }
    }
    let Some((restart, t, secs)) = best else {
        return Err(Error::AllRestartsFailed {
            restarts: config.restarts,
            first: first_error.unwrap_or_default(),
        });
    };
    Ok(RunReport {
        k: config.k,
        r: config.r,
        alpha,
        iterations: t.state.iteration,
        converged: t.converged,
        energy_history: t.energy_history.clone(),
        labels: t.state.labels.clone(),
        confidences: t.state.eigenpairs.iter().map(|g| g.psi.clone()).collect(),
        representatives: t.state.representatives(),
        reseeds: t.reseeds.clone(),
        wall_time_s: secs,
        restart,
        restarts: summaries,
    })
}

/// Picks `round(fraction * n)` vertices uniformly and pins them to `truth`.
pub fn sample_supervision<R: Rng + ?Sized>(truth: &[usize], fraction: f64, rng: &mut R) -> BTreeMap<usize, usize> {
    let n = truth.len();
    let count = ((fraction * n as f64).round() as usize).min(n);
    sample(rng, n, count).into_iter().map(|v| (v, truth[v])).collect()
}
