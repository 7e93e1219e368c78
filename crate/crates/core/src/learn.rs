//! Maximum-likelihood weight learning: projected gradient (PGD), exponentiated
//! gradient (EG), sequential monomial approximation (SMA) and the
//! concave-convex procedure (CCCP), whose closed-form step is the EM update.
//!
//! The batch objective is `sum_m log f_S(x_m|w) - M log f_S(1|w)`. Its
//! gradient splits into a data term `g1` and a partition term `g2`, each
//! obtained from one evaluate/differentiate pass per instance plus one pass
//! with every variable marginalized.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::graph::{Node, SpnGraph, WeightVector};
use crate::inference::{backward, check_data, check_weights, forward, sum_log_values, Assignment, InferenceError};
use crate::io::Dataset;
use crate::logspace::{map_row_chunks, pairwise_reduce, NEG_INF};

/// Maximum number of step sizes tried by [`line_search`].
pub const MAX_LINE_SEARCH_TRIALS: usize = 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error("training instance {index} has zero probability under the current weights")]
    ZeroProbabilityInstance { index: usize },
    #[error("invalid learner configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algorithm {
    Pgd,
    Eg,
    Sma,
    Cccp,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Pgd, Algorithm::Eg, Algorithm::Sma, Algorithm::Cccp];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Pgd => "pgd",
            Algorithm::Eg => "eg",
            Algorithm::Sma => "sma",
            Algorithm::Cccp => "cccp",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = LearnError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "pgd" => Ok(Algorithm::Pgd),
            "eg" => Ok(Algorithm::Eg),
            "sma" => Ok(Algorithm::Sma),
            "cccp" | "em" => Ok(Algorithm::Cccp),
            other => Err(LearnError::InvalidConfig(format!("unknown algorithm '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LearnerConfig {
    pub algorithm: Algorithm,
    pub max_iters: usize,
    /// Stop when the mean per-instance log-likelihood changes by less than this.
    pub stop_tol: f64,
    /// First step size tried by the line search at every iteration.
    pub init_step: f64,
    /// Backtracking factor.
    pub shrink: f64,
    /// PGD projects onto `{w >= proj_margin}`.
    pub proj_margin: f64,
    /// Additive constant on the CCCP sufficient statistics.
    pub smoothing: f64,
    pub seed: u64,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            algorithm: Algorithm::Cccp,
            max_iters: 50,
            stop_tol: 1e-3,
            init_step: 1.0,
            shrink: 0.8,
            proj_margin: 0.01,
            smoothing: 1e-3,
            seed: 0,
        }
    }
}

impl LearnerConfig {
    pub fn with_algorithm(algorithm: Algorithm) -> Self {
        LearnerConfig { algorithm, ..Default::default() }
    }

    pub fn check(&self) -> Result<(), LearnError> {
        let bad = |what: &str| Err(LearnError::InvalidConfig(what.to_string()));
        if !(self.stop_tol >= 0.0 && self.stop_tol.is_finite()) {
            return bad("stop tolerance must be finite and non-negative");
        }
        if !(self.init_step > 0.0 && self.init_step.is_finite()) {
            return bad("initial step must be positive");
        }
        if !(self.shrink > 0.0 && self.shrink < 1.0) {
            return bad("shrink factor must lie in (0, 1)");
        }
        if !(self.proj_margin > 0.0 && self.proj_margin.is_finite()) {
            return bad("projection margin must be positive");
        }
        if !(self.smoothing >= 0.0 && self.smoothing.is_finite()) {
            return bad("smoothing must be finite and non-negative");
        }
        Ok(())
    }
}

/// Gradients of the data term and of the partition term with respect to `w`.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientPair {
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl GradientPair {
    /// `g1 - g2`, the ascent direction of the objective.
    pub fn difference(&self) -> Vec<f64> {
        self.g1.iter().zip(&self.g2).map(|(a, b)| a - b).collect()
    }

    pub fn scaled(&self, factor: f64) -> GradientPair {
        GradientPair {
            g1: self.g1.iter().map(|g| g * factor).collect(),
            g2: self.g2.iter().map(|g| g * factor).collect(),
        }
    }
}

/// Everything one full pass over the data yields.
#[derive(Debug, Clone)]
pub(crate) struct Statistics {
    /// Total log-likelihood of the batch.
    pub log_likelihood: f64,
    pub grad: GradientPair,
}

struct Workspace {
    x: Assignment,
    values: Vec<f64>,
    derivs: Vec<f64>,
    scratch: Vec<f64>,
}

impl Workspace {
    fn new(graph: &SpnGraph) -> Self {
        Workspace {
            x: Assignment::marginal(graph.num_vars()),
            values: vec![NEG_INF; graph.num_nodes()],
            derivs: vec![NEG_INF; graph.num_nodes()],
            scratch: Vec::new(),
        }
    }

    /// Evaluates and differentiates at the current `x`, then adds
    /// `exp(log df/df_i + log f_j - log f_S)` to `acc[d]` for every sum edge.
    /// Returns `log f_S(x)`.
    fn accumulate(&mut self, graph: &SpnGraph, log_w: &[f64], acc: &mut [f64]) -> f64 {
        let log_f = forward(graph, log_w, &self.x, &mut self.values);
        if log_f == NEG_INF {
            return log_f;
        }
        backward(graph, log_w, &self.values, &mut self.derivs, &mut self.scratch);
        for e in graph.edges() {
            let t = self.derivs[e.parent.0] + self.values[e.child.0] - log_f;
            if t != NEG_INF {
                acc[e.index] += t.exp();
            }
        }
        log_f
    }
}

pub(crate) fn statistics(graph: &SpnGraph, w: &WeightVector, data: &Dataset) -> Result<Statistics, LearnError> {
    check_weights(graph, w)?;
    check_data(graph, data)?;
    let log_w = w.logs();
    let d = graph.num_edges();

    let partial = map_row_chunks(
        data.num_rows(),
        || Workspace::new(graph),
        |ws, rows| -> Result<(f64, Vec<f64>), usize> {
            let mut acc = vec![0.0; d];
            let mut ll = 0.0;
            for m in rows {
                ws.x.fill_from_bits(data.row(m));
                let log_f = ws.accumulate(graph, &log_w, &mut acc);
                if log_f == NEG_INF {
                    return Err(m);
                }
                ll += log_f;
            }
            Ok((ll, acc))
        },
    );
    let partial = partial
        .into_iter()
        .collect::<Result<Vec<_>, usize>>()
        .map_err(|index| LearnError::ZeroProbabilityInstance { index })?;
    let (data_term, g1) = pairwise_reduce(partial, &|(la, mut ga), (lb, gb)| {
        for (a, b) in ga.iter_mut().zip(&gb) {
            *a += b;
        }
        (la + lb, ga)
    })
    .expect("dataset is non-empty");

    let mut ws = Workspace::new(graph);
    let mut g2 = vec![0.0; d];
    let log_z = ws.accumulate(graph, &log_w, &mut g2);
    let m = data.num_rows() as f64;
    for g in &mut g2 {
        *g *= m;
    }

    Ok(Statistics { log_likelihood: data_term - m * log_z, grad: GradientPair { g1, g2 } })
}

/// Gradient of the total training log-likelihood, split into data and
/// partition terms.
pub fn gradient(graph: &SpnGraph, w: &WeightVector, data: &Dataset) -> Result<GradientPair, LearnError> {
    Ok(statistics(graph, w, data)?.grad)
}

/// Additive step followed by the componentwise clamp at `margin`.
pub fn pgd_step(w: &WeightVector, grad: &GradientPair, gamma: f64, margin: f64) -> WeightVector {
    let next = w
        .as_slice()
        .iter()
        .zip(grad.g1.iter().zip(&grad.g2))
        .map(|(&w, (a, b))| (w + gamma * (a - b)).max(margin))
        .collect();
    WeightVector::from_vec_unchecked(next)
}

fn multiplicative(w: &WeightVector, grad: &GradientPair, gamma: f64, weighted: bool) -> Option<WeightVector> {
    let mut next = Vec::with_capacity(w.len());
    for (&w, (a, b)) in w.as_slice().iter().zip(grad.g1.iter().zip(&grad.g2)) {
        let scale = if weighted { gamma * w } else { gamma };
        let v = w * (scale * (a - b)).exp();
        if !(v.is_finite() && v > 0.0) {
            return None;
        }
        next.push(v);
    }
    Some(WeightVector::from_vec_unchecked(next))
}

/// `w_d * exp(gamma * (g1 - g2)_d)`. `None` when a weight overflows or
/// underflows to zero; the line search treats that as a rejected step.
pub fn eg_step(w: &WeightVector, grad: &GradientPair, gamma: f64) -> Option<WeightVector> {
    multiplicative(w, grad, gamma, false)
}

/// `w_d * exp(gamma * w_d * (g1 - g2)_d)`: a gradient step in `log w`.
pub fn sma_step(w: &WeightVector, grad: &GradientPair, gamma: f64) -> Option<WeightVector> {
    multiplicative(w, grad, gamma, true)
}

/// Result of a backtracking line search.
#[derive(Debug, Clone, PartialEq)]
pub struct LineSearchOutcome {
    /// Accepted weights, or the input weights when every trial failed.
    pub weights: WeightVector,
    /// Accepted step size; `None` when no trial improved the objective.
    pub gamma: Option<f64>,
    /// Total training log-likelihood at `weights`.
    pub log_likelihood: f64,
    pub trials: usize,
}

fn objective(graph: &SpnGraph, w: &WeightVector, data: &Dataset) -> f64 {
    let log_w = w.logs();
    let log_z = forward(graph, &log_w, &Assignment::marginal(graph.num_vars()), &mut vec![NEG_INF; graph.num_nodes()]);
    sum_log_values(graph, &log_w, data) - data.num_rows() as f64 * log_z
}

fn search_from<F>(
    graph: &SpnGraph,
    data: &Dataset,
    w: &WeightVector,
    current: f64,
    init_step: f64,
    shrink: f64,
    mut step: F,
) -> LineSearchOutcome
where
    F: FnMut(f64) -> Option<WeightVector>,
{
    let mut gamma = init_step;
    for trial in 1..=MAX_LINE_SEARCH_TRIALS {
        if let Some(candidate) = step(gamma) {
            let ll = objective(graph, &candidate, data);
            if ll > current {
                return LineSearchOutcome { weights: candidate, gamma: Some(gamma), log_likelihood: ll, trials: trial };
            }
        }
        gamma *= shrink;
    }
    LineSearchOutcome { weights: w.clone(), gamma: None, log_likelihood: current, trials: MAX_LINE_SEARCH_TRIALS }
}

/// Tries `init_step * shrink^k` for `k = 0, 1, ...` and accepts the first
/// step whose weights strictly increase the training log-likelihood.
pub fn line_search<F>(
    graph: &SpnGraph,
    data: &Dataset,
    w: &WeightVector,
    init_step: f64,
    shrink: f64,
    step: F,
) -> Result<LineSearchOutcome, LearnError>
where
    F: FnMut(f64) -> Option<WeightVector>,
{
    check_weights(graph, w)?;
    check_data(graph, data)?;
    let current = objective(graph, w, data);
    Ok(search_from(graph, data, w, current, init_step, shrink, step))
}

/// Rescales weights bottom-up so every sum node's weights sum to one while
/// the normalized distribution is unchanged:
/// `w'_ij = w_ij f_j(1|w) / sum_k w_ik f_k(1|w)`.
pub fn normalize_locally(graph: &SpnGraph, w: &WeightVector) -> Result<WeightVector, LearnError> {
    check_weights(graph, w)?;
    let log_w = w.logs();
    let mut values = vec![NEG_INF; graph.num_nodes()];
    forward(graph, &log_w, &Assignment::marginal(graph.num_vars()), &mut values);
    let mut next = vec![0.0; w.len()];
    for v in graph.sum_nodes() {
        let Node::Sum(children) = &graph.nodes()[v.0] else { unreachable!() };
        let start = graph.edge_start(v);
        let terms: Vec<f64> = children.iter().enumerate().map(|(k, c)| log_w[start + k] + values[c.0]).collect();
        let max = terms.iter().copied().fold(NEG_INF, f64::max);
        if max == NEG_INF {
            next[start..start + children.len()].fill(1.0 / children.len() as f64);
            continue;
        }
        let total: f64 = terms.iter().map(|t| (t - max).exp()).sum();
        for (k, t) in terms.iter().enumerate() {
            next[start + k] = (t - max).exp() / total;
        }
    }
    Ok(WeightVector::from_vec_unchecked(next))
}

/// Renormalizes `w_ij * stat_ij + smoothing` at every sum node.
fn cccp_update(graph: &SpnGraph, w: &WeightVector, edge_stat: &[f64], smoothing: f64) -> WeightVector {
    let mut next = vec![0.0; w.len()];
    for v in graph.sum_nodes() {
        let range = graph.sum_edges(v).expect("sum node");
        let raw: Vec<f64> = range.clone().map(|d| w[d] * edge_stat[d] + smoothing).collect();
        let total: f64 = raw.iter().sum();
        if total > 0.0 && total.is_finite() {
            for (d, r) in range.zip(raw) {
                next[d] = r / total;
            }
        } else {
            // No instance reaches this node and there is no smoothing: keep
            // the current proportions.
            let own: f64 = range.clone().map(|d| w[d]).sum();
            let n = range.len() as f64;
            for d in range {
                next[d] = if own > 0.0 { w[d] / own } else { 1.0 / n };
            }
        }
    }
    WeightVector::from_vec_unchecked(next)
}

/// One CCCP step. Expects locally normalized weights and returns locally
/// normalized weights.
pub fn cccp_step(
    graph: &SpnGraph,
    w: &WeightVector,
    data: &Dataset,
    smoothing: f64,
) -> Result<WeightVector, LearnError> {
    let stats = statistics(graph, w, data)?;
    Ok(cccp_update(graph, w, &stats.grad.g1, smoothing))
}

/// Seeded i.i.d. uniform(0,1) edge weights, locally normalized.
pub fn initial_weights(graph: &SpnGraph, seed: u64) -> WeightVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw: Vec<f64> = (0..graph.num_edges())
        .map(|_| loop {
            let u: f64 = rng.random();
            if u > 0.0 {
                break u;
            }
        })
        .collect();
    normalize_locally(graph, &WeightVector::from_vec_unchecked(raw)).expect("lengths match")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    Converged,
    MaxIters,
    LineSearchFailed,
}

impl fmt::Display for StopReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            StopReason::Converged => "converged",
            StopReason::MaxIters => "max-iters",
            StopReason::LineSearchFailed => "line-search-failed",
        })
    }
}

/// Record of one training run. Entry `k` of the per-iteration vectors
/// describes the weights after `k` iterations; entry 0 is the initial point.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun {
    pub algorithm: Algorithm,
    /// Mean training log-likelihood per instance.
    pub ll_curve: Vec<f64>,
    /// Accepted step size per iteration; `None` at entry 0 and for CCCP.
    pub gammas: Vec<Option<f64>>,
    /// Milliseconds since the start of the run.
    pub elapsed_ms: Vec<f64>,
    /// Weights after each iteration, starting with the initial point.
    pub weight_history: Vec<WeightVector>,
    pub iters_used: usize,
    pub final_w: WeightVector,
    pub wall_time: f64,
    pub stop_reason: StopReason,
    pub num_instances: usize,
}

impl TrainRun {
    pub fn final_ll(&self) -> f64 {
        *self.ll_curve.last().expect("curve holds the initial point")
    }
}

/// Trains from seeded random weights (see [`initial_weights`]).
pub fn train(graph: &SpnGraph, data: &Dataset, config: &LearnerConfig) -> Result<TrainRun, LearnError> {
    train_from(graph, data, config, initial_weights(graph, config.seed))
}

/// Trains from the given starting weights. CCCP normalizes them locally
/// first; the normalized network defines the same distribution.
pub fn train_from(
    graph: &SpnGraph,
    data: &Dataset,
    config: &LearnerConfig,
    init: WeightVector,
) -> Result<TrainRun, LearnError> {
    config.check()?;
    check_weights(graph, &init)?;
    check_data(graph, data)?;
    let start = Instant::now();
    let ms = |s: &Instant| s.elapsed().as_secs_f64() * 1e3;
    let m = data.num_rows() as f64;

    let init_stats = statistics(graph, &init, data)?;
    // Entry 0 is reported for the shared initial weights, so every algorithm
    // started from the same seed begins with the same value.
    let mut ll_curve = vec![init_stats.log_likelihood / m];
    let (mut w, mut stats) = match config.algorithm {
        Algorithm::Cccp => {
            let w = normalize_locally(graph, &init)?;
            let stats = statistics(graph, &w, data)?;
            (w, stats)
        }
        _ => (init, init_stats),
    };
    let mut gammas = vec![None];
    let mut elapsed_ms = vec![ms(&start)];
    let mut weight_history = vec![w.clone()];
    let mut stop_reason = StopReason::MaxIters;

    for _ in 0..config.max_iters {
        let (next_w, gamma) =
            match config.algorithm {
                Algorithm::Cccp => (cccp_update(graph, &w, &stats.grad.g1, config.smoothing), None),
                algo => {
                    // Steps follow the mean per-instance objective.
                    let direction = stats.grad.scaled(1.0 / m);
                    let outcome =
                        search_from(graph, data, &w, stats.log_likelihood, config.init_step, config.shrink, |g| {
                            match algo {
                                Algorithm::Pgd => Some(pgd_step(&w, &direction, g, config.proj_margin)),
                                Algorithm::Eg => eg_step(&w, &direction, g),
                                Algorithm::Sma => sma_step(&w, &direction, g),
                                Algorithm::Cccp => unreachable!(),
                            }
                        });
                    match outcome.gamma {
                        Some(g) => (outcome.weights, Some(g)),
                        None => {
                            stop_reason = StopReason::LineSearchFailed;
                            break;
                        }
                    }
                }
            };
        let next_stats = statistics(graph, &next_w, data)?;
        let prev = *ll_curve.last().expect("non-empty");
        let ll = next_stats.log_likelihood / m;
        ll_curve.push(ll);
        gammas.push(gamma);
        elapsed_ms.push(ms(&start));
        weight_history.push(next_w.clone());
        w = next_w;
        stats = next_stats;
        if (ll - prev).abs() < config.stop_tol {
            stop_reason = StopReason::Converged;
            break;
        }
    }

    Ok(TrainRun {
        algorithm: config.algorithm,
        iters_used: ll_curve.len() - 1,
        ll_curve,
        gammas,
        elapsed_ms,
        weight_history,
        final_w: w,
        wall_time: start.elapsed().as_secs_f64(),
        stop_reason,
        num_instances: data.num_rows(),
    })
}

/// Runs all four algorithms from the same seeded initial weights, in the
/// order PGD, EG, SMA, CCCP.
pub fn compare(graph: &SpnGraph, data: &Dataset, base: &LearnerConfig) -> Result<Vec<TrainRun>, LearnError> {
    let init = initial_weights(graph, base.seed);
    Algorithm::ALL
        .iter()
        .map(|&algorithm| train_from(graph, data, &LearnerConfig { algorithm, ..base.clone() }, init.clone()))
        .collect()
}
