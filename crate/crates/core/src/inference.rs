//! Evaluation and differentiation of the network polynomial in log space.
//!
//! The bottom-up pass fills `log f_v(x|w)` for every node; the top-down pass
//! fills `log df_S/df_v`. Zero is carried as `-inf` and never produces NaN:
//! no `+inf` ever enters a sum, and products of node values are formed by
//! adding the siblings' log-values rather than dividing by the child's.

use thiserror::Error;

use crate::graph::{Node, NodeId, SpnGraph, WeightVector};
use crate::io::Dataset;
use crate::logspace::{log_add_exp, map_row_chunks, pairwise_reduce, NEG_INF};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InferenceError {
    #[error("assignment has {found} variables, graph has {expected}")]
    AssignmentLength { expected: usize, found: usize },
    #[error("weight vector has {found} entries, graph has {expected} sum edges")]
    WeightLength { expected: usize, found: usize },
    #[error("trace has {found} nodes, graph has {expected}")]
    TraceMismatch { expected: usize, found: usize },
    #[error("dataset has {found} columns, graph has {expected} variables")]
    DataWidth { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// State of one variable in a query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VarValue {
    False,
    True,
    /// Summed out: both indicators of the variable evaluate to 1.
    Marginalized,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment(Vec<VarValue>);

impl Assignment {
    pub fn new(values: Vec<VarValue>) -> Self {
        Assignment(values)
    }

    pub fn marginal(num_vars: usize) -> Self {
        Assignment(vec![VarValue::Marginalized; num_vars])
    }

    pub fn from_bits(bits: &[u8]) -> Self {
        let mut a = Assignment(Vec::with_capacity(bits.len()));
        a.fill_from_bits(bits);
        a
    }

    /// Reuses the buffer for a complete 0/1 instance.
    pub fn fill_from_bits(&mut self, bits: &[u8]) {
        self.0.clear();
        self.0.extend(bits.iter().map(|&b| if b != 0 { VarValue::True } else { VarValue::False }));
    }

    /// Every complete assignment over `num_vars` variables, in binary
    /// counting order with variable 0 as the most significant bit.
    pub fn all_complete(num_vars: usize) -> impl Iterator<Item = Assignment> {
        (0u64..1 << num_vars).map(move |k| {
            let bits: Vec<u8> = (0..num_vars).map(|n| ((k >> (num_vars - 1 - n)) & 1) as u8).collect();
            Assignment::from_bits(&bits)
        })
    }

    pub fn values(&self) -> &[VarValue] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    #[inline]
    pub fn indicator(&self, var: usize, polarity: bool) -> bool {
        match self.0[var] {
            VarValue::Marginalized => true,
            VarValue::True => polarity,
            VarValue::False => !polarity,
        }
    }
}

/// Per-node log-values and log-derivatives for a single input.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalTrace {
    pub log_value: Vec<f64>,
    pub log_deriv: Vec<f64>,
}

impl EvalTrace {
    pub fn new(num_nodes: usize) -> Self {
        EvalTrace { log_value: vec![NEG_INF; num_nodes], log_deriv: vec![NEG_INF; num_nodes] }
    }

    pub fn log_value(&self, v: NodeId) -> f64 {
        self.log_value[v.0]
    }

    pub fn log_deriv(&self, v: NodeId) -> f64 {
        self.log_deriv[v.0]
    }
}

pub(crate) fn check_weights(graph: &SpnGraph, w: &WeightVector) -> Result<(), InferenceError> {
    if w.len() != graph.num_edges() {
        return Err(InferenceError::WeightLength { expected: graph.num_edges(), found: w.len() });
    }
    Ok(())
}

pub(crate) fn check_data(graph: &SpnGraph, data: &Dataset) -> Result<(), InferenceError> {
    if data.is_empty() {
        return Err(InferenceError::EmptyDataset);
    }
    if data.num_vars() != graph.num_vars() {
        return Err(InferenceError::DataWidth { expected: graph.num_vars(), found: data.num_vars() });
    }
    Ok(())
}

/// Bottom-up pass. Returns the root log-value.
pub(crate) fn forward(graph: &SpnGraph, log_w: &[f64], x: &Assignment, log_value: &mut [f64]) -> f64 {
    let nodes = graph.nodes();
    for &v in graph.topo_order() {
        log_value[v.0] = match &nodes[v.0] {
            Node::Indicator { var, polarity } => {
                if x.indicator(*var, *polarity) {
                    0.0
                } else {
                    NEG_INF
                }
            }
            Node::Product(children) => children.iter().map(|c| log_value[c.0]).sum(),
            Node::Sum(children) => {
                let start = graph.edge_start(v);
                let terms = children.iter().enumerate().map(|(k, c)| log_w[start + k] + log_value[c.0]);
                let max = terms.clone().fold(NEG_INF, f64::max);
                if max == NEG_INF {
                    NEG_INF
                } else {
                    max + terms.map(|t| (t - max).exp()).sum::<f64>().ln()
                }
            }
        };
    }
    log_value[graph.root().0]
}

/// Top-down pass over a filled `log_value`. `scratch` is a reusable buffer.
pub(crate) fn backward(
    graph: &SpnGraph,
    log_w: &[f64],
    log_value: &[f64],
    log_deriv: &mut [f64],
    scratch: &mut Vec<f64>,
) {
    log_deriv.fill(NEG_INF);
    log_deriv[graph.root().0] = 0.0;
    let nodes = graph.nodes();
    for &v in graph.topo_order().iter().rev() {
        let dv = log_deriv[v.0];
        if dv == NEG_INF {
            continue;
        }
        match &nodes[v.0] {
            Node::Indicator { .. } => {}
            Node::Sum(children) => {
                let start = graph.edge_start(v);
                for (k, c) in children.iter().enumerate() {
                    log_deriv[c.0] = log_add_exp(log_deriv[c.0], dv + log_w[start + k]);
                }
            }
            Node::Product(children) => {
                // scratch[k] = sum of log-values of children[..k]; the suffix
                // sum is accumulated on the way back.
                scratch.clear();
                let mut acc = 0.0;
                for c in children {
                    scratch.push(acc);
                    acc += log_value[c.0];
                }
                let mut suffix = 0.0;
                for (k, c) in children.iter().enumerate().rev() {
                    let others = scratch[k] + suffix;
                    log_deriv[c.0] = log_add_exp(log_deriv[c.0], dv + others);
                    suffix += log_value[c.0];
                }
            }
        }
    }
}

/// Computes `log f_v(x|w)` for every node. The returned trace has no
/// derivatives yet (all `-inf`).
pub fn evaluate(graph: &SpnGraph, w: &WeightVector, x: &Assignment) -> Result<EvalTrace, InferenceError> {
    check_weights(graph, w)?;
    if x.len() != graph.num_vars() {
        return Err(InferenceError::AssignmentLength { expected: graph.num_vars(), found: x.len() });
    }
    let mut trace = EvalTrace::new(graph.num_nodes());
    forward(graph, &w.logs(), x, &mut trace.log_value);
    Ok(trace)
}

/// Fills the derivatives of `trace`, whose values must come from
/// [`evaluate`] on the same graph and weights.
pub fn differentiate(graph: &SpnGraph, w: &WeightVector, mut trace: EvalTrace) -> Result<EvalTrace, InferenceError> {
    check_weights(graph, w)?;
    for len in [trace.log_value.len(), trace.log_deriv.len()] {
        if len != graph.num_nodes() {
            return Err(InferenceError::TraceMismatch { expected: graph.num_nodes(), found: len });
        }
    }
    let mut scratch = Vec::new();
    backward(graph, &w.logs(), &trace.log_value, &mut trace.log_deriv, &mut scratch);
    Ok(trace)
}

/// `log f_S(1|w)`, the log normalization constant.
pub fn evaluate_partition(graph: &SpnGraph, w: &WeightVector) -> Result<f64, InferenceError> {
    check_weights(graph, w)?;
    let mut values = vec![NEG_INF; graph.num_nodes()];
    Ok(forward(graph, &w.logs(), &Assignment::marginal(graph.num_vars()), &mut values))
}

/// `log Pr(x|w) = log f_S(x|w) - log f_S(1|w)`.
pub fn log_probability(graph: &SpnGraph, w: &WeightVector, x: &Assignment) -> Result<f64, InferenceError> {
    let value = evaluate(graph, w, x)?.log_value(graph.root());
    Ok(value - evaluate_partition(graph, w)?)
}

/// Sum over instances of `log f_S(x_m|w)`, i.e. the data term without the
/// partition correction. `-inf` if any instance has zero mass.
pub(crate) fn sum_log_values(graph: &SpnGraph, log_w: &[f64], data: &Dataset) -> f64 {
    let n = graph.num_nodes();
    let partial = map_row_chunks(
        data.num_rows(),
        || (Assignment::marginal(0), vec![NEG_INF; n]),
        |(x, values), rows| {
            let mut acc = 0.0;
            for m in rows {
                x.fill_from_bits(data.row(m));
                acc += forward(graph, log_w, x, values);
            }
            acc
        },
    );
    pairwise_reduce(partial, &|a, b| a + b).unwrap_or(0.0)
}

/// Total training log-likelihood `sum_m log f_S(x_m|w) - M log f_S(1|w)`.
/// Returns `-inf` if any instance has zero probability.
pub fn log_likelihood(graph: &SpnGraph, w: &WeightVector, data: &Dataset) -> Result<f64, InferenceError> {
    check_weights(graph, w)?;
    check_data(graph, data)?;
    let log_w = w.logs();
    let data_term = sum_log_values(graph, &log_w, data);
    let log_z = forward(graph, &log_w, &Assignment::marginal(graph.num_vars()), &mut vec![NEG_INF; graph.num_nodes()]);
    Ok(data_term - data.num_rows() as f64 * log_z)
}
