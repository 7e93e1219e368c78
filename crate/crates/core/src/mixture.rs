//! The network as a mixture of induced trees.
//!
//! An induced tree keeps the root, exactly one child of every included sum
//! node and all children of every included product node. Each tree is a
//! monomial: the product of its sum-edge weights times one indicator per
//! variable. The number of trees equals the network evaluated with all
//! indicators and all weights set to one, which [`cardinality`] computes
//! exactly.

use std::collections::BTreeMap;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive, Zero};
use thiserror::Error;

use crate::graph::{Node, NodeId, SpnGraph, WeightVector};
use crate::inference::{check_weights, Assignment, InferenceError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MixtureError {
    #[error("network has {cardinality} induced trees, above the enumeration cap of {limit}")]
    CapExceeded { cardinality: BigUint, limit: u64 },
    #[error("tree does not belong to this graph: {0}")]
    TreeMismatch(String),
    #[error(transparent)]
    Inference(#[from] InferenceError),
}

/// Number of unique induced trees.
#[derive(Debug, Clone, PartialEq)]
pub struct Cardinality {
    pub exact: BigUint,
    pub log_approx: f64,
}

impl Cardinality {
    fn from_exact(exact: BigUint) -> Self {
        let log_approx = log_biguint(&exact);
        Cardinality { exact, log_approx }
    }

    /// Decimal rendering when it has at most `max_digits` digits, otherwise
    /// `10^<log10>`.
    pub fn display(&self, max_digits: usize) -> String {
        let s = self.exact.to_string();
        if s.len() <= max_digits {
            s
        } else {
            format!("10^{:.6}", self.log_approx / std::f64::consts::LN_10)
        }
    }
}

fn log_biguint(n: &BigUint) -> f64 {
    if n.is_zero() {
        return f64::NEG_INFINITY;
    }
    let bits = n.bits();
    if bits <= 1000 {
        return n.to_f64().expect("fits in f64").ln();
    }
    let shift = bits - 64;
    let top = (n >> shift).to_f64().expect("64-bit prefix fits");
    top.ln() + shift as f64 * std::f64::consts::LN_2
}

/// Counts induced trees with one bottom-up pass: indicators count 1, sums add
/// their children's counts, products multiply them.
pub fn cardinality(graph: &SpnGraph) -> Cardinality {
    let mut count: Vec<BigUint> = vec![BigUint::zero(); graph.num_nodes()];
    for &v in graph.topo_order() {
        count[v.0] = match graph.nodes()[v.0] {
            Node::Indicator { .. } => BigUint::one(),
            Node::Sum(ref children) => children.iter().map(|c| &count[c.0]).sum(),
            Node::Product(ref children) => children.iter().fold(BigUint::one(), |acc, c| acc * &count[c.0]),
        };
    }
    Cardinality::from_exact(std::mem::take(&mut count[graph.root().0]))
}

/// One induced tree of a graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct InducedTree {
    /// Selected child position for every included sum node.
    pub chosen_child: BTreeMap<NodeId, usize>,
    /// Every included edge as `(parent, child)`, in traversal order.
    pub edge_set: Vec<(NodeId, NodeId)>,
    /// Sorted indices of the included sum edges.
    pub sum_edges: Vec<usize>,
    /// Included nodes in pre-order from the root.
    pub nodes: Vec<NodeId>,
}

impl InducedTree {
    /// Indicator leaves of the tree as `(var, polarity)`, sorted by variable.
    pub fn leaves(&self, graph: &SpnGraph) -> Vec<(usize, bool)> {
        let mut out: Vec<(usize, bool)> = self
            .nodes
            .iter()
            .filter_map(|&v| match graph.nodes()[v.0] {
                Node::Indicator { var, polarity } => Some((var, polarity)),
                _ => None,
            })
            .collect();
        out.sort_unstable();
        out
    }

    /// The tree as a standalone network, with node ids renumbered so that
    /// children precede parents, and its weights.
    pub fn to_spn(&self, graph: &SpnGraph, w: &WeightVector) -> Result<(SpnGraph, WeightVector), MixtureError> {
        check_weights(graph, w)?;
        let mut new_id: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut original = Vec::with_capacity(self.nodes.len());
        // Reverse pre-order visits every child before its parent.
        for &v in self.nodes.iter().rev() {
            let node = match &graph.nodes()[v.0] {
                Node::Indicator { var, polarity } => Node::Indicator { var: *var, polarity: *polarity },
                Node::Sum(children) => {
                    let k = self.chosen(v)?;
                    Node::Sum(vec![self.mapped(&new_id, children[k])?])
                }
                Node::Product(children) => {
                    Node::Product(children.iter().map(|&c| self.mapped(&new_id, c)).collect::<Result<_, _>>()?)
                }
            };
            new_id.insert(v, NodeId(nodes.len()));
            nodes.push(node);
            original.push(v);
        }
        let root = NodeId(nodes.len() - 1);
        let sub =
            SpnGraph::new(nodes, root, graph.num_vars()).map_err(|e| MixtureError::TreeMismatch(e.to_string()))?;
        let weights: Vec<f64> = sub
            .edges()
            .iter()
            .map(|e| {
                let orig = original[e.parent.0];
                w[graph.edge_start(orig) + self.chosen_child[&orig]]
            })
            .collect();
        Ok((sub, WeightVector::new(weights).expect("weights copied from a valid vector")))
    }

    fn chosen(&self, v: NodeId) -> Result<usize, MixtureError> {
        self.chosen_child
            .get(&v)
            .copied()
            .ok_or_else(|| MixtureError::TreeMismatch(format!("sum node {v} has no chosen child")))
    }

    fn mapped(&self, map: &BTreeMap<NodeId, NodeId>, v: NodeId) -> Result<NodeId, MixtureError> {
        map.get(&v).copied().ok_or_else(|| MixtureError::TreeMismatch(format!("node {v} is not part of the tree")))
    }
}

/// Walks the induced tree determined by `decisions` (the choices at sum
/// nodes in pre-order). Missing trailing decisions default to the first
/// child and are appended, so the result always describes a full tree.
fn walk(graph: &SpnGraph, decisions: &mut Vec<(usize, usize)>) -> InducedTree {
    let nodes = graph.nodes();
    let mut tree =
        InducedTree { chosen_child: BTreeMap::new(), edge_set: Vec::new(), sum_edges: Vec::new(), nodes: Vec::new() };
    let mut next_decision = 0;
    let mut stack = vec![graph.root()];
    while let Some(v) = stack.pop() {
        tree.nodes.push(v);
        match &nodes[v.0] {
            Node::Indicator { .. } => {}
            Node::Sum(children) => {
                if next_decision == decisions.len() {
                    decisions.push((0, children.len()));
                }
                let k = decisions[next_decision].0;
                next_decision += 1;
                tree.chosen_child.insert(v, k);
                tree.edge_set.push((v, children[k]));
                tree.sum_edges.push(graph.edge_start(v) + k);
                stack.push(children[k]);
            }
            Node::Product(children) => {
                for &c in children {
                    tree.edge_set.push((v, c));
                }
                // Reversed so the first child is visited first.
                stack.extend(children.iter().rev());
            }
        }
    }
    debug_assert_eq!(next_decision, decisions.len());
    tree.sum_edges.sort_unstable();
    tree
}

/// Lazily yields every induced tree once, in lexicographic order of the
/// child choices made at sum nodes met in a pre-order walk from the root.
pub struct TreeIter<'g> {
    graph: &'g SpnGraph,
    /// `(chosen child, fan-out)` per sum node of the current tree.
    decisions: Vec<(usize, usize)>,
    done: bool,
}

impl Iterator for TreeIter<'_> {
    type Item = InducedTree;

    fn next(&mut self) -> Option<InducedTree> {
        if self.done {
            return None;
        }
        let tree = walk(self.graph, &mut self.decisions);
        // Advance: bump the last decision that still has room and drop the
        // ones after it; the next walk re-fills them with first choices.
        loop {
            match self.decisions.last_mut() {
                None => {
                    self.done = true;
                    break;
                }
                Some((k, fan)) if *k + 1 < *fan => {
                    *k += 1;
                    break;
                }
                Some(_) => {
                    self.decisions.pop();
                }
            }
        }
        Some(tree)
    }
}

/// Enumerates all induced trees, refusing when there are more than `limit`.
pub fn enumerate_trees(graph: &SpnGraph, limit: u64) -> Result<TreeIter<'_>, MixtureError> {
    let card = cardinality(graph);
    if card.exact > BigUint::from(limit) {
        return Err(MixtureError::CapExceeded { cardinality: card.exact, limit });
    }
    Ok(TreeIter { graph, decisions: Vec::new(), done: false })
}

/// Value of one tree's monomial: product of its sum-edge weights times its
/// leaf indicators evaluated at `x`.
pub fn tree_value(graph: &SpnGraph, tree: &InducedTree, w: &WeightVector, x: &Assignment) -> Result<f64, MixtureError> {
    check_weights(graph, w)?;
    if x.len() != graph.num_vars() {
        return Err(InferenceError::AssignmentLength { expected: graph.num_vars(), found: x.len() }.into());
    }
    let mut value = 1.0;
    for &d in &tree.sum_edges {
        if d >= graph.num_edges() {
            return Err(MixtureError::TreeMismatch(format!("edge index {d} out of range")));
        }
        value *= w[d];
    }
    for &v in &tree.nodes {
        match graph.nodes().get(v.0) {
            None => return Err(MixtureError::TreeMismatch(format!("node {v} out of range"))),
            Some(Node::Indicator { var, polarity }) if !x.indicator(*var, *polarity) => return Ok(0.0),
            Some(_) => {}
        }
    }
    Ok(value)
}
