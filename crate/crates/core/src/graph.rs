//! SPN structure: nodes, scopes, topological order and sum-edge indexing.
//!
//! A [`SpnGraph`] can only be obtained through [`SpnGraph::new`], which runs
//! [`validate`] and refuses anything that is not a rooted, complete and
//! decomposable DAG. Everything downstream (inference, enumeration, learning)
//! relies on that and does not re-check.

use std::fmt;
use std::ops::Range;

use thiserror::Error;

/// Dense node identifier, an index into the node table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

impl NodeId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Sum,
    Product,
    Indicator,
}

/// A node of the network. Indicator `polarity == true` is `I[x_var = 1]`,
/// `false` is `I[x_var = 0]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Sum(Vec<NodeId>),
    Product(Vec<NodeId>),
    Indicator { var: usize, polarity: bool },
}

impl Node {
    pub fn children(&self) -> &[NodeId] {
        match self {
            Node::Sum(c) | Node::Product(c) => c,
            Node::Indicator { .. } => &[],
        }
    }

    pub fn kind(&self) -> NodeKind {
        match self {
            Node::Sum(_) => NodeKind::Sum,
            Node::Product(_) => NodeKind::Product,
            Node::Indicator { .. } => NodeKind::Indicator,
        }
    }
}

/// Fixed-width bitset over variable indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct VarSet {
    words: Vec<u64>,
}

impl VarSet {
    pub fn empty(num_vars: usize) -> Self {
        VarSet { words: vec![0; num_vars.div_ceil(64)] }
    }

    pub fn singleton(var: usize, num_vars: usize) -> Self {
        let mut s = Self::empty(num_vars.max(var + 1));
        s.insert(var);
        s
    }

    pub fn full(num_vars: usize) -> Self {
        let mut s = Self::empty(num_vars);
        for v in 0..num_vars {
            s.insert(v);
        }
        s
    }

    pub fn insert(&mut self, var: usize) {
        let w = var / 64;
        if w >= self.words.len() {
            self.words.resize(w + 1, 0);
        }
        self.words[w] |= 1 << (var % 64);
    }

    pub fn contains(&self, var: usize) -> bool {
        self.words.get(var / 64).is_some_and(|w| w & (1 << (var % 64)) != 0)
    }

    pub fn union_with(&mut self, other: &VarSet) {
        if other.words.len() > self.words.len() {
            self.words.resize(other.words.len(), 0);
        }
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub fn is_disjoint(&self, other: &VarSet) -> bool {
        self.words.iter().zip(&other.words).all(|(a, b)| a & b == 0)
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words
            .iter()
            .enumerate()
            .flat_map(|(i, &w)| (0..64).filter(move |b| w & (1u64 << b) != 0).map(move |b| i * 64 + b))
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.iter().collect()
    }

    /// Set equality that ignores trailing zero words.
    pub fn same_as(&self, other: &VarSet) -> bool {
        let n = self.words.len().max(other.words.len());
        (0..n).all(|i| self.words.get(i).copied().unwrap_or(0) == other.words.get(i).copied().unwrap_or(0))
    }
}

/// One problem found by [`validate`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    RootOutOfBounds { root: NodeId },
    ChildOutOfBounds { node: NodeId, child: NodeId },
    SelfLoop { node: NodeId },
    EmptyChildren { node: NodeId },
    VarOutOfRange { node: NodeId, var: usize },
    Cycle { node: NodeId },
    Unreachable { node: NodeId },
    Incomplete { node: NodeId },
    NonDecomposable { node: NodeId },
    RootScope { missing: Vec<usize> },
}

impl Violation {
    /// The node the violation is attributed to, if any.
    pub fn node(&self) -> Option<NodeId> {
        match *self {
            Violation::RootOutOfBounds { root } => Some(root),
            Violation::ChildOutOfBounds { node, .. }
            | Violation::SelfLoop { node }
            | Violation::EmptyChildren { node }
            | Violation::VarOutOfRange { node, .. }
            | Violation::Cycle { node }
            | Violation::Unreachable { node }
            | Violation::Incomplete { node }
            | Violation::NonDecomposable { node } => Some(node),
            Violation::RootScope { .. } => None,
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::RootOutOfBounds { root } => write!(f, "root {root} is not a node"),
            Violation::ChildOutOfBounds { node, child } => {
                write!(f, "node {node} references missing child {child}")
            }
            Violation::SelfLoop { node } => write!(f, "node {node} is its own child"),
            Violation::EmptyChildren { node } => write!(f, "internal node {node} has no children"),
            Violation::VarOutOfRange { node, var } => {
                write!(f, "indicator {node} uses variable {var} outside the declared range")
            }
            Violation::Cycle { node } => write!(f, "cycle through node {node}"),
            Violation::Unreachable { node } => write!(f, "node {node} is unreachable from the root"),
            Violation::Incomplete { node } => {
                write!(f, "sum node {node} is incomplete: children have different scopes")
            }
            Violation::NonDecomposable { node } => {
                write!(f, "product node {node} is not decomposable: children scopes overlap")
            }
            Violation::RootScope { missing } => {
                write!(f, "root scope is missing variables {missing:?}")
            }
        }
    }
}

/// Outcome of [`validate`]; an empty violation list means the structure is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "OK");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                write!(f, "; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("invalid SPN: {0}")]
    Invalid(ValidationReport),
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("weight {index} is {value}; weights must be finite and non-negative")]
    BadWeight { index: usize, value: f64 },
}

struct Analysis {
    topo_order: Vec<NodeId>,
    scopes: Vec<VarSet>,
}

fn analyze(nodes: &[Node], root: NodeId, num_vars: usize) -> (ValidationReport, Option<Analysis>) {
    let mut violations = Vec::new();
    let n = nodes.len();

    if root.0 >= n {
        violations.push(Violation::RootOutOfBounds { root });
    }
    for (i, node) in nodes.iter().enumerate() {
        let id = NodeId(i);
        match node {
            Node::Sum(children) | Node::Product(children) => {
                if children.is_empty() {
                    violations.push(Violation::EmptyChildren { node: id });
                }
                for &c in children {
                    if c.0 >= n {
                        violations.push(Violation::ChildOutOfBounds { node: id, child: c });
                    } else if c == id {
                        violations.push(Violation::SelfLoop { node: id });
                    }
                }
            }
            Node::Indicator { var, .. } => {
                if *var >= num_vars {
                    violations.push(Violation::VarOutOfRange { node: id, var: *var });
                }
            }
        }
    }
    if !violations.is_empty() {
        return (ValidationReport { violations }, None);
    }

    // Iterative DFS from the root; post-order gives children before parents.
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; n];
    let mut topo_order = Vec::with_capacity(n);
    let mut stack: Vec<(NodeId, usize)> = vec![(root, 0)];
    mark[root.0] = Mark::Open;
    while let Some(&mut (v, ref mut next)) = stack.last_mut() {
        let children = nodes[v.0].children();
        if *next < children.len() {
            let c = children[*next];
            *next += 1;
            match mark[c.0] {
                Mark::New => {
                    mark[c.0] = Mark::Open;
                    stack.push((c, 0));
                }
                Mark::Open => {
                    violations.push(Violation::Cycle { node: c });
                    return (ValidationReport { violations }, None);
                }
                Mark::Done => {}
            }
        } else {
            mark[v.0] = Mark::Done;
            topo_order.push(v);
            stack.pop();
        }
    }

    for (i, m) in mark.iter().enumerate() {
        if *m == Mark::New {
            violations.push(Violation::Unreachable { node: NodeId(i) });
        }
    }

    let mut scopes = vec![VarSet::empty(num_vars); n];
    for &v in &topo_order {
        match &nodes[v.0] {
            Node::Indicator { var, .. } => {
                scopes[v.0] = VarSet::singleton(*var, num_vars);
            }
            Node::Sum(children) => {
                let first = &scopes[children[0].0];
                if children.iter().any(|c| !scopes[c.0].same_as(first)) {
                    violations.push(Violation::Incomplete { node: v });
                }
                let mut s = VarSet::empty(num_vars);
                for c in children {
                    s.union_with(&scopes[c.0]);
                }
                scopes[v.0] = s;
            }
            Node::Product(children) => {
                let mut s = VarSet::empty(num_vars);
                let mut overlap = false;
                for c in children {
                    if !s.is_disjoint(&scopes[c.0]) {
                        overlap = true;
                    }
                    s.union_with(&scopes[c.0]);
                }
                if overlap {
                    violations.push(Violation::NonDecomposable { node: v });
                }
                scopes[v.0] = s;
            }
        }
    }

    let root_scope = &scopes[root.0];
    let missing: Vec<usize> = (0..num_vars).filter(|&x| !root_scope.contains(x)).collect();
    if !missing.is_empty() {
        violations.push(Violation::RootScope { missing });
    }

    (ValidationReport { violations }, Some(Analysis { topo_order, scopes }))
}

/// Checks a raw node table for the structural, completeness and
/// decomposability conditions. Violations are returned as data.
pub fn validate(nodes: &[Node], root: NodeId, num_vars: usize) -> ValidationReport {
    analyze(nodes, root, num_vars).0
}

/// One weighted edge out of a sum node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SumEdge {
    pub index: usize,
    pub parent: NodeId,
    pub child: NodeId,
}

/// A validated, immutable sum-product network structure.
#[derive(Debug, Clone)]
pub struct SpnGraph {
    nodes: Vec<Node>,
    root: NodeId,
    num_vars: usize,
    topo_order: Vec<NodeId>,
    scopes: Vec<VarSet>,
    /// First edge index of every sum node; `usize::MAX` for other kinds.
    edge_offset: Vec<usize>,
    edges: Vec<SumEdge>,
}

impl SpnGraph {
    pub fn new(nodes: Vec<Node>, root: NodeId, num_vars: usize) -> Result<Self, GraphError> {
        let (report, analysis) = analyze(&nodes, root, num_vars);
        if !report.is_valid() {
            return Err(GraphError::Invalid(report));
        }
        let Analysis { topo_order, scopes } = analysis.expect("analysis present for valid graph");

        // Edge indices follow the topological order of sum nodes, then child order.
        let mut edge_offset = vec![usize::MAX; nodes.len()];
        let mut edges = Vec::new();
        for &v in &topo_order {
            if let Node::Sum(children) = &nodes[v.0] {
                edge_offset[v.0] = edges.len();
                for &c in children {
                    edges.push(SumEdge { index: edges.len(), parent: v, child: c });
                }
            }
        }

        Ok(SpnGraph { nodes, root, num_vars, topo_order, scopes, edge_offset, edges })
    }

    /// Re-runs the validator over this graph's node table.
    pub fn validate(&self) -> ValidationReport {
        validate(&self.nodes, self.root, self.num_vars)
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn node(&self, id: NodeId) -> Result<&Node, GraphError> {
        self.nodes.get(id.0).ok_or(GraphError::UnknownNode(id))
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn num_vars(&self) -> usize {
        self.num_vars
    }

    /// Children before parents; the root is last.
    pub fn topo_order(&self) -> &[NodeId] {
        &self.topo_order
    }

    pub fn scope_of(&self, id: NodeId) -> Result<&VarSet, GraphError> {
        self.scopes.get(id.0).ok_or(GraphError::UnknownNode(id))
    }

    /// Number of sum-node edges, i.e. the length of a weight vector.
    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[SumEdge] {
        &self.edges
    }

    /// Edge index range of a sum node, `None` for other node kinds.
    pub fn sum_edges(&self, id: NodeId) -> Option<Range<usize>> {
        match self.nodes.get(id.0)? {
            Node::Sum(children) => {
                let start = self.edge_offset[id.0];
                Some(start..start + children.len())
            }
            _ => None,
        }
    }

    #[inline]
    pub(crate) fn edge_start(&self, id: NodeId) -> usize {
        self.edge_offset[id.0]
    }

    pub fn sum_nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.topo_order.iter().copied().filter(|v| matches!(self.nodes[v.0], Node::Sum(_)))
    }

    /// True when every child id is smaller than its parent's id.
    pub fn ids_are_topological(&self) -> bool {
        self.nodes.iter().enumerate().all(|(i, n)| n.children().iter().all(|c| c.0 < i))
    }
}

/// Sum-edge weights, indexed by [`SumEdge::index`].
///
/// Entries are finite and non-negative. The learners keep them strictly
/// positive; exact zeros only arise from an unsmoothed EM step.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(w: Vec<f64>) -> Result<Self, GraphError> {
        if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(GraphError::BadWeight { index, value });
        }
        Ok(WeightVector(w))
    }

    pub fn ones(len: usize) -> Self {
        WeightVector(vec![1.0; len])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.0.iter().all(|&w| w > 0.0)
    }

    /// `log w_d` for every edge.
    pub fn logs(&self) -> Vec<f64> {
        self.0.iter().map(|w| w.ln()).collect()
    }

    pub(crate) fn from_vec_unchecked(w: Vec<f64>) -> Self {
        debug_assert!(w.iter().all(|v| v.is_finite() && *v >= 0.0));
        WeightVector(w)
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn leaf(var: usize, polarity: bool) -> Node {
        Node::Indicator { var, polarity }
    }

    fn two_product_nodes() -> Vec<Node> {
        vec![
            leaf(0, true),
            leaf(1, true),
            leaf(0, false),
            leaf(1, false),
            Node::Product(vec![NodeId(0), NodeId(1)]),
            Node::Product(vec![NodeId(2), NodeId(3)]),
            Node::Sum(vec![NodeId(4), NodeId(5)]),
        ]
    }

    #[test]
    fn sum_over_both_polarities_is_complete() {
        let nodes = vec![leaf(0, true), leaf(0, false), Node::Sum(vec![NodeId(0), NodeId(1)])];
        assert!(validate(&nodes, NodeId(2), 1).is_valid());
    }

    #[test]
    fn product_over_both_polarities_is_not_decomposable() {
        let nodes = vec![leaf(0, true), leaf(0, false), Node::Product(vec![NodeId(0), NodeId(1)])];
        let report = validate(&nodes, NodeId(2), 1);
        assert_eq!(report.violations, vec![Violation::NonDecomposable { node: NodeId(2) }]);
    }

    #[test]
    fn two_product_structure_is_valid_with_expected_scopes() {
        let g = SpnGraph::new(two_product_nodes(), NodeId(6), 2).unwrap();
        assert_eq!(g.scope_of(NodeId(0)).unwrap().to_vec(), vec![0]);
        assert_eq!(g.scope_of(NodeId(3)).unwrap().to_vec(), vec![1]);
        assert_eq!(g.scope_of(NodeId(4)).unwrap().to_vec(), vec![0, 1]);
        assert_eq!(g.scope_of(NodeId(5)).unwrap().to_vec(), vec![0, 1]);
        assert_eq!(g.scope_of(NodeId(6)).unwrap().to_vec(), vec![0, 1]);
        assert_eq!(g.num_edges(), 2);
        assert_eq!(*g.topo_order().last().unwrap(), NodeId(6));
    }

    #[test]
    fn scope_of_unknown_node_errors() {
        let g = SpnGraph::new(two_product_nodes(), NodeId(6), 2).unwrap();
        assert_eq!(g.scope_of(NodeId(99)), Err(GraphError::UnknownNode(NodeId(99))));
    }

    #[test]
    fn incomplete_sum_is_reported() {
        let nodes = vec![leaf(0, true), leaf(1, true), Node::Sum(vec![NodeId(0), NodeId(1)])];
        let report = validate(&nodes, NodeId(2), 2);
        assert!(report.violations.contains(&Violation::Incomplete { node: NodeId(2) }));
    }

    #[test]
    fn unreachable_node_is_an_error() {
        let mut nodes = vec![leaf(0, true), leaf(0, false), Node::Sum(vec![NodeId(0), NodeId(1)])];
        nodes.push(leaf(0, true));
        let report = validate(&nodes, NodeId(2), 1);
        assert_eq!(report.violations, vec![Violation::Unreachable { node: NodeId(3) }]);
    }

    #[test]
    fn cycle_is_detected() {
        let nodes = vec![leaf(0, true), Node::Sum(vec![NodeId(0), NodeId(2)]), Node::Product(vec![NodeId(1)])];
        let report = validate(&nodes, NodeId(1), 1);
        assert!(matches!(report.violations[..], [Violation::Cycle { .. }]));
    }

    #[test]
    fn structural_errors() {
        let nodes = vec![Node::Sum(vec![]), Node::Product(vec![NodeId(1), NodeId(7)]), leaf(3, true)];
        let report = validate(&nodes, NodeId(0), 1);
        assert!(report.violations.contains(&Violation::EmptyChildren { node: NodeId(0) }));
        assert!(report.violations.contains(&Violation::SelfLoop { node: NodeId(1) }));
        assert!(report.violations.contains(&Violation::ChildOutOfBounds { node: NodeId(1), child: NodeId(7) }));
        assert!(report.violations.contains(&Violation::VarOutOfRange { node: NodeId(2), var: 3 }));
        assert!(!validate(&[], NodeId(0), 0).is_valid());
    }

    #[test]
    fn root_must_cover_all_variables() {
        let nodes = vec![leaf(0, true), leaf(0, false), Node::Sum(vec![NodeId(0), NodeId(1)])];
        let report = validate(&nodes, NodeId(2), 3);
        assert_eq!(report.violations, vec![Violation::RootScope { missing: vec![1, 2] }]);
    }

    #[test]
    fn single_child_sum_and_shared_leaves_are_legal() {
        // Two product nodes share the same X1 indicator leaf.
        let nodes = vec![
            leaf(0, true),
            leaf(1, true),
            leaf(1, false),
            Node::Product(vec![NodeId(0), NodeId(1)]),
            Node::Product(vec![NodeId(0), NodeId(2)]),
            Node::Sum(vec![NodeId(3), NodeId(4)]),
            Node::Sum(vec![NodeId(5)]),
        ];
        let g = SpnGraph::new(nodes, NodeId(6), 2).unwrap();
        assert_eq!(g.num_edges(), 3);
        // Topological order of sum nodes: node 5 before node 6.
        assert_eq!(g.sum_edges(NodeId(5)), Some(0..2));
        assert_eq!(g.sum_edges(NodeId(6)), Some(2..3));
        assert_eq!(g.sum_edges(NodeId(3)), None);
    }

    #[test]
    fn weight_vector_rejects_negative_and_nan() {
        assert!(WeightVector::new(vec![0.5, -1.0]).is_err());
        assert!(WeightVector::new(vec![f64::NAN]).is_err());
        assert!(WeightVector::new(vec![f64::INFINITY]).is_err());
        assert!(WeightVector::new(vec![0.5, 0.0]).is_ok());
    }

    #[test]
    fn varset_basics() {
        let mut a = VarSet::empty(130);
        a.insert(3);
        a.insert(129);
        assert_eq!(a.to_vec(), vec![3, 129]);
        assert_eq!(a.len(), 2);
        let b = VarSet::singleton(129, 130);
        assert!(!a.is_disjoint(&b));
        assert!(VarSet::full(2).same_as(&{
            let mut s = VarSet::singleton(0, 2);
            s.insert(1);
            s
        }));
    }
}
