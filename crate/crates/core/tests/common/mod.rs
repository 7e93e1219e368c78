//! Reference implementations used as test oracles. Everything here works in
//! linear space with plain recursion and shares no code with the library
//! beyond the graph and weight containers.

#![allow(dead_code)]

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use spn_core::{Assignment, Dataset, Node, NodeId, SpnGraph, VarValue, WeightVector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Partial assignment: `None` marginalizes the variable.
pub type Query = Vec<Option<bool>>;

pub fn assignment(x: &Query) -> Assignment {
    Assignment::new(
        x.iter()
            .map(|v| match v {
                None => VarValue::Marginalized,
                Some(true) => VarValue::True,
                Some(false) => VarValue::False,
            })
            .collect(),
    )
}

pub fn complete(bits: &[u8]) -> Query {
    bits.iter().map(|&b| Some(b == 1)).collect()
}

/// All 2^n complete assignments, variable 0 most significant.
pub fn all_inputs(n: usize) -> Vec<Vec<u8>> {
    (0..1usize << n).map(|code| (0..n).map(|i| ((code >> (n - 1 - i)) & 1) as u8).collect()).collect()
}

pub fn weight(graph: &SpnGraph, w: &WeightVector, sum: NodeId, k: usize) -> f64 {
    w[graph.sum_edges(sum).expect("sum node").start + k]
}

/// Node values by memoized recursion; `over` pins one node to a fixed value.
pub fn node_values(graph: &SpnGraph, w: &WeightVector, x: &Query, over: Option<(NodeId, f64)>) -> Vec<f64> {
    fn go(
        g: &SpnGraph,
        w: &WeightVector,
        x: &Query,
        over: Option<(NodeId, f64)>,
        v: NodeId,
        memo: &mut [Option<f64>],
    ) -> f64 {
        if let Some(val) = memo[v.0] {
            return val;
        }
        let val = match over {
            Some((o, val)) if o == v => val,
            _ => match &g.nodes()[v.0] {
                Node::Indicator { var, polarity } => match x[*var] {
                    None => 1.0,
                    Some(b) => f64::from(u8::from(b == *polarity)),
                },
                Node::Product(ch) => ch.iter().map(|&c| go(g, w, x, over, c, memo)).product(),
                Node::Sum(ch) => {
                    ch.iter().enumerate().map(|(k, &c)| weight(g, w, v, k) * go(g, w, x, over, c, memo)).sum()
                }
            },
        };
        memo[v.0] = Some(val);
        val
    }
    let mut memo = vec![None; graph.num_nodes()];
    for v in 0..graph.num_nodes() {
        go(graph, w, x, over, NodeId(v), &mut memo);
    }
    memo.into_iter().map(|v| v.expect("every node visited")).collect()
}

pub fn value(graph: &SpnGraph, w: &WeightVector, x: &Query) -> f64 {
    node_values(graph, w, x, None)[graph.root().0]
}

pub fn partition(graph: &SpnGraph, w: &WeightVector) -> f64 {
    value(graph, w, &vec![None; graph.num_vars()])
}

/// Parents before children, computed from scratch by depth-first search.
pub fn reverse_topological(graph: &SpnGraph) -> Vec<NodeId> {
    fn dfs(g: &SpnGraph, v: NodeId, seen: &mut [bool], out: &mut Vec<NodeId>) {
        if seen[v.0] {
            return;
        }
        seen[v.0] = true;
        for &c in g.nodes()[v.0].children() {
            dfs(g, c, seen, out);
        }
        out.push(v);
    }
    let mut seen = vec![false; graph.num_nodes()];
    let mut out = Vec::new();
    dfs(graph, graph.root(), &mut seen, &mut out);
    out.reverse();
    out
}

/// Linear-space backpropagation: derivative of the root value with respect
/// to every node value.
pub fn node_derivs(graph: &SpnGraph, w: &WeightVector, vals: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; graph.num_nodes()];
    d[graph.root().0] = 1.0;
    for v in reverse_topological(graph) {
        match &graph.nodes()[v.0] {
            Node::Indicator { .. } => {}
            Node::Sum(ch) => {
                for (k, &c) in ch.iter().enumerate() {
                    d[c.0] += d[v.0] * weight(graph, w, v, k);
                }
            }
            Node::Product(ch) => {
                for (k, &c) in ch.iter().enumerate() {
                    let others: f64 = ch.iter().enumerate().filter(|&(j, _)| j != k).map(|(_, &o)| vals[o.0]).product();
                    d[c.0] += d[v.0] * others;
                }
            }
        }
    }
    d
}

/// Textbook EM: expected edge counts from posterior responsibilities, then
/// per-sum-node normalization with additive smoothing. A node whose counts
/// are all zero keeps its current proportions.
pub fn em_step(graph: &SpnGraph, w: &WeightVector, data: &Dataset, smoothing: f64) -> Vec<f64> {
    let mut counts = vec![0.0; graph.num_edges()];
    for row in data.rows() {
        let x = complete(row);
        let vals = node_values(graph, w, &x, None);
        let f = vals[graph.root().0];
        let der = node_derivs(graph, w, &vals);
        for (v, node) in graph.nodes().iter().enumerate() {
            if let Node::Sum(ch) = node {
                for (k, &c) in ch.iter().enumerate() {
                    let d = graph.sum_edges(NodeId(v)).unwrap().start + k;
                    counts[d] += w[d] * vals[c.0] * der[v] / f;
                }
            }
        }
    }
    let mut out = vec![0.0; graph.num_edges()];
    for v in 0..graph.num_nodes() {
        if let Some(range) = graph.sum_edges(NodeId(v)) {
            let total: f64 = range.clone().map(|d| counts[d] + smoothing).sum();
            if total > 0.0 {
                for d in range {
                    out[d] = (counts[d] + smoothing) / total;
                }
            } else {
                let wt: f64 = range.clone().map(|d| w[d]).sum();
                for d in range {
                    out[d] = w[d] / wt;
                }
            }
        }
    }
    out
}

/// Total training log-likelihood, `Σ log f(x) - M log Z`.
pub fn log_likelihood(graph: &SpnGraph, w: &WeightVector, data: &Dataset) -> f64 {
    let z = partition(graph, w);
    data.rows().map(|r| (value(graph, w, &complete(r)) / z).ln()).sum()
}

/// Ancestral sample from a locally normalized network.
pub fn sample(graph: &SpnGraph, w: &WeightVector, rng: &mut impl Rng) -> Vec<u8> {
    let mut out = vec![0u8; graph.num_vars()];
    let mut stack = vec![graph.root()];
    while let Some(v) = stack.pop() {
        match &graph.nodes()[v.0] {
            Node::Indicator { var, polarity } => out[*var] = u8::from(*polarity),
            Node::Product(ch) => stack.extend(ch.iter().copied()),
            Node::Sum(ch) => {
                let range = graph.sum_edges(v).unwrap();
                let total: f64 = range.clone().map(|d| w[d]).sum();
                let mut u = rng.random::<f64>() * total;
                let mut pick = ch.len() - 1;
                for (k, d) in range.enumerate() {
                    if u < w[d] {
                        pick = k;
                        break;
                    }
                    u -= w[d];
                }
                stack.push(ch[pick]);
            }
        }
    }
    out
}

pub fn sample_dataset(graph: &SpnGraph, w: &WeightVector, rows: usize, rng: &mut impl Rng) -> Dataset {
    let rows: Vec<Vec<u8>> = (0..rows).map(|_| sample(graph, w, rng)).collect();
    Dataset::from_rows(graph.num_vars(), &rows).unwrap()
}

pub fn random_dataset(num_vars: usize, rows: usize, rng: &mut impl Rng) -> Dataset {
    let rows: Vec<Vec<u8>> = (0..rows).map(|_| (0..num_vars).map(|_| rng.random_range(0..2u8)).collect()).collect();
    Dataset::from_rows(num_vars, &rows).unwrap()
}

pub fn random_weights(len: usize, rng: &mut impl Rng) -> WeightVector {
    WeightVector::new((0..len).map(|_| rng.random_range(0.05..1.0)).collect()).unwrap()
}

/// Random valid DAG with sharing: nodes of equal scope are reused, sums may
/// nest sums, and duplicate children occur. Ids are assigned children first.
pub struct DagBuilder<'r, R: Rng> {
    pub nodes: Vec<Node>,
    pool: HashMap<Vec<usize>, Vec<NodeId>>,
    indicators: HashMap<(usize, bool), NodeId>,
    rng: &'r mut R,
    reuse: f64,
}

impl<'r, R: Rng> DagBuilder<'r, R> {
    pub fn new(rng: &'r mut R, reuse: f64) -> Self {
        DagBuilder { nodes: Vec::new(), pool: HashMap::new(), indicators: HashMap::new(), rng, reuse }
    }

    fn push(&mut self, scope: &[usize], node: Node) -> NodeId {
        self.nodes.push(node);
        let id = NodeId(self.nodes.len() - 1);
        self.pool.entry(scope.to_vec()).or_default().push(id);
        id
    }

    fn indicator(&mut self, var: usize, polarity: bool) -> NodeId {
        if let Some(&id) = self.indicators.get(&(var, polarity)) {
            return id;
        }
        let id = self.push(&[var], Node::Indicator { var, polarity });
        self.indicators.insert((var, polarity), id);
        id
    }

    pub fn node(&mut self, scope: &[usize], depth: usize) -> NodeId {
        if let Some(existing) = self.pool.get(scope) {
            if self.rng.random_bool(self.reuse) {
                return existing[self.rng.random_range(0..existing.len())];
            }
        }
        if scope.len() == 1 {
            let var = scope[0];
            if depth == 0 || self.rng.random_bool(0.3) {
                let pol = self.rng.random_bool(0.5);
                return self.indicator(var, pol);
            }
            let k = self.rng.random_range(1..=3);
            let children = (0..k)
                .map(|_| {
                    if self.rng.random_bool(0.2) {
                        self.node(scope, depth - 1)
                    } else {
                        let pol = self.rng.random_bool(0.5);
                        self.indicator(var, pol)
                    }
                })
                .collect();
            return self.push(scope, Node::Sum(children));
        }
        if depth == 0 {
            let children = scope.iter().map(|&v| self.node(&[v], 0)).collect();
            return self.push(scope, Node::Product(children));
        }
        if self.rng.random_bool(0.5) {
            let k = self.rng.random_range(1..=3);
            let children = (0..k).map(|_| self.node(scope, depth - 1)).collect();
            self.push(scope, Node::Sum(children))
        } else {
            let mut vars = scope.to_vec();
            vars.shuffle(self.rng);
            let parts = self.rng.random_range(2..=scope.len().min(3));
            let mut cuts: Vec<usize> = (1..scope.len()).collect();
            cuts.shuffle(self.rng);
            cuts.truncate(parts - 1);
            cuts.sort_unstable();
            cuts.push(scope.len());
            let mut start = 0;
            let mut children = Vec::new();
            for end in cuts {
                let mut part = vars[start..end].to_vec();
                part.sort_unstable();
                children.push(self.node(&part, depth - 1));
                start = end;
            }
            self.push(scope, Node::Product(children))
        }
    }
}

/// Random valid network over `num_vars` variables. Unreachable pool nodes
/// are dropped and ids compacted.
pub fn random_dag(num_vars: usize, depth: usize, reuse: f64, rng: &mut impl Rng) -> SpnGraph {
    let mut b = DagBuilder::new(rng, reuse);
    let scope: Vec<usize> = (0..num_vars).collect();
    let root = b.node(&scope, depth);
    let nodes = b.nodes;
    let mut keep = vec![false; nodes.len()];
    let mut stack = vec![root];
    while let Some(v) = stack.pop() {
        if !keep[v.0] {
            keep[v.0] = true;
            stack.extend(nodes[v.0].children().iter().copied());
        }
    }
    let mut remap = vec![usize::MAX; nodes.len()];
    let mut out = Vec::new();
    for (i, node) in nodes.into_iter().enumerate() {
        if keep[i] {
            remap[i] = out.len();
            out.push(match node {
                Node::Sum(ch) => Node::Sum(ch.iter().map(|c| NodeId(remap[c.0])).collect()),
                Node::Product(ch) => Node::Product(ch.iter().map(|c| NodeId(remap[c.0])).collect()),
                leaf => leaf,
            });
        }
    }
    SpnGraph::new(out, NodeId(remap[root.0]), num_vars).expect("builder emits valid networks")
}

/// Sub-network rooted at `v`, with its scope's variables renumbered to
/// `0..|scope|` in increasing order.
pub fn subnetwork(graph: &SpnGraph, v: NodeId) -> SpnGraph {
    let vars = graph.scope_of(v).unwrap().to_vec();
    let var_map: HashMap<usize, usize> = vars.iter().enumerate().map(|(i, &x)| (x, i)).collect();
    let mut order = reverse_topological_from(graph, v);
    order.reverse();
    let index: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &n)| (n, i)).collect();
    let nodes = order
        .iter()
        .map(|&n| match &graph.nodes()[n.0] {
            Node::Indicator { var, polarity } => Node::Indicator { var: var_map[var], polarity: *polarity },
            Node::Sum(ch) => Node::Sum(ch.iter().map(|c| NodeId(index[c])).collect()),
            Node::Product(ch) => Node::Product(ch.iter().map(|c| NodeId(index[c])).collect()),
        })
        .collect();
    SpnGraph::new(nodes, NodeId(index[&v]), vars.len()).unwrap()
}

fn reverse_topological_from(graph: &SpnGraph, root: NodeId) -> Vec<NodeId> {
    fn dfs(g: &SpnGraph, v: NodeId, seen: &mut HashMap<NodeId, ()>, out: &mut Vec<NodeId>) {
        if seen.insert(v, ()).is_some() {
            return;
        }
        for &c in g.nodes()[v.0].children() {
            dfs(g, c, seen, out);
        }
        out.push(v);
    }
    let mut seen = HashMap::new();
    let mut out = Vec::new();
    dfs(graph, root, &mut seen, &mut out);
    out.reverse();
    out
}

/// Brute-force structural check straight from the definitions: ids in
/// bounds, non-empty internal nodes, variables in range, no cycles, every
/// node reachable from the root, equal child scopes under sums, disjoint
/// child scopes under products, and a root covering every variable.
pub fn is_valid_by_definition(nodes: &[Node], root: NodeId, num_vars: usize) -> bool {
    let n = nodes.len();
    if root.0 >= n {
        return false;
    }
    for node in nodes {
        match node {
            Node::Indicator { var, .. } => {
                if *var >= num_vars {
                    return false;
                }
            }
            Node::Sum(ch) | Node::Product(ch) => {
                if ch.is_empty() || ch.iter().any(|c| c.0 >= n) {
                    return false;
                }
            }
        }
    }
    // Reachability sets by repeated expansion; a node reaching itself is a cycle.
    let reach = |start: usize| -> Vec<bool> {
        let mut seen = vec![false; n];
        let mut stack: Vec<usize> = nodes[start].children().iter().map(|c| c.0).collect();
        while let Some(v) = stack.pop() {
            if !seen[v] {
                seen[v] = true;
                stack.extend(nodes[v].children().iter().map(|c| c.0));
            }
        }
        seen
    };
    let desc: Vec<Vec<bool>> = (0..n).map(reach).collect();
    if (0..n).any(|v| desc[v][v]) {
        return false;
    }
    if (0..n).any(|v| v != root.0 && !desc[root.0][v]) {
        return false;
    }
    let scope = |v: usize| -> Vec<usize> {
        let mut vars: Vec<usize> = (0..n)
            .filter(|&u| u == v || desc[v][u])
            .filter_map(|u| match nodes[u] {
                Node::Indicator { var, .. } => Some(var),
                _ => None,
            })
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    };
    for node in nodes {
        match node {
            Node::Sum(ch) => {
                let first = scope(ch[0].0);
                if ch.iter().any(|c| scope(c.0) != first) {
                    return false;
                }
            }
            Node::Product(ch) => {
                let mut all: Vec<usize> = ch.iter().flat_map(|c| scope(c.0)).collect();
                let len = all.len();
                all.sort_unstable();
                all.dedup();
                if all.len() != len {
                    return false;
                }
            }
            Node::Indicator { .. } => {}
        }
    }
    scope(root.0) == (0..num_vars).collect::<Vec<_>>()
}
