//! Random complete and decomposable structures with alternating sum and
//! product layers.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::graph::{Node, NodeId, SpnGraph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GeneratorConfig {
    pub num_vars: usize,
    /// Number of sum layers above the per-variable leaf sums.
    pub depth: usize,
    pub sum_fanout: usize,
    pub prod_fanout: usize,
    pub seed: u64,
}

struct Builder {
    nodes: Vec<Node>,
    rng: ChaCha8Rng,
    sum_fanout: usize,
    prod_fanout: usize,
}

impl Builder {
    fn push(&mut self, node: Node) -> NodeId {
        self.nodes.push(node);
        NodeId(self.nodes.len() - 1)
    }

    /// Sum over the two shared indicators of `var`.
    fn leaf_sum(&mut self, var: usize) -> NodeId {
        self.push(Node::Sum(vec![NodeId(2 * var), NodeId(2 * var + 1)]))
    }

    fn factorized(&mut self, scope: &[usize]) -> NodeId {
        if let [var] = scope {
            return self.leaf_sum(*var);
        }
        let children = scope.iter().map(|&v| self.leaf_sum(v)).collect();
        self.push(Node::Product(children))
    }

    fn sum(&mut self, scope: &[usize], depth: usize) -> NodeId {
        if scope.len() == 1 || depth == 0 {
            return self.factorized(scope);
        }
        let children = (0..self.sum_fanout).map(|_| self.product(scope, depth)).collect();
        self.push(Node::Sum(children))
    }

    fn product(&mut self, scope: &[usize], depth: usize) -> NodeId {
        let mut shuffled = scope.to_vec();
        shuffled.shuffle(&mut self.rng);
        let parts = self.prod_fanout.min(scope.len());
        // parts - 1 distinct cut points in 1..len.
        let mut cuts: Vec<usize> = (1..scope.len()).collect();
        cuts.shuffle(&mut self.rng);
        cuts.truncate(parts - 1);
        cuts.sort_unstable();
        cuts.push(scope.len());

        let mut children = Vec::with_capacity(parts);
        let mut start = 0;
        for end in cuts {
            let mut part = shuffled[start..end].to_vec();
            part.sort_unstable();
            let child = if depth > 1 { self.sum(&part, depth - 1) } else { self.factorized(&part) };
            children.push(child);
            start = end;
        }
        self.push(Node::Product(children))
    }
}

/// Generates a valid network. Indicators for every variable are created
/// once and shared; node ids are topological (children first). A scope of
/// a single variable always ends in a leaf sum over its two indicators.
pub fn generate_random_spn(config: GeneratorConfig) -> SpnGraph {
    let GeneratorConfig { num_vars, depth, sum_fanout, prod_fanout, seed } = config;
    assert!(num_vars >= 1, "need at least one variable");
    let mut b = Builder {
        nodes: Vec::new(),
        rng: ChaCha8Rng::seed_from_u64(seed),
        sum_fanout: sum_fanout.max(1),
        prod_fanout: prod_fanout.max(1),
    };
    for var in 0..num_vars {
        b.push(Node::Indicator { var, polarity: true });
        b.push(Node::Indicator { var, polarity: false });
    }
    let scope: Vec<usize> = (0..num_vars).collect();
    let root = b.sum(&scope, depth);
    SpnGraph::new(b.nodes, root, num_vars).expect("generator emits complete and decomposable structures")
}
