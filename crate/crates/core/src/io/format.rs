//! Plain-text model format.
//!
//! ```text
//! spn <num_vars> <num_nodes>
//! node <id> leaf <var> <0|1>
//! node <id> prod <child_id>+
//! node <id> sum (<child_id>:<weight>)+
//! root <id>
//! ```
//!
//! Children must be declared before their parents. `#` starts a comment.
//! Weights are written with the shortest decimal that round-trips.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::IoError;
use crate::graph::{GraphError, Node, NodeId, SpnGraph, WeightVector};
use crate::inference::{Assignment, VarValue};

fn syntax(line: usize, message: impl Into<String>) -> IoError {
    IoError::Syntax { line, message: message.into() }
}

fn parse_num<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T, IoError> {
    let tok = tok.ok_or_else(|| syntax(line, format!("missing {what}")))?;
    tok.parse().map_err(|_| syntax(line, format!("bad {what} '{tok}'")))
}

fn parse_weight(tok: &str, line: usize) -> Result<f64, IoError> {
    match tok.parse::<f64>() {
        Ok(w) if w.is_finite() && w > 0.0 => Ok(w),
        _ => Err(syntax(line, format!("weight '{tok}' is not a positive number"))),
    }
}

/// Content lines with their 1-based line numbers, comments stripped.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let l = l.split('#').next().unwrap_or("").trim();
        (!l.is_empty()).then_some((i + 1, l))
    })
}

pub fn parse_spn(text: &str) -> Result<(SpnGraph, WeightVector), IoError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| syntax(1, "empty model file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("spn") {
        return Err(syntax(hline, "expected header 'spn <num_vars> <num_nodes>'"));
    }
    let num_vars: usize = parse_num(toks.next(), hline, "variable count")?;
    let num_nodes: usize = parse_num(toks.next(), hline, "node count")?;
    if toks.next().is_some() {
        return Err(syntax(hline, "trailing tokens after header"));
    }

    let mut nodes: Vec<Option<Node>> = vec![None; num_nodes];
    let mut node_line = vec![0usize; num_nodes];
    let mut sum_weights: HashMap<usize, Vec<f64>> = HashMap::new();
    let mut root = None;

    for (line, text) in lines {
        let mut toks = text.split_whitespace();
        match toks.next() {
            Some("node") => {
                if root.is_some() {
                    return Err(syntax(line, "node declared after root"));
                }
                let id: usize = parse_num(toks.next(), line, "node id")?;
                if id >= num_nodes {
                    return Err(syntax(line, format!("node id {id} exceeds declared count {num_nodes}")));
                }
                if nodes[id].is_some() {
                    return Err(syntax(line, format!("node {id} declared twice")));
                }
                let child = |tok: &str| -> Result<NodeId, IoError> {
                    let c: usize = parse_num(Some(tok), line, "child id")?;
                    if c >= num_nodes || nodes[c].is_none() {
                        return Err(syntax(line, format!("child {c} is not declared before node {id}")));
                    }
                    Ok(NodeId(c))
                };
                let node = match toks.next() {
                    Some("leaf") => {
                        let var: usize = parse_num(toks.next(), line, "variable")?;
                        let polarity = match toks.next() {
                            Some("1") => true,
                            Some("0") => false,
                            _ => return Err(syntax(line, "leaf polarity must be 0 or 1")),
                        };
                        if toks.next().is_some() {
                            return Err(syntax(line, "trailing tokens after leaf"));
                        }
                        Node::Indicator { var, polarity }
                    }
                    Some("prod") => {
                        let children = toks.map(child).collect::<Result<Vec<_>, _>>()?;
                        if children.is_empty() {
                            return Err(syntax(line, "product node without children"));
                        }
                        Node::Product(children)
                    }
                    Some("sum") => {
                        let mut children = Vec::new();
                        let mut weights = Vec::new();
                        for tok in toks {
                            let (c, w) = tok
                                .split_once(':')
                                .ok_or_else(|| syntax(line, format!("expected <child>:<weight>, found '{tok}'")))?;
                            children.push(child(c)?);
                            weights.push(parse_weight(w, line)?);
                        }
                        if children.is_empty() {
                            return Err(syntax(line, "sum node without children"));
                        }
                        sum_weights.insert(id, weights);
                        Node::Sum(children)
                    }
                    other => return Err(syntax(line, format!("unknown node kind '{}'", other.unwrap_or("")))),
                };
                nodes[id] = Some(node);
                node_line[id] = line;
            }
            Some("root") => {
                if root.is_some() {
                    return Err(syntax(line, "root declared twice"));
                }
                let r: usize = parse_num(toks.next(), line, "root id")?;
                if r >= num_nodes || nodes[r].is_none() {
                    return Err(syntax(line, format!("root {r} is not a declared node")));
                }
                root = Some((NodeId(r), line));
            }
            Some(other) => return Err(syntax(line, format!("unexpected '{other}'"))),
            None => unreachable!("content lines are non-empty"),
        }
    }

    let (root, root_line) = root.ok_or_else(|| syntax(text.lines().count().max(1), "missing root line"))?;
    let nodes: Vec<Node> = nodes
        .into_iter()
        .enumerate()
        .map(|(i, n)| n.ok_or_else(|| syntax(root_line, format!("node {i} is never declared"))))
        .collect::<Result<_, _>>()?;

    let graph = SpnGraph::new(nodes, root, num_vars).map_err(|e| match e {
        GraphError::Invalid(report) => {
            let line = report.violations.iter().find_map(|v| v.node()).map(|n| node_line[n.0]);
            IoError::Invalid { line, report }
        }
        other => syntax(root_line, other.to_string()),
    })?;

    let mut w = vec![0.0; graph.num_edges()];
    for v in graph.sum_nodes() {
        let range = graph.sum_edges(v).expect("sum node");
        for (d, &x) in range.zip(&sum_weights[&v.0]) {
            w[d] = x;
        }
    }
    let w = WeightVector::new(w).expect("parsed weights are positive");
    Ok((graph, w))
}

/// Writes the model. Node ids are kept when they are already topological,
/// otherwise nodes are renumbered in topological order.
pub fn serialize_spn(graph: &SpnGraph, w: &WeightVector) -> String {
    assert_eq!(w.len(), graph.num_edges(), "weight vector does not match graph");
    let order: Vec<NodeId> = if graph.ids_are_topological() {
        (0..graph.num_nodes()).map(NodeId).collect()
    } else {
        graph.topo_order().to_vec()
    };
    let mut new_id = vec![0usize; graph.num_nodes()];
    for (i, v) in order.iter().enumerate() {
        new_id[v.0] = i;
    }

    let mut out = String::new();
    let _ = writeln!(out, "spn {} {}", graph.num_vars(), graph.num_nodes());
    for (i, &v) in order.iter().enumerate() {
        let _ = write!(out, "node {i} ");
        match &graph.nodes()[v.0] {
            Node::Indicator { var, polarity } => {
                let _ = write!(out, "leaf {var} {}", u8::from(*polarity));
            }
            Node::Product(children) => {
                out.push_str("prod");
                for c in children {
                    let _ = write!(out, " {}", new_id[c.0]);
                }
            }
            Node::Sum(children) => {
                out.push_str("sum");
                let start = graph.sum_edges(v).expect("sum node").start;
                for (k, c) in children.iter().enumerate() {
                    let _ = write!(out, " {}:{}", new_id[c.0], w[start + k]);
                }
            }
        }
        out.push('\n');
    }
    let _ = writeln!(out, "root {}", new_id[graph.root().0]);
    out
}

pub fn load_spn(path: impl AsRef<Path>) -> Result<(SpnGraph, WeightVector), IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })?;
    parse_spn(&text)
}

pub fn save_spn(graph: &SpnGraph, w: &WeightVector, path: impl AsRef<Path>) -> Result<(), IoError> {
    let path = path.as_ref();
    fs::write(path, serialize_spn(graph, w)).map_err(|e| IoError::Write { path: path.to_path_buf(), source: e })
}

/// Weights-only file: `weights <D>` followed by one weight per line in edge order.
pub fn serialize_weights(w: &WeightVector) -> String {
    let mut out = format!("weights {}\n", w.len());
    for x in w.as_slice() {
        let _ = writeln!(out, "{x}");
    }
    out
}

pub fn parse_weights(text: &str, graph: &SpnGraph) -> Result<WeightVector, IoError> {
    let mut lines = content_lines(text);
    let (hline, header) = lines.next().ok_or_else(|| syntax(1, "empty weights file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some("weights") {
        return Err(syntax(hline, "expected header 'weights <count>'"));
    }
    let count: usize = parse_num(toks.next(), hline, "weight count")?;
    if count != graph.num_edges() {
        return Err(syntax(hline, format!("{count} weights given, model has {} sum edges", graph.num_edges())));
    }
    let mut w = Vec::with_capacity(count);
    for (line, tok) in lines {
        w.push(parse_weight(tok, line)?);
    }
    if w.len() != count {
        return Err(syntax(text.lines().count(), format!("expected {count} weights, found {}", w.len())));
    }
    Ok(WeightVector::new(w).expect("parsed weights are positive"))
}

pub fn load_weights(path: impl AsRef<Path>, graph: &SpnGraph) -> Result<WeightVector, IoError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IoError::Read { path: path.to_path_buf(), source: e })?;
    parse_weights(&text, graph)
}

/// Parses a query such as `1,0,*`, where `*` marginalizes a variable.
pub fn parse_query(query: &str, num_vars: usize) -> Result<Assignment, IoError> {
    let values = query
        .split(',')
        .map(|t| match t.trim() {
            "1" => Ok(VarValue::True),
            "0" => Ok(VarValue::False),
            "*" => Ok(VarValue::Marginalized),
            other => Err(IoError::Query(format!("unexpected token '{other}' in '{query}'"))),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if values.len() != num_vars {
        return Err(IoError::Query(format!("'{query}' has {} values, model has {num_vars} variables", values.len())));
    }
    Ok(Assignment::new(values))
}
