//! Minimum spanning tree of the complete distance graph (Prim), with DOT and
//! edge-list CSV export carrying per-node metadata.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::distance::DistanceMatrix;
use crate::error::Result;

#[derive(Debug, Clone, Serialize)]
pub struct SpanningTree {
    pub labels: Vec<String>,
    /// (index_a, index_b, weight), a < b, in the order Prim adds them.
    pub edges: Vec<(usize, usize, f64)>,
}

impl SpanningTree {
    pub fn total_weight(&self) -> f64 {
        self.edges.iter().map(|&(_, _, w)| w).sum()
    }
}

/// Prim's algorithm starting from index 0; ties broken by lowest
/// (tree-node, candidate) index pair.
pub fn minimum_spanning_tree(matrix: &DistanceMatrix) -> SpanningTree {
    let n = matrix.len();
    assert!(n >= 2, "need at least two nodes");
    let mut in_tree = vec![false; n];
    in_tree[0] = true;
    // Cheapest connection from each outside node into the tree.
    let mut best_cost: Vec<f64> = (0..n).map(|i| matrix.get(0, i)).collect();
    let mut best_from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for i in 0..n {
            if !in_tree[i] && pick.map_or(true, |p| best_cost[i] < best_cost[p]) {
                pick = Some(i);
            }
        }
        let i = pick.unwrap();
        in_tree[i] = true;
        let (a, b) = (best_from[i].min(i), best_from[i].max(i));
        edges.push((a, b, best_cost[i]));
        for j in 0..n {
            if !in_tree[j] && matrix.get(i, j) < best_cost[j] {
                best_cost[j] = matrix.get(i, j);
                best_from[j] = i;
            }
        }
    }
    SpanningTree {
        labels: matrix.labels.clone(),
        edges,
    }
}

/// Write a Graphviz DOT graph; `node_attrs` maps a label to extra attribute
/// key/value pairs (cluster id, family, group, morphological type).
pub fn write_mst_dot(
    tree: &SpanningTree,
    node_attrs: &BTreeMap<String, Vec<(String, String)>>,
    path: &Path,
) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "graph mst {{")?;
    for label in &tree.labels {
        let attrs = node_attrs
            .get(label)
            .map(|pairs| {
                pairs
                    .iter()
                    .map(|(k, v)| format!("{k}=\"{v}\""))
                    .collect::<Vec<_>>()
                    .join(", ")
            })
            .unwrap_or_default();
        if attrs.is_empty() {
            writeln!(w, "  \"{label}\";")?;
        } else {
            writeln!(w, "  \"{label}\" [{attrs}];")?;
        }
    }
    for &(a, b, weight) in &tree.edges {
        writeln!(
            w,
            "  \"{}\" -- \"{}\" [weight={weight}];",
            tree.labels[a], tree.labels[b]
        )?;
    }
    writeln!(w, "}}")?;
    Ok(())
}

pub fn write_mst_csv(tree: &SpanningTree, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(w, "label_a,label_b,weight")?;
    for &(a, b, weight) in &tree.edges {
        writeln!(w, "{},{},{weight}", tree.labels[a], tree.labels[b])?;
    }
    Ok(())
}
