//! Agglomerative complete-linkage clustering with deterministic tie-breaking
//! and Newick export.

use serde::Serialize;

use crate::distance::DistanceMatrix;

/// One agglomeration: clusters `a` and `b` merge at `height` into `new_id`.
/// Leaves are numbered 0..n, internal clusters n..2n-1 in merge order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MergeStep {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub new_id: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dendrogram {
    pub labels: Vec<String>,
    pub steps: Vec<MergeStep>,
    /// Label indices in left-to-right leaf order of the tree.
    pub leaf_order: Vec<usize>,
}

impl Dendrogram {
    /// Cut the tree at `k` clusters: undo the last k-1 merges and report the
    /// member sets of what remains, ordered by lowest member index.
    pub fn cut(&self, k: usize) -> Vec<Vec<usize>> {
        let n = self.labels.len();
        assert!(k >= 1 && k <= n);
        let mut members: Vec<Option<Vec<usize>>> = (0..n).map(|i| Some(vec![i])).collect();
        members.resize(2 * n - 1, None);
        for step in &self.steps[..n - k] {
            let mut merged = members[step.a].take().unwrap();
            merged.extend(members[step.b].take().unwrap());
            merged.sort_unstable();
            members[step.new_id] = Some(merged);
        }
        let mut clusters: Vec<Vec<usize>> = members.into_iter().flatten().collect();
        clusters.sort_by_key(|c| c[0]);
        clusters
    }

    /// Newick string with merge heights as branch lengths (leaf branch length
    /// = height of its first merge; internal = parent height − own height).
    pub fn to_newick(&self) -> String {
        let n = self.labels.len();
        let mut heights = vec![0.0; 2 * n - 1];
        for step in &self.steps {
            heights[step.new_id] = step.height;
        }
        let children: Vec<Option<(usize, usize)>> = {
            let mut c = vec![None; 2 * n - 1];
            for step in &self.steps {
                c[step.new_id] = Some((step.a, step.b));
            }
            c
        };
        fn render(
            node: usize,
            parent_height: f64,
            labels: &[String],
            heights: &[f64],
            children: &[Option<(usize, usize)>],
            out: &mut String,
        ) {
            match children[node] {
                None => {
                    out.push_str(&labels[node]);
                }
                Some((a, b)) => {
                    out.push('(');
                    render(a, heights[node], labels, heights, children, out);
                    out.push(',');
                    render(b, heights[node], labels, heights, children, out);
                    out.push(')');
                }
            }
            out.push(':');
            out.push_str(&format!("{}", parent_height - heights[node]));
        }
        let root = 2 * n - 2;
        let mut out = String::new();
        match children[root] {
            None => out.push_str(&self.labels[root]),
            Some((a, b)) => {
                out.push('(');
                render(
                    a,
                    heights[root],
                    &self.labels,
                    &heights,
                    &children,
                    &mut out,
                );
                out.push(',');
                render(
                    b,
                    heights[root],
                    &self.labels,
                    &heights,
                    &children,
                    &mut out,
                );
                out.push(')');
            }
        }
        out.push(';');
        out
    }
}

/// Agglomerative clustering with inter-cluster distance = max pairwise
/// distance. Ties broken by lowest cluster id (then lowest partner id).
pub fn complete_linkage(matrix: &DistanceMatrix) -> Dendrogram {
    let n = matrix.len();
    assert!(n >= 2, "need at least two points");
    let total = 2 * n - 1;
    // dist[i][j] between active clusters, indexed by cluster id.
    let mut dist = vec![vec![0.0f64; total]; total];
    for i in 0..n {
        for j in 0..n {
            dist[i][j] = matrix.get(i, j);
        }
    }
    let mut active: Vec<usize> = (0..n).collect();
    let mut steps = Vec::with_capacity(n - 1);
    for new_id in n..total {
        let mut best: Option<(f64, usize, usize)> = None;
        for (ai, &i) in active.iter().enumerate() {
            for &j in &active[ai + 1..] {
                let d = dist[i][j];
                if best.map_or(true, |(bd, _, _)| d < bd) {
                    best = Some((d, i, j));
                }
            }
        }
        let (height, a, b) = best.unwrap();
        for &other in &active {
            if other != a && other != b {
                let d = dist[a][other].max(dist[b][other]);
                dist[new_id][other] = d;
                dist[other][new_id] = d;
            }
        }
        active.retain(|&c| c != a && c != b);
        active.push(new_id);
        steps.push(MergeStep {
            a,
            b,
            height,
            new_id,
        });
    }
    let mut leaf_order = Vec::with_capacity(n);
    let children: Vec<Option<(usize, usize)>> = {
        let mut c = vec![None; total];
        for step in &steps {
            c[step.new_id] = Some((step.a, step.b));
        }
        c
    };
    let mut stack = vec![total - 1];
    while let Some(node) = stack.pop() {
        match children[node] {
            None => leaf_order.push(node),
            Some((a, b)) => {
                stack.push(b);
                stack.push(a);
            }
        }
    }
    Dendrogram {
        labels: matrix.labels.clone(),
        steps,
        leaf_order,
    }
}

#[cfg(test)]
pub(crate) fn matrix_from_values(values: Vec<Vec<f64>>) -> DistanceMatrix {
    let labels = (0..values.len()).map(|i| format!("p{i}")).collect();
    DistanceMatrix {
        labels,
        values,
        metric: crate::distance::Metric::JensenShannon,
        r: 3,
    }
}
