use serde::{Deserialize, Serialize};

use super::Tree;

/// Summary-size statistics over the non-leaf nodes of a tree. Averages are
/// `None` when the tree has no parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeStats {
    pub layer_node_counts: Vec<usize>,
    pub parents: usize,
    pub avg_summary_tokens: Option<f64>,
    /// Mean token count over all parent-child edges.
    pub avg_child_tokens: Option<f64>,
    pub avg_children_per_parent: Option<f64>,
    /// Mean over parents of `summary tokens / sum of child tokens`.
    pub avg_compression_ratio: Option<f64>,
}

pub fn tree_stats(tree: &Tree) -> TreeStats {
    let parents: Vec<_> = tree.nodes.iter().filter(|n| !n.is_leaf()).collect();
    let count = parents.len();
    let mean = |sum: f64, n: usize| (n > 0).then(|| sum / n as f64);

    let mut summary = 0.0;
    let mut child_sum = 0.0;
    let mut edges = 0;
    let mut ratio = 0.0;
    let mut ratio_n = 0;
    for p in &parents {
        summary += p.token_count as f64;
        let children: usize = p.children.iter().map(|&c| tree.nodes[c].token_count).sum();
        child_sum += children as f64;
        edges += p.children.len();
        if children > 0 {
            ratio += p.token_count as f64 / children as f64;
            ratio_n += 1;
        }
    }
    TreeStats {
        layer_node_counts: tree.layers.iter().map(Vec::len).collect(),
        parents: count,
        avg_summary_tokens: mean(summary, count),
        avg_child_tokens: mean(child_sum, edges),
        avg_children_per_parent: mean(edges as f64, count),
        avg_compression_ratio: mean(ratio, ratio_n),
    }
}
