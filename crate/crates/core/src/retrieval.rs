//! Query-time retrieval over a built tree.
//!
//! * Tree traversal: top-k of the start layer, then top-k among the children
//!   of the previous selection, layer by layer.
//! * Collapsed tree: every node of every layer ranked jointly by cosine
//!   similarity; the longest prefix that fits the token budget is kept.
//!   Selection stops at the first node that would overflow the budget.
//! * Layer-restricted and flat retrieval: collapsed-tree semantics over a
//!   subset of layers (flat = leaves only).
//!
//! Ties in similarity are broken by the smaller node id.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tree::Tree;
use crate::vector::cosine_similarity;
use crate::NodeId;

pub const DEFAULT_TOP_K: usize = 5;
pub const DEFAULT_MAX_TOKENS: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RetrievalMode {
    Traversal,
    Collapsed,
    LayerRestricted,
    Flat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryConfig {
    pub mode: RetrievalMode,
    pub top_k: usize,
    /// Traversal depth in layers; `None` descends to the leaves.
    pub depth: Option<usize>,
    /// Traversal start layer; `None` is the top layer.
    pub start_layer: Option<usize>,
    pub max_tokens: usize,
    pub allowed_layers: Vec<usize>,
}

impl Default for QueryConfig {
    fn default() -> Self {
        Self {
            mode: RetrievalMode::Collapsed,
            top_k: DEFAULT_TOP_K,
            depth: None,
            start_layer: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            allowed_layers: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub mode: RetrievalMode,
    /// Selected node ids in selection order.
    pub selected: Vec<NodeId>,
    /// Cosine similarity of each selected node.
    pub scores: Vec<f64>,
    /// Layer of each selected node.
    pub layers: Vec<usize>,
    pub total_tokens: usize,
    pub layer_tally: BTreeMap<usize, usize>,
    /// Selected leaves that are also covered by a selected summary node.
    pub overlapping_leaves: Vec<NodeId>,
}

impl RetrievalResult {
    fn assemble(tree: &Tree, mode: RetrievalMode, picks: Vec<(NodeId, f64)>) -> Self {
        let mut layer_tally = BTreeMap::new();
        let mut total_tokens = 0;
        let mut covered = BTreeSet::new();
        for &(id, _) in &picks {
            let node = &tree.nodes[id];
            *layer_tally.entry(node.layer).or_insert(0) += 1;
            total_tokens += node.token_count;
            if !node.is_leaf() {
                covered.extend(tree.descendant_leaves(id));
            }
        }
        let overlapping_leaves = picks
            .iter()
            .map(|p| p.0)
            .filter(|&id| tree.nodes[id].is_leaf() && covered.contains(&id))
            .collect();
        Self {
            mode,
            layers: picks.iter().map(|p| tree.nodes[p.0].layer).collect(),
            selected: picks.iter().map(|p| p.0).collect(),
            scores: picks.iter().map(|p| p.1).collect(),
            total_tokens,
            layer_tally,
            overlapping_leaves,
        }
    }

    /// Leaves reached by the selection, directly or through a summary.
    pub fn covered_leaves(&self, tree: &Tree) -> BTreeSet<NodeId> {
        self.selected.iter().flat_map(|&id| tree.descendant_leaves(id)).collect()
    }

    /// Selected texts joined by blank lines. With `document_order`, leaves
    /// are reordered by source position and placed after the summaries.
    pub fn context(&self, tree: &Tree, document_order: bool) -> String {
        let mut ids = self.selected.clone();
        if document_order {
            ids.sort_by_key(|&id| {
                let n = &tree.nodes[id];
                (n.is_leaf(), n.doc_id.clone(), n.source_offset, id)
            });
        }
        ids.iter()
            .map(|&id| tree.nodes[id].text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

fn check_query(tree: &Tree, query: &[f64]) -> Result<()> {
    if tree.nodes.is_empty() {
        return Err(Error::InvalidInput("tree is empty".into()));
    }
    if query.len() != tree.dimension() {
        return Err(Error::InvalidInput(format!(
            "query has dimension {}, tree has {}",
            query.len(),
            tree.dimension()
        )));
    }
    Ok(())
}

/// Candidates sorted by similarity descending, then id ascending.
fn rank(tree: &Tree, query: &[f64], candidates: impl IntoIterator<Item = NodeId>) -> Result<Vec<(NodeId, f64)>> {
    let mut scored = candidates
        .into_iter()
        .map(|id| Ok((id, cosine_similarity(query, &tree.nodes[id].embedding)?)))
        .collect::<Result<Vec<_>>>()?;
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    Ok(scored)
}

/// Tree traversal from the top layer down `depth` layers.
pub fn tree_traversal(tree: &Tree, query: &[f64], k: usize, depth: usize) -> Result<RetrievalResult> {
    let start = tree.num_layers().saturating_sub(1);
    tree_traversal_from(tree, query, k, start, depth)
}

/// Tree traversal beginning at `start_layer`.
pub fn tree_traversal_from(
    tree: &Tree,
    query: &[f64],
    k: usize,
    start_layer: usize,
    depth: usize,
) -> Result<RetrievalResult> {
    check_query(tree, query)?;
    if k == 0 || depth == 0 {
        return Err(Error::InvalidConfig("top_k and depth must be >= 1".into()));
    }
    if start_layer >= tree.num_layers() || depth > start_layer + 1 {
        return Err(Error::InvalidConfig(format!(
            "cannot descend {depth} layers from layer {start_layer} of a {}-layer tree",
            tree.num_layers()
        )));
    }
    let mut picks = Vec::new();
    let mut candidates: BTreeSet<NodeId> = tree.layers[start_layer].iter().copied().collect();
    for _ in 0..depth {
        if candidates.is_empty() {
            break;
        }
        let mut stage = rank(tree, query, candidates)?;
        stage.truncate(k);
        candidates = stage
            .iter()
            .flat_map(|&(id, _)| tree.nodes[id].children.iter().copied())
            .collect();
        picks.extend(stage);
    }
    Ok(RetrievalResult::assemble(tree, RetrievalMode::Traversal, picks))
}

fn budgeted(tree: &Tree, query: &[f64], candidates: Vec<NodeId>, max_tokens: usize, mode: RetrievalMode) -> Result<RetrievalResult> {
    let mut picks = Vec::new();
    let mut used = 0;
    for (id, score) in rank(tree, query, candidates)? {
        let t = tree.nodes[id].token_count;
        if used + t > max_tokens {
            break;
        }
        used += t;
        picks.push((id, score));
    }
    Ok(RetrievalResult::assemble(tree, mode, picks))
}

pub fn collapsed_tree(tree: &Tree, query: &[f64], max_tokens: usize) -> Result<RetrievalResult> {
    check_query(tree, query)?;
    budgeted(tree, query, (0..tree.nodes.len()).collect(), max_tokens, RetrievalMode::Collapsed)
}

pub fn layer_restricted_retrieve(
    tree: &Tree,
    query: &[f64],
    allowed_layers: &[usize],
    max_tokens: usize,
) -> Result<RetrievalResult> {
    check_query(tree, query)?;
    restricted(tree, query, allowed_layers, max_tokens, RetrievalMode::LayerRestricted)
}

fn restricted(tree: &Tree, query: &[f64], allowed: &[usize], max_tokens: usize, mode: RetrievalMode) -> Result<RetrievalResult> {
    if allowed.is_empty() {
        return Err(Error::InvalidConfig("allowed_layers is empty".into()));
    }
    if let Some(&bad) = allowed.iter().find(|&&l| l >= tree.num_layers()) {
        return Err(Error::InvalidConfig(format!(
            "layer {bad} does not exist in a {}-layer tree",
            tree.num_layers()
        )));
    }
    let allowed: BTreeSet<usize> = allowed.iter().copied().collect();
    let candidates = allowed.iter().flat_map(|&l| tree.layers[l].iter().copied()).collect();
    budgeted(tree, query, candidates, max_tokens, mode)
}

/// Leaf-only dense retrieval.
pub fn flat_retrieve(tree: &Tree, query: &[f64], max_tokens: usize) -> Result<RetrievalResult> {
    check_query(tree, query)?;
    restricted(tree, query, &[0], max_tokens, RetrievalMode::Flat)
}

pub fn retrieve(tree: &Tree, query: &[f64], config: &QueryConfig) -> Result<RetrievalResult> {
    match config.mode {
        RetrievalMode::Traversal => {
            let start = config.start_layer.unwrap_or(tree.num_layers().saturating_sub(1));
            let depth = config.depth.unwrap_or(start + 1);
            tree_traversal_from(tree, query, config.top_k, start, depth)
        }
        RetrievalMode::Collapsed => collapsed_tree(tree, query, config.max_tokens),
        RetrievalMode::LayerRestricted => {
            layer_restricted_retrieve(tree, query, &config.allowed_layers, config.max_tokens)
        }
        RetrievalMode::Flat => flat_retrieve(tree, query, config.max_tokens),
    }
}

/// Percentage of selected nodes drawn from each layer, across `results`.
pub fn layer_histogram(results: &[RetrievalResult]) -> Result<BTreeMap<usize, f64>> {
    if results.is_empty() {
        return Err(Error::InvalidInput("no retrieval results".into()));
    }
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    for r in results {
        for (&l, &c) in &r.layer_tally {
            *counts.entry(l).or_insert(0) += c;
        }
    }
    let total: usize = counts.values().sum();
    Ok(counts
        .into_iter()
        .map(|(l, c)| (l, 100.0 * c as f64 / total as f64))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::fixtures::{node, tree};

    /// Two roots over {A, B} and {C, D}.
    fn fixture() -> Tree {
        tree(vec![
            node(0, 0, vec![1.0, 0.1, 0.0], vec![], 10),
            node(1, 0, vec![0.7, 0.7, 0.0], vec![], 20),
            node(2, 0, vec![0.0, 0.2, 1.0], vec![], 30),
            node(3, 0, vec![0.0, 1.0, 0.3], vec![], 40),
            node(4, 1, vec![1.0, 0.5, 0.0], vec![0, 1], 15),
            node(5, 1, vec![0.0, 0.5, 1.0], vec![2, 3], 25),
        ])
    }

    #[test]
    fn traversal_hand_trace() {
        let r = tree_traversal(&fixture(), &[1.0, 0.0, 0.0], 1, 2).unwrap();
        assert_eq!(r.selected, vec![4, 0]);
        assert_eq!(r.layer_tally, BTreeMap::from([(0, 1), (1, 1)]));
        assert_eq!(r.overlapping_leaves, vec![0]);
    }

    #[test]
    fn wide_traversal_returns_whole_tree() {
        let r = tree_traversal(&fixture(), &[0.3, 0.3, 0.3], 10, 2).unwrap();
        let mut s = r.selected.clone();
        s.sort();
        assert_eq!(s, (0..6).collect::<Vec<_>>());
    }

    #[test]
    fn traversal_rejects_too_deep() {
        assert!(tree_traversal(&fixture(), &[1.0, 0.0, 0.0], 1, 3).is_err());
        assert!(tree_traversal(&fixture(), &[1.0, 0.0], 1, 1).is_err());
    }

    #[test]
    fn collapsed_prefix_stops_at_overflow() {
        let t = tree(vec![
            node(0, 0, vec![1.0, 0.0], vec![], 50),
            node(1, 0, vec![1.0, 0.5], vec![], 60),
            node(2, 0, vec![1.0, 1.0], vec![], 70),
            node(3, 0, vec![0.0, 1.0], vec![], 5),
            node(4, 1, vec![-1.0, 0.0], vec![0, 1, 2, 3], 5),
        ]);
        let r = collapsed_tree(&t, &[1.0, 0.0], 120).unwrap();
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.total_tokens, 110);
        assert!(collapsed_tree(&t, &[1.0, 0.0], 0).unwrap().selected.is_empty());
    }

    #[test]
    fn ties_prefer_smaller_ids() {
        let t = tree(vec![
            node(0, 0, vec![0.0, 1.0], vec![], 1),
            node(1, 0, vec![1.0, 0.0], vec![], 1),
            node(2, 0, vec![1.0, 0.0], vec![], 1),
        ]);
        assert_eq!(collapsed_tree(&t, &[1.0, 0.0], 2).unwrap().selected, vec![1, 2]);
    }

    #[test]
    fn layer_restriction() {
        let t = fixture();
        let q = [0.2, 0.5, 0.4];
        assert_eq!(
            layer_restricted_retrieve(&t, &q, &[0, 1], 1000).unwrap().selected,
            collapsed_tree(&t, &q, 1000).unwrap().selected
        );
        assert_eq!(
            layer_restricted_retrieve(&t, &q, &[0], 60).unwrap().selected,
            flat_retrieve(&t, &q, 60).unwrap().selected
        );
        let only1 = layer_restricted_retrieve(&t, &q, &[1], 1000).unwrap();
        assert_eq!(only1.layer_tally.keys().copied().collect::<Vec<_>>(), vec![1]);
        assert!(matches!(layer_restricted_retrieve(&t, &q, &[], 10), Err(Error::InvalidConfig(_))));
        assert!(matches!(layer_restricted_retrieve(&t, &q, &[7], 10), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn histogram_percentages() {
        let t = fixture();
        let mut r = flat_retrieve(&t, &[1.0, 0.0, 0.0], 30).unwrap();
        r.layer_tally = BTreeMap::from([(0, 2), (1, 1)]);
        let h = layer_histogram(&[r]).unwrap();
        assert!((h[&0] - 66.6667).abs() < 1e-3 && (h[&1] - 33.3333).abs() < 1e-3);
        assert!(layer_histogram(&[]).is_err());
    }

    #[test]
    fn document_order_context() {
        let mut t = fixture();
        for (i, n) in t.nodes.iter_mut().enumerate().take(4) {
            n.doc_id = Some("d".into());
            n.source_offset = Some(100 - i);
        }
        let r = collapsed_tree(&t, &[1.0, 0.0, 0.0], 45).unwrap();
        assert_eq!(r.selected, vec![0, 4, 1]);
        assert_eq!(r.context(&t, false), "node 0\n\nnode 4\n\nnode 1");
        assert_eq!(r.context(&t, true), "node 4\n\nnode 1\n\nnode 0");
    }
}
