//! The layered summary tree.
//!
//! Layer 0 holds the chunk leaves; each higher layer holds summaries of
//! clusters of the layer below. Node ids are dense and assigned in build
//! order, so `nodes[i].id == i`.

mod build;
mod stats;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

pub use build::{build_recency_tree, build_tree, build_tree_with, BuildConfig, Grouping};
pub use stats::{tree_stats, TreeStats};

use crate::error::{Error, Result};
use crate::providers::Usage;
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub layer: usize,
    pub text: String,
    /// Unit-norm embedding.
    pub embedding: Vec<f64>,
    /// Empty exactly for leaves.
    pub children: Vec<NodeId>,
    pub token_count: usize,
    /// Source document of a leaf.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_id: Option<String>,
    /// Character offset of a leaf in its source document.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_offset: Option<usize>,
}

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.layer == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Node ids per layer, ascending.
    pub layers: Vec<Vec<NodeId>>,
    pub config: BuildConfig,
    /// SHA-256 of the canonical JSON of `config`.
    pub config_fingerprint: String,
    /// Source document ids.
    pub provenance: BTreeSet<String>,
    /// Summarizer usage accumulated during the build.
    pub usage: Usage,
}

impl Tree {
    /// Assemble and validate a tree from nodes with dense ids. Layers are
    /// derived from the nodes; usage is zero.
    pub fn from_nodes(nodes: Vec<Node>, config: BuildConfig) -> Result<Tree> {
        let top = nodes.iter().map(|n| n.layer).max().unwrap_or(0);
        let mut layers: Vec<Vec<NodeId>> = vec![Vec::new(); top + 1];
        for n in &nodes {
            layers[n.layer].push(n.id);
        }
        for l in &mut layers {
            l.sort_unstable();
        }
        let tree = Tree {
            nodes,
            layers,
            config_fingerprint: config.fingerprint(),
            config,
            provenance: BTreeSet::new(),
            usage: Usage::default(),
        };
        tree.validate()?;
        Ok(tree)
    }

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(id)
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn top_layer(&self) -> &[NodeId] {
        self.layers.last().map_or(&[], Vec::as_slice)
    }

    pub fn leaves(&self) -> &[NodeId] {
        self.layers.first().map_or(&[], Vec::as_slice)
    }

    pub fn dimension(&self) -> usize {
        self.nodes.first().map_or(0, |n| n.embedding.len())
    }

    /// Leaf ids under `id` (the node itself when it is a leaf), ascending.
    pub fn descendant_leaves(&self, id: NodeId) -> BTreeSet<NodeId> {
        let mut out = BTreeSet::new();
        let mut stack = vec![id];
        let mut seen = BTreeSet::new();
        while let Some(n) = stack.pop() {
            if !seen.insert(n) {
                continue;
            }
            let node = &self.nodes[n];
            if node.is_leaf() {
                out.insert(n);
            } else {
                stack.extend(node.children.iter().copied());
            }
        }
        out
    }

    /// Check every structural invariant; failures are [`Error::CorruptIndex`].
    pub fn validate(&self) -> Result<()> {
        let corrupt = |m: String| Err(Error::CorruptIndex(m));
        if self.nodes.is_empty() || self.layers.is_empty() {
            return corrupt("tree has no nodes".into());
        }
        let dim = self.dimension();
        let mut layer_of = vec![None; self.nodes.len()];
        for (l, ids) in self.layers.iter().enumerate() {
            if ids.is_empty() {
                return corrupt(format!("layer {l} is empty"));
            }
            if ids.windows(2).any(|w| w[0] >= w[1]) {
                return corrupt(format!("layer {l} ids are not strictly ascending"));
            }
            for &id in ids {
                match layer_of.get_mut(id) {
                    None => return corrupt(format!("layer {l} lists missing node {id}")),
                    Some(Some(_)) => return corrupt(format!("node {id} is listed in two layers")),
                    Some(slot) => *slot = Some(l),
                }
            }
        }
        for (i, node) in self.nodes.iter().enumerate() {
            if node.id != i {
                return corrupt(format!("node at position {i} has id {}", node.id));
            }
            if layer_of[i] != Some(node.layer) {
                return corrupt(format!("node {i} has layer {} but is not listed there", node.layer));
            }
            if node.embedding.len() != dim || dim == 0 {
                return corrupt(format!("node {i} embedding has dimension {}", node.embedding.len()));
            }
            if node.embedding.iter().any(|x| !x.is_finite()) {
                return corrupt(format!("node {i} embedding is not finite"));
            }
            if node.is_leaf() != node.children.is_empty() {
                return corrupt(format!("node {i} at layer {} has {} children", node.layer, node.children.len()));
            }
            for &c in &node.children {
                match self.nodes.get(c) {
                    None => return corrupt(format!("node {i} references missing child {c}")),
                    Some(child) if child.layer >= node.layer => {
                        return corrupt(format!("node {i} has child {c} at layer {}", child.layer))
                    }
                    _ => {}
                }
            }
        }
        let mut reached = BTreeSet::new();
        for &top in self.top_layer() {
            reached.extend(self.descendant_leaves(top));
        }
        if let Some(&orphan) = self.leaves().iter().find(|l| !reached.contains(l)) {
            return corrupt(format!("leaf {orphan} is unreachable from the top layer"));
        }
        Ok(())
    }
}
