//! Evaluation harness: synthetic corpora, recall under a token budget,
//! layer studies, the clustering-vs-recency ablation and the cost scaling
//! benchmark.
//!
//! Recall counts a relevant chunk as retrieved when it is selected directly
//! or when any selected summary node has it as a descendant.

mod corpus;
mod scaling;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use corpus::{generate_corpus, QueryKind, SyntheticChunk, SyntheticCorpus, SyntheticQuery, SYNTHETIC_DOC_ID};
pub use scaling::{fit_line, scaling_benchmark, LinearFit, ScalingReport, ScalingRow};

use crate::error::{Error, Result};
use crate::providers::{embed_texts, EmbedderSpec, EmbeddingProvider, SummarizerSpec};
use crate::retrieval::{
    collapsed_tree, flat_retrieve, layer_histogram, layer_restricted_retrieve, tree_traversal, RetrievalResult,
};
use crate::tree::{build_tree, tree_stats, BuildConfig, Grouping, Tree, TreeStats};

/// Dimension of the lexical mock embedder used by the harness.
pub const EVAL_DIMENSION: usize = 256;
pub const STANDARD_SEED: u64 = 7;

/// Five interleaved topics of twenty chunks each.
pub fn standard_corpus() -> SyntheticCorpus {
    generate_corpus(STANDARD_SEED, 5, 20, true)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Strategy {
    Collapsed,
    Flat,
    Layers { layers: Vec<usize> },
    Traversal { top_k: usize },
}

impl Strategy {
    pub fn name(&self) -> String {
        match self {
            Strategy::Collapsed => "collapsed".into(),
            Strategy::Flat => "flat".into(),
            Strategy::Layers { layers } => format!(
                "layers:{}",
                layers.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
            ),
            Strategy::Traversal { top_k } => format!("traversal:k={top_k}"),
        }
    }

    fn run(&self, tree: &Tree, query: &[f64], budget: usize) -> Result<RetrievalResult> {
        match self {
            Strategy::Collapsed => collapsed_tree(tree, query, budget),
            Strategy::Flat => flat_retrieve(tree, query, budget),
            Strategy::Layers { layers } => layer_restricted_retrieve(tree, query, layers, budget),
            Strategy::Traversal { top_k } => tree_traversal(tree, query, *top_k, tree.num_layers()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyReport {
    pub strategy: String,
    pub recall: f64,
    pub recall_detail: Option<f64>,
    pub recall_thematic: Option<f64>,
    /// Fraction of thematic queries whose selection includes a summary node.
    pub thematic_non_leaf_fraction: Option<f64>,
    /// Percentage of selected nodes per layer.
    pub layer_histogram: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub budget: usize,
    pub queries: usize,
    pub strategies: Vec<StrategyReport>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

/// Recall of `result` against `relevant` leaf ids, with ancestor coverage.
pub fn recall(tree: &Tree, result: &RetrievalResult, relevant: &std::collections::BTreeSet<usize>) -> f64 {
    if relevant.is_empty() {
        return 1.0;
    }
    let covered = result.covered_leaves(tree);
    relevant.iter().filter(|r| covered.contains(r)).count() as f64 / relevant.len() as f64
}

/// Score each strategy on the corpus queries.
pub fn evaluate(
    tree: &Tree,
    corpus: &SyntheticCorpus,
    embedder: &dyn EmbeddingProvider,
    strategies: &[Strategy],
    budget: usize,
) -> Result<EvalReport> {
    if !corpus.aligned_with(tree) {
        return Err(Error::InvalidInput("tree leaves do not match the corpus chunks".into()));
    }
    let texts: Vec<String> = corpus.queries.iter().map(|q| q.text.clone()).collect();
    let vectors = if texts.is_empty() {
        Vec::new()
    } else {
        embed_texts(embedder, &texts)?
    };
    let mut reports = Vec::new();
    for strategy in strategies {
        let mut all = Vec::new();
        let mut detail = Vec::new();
        let mut thematic = Vec::new();
        let mut thematic_non_leaf = Vec::new();
        let mut results = Vec::new();
        for (q, v) in corpus.queries.iter().zip(&vectors) {
            let r = strategy.run(tree, v, budget)?;
            let rc = recall(tree, &r, &q.relevant);
            all.push(rc);
            match q.kind {
                QueryKind::Detail => detail.push(rc),
                QueryKind::Thematic => {
                    thematic.push(rc);
                    let non_leaf = r.layers.iter().any(|&l| l > 0);
                    thematic_non_leaf.push(if non_leaf { 1.0 } else { 0.0 });
                }
            }
            results.push(r);
        }
        reports.push(StrategyReport {
            strategy: strategy.name(),
            recall: mean(&all).unwrap_or(0.0),
            recall_detail: mean(&detail),
            recall_thematic: mean(&thematic),
            thematic_non_leaf_fraction: mean(&thematic_non_leaf),
            layer_histogram: if results.is_empty() {
                BTreeMap::new()
            } else {
                layer_histogram(&results)?
            },
        });
    }
    Ok(EvalReport {
        budget,
        queries: corpus.queries.len(),
        strategies: reports,
    })
}

/// Each single layer, then every layer together.
pub fn layer_strategies(tree: &Tree) -> Vec<Strategy> {
    let mut s: Vec<Strategy> = (0..tree.num_layers())
        .map(|l| Strategy::Layers { layers: vec![l] })
        .collect();
    s.push(Strategy::Collapsed);
    s
}

/// Build config for harness runs: lexical mock embedder over the corpus
/// lexicon, extractive mock summarizer.
pub fn eval_config(corpus: &SyntheticCorpus, seed: u64) -> BuildConfig {
    BuildConfig {
        seed,
        embedder: EmbedderSpec::MockLexical {
            seed,
            dimension: EVAL_DIMENSION,
            lexicon: corpus.lexicon.clone(),
        },
        summarizer: SummarizerSpec::default(),
        ..BuildConfig::default()
    }
}

/// Mean, over layer-1 parents, of the largest share of children from one
/// planted topic. `None` when there is no layer 1.
pub fn parent_topic_purity(tree: &Tree, corpus: &SyntheticCorpus) -> Option<f64> {
    let parents = tree.layers.get(1)?;
    let purities: Vec<f64> = parents
        .iter()
        .map(|&p| {
            let children = &tree.nodes[p].children;
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &c in children {
                *counts.entry(corpus.topic_of(c)).or_insert(0) += 1;
            }
            *counts.values().max().unwrap_or(&0) as f64 / children.len() as f64
        })
        .collect();
    mean(&purities)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub grouping: Grouping,
    pub purity: Option<f64>,
    pub stats: TreeStats,
    pub eval: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub clustered: VariantReport,
    pub recency: VariantReport,
}

/// Build the clustered tree and the recency-window tree over the same
/// corpus and compare parent purity and collapsed-tree recall.
pub fn ablation(corpus: &SyntheticCorpus, config: &BuildConfig, window: usize, budget: usize) -> Result<AblationReport> {
    let embedder = config.embedder.build(None)?;
    let variant = |grouping: Grouping| -> Result<VariantReport> {
        let cfg = BuildConfig {
            grouping,
            ..config.clone()
        };
        let tree = build_tree(&corpus.documents, &cfg)?;
        Ok(VariantReport {
            grouping,
            purity: parent_topic_purity(&tree, corpus),
            stats: tree_stats(&tree),
            eval: evaluate(&tree, corpus, embedder.as_ref(), &[Strategy::Collapsed], budget)?,
        })
    };
    Ok(AblationReport {
        clustered: variant(Grouping::Gmm)?,
        recency: variant(Grouping::Recency { window })?,
    })
}
