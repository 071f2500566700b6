use std::collections::BTreeSet;
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Node, Tree};
use crate::chunker::{Chunker, Tokenizer, WhitespacePunct, DEFAULT_CHUNK_BUDGET};
use crate::clustering::{hierarchical_cluster, ClusterConfig, ClusterItem};
use crate::corpus::Document;
use crate::error::{Error, Result};
use crate::providers::{
    embed_texts, summarize, EmbedderSpec, EmbeddingProvider, SummarizationProvider, SummarizerSpec,
};
use crate::NodeId;

const EMBED_BATCH: usize = 64;

/// How the nodes of a layer are grouped under parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Grouping {
    /// Two-stage soft clustering.
    Gmm,
    /// Consecutive windows of `window` nodes.
    Recency { window: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub chunk_budget: usize,
    pub max_layers: usize,
    pub min_top_nodes: usize,
    pub seed: u64,
    pub max_concurrency: usize,
    pub tokenizer: String,
    pub embedder: EmbedderSpec,
    pub summarizer: SummarizerSpec,
    pub grouping: Grouping,
    /// Its `seed` is replaced per layer by one derived from `seed`.
    pub clustering: ClusterConfig,
}

impl Default for BuildConfig {
    fn default() -> Self {
        Self {
            chunk_budget: DEFAULT_CHUNK_BUDGET,
            max_layers: 5,
            min_top_nodes: 5,
            seed: 0,
            max_concurrency: 8,
            tokenizer: WhitespacePunct::NAME.to_string(),
            embedder: EmbedderSpec::mock(0),
            summarizer: SummarizerSpec::default(),
            grouping: Grouping::Gmm,
            clustering: ClusterConfig::default(),
        }
    }
}

impl BuildConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.chunk_budget == 0 || self.max_layers == 0 || self.min_top_nodes == 0 || self.max_concurrency == 0 {
            return bad("chunk_budget, max_layers, min_top_nodes and max_concurrency must be >= 1".into());
        }
        if self.tokenizer != WhitespacePunct::NAME {
            return bad(format!("unknown tokenizer {:?}", self.tokenizer));
        }
        if self.embedder.dimension() == 0 || self.summarizer.max_summary_tokens() == 0 {
            return bad("embedding dimension and max_summary_tokens must be >= 1".into());
        }
        if let Grouping::Recency { window } = self.grouping {
            if window < 2 {
                return bad("recency window must be >= 2".into());
            }
        }
        self.clustering.validate()
    }

    /// Hex SHA-256 of the compact, key-sorted JSON encoding.
    pub fn fingerprint(&self) -> String {
        let value = serde_json::to_value(self).expect("config serializes");
        let json = serde_json::to_vec(&value).expect("value serializes");
        hex::encode(Sha256::digest(json))
    }

    pub fn tokenizer(&self) -> Arc<dyn Tokenizer> {
        Arc::new(WhitespacePunct)
    }
}

/// Build with providers instantiated from the config's specs.
pub fn build_tree(docs: &[Document], config: &BuildConfig) -> Result<Tree> {
    config.validate()?;
    let embedder = config.embedder.build(None)?;
    let summarizer = config.summarizer.build(config.tokenizer(), None)?;
    build_tree_with(docs, config, embedder.as_ref(), summarizer.as_ref())
}

/// Build the baseline tree that groups consecutive windows instead of
/// clusters.
pub fn build_recency_tree(docs: &[Document], window: usize, config: &BuildConfig) -> Result<Tree> {
    let config = BuildConfig {
        grouping: Grouping::Recency { window },
        ..config.clone()
    };
    build_tree(docs, &config)
}

/// Build with explicit providers. The tree records the summarizer usage
/// incurred by this build.
pub fn build_tree_with(
    docs: &[Document],
    config: &BuildConfig,
    embedder: &dyn EmbeddingProvider,
    summarizer: &dyn SummarizationProvider,
) -> Result<Tree> {
    config.validate()?;
    if embedder.dimension() != config.embedder.dimension() {
        return Err(Error::InvalidConfig(format!(
            "embedder dimension {} does not match config dimension {}",
            embedder.dimension(),
            config.embedder.dimension()
        )));
    }
    let tokenizer = config.tokenizer();
    let chunker = Chunker::new(config.chunk_budget, tokenizer.clone())?;
    let chunks: Vec<_> = docs
        .iter()
        .flat_map(|d| chunker.chunk_document(&d.doc_id, &d.text))
        .collect();
    if chunks.is_empty() {
        return Err(Error::InvalidInput("corpus yields no chunks".into()));
    }
    let usage_before = summarizer.usage();

    let texts: Vec<String> = chunks.iter().map(|c| c.text.clone()).collect();
    let mut embeddings = Vec::with_capacity(texts.len());
    for batch in texts.chunks(EMBED_BATCH) {
        let vecs = embed_texts(embedder, batch).map_err(|e| Error::BuildAborted {
            layer: 0,
            completed_layers: 0,
            completed_nodes: 0,
            source: Box::new(e),
        })?;
        embeddings.extend(vecs);
    }

    let mut nodes: Vec<Node> = chunks
        .into_iter()
        .zip(embeddings)
        .enumerate()
        .map(|(id, (c, embedding))| Node {
            id,
            layer: 0,
            text: c.text,
            embedding,
            children: Vec::new(),
            token_count: c.token_count,
            doc_id: Some(c.doc_id),
            source_offset: Some(c.source_offset),
        })
        .collect();
    let mut layers: Vec<Vec<NodeId>> = vec![(0..nodes.len()).collect()];

    loop {
        let current = layers.last().expect("leaf layer exists");
        if current.len() <= config.min_top_nodes || layers.len() >= config.max_layers {
            break;
        }
        let layer = layers.len();
        let groups = group_layer(&nodes, current, config, layer)?;
        let single = groups.len() == 1;

        let contexts: Vec<String> = groups
            .iter()
            .map(|g| g.iter().map(|&c| nodes[c].text.as_str()).collect::<Vec<_>>().join("\n\n"))
            .collect();
        let results = summarize_and_embed(&contexts, embedder, summarizer, config.max_concurrency).map_err(|e| {
            Error::BuildAborted {
                layer,
                completed_layers: layers.len(),
                completed_nodes: nodes.len(),
                source: Box::new(e),
            }
        })?;

        let mut ids = Vec::with_capacity(groups.len());
        for (children, (text, embedding)) in groups.into_iter().zip(results) {
            let id = nodes.len();
            nodes.push(Node {
                id,
                layer,
                token_count: tokenizer.count(&text),
                text,
                embedding,
                children,
                doc_id: None,
                source_offset: None,
            });
            ids.push(id);
        }
        layers.push(ids);
        if single {
            break;
        }
    }

    let after = summarizer.usage();
    let usage = crate::providers::Usage {
        calls: after.calls - usage_before.calls,
        prompt_tokens: after.prompt_tokens - usage_before.prompt_tokens,
        completion_tokens: after.completion_tokens - usage_before.completion_tokens,
    };
    let tree = Tree {
        provenance: docs.iter().map(|d| d.doc_id.clone()).collect::<BTreeSet<_>>(),
        nodes,
        layers,
        config_fingerprint: config.fingerprint(),
        config: config.clone(),
        usage,
    };
    tree.validate()?;
    Ok(tree)
}

/// Child lists for the next layer, in canonical order.
fn group_layer(nodes: &[Node], current: &[NodeId], config: &BuildConfig, layer: usize) -> Result<Vec<Vec<NodeId>>> {
    match config.grouping {
        Grouping::Recency { window } => Ok(current.chunks(window).map(<[NodeId]>::to_vec).collect()),
        Grouping::Gmm => {
            let items: Vec<ClusterItem<'_>> = current
                .iter()
                .map(|&id| ClusterItem {
                    id,
                    embedding: &nodes[id].embedding,
                    token_count: nodes[id].token_count,
                })
                .collect();
            let cfg = ClusterConfig {
                seed: layer_seed(config.seed, layer),
                ..config.clustering.clone()
            };
            Ok(hierarchical_cluster(&items, &cfg)?
                .into_iter()
                .map(|c| c.member_ids)
                .collect())
        }
    }
}

fn layer_seed(seed: u64, layer: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(layer as u64)
}

/// Summarize every context and embed each summary, with at most
/// `concurrency` calls in flight. Results keep the input order; on failure
/// the error of the earliest failing context is returned.
fn summarize_and_embed(
    contexts: &[String],
    embedder: &dyn EmbeddingProvider,
    summarizer: &dyn SummarizationProvider,
    concurrency: usize,
) -> Result<Vec<(String, Vec<f64>)>> {
    let slots: Vec<Mutex<Option<Result<(String, Vec<f64>)>>>> = contexts.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let work = || loop {
        if failed.load(Ordering::Relaxed) {
            return;
        }
        let i = next.fetch_add(1, Ordering::Relaxed);
        if i >= contexts.len() {
            return;
        }
        let out = summarize(summarizer, &contexts[i]).and_then(|s| {
            let v = embed_texts(embedder, std::slice::from_ref(&s))?.pop().expect("one vector");
            Ok((s, v))
        });
        if out.is_err() {
            failed.store(true, Ordering::Relaxed);
        }
        *slots[i].lock().expect("slot lock") = Some(out);
    };
    let workers = concurrency.min(contexts.len()).max(1);
    if workers == 1 {
        work();
    } else {
        std::thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(work);
            }
        });
    }

    let mut out = Vec::with_capacity(contexts.len());
    for slot in slots {
        match slot.into_inner().expect("slot lock") {
            Some(Ok(v)) => out.push(v),
            Some(Err(e)) => return Err(e),
            None => {
                return Err(Error::provider("summarization interrupted by an earlier failure", false))
            }
        }
    }
    Ok(out)
}
