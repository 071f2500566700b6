use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::corpus::generate_corpus;
use crate::error::{Error, Result};
use crate::providers::EmbedderSpec;
use crate::tree::{build_tree, BuildConfig};

/// Mean chunk size of synthetic corpora, in tokens.
const MEAN_CHUNK_TOKENS: usize = 86;
const CHUNKS_PER_TOPIC: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub target_tokens: usize,
    pub chunks: usize,
    pub corpus_tokens: usize,
    pub nodes: usize,
    pub layers: usize,
    /// Prompt plus completion tokens spent on summaries.
    pub build_tokens: u64,
    pub seconds: f64,
}

/// Least-squares line `y = slope * x + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub rows: Vec<ScalingRow>,
    /// Build tokens against corpus tokens; `None` with fewer than two rows.
    pub token_fit: Option<LinearFit>,
    pub time_fit: Option<LinearFit>,
}

impl ScalingReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("target_tokens,chunks,corpus_tokens,nodes,layers,build_tokens,seconds\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{:.3}\n",
                r.target_tokens, r.chunks, r.corpus_tokens, r.nodes, r.layers, r.build_tokens, r.seconds
            ));
        }
        out
    }
}

/// `None` when fewer than two points or all `x` are equal. A constant `y`
/// fits perfectly.
pub fn fit_line(points: &[(f64, f64)]) -> Option<LinearFit> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some(LinearFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Build a synthetic corpus of roughly each target length and record cost.
/// The lexical embedder's lexicon is replaced per corpus.
pub fn scaling_benchmark(target_tokens: &[usize], config: &BuildConfig, seed: u64) -> Result<ScalingReport> {
    if target_tokens.is_empty() {
        return Err(Error::InvalidConfig("no corpus lengths given".into()));
    }
    let mut rows = Vec::with_capacity(target_tokens.len());
    for &target in target_tokens {
        let chunks = target.div_ceil(MEAN_CHUNK_TOKENS).max(1);
        let topics = chunks.div_ceil(CHUNKS_PER_TOPIC).max(1);
        let corpus = generate_corpus(seed, topics, chunks.div_ceil(topics), true);
        let mut cfg = config.clone();
        if let EmbedderSpec::MockLexical { lexicon, .. } = &mut cfg.embedder {
            *lexicon = corpus.lexicon.clone();
        }
        let start = Instant::now();
        let tree = build_tree(&corpus.documents, &cfg)?;
        let seconds = start.elapsed().as_secs_f64();
        log::info!("scaling: {} tokens built in {seconds:.2}s", corpus.total_tokens());
        rows.push(ScalingRow {
            target_tokens: target,
            chunks: corpus.chunks.len(),
            corpus_tokens: corpus.total_tokens(),
            nodes: tree.nodes.len(),
            layers: tree.num_layers(),
            build_tokens: tree.usage.total(),
            seconds,
        });
    }
    let pts = |f: fn(&ScalingRow) -> f64| -> Vec<(f64, f64)> {
        rows.iter().map(|r| (r.corpus_tokens as f64, f(r))).collect()
    };
    Ok(ScalingReport {
        token_fit: fit_line(&pts(|r| r.build_tokens as f64)),
        time_fit: fit_line(&pts(|r| r.seconds)),
        rows,
    })
}
