//! Two-stage soft clustering of node embeddings.
//!
//! A global pass reduces all embeddings with a wide neighbourhood, selects the
//! mixture size by BIC and soft-assigns nodes. Each sufficiently large global
//! cluster is then re-clustered locally with a narrow neighbourhood. Clusters
//! whose text would exceed the summarizer's input threshold are clustered
//! again, recursively, down to a depth cap; past that they are split by
//! similarity-ranked halving.

mod gmm;
mod pca;
mod umap;

use serde::{Deserialize, Serialize};

pub use gmm::{
    bic, bic_score, em_audit, fit_gmm, param_count, select_k, select_k_with, soft_assign, Assignment, EmAudit, GmmModel,
    GmmOptions,
};
pub use umap::{reduce_dim, ReducedPoints};

use crate::error::{Error, Result};
use crate::vector::{cosine_similarity, dot};
use crate::NodeId;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    pub seed: u64,
    /// Global neighbourhood size. `None` uses `floor(sqrt(N - 1))` in `[2, 50]`.
    pub n_neighbors_global: Option<usize>,
    pub n_neighbors_local: usize,
    pub target_dim: usize,
    pub k_max: usize,
    pub membership_threshold: f64,
    /// Summarizer input threshold in tokens.
    pub max_cluster_tokens: usize,
    pub max_depth: usize,
    pub gmm: GmmOptions,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_neighbors_global: None,
            n_neighbors_local: 10,
            target_dim: 10,
            k_max: 50,
            membership_threshold: 0.1,
            max_cluster_tokens: 3500,
            max_depth: 5,
            gmm: GmmOptions::default(),
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.n_neighbors_local < 2 || self.n_neighbors_global.is_some_and(|n| n < 2) {
            return bad("n_neighbors must be >= 2");
        }
        if self.target_dim == 0 || self.k_max == 0 || self.max_cluster_tokens == 0 {
            return bad("target_dim, k_max and max_cluster_tokens must be >= 1");
        }
        if !(self.membership_threshold > 0.0 && self.membership_threshold < 1.0) {
            return bad("membership_threshold must lie in (0, 1)");
        }
        if self.gmm.max_iter == 0 || !(self.gmm.tol > 0.0) || !(self.gmm.reg_covar >= 0.0) {
            return bad("invalid EM options");
        }
        Ok(())
    }

    /// Smallest global cluster that gets a local pass.
    pub fn min_local_size(&self) -> usize {
        self.n_neighbors_local + 1
    }

    fn global_neighbors(&self, n: usize) -> usize {
        let auto = ((n.saturating_sub(1)) as f64).sqrt().floor() as usize;
        self.n_neighbors_global.unwrap_or(auto.clamp(2, 50)).min(n - 1)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ClusterItem<'a> {
    pub id: NodeId,
    pub embedding: &'a [f64],
    pub token_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cluster {
    pub member_ids: Vec<NodeId>,
    /// Posterior weight of each member in the component that produced it.
    pub responsibilities: Vec<f64>,
    pub total_tokens: usize,
    /// Produced by similarity-ranked halving rather than a mixture model.
    pub fallback: bool,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(splitmix64(seed), |s, &p| splitmix64(s ^ splitmix64(p)))
}

/// Cluster `items`, returning a canonical (sorted, de-duplicated) list in
/// which every item appears at least once.
pub fn hierarchical_cluster(items: &[ClusterItem<'_>], config: &ClusterConfig) -> Result<Vec<Cluster>> {
    config.validate()?;
    if items.is_empty() {
        return Err(Error::InvalidInput("no nodes to cluster".into()));
    }
    let dim = items[0].embedding.len();
    if dim == 0 || items.iter().any(|i| i.embedding.len() != dim) {
        return Err(Error::InvalidInput("embeddings must share a positive dimension".into()));
    }
    let mut seen = std::collections::BTreeSet::new();
    if !items.iter().all(|i| seen.insert(i.id)) {
        return Err(Error::InvalidInput("duplicate node id".into()));
    }

    let mut out = cluster_recursive(items, config, config.seed, 0)?;
    for c in &mut out {
        let mut pairs: Vec<(NodeId, f64)> = c.member_ids.iter().copied().zip(c.responsibilities.iter().copied()).collect();
        pairs.sort_by_key(|p| p.0);
        c.member_ids = pairs.iter().map(|p| p.0).collect();
        c.responsibilities = pairs.iter().map(|p| p.1).collect();
    }
    out.sort_by(|a, b| a.member_ids.cmp(&b.member_ids).then(b.fallback.cmp(&a.fallback)));
    out.dedup_by(|a, b| a.member_ids == b.member_ids);
    Ok(out)
}

fn cluster_recursive(
    items: &[ClusterItem<'_>],
    config: &ClusterConfig,
    seed: u64,
    depth: usize,
) -> Result<Vec<Cluster>> {
    let groups = two_stage(items, config, seed)?;
    let by_id = |id: NodeId| items.iter().find(|i| i.id == id).expect("member of input");

    let mut out = Vec::new();
    for (gi, g) in groups.into_iter().enumerate() {
        let total_tokens = g.member_ids.iter().map(|&id| by_id(id).token_count).sum();
        let cluster = Cluster {
            member_ids: g.member_ids,
            responsibilities: g.responsibilities,
            total_tokens,
            fallback: false,
        };
        if total_tokens <= config.max_cluster_tokens || cluster.member_ids.len() == 1 {
            out.push(cluster);
            continue;
        }
        let members: Vec<ClusterItem<'_>> = cluster.member_ids.iter().map(|&id| *by_id(id)).collect();
        let stuck = cluster.member_ids.len() == items.len();
        if depth + 1 >= config.max_depth || stuck {
            log::warn!(
                "cluster of {} nodes ({total_tokens} tokens) exceeds the {}-token threshold at depth {}; splitting by similarity",
                members.len(),
                config.max_cluster_tokens,
                depth + 1
            );
            out.extend(halve(&members, config.max_cluster_tokens));
        } else {
            let sub_seed = derive_seed(seed, &[depth as u64 + 1, gi as u64]);
            out.extend(cluster_recursive(&members, config, sub_seed, depth + 1)?);
        }
    }
    Ok(out)
}

/// Global pass then local passes; returns soft groups over item ids.
fn two_stage(items: &[ClusterItem<'_>], config: &ClusterConfig, seed: u64) -> Result<Vec<Assignment>> {
    let global = single_pass(items, config, seed, config.global_neighbors(items.len()))?;
    if global.len() == 1 {
        return Ok(global);
    }
    let mut out = Vec::new();
    for (gi, g) in global.into_iter().enumerate() {
        if g.member_ids.len() <= config.min_local_size() {
            out.push(g);
            continue;
        }
        let members: Vec<ClusterItem<'_>> = g
            .member_ids
            .iter()
            .map(|&id| *items.iter().find(|i| i.id == id).expect("member of input"))
            .collect();
        let local_seed = derive_seed(seed, &[0x10ca1, gi as u64]);
        out.extend(single_pass(&members, config, local_seed, config.n_neighbors_local)?);
    }
    Ok(out)
}

/// Reduce, select K and soft-assign. Inputs too small for the manifold step
/// are clustered in the linear span of their raw embeddings.
fn single_pass(
    items: &[ClusterItem<'_>],
    config: &ClusterConfig,
    seed: u64,
    n_neighbors: usize,
) -> Result<Vec<Assignment>> {
    let n = items.len();
    let ids: Vec<NodeId> = items.iter().map(|i| i.id).collect();
    let vectors: Vec<Vec<f64>> = items.iter().map(|i| i.embedding.to_vec()).collect();

    if n < config.target_dim + 2 || n_neighbors >= n {
        // A full-covariance mixture in the raw space and one restricted to
        // the data's span differ in log-likelihood by a constant per point,
        // so BIC is evaluated on the span with the raw parameter count.
        let raw_dim = vectors[0].len();
        let (span, rank) = pca::principal_scores(&vectors, n.saturating_sub(1).max(1));
        let span: Vec<Vec<f64>> = span.into_iter().map(|mut r| {
            r.truncate(rank.max(1));
            r
        }).collect();
        let (_, model) = select_k_with(&span, n, seed, &config.gmm, raw_dim)?;
        let rp = ReducedPoints::raw(ids, span, seed);
        return soft_assign(&model, &rp, config.membership_threshold);
    }

    let target_dim = config.target_dim.min(n - 2);
    let reduced = reduce_dim(&ids, &vectors, n_neighbors, target_dim, seed)?;
    let (_, model) = select_k_with(&reduced.points, config.k_max, seed, &config.gmm, target_dim)?;
    soft_assign(&model, &reduced, config.membership_threshold)
}

/// Split by similarity until every piece fits `max_tokens` (or is a single
/// node). Members are ranked by cosine similarity to the member least
/// similar to the centroid, and the ranking is cut where the first half
/// reaches half the tokens.
fn halve(items: &[ClusterItem<'_>], max_tokens: usize) -> Vec<Cluster> {
    let total: usize = items.iter().map(|i| i.token_count).sum();
    if total <= max_tokens || items.len() == 1 {
        return vec![Cluster {
            member_ids: items.iter().map(|i| i.id).collect(),
            responsibilities: vec![1.0; items.len()],
            total_tokens: total,
            fallback: true,
        }];
    }
    let dim = items[0].embedding.len();
    let mut centroid = vec![0.0; dim];
    for i in items {
        for (c, x) in centroid.iter_mut().zip(i.embedding) {
            *c += x;
        }
    }
    let sim = |a: &[f64], b: &[f64]| cosine_similarity(a, b).unwrap_or_else(|_| dot(a, b));
    let pivot = items
        .iter()
        .map(|i| (sim(i.embedding, &centroid), i.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|p| p.1)
        .expect("non-empty");
    let pivot_vec = items.iter().find(|i| i.id == pivot).expect("pivot present").embedding;
    let mut ranked: Vec<(f64, ClusterItem<'_>)> = items.iter().map(|i| (sim(i.embedding, pivot_vec), *i)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.id.cmp(&b.1.id)));

    let mut acc = 0;
    let mut cut = ranked.len() - 1;
    for (idx, (_, it)) in ranked.iter().enumerate() {
        acc += it.token_count;
        if 2 * acc >= total {
            cut = idx + 1;
            break;
        }
    }
    let cut = cut.clamp(1, ranked.len() - 1);
    let (a, b): (Vec<_>, Vec<_>) = ranked.into_iter().enumerate().map(|(i, (_, it))| (i, it)).partition(|(i, _)| *i < cut);
    let a: Vec<_> = a.into_iter().map(|p| p.1).collect();
    let b: Vec<_> = b.into_iter().map(|p| p.1).collect();
    let mut out = halve(&a, max_tokens);
    out.extend(halve(&b, max_tokens));
    out
}
