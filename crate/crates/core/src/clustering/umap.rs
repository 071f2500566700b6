//! UMAP-style manifold reduction.
//!
//! 1. Exact k-nearest-neighbour graph under Euclidean distance.
//! 2. Fuzzy simplicial set: per-point `rho` (nearest non-zero distance) and
//!    `sigma` (binary search so memberships sum to `log2(k)`), then the
//!    probabilistic union `a + b - a·b` to symmetrize.
//! 3. Layout initialised from principal components (scaled to ±10) and
//!    optimised by seeded stochastic gradient descent on the fuzzy
//!    cross-entropy with negative sampling.
//!
//! The whole procedure is single-threaded and fully determined by the seed.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::pca::principal_scores;
use crate::error::{Error, Result};
use crate::NodeId;

/// Curve parameters of the low-dimensional similarity `1 / (1 + a·d^(2b))`,
/// fitted for `min_dist = 0.1`, `spread = 1.0`.
const CURVE_A: f64 = 1.576_943_460_311_307_7;
const CURVE_B: f64 = 0.895_060_877_910_973_3;
const NEGATIVE_SAMPLE_RATE: usize = 5;
const LEARNING_RATE: f64 = 1.0;
const GRADIENT_CLIP: f64 = 4.0;
const INIT_SCALE: f64 = 10.0;
const SIGMA_ITERATIONS: usize = 64;
const SIGMA_TOLERANCE: f64 = 1e-5;
const MIN_SIGMA_SCALE: f64 = 1e-3;

/// Points in a reduced space, row-aligned with the node ids they came from.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedPoints {
    pub points: Vec<Vec<f64>>,
    pub source_ids: Vec<NodeId>,
    /// `None` when the points were not produced by manifold reduction.
    pub n_neighbors: Option<usize>,
    pub seed: u64,
}

impl ReducedPoints {
    /// Wrap points that are used as-is, without reduction.
    pub fn raw(source_ids: Vec<NodeId>, points: Vec<Vec<f64>>, seed: u64) -> Self {
        Self {
            points,
            source_ids,
            n_neighbors: None,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }
}

/// Reduce `vectors` to `target_dim` dimensions.
///
/// `n_neighbors` counts the point itself, as in the reference algorithm, so
/// each point is linked to its `n_neighbors - 1` nearest others. Fails with
/// [`Error::DegenerateInput`] when there are too few points
/// (`len <= target_dim + 1` or `n_neighbors >= len`); callers then cluster
/// the raw vectors.
pub fn reduce_dim(
    source_ids: &[NodeId],
    vectors: &[Vec<f64>],
    n_neighbors: usize,
    target_dim: usize,
    seed: u64,
) -> Result<ReducedPoints> {
    let n = vectors.len();
    if source_ids.len() != n {
        return Err(Error::InvalidInput(format!(
            "{} ids for {n} vectors",
            source_ids.len()
        )));
    }
    if target_dim == 0 || n_neighbors < 2 {
        return Err(Error::InvalidConfig(
            "target_dim must be >= 1 and n_neighbors >= 2".into(),
        ));
    }
    if n <= target_dim + 1 || n_neighbors >= n {
        return Err(Error::DegenerateInput(format!(
            "{n} points cannot be reduced to {target_dim} dims with {n_neighbors} neighbours"
        )));
    }

    let n_epochs = if n <= 10_000 { 500 } else { 200 };
    let graph = fuzzy_graph(vectors, n_neighbors);
    let (mut layout, _) = principal_scores(vectors, target_dim);
    let max_abs = layout.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
    if max_abs > 0.0 {
        let s = INIT_SCALE / max_abs;
        layout.iter_mut().flatten().for_each(|x| *x *= s);
    }
    optimize_layout(&mut layout, &graph, n_epochs, seed);

    Ok(ReducedPoints {
        points: layout,
        source_ids: source_ids.to_vec(),
        n_neighbors: Some(n_neighbors),
        seed,
    })
}

/// Symmetric fuzzy membership graph as `(head, tail, weight)` with both
/// directions of every edge present.
fn fuzzy_graph(vectors: &[Vec<f64>], n_neighbors: usize) -> Vec<(usize, usize, f64)> {
    let n = vectors.len();
    let mut dist = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d = crate::vector::squared_distance(&vectors[i], &vectors[j]).sqrt();
            dist[i * n + j] = d;
            dist[j * n + i] = d;
        }
    }
    let mean_all = if n > 1 {
        dist.iter().sum::<f64>() / (n * (n - 1)) as f64
    } else {
        0.0
    };

    let k_others = n_neighbors - 1;
    let target = (n_neighbors as f64).log2();
    let mut directed: BTreeMap<(usize, usize), f64> = BTreeMap::new();

    for i in 0..n {
        let row = &dist[i * n..(i + 1) * n];
        let mut others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        others.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
        others.truncate(k_others);
        let knn: Vec<f64> = others.iter().map(|&j| row[j]).collect();

        let rho = knn.iter().copied().find(|&d| d > 0.0).unwrap_or(0.0);
        let mut sigma = smooth_sigma(&knn, rho, target);
        let mean_knn = knn.iter().sum::<f64>() / knn.len() as f64;
        let floor = MIN_SIGMA_SCALE * if rho > 0.0 { mean_knn } else { mean_all };
        sigma = sigma.max(floor);

        for (&j, &d) in others.iter().zip(&knn) {
            let excess = d - rho;
            let w = if excess <= 0.0 {
                1.0
            } else if sigma > 0.0 {
                (-excess / sigma).exp()
            } else {
                0.0
            };
            directed.insert((i, j), w);
        }
    }

    let mut edges = Vec::new();
    let mut seen: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for (&(i, j), &a) in &directed {
        let key = (i.min(j), i.max(j));
        if seen.contains_key(&key) {
            continue;
        }
        let b = directed.get(&(j, i)).copied().unwrap_or(0.0);
        seen.insert(key, a + b - a * b);
    }
    for (&(i, j), &w) in &seen {
        if w > 0.0 {
            edges.push((i, j, w));
            edges.push((j, i, w));
        }
    }
    edges.sort_by(|x, y| (x.0, x.1).cmp(&(y.0, y.1)));
    edges
}

/// Binary search for the bandwidth at which the neighbour memberships sum
/// to `target`.
fn smooth_sigma(knn: &[f64], rho: f64, target: f64) -> f64 {
    let (mut lo, mut hi, mut mid) = (0.0f64, f64::INFINITY, 1.0f64);
    for _ in 0..SIGMA_ITERATIONS {
        let psum: f64 = knn
            .iter()
            .map(|&d| {
                let e = d - rho;
                if e > 0.0 {
                    (-e / mid).exp()
                } else {
                    1.0
                }
            })
            .sum();
        if (psum - target).abs() < SIGMA_TOLERANCE {
            break;
        }
        if psum > target {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = if hi.is_infinite() { mid * 2.0 } else { (lo + hi) / 2.0 };
        }
    }
    mid
}

fn clip(x: f64) -> f64 {
    x.clamp(-GRADIENT_CLIP, GRADIENT_CLIP)
}

fn optimize_layout(layout: &mut [Vec<f64>], edges: &[(usize, usize, f64)], n_epochs: usize, seed: u64) {
    if edges.is_empty() {
        return;
    }
    let n = layout.len();
    let dim = layout[0].len();
    let max_w = edges.iter().map(|e| e.2).fold(0.0f64, f64::max);
    // Edges too weak to be sampled even once are dropped.
    let edges: Vec<_> = edges
        .iter()
        .copied()
        .filter(|e| e.2 >= max_w / n_epochs as f64)
        .collect();

    let epochs_per_sample: Vec<f64> = edges.iter().map(|e| max_w / e.2).collect();
    let epochs_per_negative: Vec<f64> = epochs_per_sample
        .iter()
        .map(|e| e / NEGATIVE_SAMPLE_RATE as f64)
        .collect();
    let mut next_sample = epochs_per_sample.clone();
    let mut next_negative = epochs_per_negative.clone();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut grad = vec![0.0; dim];

    for epoch in 0..n_epochs {
        let alpha = LEARNING_RATE * (1.0 - epoch as f64 / n_epochs as f64);
        let e_f = epoch as f64;
        for (idx, &(head, tail, _)) in edges.iter().enumerate() {
            if next_sample[idx] > e_f {
                continue;
            }

            let d2 = crate::vector::squared_distance(&layout[head], &layout[tail]);
            let coeff = if d2 > 0.0 {
                -2.0 * CURVE_A * CURVE_B * d2.powf(CURVE_B - 1.0) / (CURVE_A * d2.powf(CURVE_B) + 1.0)
            } else {
                0.0
            };
            for (g, (x, y)) in grad.iter_mut().zip(layout[head].iter().zip(&layout[tail])) {
                *g = clip(coeff * (x - y));
            }
            for (d, g) in grad.iter().enumerate() {
                layout[head][d] += g * alpha;
                layout[tail][d] -= g * alpha;
            }
            next_sample[idx] += epochs_per_sample[idx];

            let n_neg = ((e_f - next_negative[idx]) / epochs_per_negative[idx]).max(0.0) as usize;
            for _ in 0..n_neg {
                let other = rng.random_range(0..n);
                if other == head {
                    continue;
                }
                let d2 = crate::vector::squared_distance(&layout[head], &layout[other]);
                if d2 <= 0.0 {
                    continue;
                }
                let coeff = 2.0 * CURVE_B / ((0.001 + d2) * (CURVE_A * d2.powf(CURVE_B) + 1.0));
                for d in 0..dim {
                    let g = clip(coeff * (layout[head][d] - layout[other][d]));
                    layout[head][d] += g * alpha;
                }
            }
            next_negative[idx] += n_neg as f64 * epochs_per_negative[idx];
        }
    }
}
