//! Full-covariance Gaussian mixtures fitted by EM, with BIC model selection.

use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::umap::ReducedPoints;
use crate::error::{Error, Result};
use crate::NodeId;

const LOG_2PI: f64 = 1.837_877_066_409_345_5;
const LLOYD_ITERATIONS: usize = 10;

static EM_RUNS: AtomicU64 = AtomicU64::new(0);
static EM_STEPS: AtomicU64 = AtomicU64::new(0);
static EM_WORST_DROP: AtomicU64 = AtomicU64::new(0);

/// Process-wide record of every EM run so far.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmAudit {
    pub runs: u64,
    pub steps: u64,
    /// Largest single-step decrease of the log-likelihood history, or 0.
    pub worst_drop: f64,
}

pub fn em_audit() -> EmAudit {
    EmAudit {
        runs: EM_RUNS.load(Ordering::Relaxed),
        steps: EM_STEPS.load(Ordering::Relaxed),
        worst_drop: f64::from_bits(EM_WORST_DROP.load(Ordering::Relaxed)),
    }
}

fn record_run(history: &[f64]) {
    EM_RUNS.fetch_add(1, Ordering::Relaxed);
    EM_STEPS.fetch_add(history.len().saturating_sub(1) as u64, Ordering::Relaxed);
    let drop = history.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
    if drop > 0.0 {
        // Non-negative floats order like their bit patterns.
        EM_WORST_DROP.fetch_max(drop.to_bits(), Ordering::Relaxed);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmOptions {
    pub max_iter: usize,
    /// Convergence threshold on the change in mean per-sample log-likelihood.
    pub tol: f64,
    /// Added to every covariance diagonal.
    pub reg_covar: f64,
    /// In model selection, skip `K > 1` fits in which some component has an
    /// effective size of at most `d`. Such a component's covariance is
    /// singular before the ridge, so its likelihood is set by `reg_covar`.
    #[serde(default)]
    pub require_identifiable: bool,
}

impl Default for GmmOptions {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-4,
            reg_covar: 1e-6,
            require_identifiable: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmModel {
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Vec<Vec<f64>>>,
    pub weights: Vec<f64>,
    /// Total log-likelihood of the training points under the final parameters.
    pub log_likelihood: f64,
    /// Total log-likelihood before each M-step, then the final value.
    pub ll_history: Vec<f64>,
    pub n_iter: usize,
    pub converged: bool,
    /// EM stopped because the next step would have lowered the likelihood.
    pub rejected_step: bool,
    pub n_samples: usize,
}

impl GmmModel {
    pub fn k(&self) -> usize {
        self.weights.len()
    }

    pub fn dim(&self) -> usize {
        self.means.first().map_or(0, Vec::len)
    }

    /// Free parameters of a full-covariance mixture.
    pub fn param_count(&self) -> usize {
        param_count(self.k(), self.dim())
    }

    /// Every component has an effective size of at least `d + 1`.
    pub fn is_identifiable(&self) -> bool {
        let need = (self.dim() + 1) as f64;
        self.weights.iter().all(|w| w * self.n_samples as f64 >= need - 1e-9)
    }

    /// Posterior `P(k | x)` for each row of `points`.
    pub fn responsibilities(&self, points: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        let comps = self.components()?;
        Ok(e_step(points, &comps).0)
    }

    fn components(&self) -> Result<Vec<Component>> {
        self.means
            .iter()
            .zip(&self.covariances)
            .zip(&self.weights)
            .map(|((m, c), &w)| {
                let d = m.len();
                let cov = DMatrix::from_fn(d, d, |i, j| c[i][j]);
                Component::new(DVector::from_column_slice(m), cov, w)
            })
            .collect()
    }
}

pub fn param_count(k: usize, dim: usize) -> usize {
    k * (dim + dim * (dim + 1) / 2) + k - 1
}

/// `ln(N)·k − 2·L̂`.
pub fn bic_score(param_count: usize, n: usize, log_likelihood: f64) -> f64 {
    (n as f64).ln() * param_count as f64 - 2.0 * log_likelihood
}

pub fn bic(model: &GmmModel, n: usize) -> f64 {
    bic_score(model.param_count(), n, model.log_likelihood)
}

struct Component {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    log_norm: f64,
    log_weight: f64,
}

impl Component {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>, weight: f64) -> Result<Self> {
        let d = mean.len();
        let chol = Cholesky::new(cov.clone())
            .ok_or_else(|| Error::NumericalFailure("covariance is not positive definite".into()))?;
        let log_det: f64 = (0..d).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>() * 2.0;
        Ok(Self {
            mean,
            cov,
            chol,
            log_norm: -0.5 * (d as f64 * LOG_2PI + log_det),
            log_weight: weight.ln(),
        })
    }

    fn log_density(&self, x: &[f64]) -> f64 {
        let diff = DVector::from_iterator(x.len(), x.iter().zip(self.mean.iter()).map(|(a, b)| a - b));
        let z = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&diff)
            .expect("cholesky factor has a positive diagonal");
        self.log_norm - 0.5 * z.norm_squared()
    }
}

fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Responsibilities and total log-likelihood.
fn e_step(points: &[Vec<f64>], comps: &[Component]) -> (Vec<Vec<f64>>, f64) {
    let mut total = 0.0;
    let mut buf = vec![0.0; comps.len()];
    let resp = points
        .iter()
        .map(|x| {
            for (b, c) in buf.iter_mut().zip(comps) {
                *b = c.log_weight + c.log_density(x);
            }
            let lse = log_sum_exp(&buf);
            total += lse;
            buf.iter().map(|b| (b - lse).exp()).collect()
        })
        .collect();
    (resp, total)
}

fn m_step(points: &[Vec<f64>], resp: &[Vec<f64>], k: usize, reg: f64) -> Result<Vec<Component>> {
    let d = points[0].len();
    let nk: Vec<f64> = (0..k)
        .map(|c| resp.iter().map(|r| r[c]).sum::<f64>() + 10.0 * f64::EPSILON)
        .collect();
    let total: f64 = nk.iter().sum();
    (0..k)
        .map(|c| {
            let mut mean = DVector::zeros(d);
            for (x, r) in points.iter().zip(resp) {
                for j in 0..d {
                    mean[j] += r[c] * x[j];
                }
            }
            mean /= nk[c];
            let mut cov = DMatrix::zeros(d, d);
            for (x, r) in points.iter().zip(resp) {
                let w = r[c];
                if w == 0.0 {
                    continue;
                }
                for i in 0..d {
                    let di = x[i] - mean[i];
                    for j in 0..=i {
                        cov[(i, j)] += w * di * (x[j] - mean[j]);
                    }
                }
            }
            cov /= nk[c];
            for i in 0..d {
                for j in 0..i {
                    cov[(j, i)] = cov[(i, j)];
                }
                cov[(i, i)] += reg;
            }
            Component::new(mean, cov, nk[c] / total)
        })
        .collect()
}

/// k-means++ seeding followed by a few Lloyd iterations; returns hard labels.
fn kmeans_labels(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = points.len();
    let sq = crate::vector::squared_distance;
    let mut centers: Vec<Vec<f64>> = vec![points[rng.random_range(0..n)].clone()];
    let mut closest: Vec<f64> = points.iter().map(|p| sq(p, &centers[0])).collect();
    while centers.len() < k {
        let total: f64 = closest.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &c) in closest.iter().enumerate() {
                if target < c {
                    pick = i;
                    break;
                }
                target -= c;
            }
            pick
        } else {
            rng.random_range(0..n)
        };
        centers.push(points[next].clone());
        for (c, p) in closest.iter_mut().zip(points) {
            *c = c.min(sq(p, &centers[centers.len() - 1]));
        }
    }

    let assign = |centers: &[Vec<f64>]| -> Vec<usize> {
        points
            .iter()
            .map(|p| {
                let mut best = (f64::INFINITY, 0);
                for (j, c) in centers.iter().enumerate() {
                    let d = sq(p, c);
                    if d < best.0 {
                        best = (d, j);
                    }
                }
                best.1
            })
            .collect()
    };

    let mut labels = assign(&centers);
    for _ in 0..LLOYD_ITERATIONS {
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            counts[l] += 1;
            for (s, x) in sums[l].iter_mut().zip(p) {
                *s += x;
            }
        }
        for j in 0..k {
            if counts[j] > 0 {
                centers[j] = sums[j].iter().map(|s| s / counts[j] as f64).collect();
            }
        }
        let next = assign(&centers);
        if next == labels {
            break;
        }
        labels = next;
    }
    labels
}

/// Fit a `k`-component mixture to `points` by EM.
pub fn fit_gmm(points: &[Vec<f64>], k: usize, seed: u64, opts: &GmmOptions) -> Result<GmmModel> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::InvalidConfig(format!("cannot fit {k} components to {n} points")));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|p| p.len() != d) {
        return Err(Error::InvalidInput("points must share a positive dimension".into()));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::InvalidInput("non-finite coordinate".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels = kmeans_labels(points, k, &mut rng);
    let hard: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| (0..k).map(|j| if j == l { 1.0 } else { 0.0 }).collect())
        .collect();
    let mut comps = m_step(points, &hard, k, opts.reg_covar)?;

    let mut history = Vec::new();
    let mut converged = false;
    let mut rejected_step = false;
    let mut n_iter = 0;
    let (mut resp, mut ll) = e_step(points, &comps);
    for _ in 0..opts.max_iter {
        if !ll.is_finite() {
            return Err(Error::NumericalFailure(format!("log-likelihood is {ll}")));
        }
        history.push(ll);
        let next_comps = m_step(points, &resp, k, opts.reg_covar)?;
        n_iter += 1;
        let (next_resp, next) = e_step(points, &next_comps);
        if next < ll {
            // The ridge makes the covariance update inexact, so a step can
            // lose likelihood near a fixed point. Keep the better iterate.
            rejected_step = true;
            converged = true;
            history.pop();
            break;
        }
        let change = (next - ll) / n as f64;
        comps = next_comps;
        resp = next_resp;
        ll = next;
        if change < opts.tol {
            converged = true;
            break;
        }
    }
    if !ll.is_finite() {
        return Err(Error::NumericalFailure(format!("log-likelihood is {ll}")));
    }
    history.push(ll);
    record_run(&history);
    debug_assert!(
        history.windows(2).all(|w| w[1] >= w[0]),
        "EM log-likelihood decreased: {history:?}"
    );

    Ok(GmmModel {
        means: comps.iter().map(|c| c.mean.iter().copied().collect()).collect(),
        covariances: comps
            .iter()
            .map(|c| (0..d).map(|i| (0..d).map(|j| c.cov[(i, j)]).collect()).collect())
            .collect(),
        weights: comps.iter().map(|c| c.log_weight.exp()).collect(),
        log_likelihood: ll,
        ll_history: history,
        n_iter,
        converged,
        rejected_step,
        n_samples: n,
    })
}

/// Fit `K = 1..=min(k_max, N)` and keep the lowest BIC, preferring smaller K
/// on ties.
pub fn select_k(points: &ReducedPoints, k_max: usize, seed: u64) -> Result<(usize, GmmModel)> {
    let d = points.dim();
    select_k_with(&points.points, k_max, seed, &GmmOptions::default(), d)
}

/// As [`select_k`], with BIC counting parameters in `param_dim` dimensions.
pub fn select_k_with(
    points: &[Vec<f64>],
    k_max: usize,
    seed: u64,
    opts: &GmmOptions,
    param_dim: usize,
) -> Result<(usize, GmmModel)> {
    if k_max == 0 {
        return Err(Error::InvalidConfig("k_max must be >= 1".into()));
    }
    if points.is_empty() {
        return Err(Error::InvalidInput("no points to cluster".into()));
    }
    let n = points.len();
    let mut best: Option<(f64, GmmModel)> = None;
    for k in 1..=k_max.min(n) {
        let model = fit_gmm(points, k, seed, opts)?;
        if k > 1 && opts.require_identifiable && !model.is_identifiable() {
            continue;
        }
        let score = bic_score(param_count(k, param_dim), n, model.log_likelihood);
        if best.as_ref().is_none_or(|(b, _)| score < *b) {
            best = Some((score, model));
        }
    }
    let (_, model) = best.expect("at least one K is fitted");
    Ok((model.k(), model))
}

/// One mixture component's members and their posterior weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    pub component: usize,
    pub member_ids: Vec<NodeId>,
    pub responsibilities: Vec<f64>,
}

/// Point `i` joins component `k` when `P(k | x_i) >= threshold`, and always
/// joins its most probable component. Empty components are dropped.
pub fn soft_assign(model: &GmmModel, points: &ReducedPoints, threshold: f64) -> Result<Vec<Assignment>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidConfig(format!("membership threshold {threshold} outside (0, 1)")));
    }
    let resp = model.responsibilities(&points.points)?;
    let mut out: Vec<Assignment> = (0..model.k())
        .map(|component| Assignment {
            component,
            member_ids: Vec::new(),
            responsibilities: Vec::new(),
        })
        .collect();
    for (&id, r) in points.source_ids.iter().zip(&resp) {
        let arg = (0..r.len()).fold(0, |b, j| if r[j] > r[b] { j } else { b });
        for (k, &p) in r.iter().enumerate() {
            if p >= threshold || k == arg {
                out[k].member_ids.push(id);
                out[k].responsibilities.push(p);
            }
        }
    }
    out.retain(|a| !a.member_ids.is_empty());
    Ok(out)
}
