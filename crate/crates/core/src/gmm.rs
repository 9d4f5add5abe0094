//! Latent reshaping with a reweighted Gaussian mixture.
//!
//! The prior is approximated by `K` Gaussians centered at k-means centroids of
//! fresh latent draws, sharing one diagonal covariance. Cluster `k` receives
//! weight `1 / (c_k + 1)`, where `c_k` counts (over every dense mode) the
//! cluster's generated samples within `r0` of that mode, and the weights are
//! normalized. Sampling from the mixture replaces sampling from the prior; the
//! generator itself is never touched.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, EmbeddingVector, Embeddings, RadiusTest};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::kmeans::{kmeans_fit, ClusterAssignment, KMeansConfig};
use crate::latent::{sample_latents_with, Latents};
use crate::rng::{derive_seed, indexed_rng, purpose};
use crate::sample::SampleSet;
use crate::source::{generate, Generator};

pub const DEFAULT_K: usize = 64;
pub const DEFAULT_N_FIT: usize = 100_000;
/// Variance floor for the shared covariance.
pub const MIN_VARIANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RawMixture {
    #[serde(rename = "K")]
    k: usize,
    #[serde(rename = "L")]
    latent_dim: usize,
    weights: Vec<f64>,
    means: Vec<Vec<f64>>,
    variances: Vec<f64>,
    seed: u64,
}

/// `sum_k w_k N(mu_k, diag(variances))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMixture", into = "RawMixture")]
pub struct MixtureModel {
    means: Latents,
    variances: Vec<f64>,
    weights: Vec<f64>,
    source_seed: u64,
}

impl TryFrom<RawMixture> for MixtureModel {
    type Error = Error;

    fn try_from(raw: RawMixture) -> Result<Self> {
        if raw.means.len() != raw.k {
            return Err(Error::InvalidConfig(format!("expected {} means, found {}", raw.k, raw.means.len())));
        }
        let mut means = Latents::new(raw.latent_dim);
        for m in raw.means {
            means.push(&crate::latent::LatentCode::new(m)?)?;
        }
        Self::new(means, raw.variances, raw.weights, raw.seed)
    }
}

impl From<MixtureModel> for RawMixture {
    fn from(m: MixtureModel) -> Self {
        RawMixture {
            k: m.k(),
            latent_dim: m.latent_dim(),
            means: m.means.rows().map(<[f64]>::to_vec).collect(),
            weights: m.weights,
            variances: m.variances,
            seed: m.source_seed,
        }
    }
}

impl MixtureModel {
    pub fn new(means: Latents, variances: Vec<f64>, weights: Vec<f64>, source_seed: u64) -> Result<Self> {
        let k = means.len();
        if k == 0 {
            return Err(Error::InvalidConfig("mixture needs at least one component".into()));
        }
        if weights.len() != k {
            return Err(Error::InvalidConfig(format!("{} weights for {k} components", weights.len())));
        }
        if variances.len() != means.dim() {
            return Err(Error::DimensionMismatch { expected: means.dim(), found: variances.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
            return Err(Error::InvalidConfig("weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!("weights sum to {sum}, expected 1")));
        }
        if variances.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::InvalidConfig("variances must be finite and positive".into()));
        }
        Ok(Self { means, variances, weights, source_seed })
    }

    /// Single standard-normal component.
    pub fn standard(latent_dim: usize) -> Result<Self> {
        Self::new(Latents::from_flat(latent_dim, vec![0.0; latent_dim])?, vec![1.0; latent_dim], vec![1.0], 0)
    }

    pub fn k(&self) -> usize {
        self.means.len()
    }

    pub fn latent_dim(&self) -> usize {
        self.means.dim()
    }

    pub fn means(&self) -> &Latents {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.variances
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn source_seed(&self) -> u64 {
        self.source_seed
    }

    fn pick_component(&self, u: f64) -> usize {
        let mut acc = 0.0;
        for (k, &w) in self.weights.iter().enumerate() {
            acc += w;
            if w > 0.0 && u < acc {
                return k;
            }
        }
        self.weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
    }

    /// Draw `index` of the calibrated stream for `seed`: component, then latent.
    pub fn draw(&self, seed: u64, index: u64) -> (usize, Vec<f64>) {
        let mut rng = indexed_rng(seed, purpose::MIXTURE_SAMPLE, index);
        let k = self.pick_component(rng.random());
        let z = self
            .means
            .row(k)
            .iter()
            .zip(&self.variances)
            .map(|(mu, var)| {
                let g: f64 = StandardNormal.sample(&mut rng);
                (mu + libm::sqrt(*var) * g) as f32 as f64
            })
            .collect();
        (k, z)
    }
}

/// Raw dense-neighbor counts per cluster and the resulting normalized weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterWeights {
    pub raw_counts: Vec<u64>,
    pub weights: Vec<f64>,
}

/// Normalized `1 / (c_k + 1)` weights from raw counts.
pub fn weights_from_counts(raw_counts: &[u64]) -> Vec<f64> {
    let inv: Vec<f64> = raw_counts.iter().map(|&c| 1.0 / (c as f64 + 1.0)).collect();
    let sum: f64 = inv.iter().sum();
    inv.into_iter().map(|w| w / sum).collect()
}

const COUNT_BLOCK: usize = 4096;

/// Counts, per cluster, the samples within `r0` of each dense mode.
pub fn compute_cluster_weights<E: Executor>(
    exec: &E,
    assignment: &ClusterAssignment,
    k: usize,
    embeddings: &Embeddings,
    dense_modes: &[EmbeddingVector],
    r0: f64,
) -> Result<ClusterWeights> {
    if dense_modes.is_empty() {
        return Err(Error::EmptyDenseModeList);
    }
    if assignment.labels.len() != embeddings.len() {
        return Err(Error::InvalidConfig(format!(
            "{} labels for {} samples",
            assignment.labels.len(),
            embeddings.len()
        )));
    }
    if let Some(&bad) = assignment.labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidConfig(format!("label {bad} out of range for k = {k}")));
    }
    for m in dense_modes {
        if m.dim() != embeddings.dim() {
            return Err(Error::DimensionMismatch { expected: embeddings.dim(), found: m.dim() });
        }
    }
    let test = RadiusTest::new(r0);
    let n = embeddings.len();
    let parts = exec.map_range(n.div_ceil(COUNT_BLOCK), |b| {
        let mut counts = vec![0u64; k];
        for i in b * COUNT_BLOCK..((b + 1) * COUNT_BLOCK).min(n) {
            let e = embeddings.row(i);
            let hits = dense_modes.iter().filter(|m| test.contains(dot(m.as_slice(), e))).count();
            counts[assignment.labels[i]] += hits as u64;
        }
        counts
    });
    let mut raw_counts = vec![0u64; k];
    for part in parts {
        for (c, p) in raw_counts.iter_mut().zip(part) {
            *c += p;
        }
    }
    let weights = weights_from_counts(&raw_counts);
    Ok(ClusterWeights { raw_counts, weights })
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceEstimate {
    pub variances: Vec<f64>,
    /// Some dimension fell below [`MIN_VARIANCE`] and was floored.
    pub floored: bool,
}

/// Pooled within-cluster variance per dimension, `sum (z - mu_label)^2 / (n - K)`.
pub fn estimate_covariance(latents: &Latents, means: &Latents, assignment: &ClusterAssignment) -> Result<CovarianceEstimate> {
    let n = latents.len();
    let k = means.len();
    if n <= k {
        return Err(Error::InvalidConfig(format!("need more points ({n}) than clusters ({k})")));
    }
    let dim = latents.dim();
    let mut acc = vec![0.0; dim];
    for (z, &l) in latents.rows().zip(&assignment.labels) {
        for ((a, x), mu) in acc.iter_mut().zip(z).zip(means.row(l)) {
            *a += (x - mu) * (x - mu);
        }
    }
    let mut floored = false;
    let variances = acc
        .into_iter()
        .map(|s| {
            let v = s / (n - k) as f64;
            if v < MIN_VARIANCE {
                floored = true;
                MIN_VARIANCE
            } else {
                v
            }
        })
        .collect();
    if floored {
        log::warn!("degenerate latent data: pooled variance floored to {MIN_VARIANCE}");
    }
    Ok(CovarianceEstimate { variances, floored })
}

const SAMPLE_BLOCK: usize = 4096;

/// `n` latents from the mixture; draw `i` depends only on `(model, seed, i)`.
pub fn sample_calibrated<E: Executor>(exec: &E, model: &MixtureModel, n: usize, seed: u64) -> Result<Latents> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of latents must be at least 1".into()));
    }
    let parts = exec.map_range(n.div_ceil(SAMPLE_BLOCK), |b| {
        let mut flat = Vec::with_capacity(SAMPLE_BLOCK * model.latent_dim());
        for i in b * SAMPLE_BLOCK..((b + 1) * SAMPLE_BLOCK).min(n) {
            flat.extend(model.draw(seed, i as u64).1);
        }
        flat
    });
    Latents::from_flat(model.latent_dim(), parts.concat())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GmmConfig {
    pub k: usize,
    pub r0: f64,
    pub n_fit: usize,
    pub seed: u64,
    pub max_iters: usize,
    pub tol: f64,
}

impl GmmConfig {
    pub fn new(k: usize, r0: f64, n_fit: usize, seed: u64) -> Self {
        Self { k, r0, n_fit, seed, max_iters: 100, tol: 1e-6 }
    }
}

/// A fitted mixture plus the intermediate quantities behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub model: MixtureModel,
    pub cluster_weights: ClusterWeights,
    pub assignment: ClusterAssignment,
    pub covariance_floored: bool,
}

/// Fits the reweighted mixture on already generated samples.
pub fn fit_mixture<E: Executor>(
    exec: &E,
    fit: &SampleSet,
    dense_modes: &[EmbeddingVector],
    cfg: &GmmConfig,
) -> Result<GmmFit> {
    if dense_modes.is_empty() {
        return Err(Error::EmptyDenseModeList);
    }
    let km = kmeans_fit(
        exec,
        fit.latents(),
        &KMeansConfig { k: cfg.k, max_iters: cfg.max_iters, tol: cfg.tol, seed: cfg.seed },
    )?;
    let cluster_weights =
        compute_cluster_weights(exec, &km.assignment, cfg.k, fit.embeddings(), dense_modes, cfg.r0)?;
    let cov = estimate_covariance(fit.latents(), &km.means, &km.assignment)?;
    let model = MixtureModel::new(km.means, cov.variances, cluster_weights.weights.clone(), cfg.seed)?;
    Ok(GmmFit { model, cluster_weights, assignment: km.assignment, covariance_floored: cov.floored })
}

/// Draws `cfg.n_fit` fresh prior latents, generates them through the black box
/// and fits the reweighted mixture.
pub fn calibrate_gmm<E: Executor, G: Generator + ?Sized>(
    exec: &E,
    generator: &G,
    dense_modes: &[EmbeddingVector],
    cfg: &GmmConfig,
) -> Result<GmmFit> {
    if dense_modes.is_empty() {
        return Err(Error::EmptyDenseModeList);
    }
    let latents = sample_latents_with(exec, cfg.n_fit, generator.latent_dim(), derive_seed(cfg.seed, purpose::FIT))?;
    let fit = generate(generator, latents)?;
    fit_mixture(exec, &fit, dense_modes, cfg)
}
