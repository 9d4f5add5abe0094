//! Monte Carlo collapse statistics.
//!
//! For an anchor embedding `a` and a pool of generated embeddings `c_1..c_n`,
//! the mean similarity `s = (1/n) sum_i sim(a, c_i)` estimates how much of the
//! generator's output shares the anchor's identity. The collapse score is
//! `MCCS = 1 / (1 - ln s)`, defined as 0 when `s = 0`. Population statistics
//! summarize MCCS over a disjoint anchor collection, and dense modes are the
//! anchors with the most pool neighbors inside a radius.

mod curves;
mod sweep;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use curves::{
    mccs_curve, population_curves, shuffled_order, ConvergenceCurve, CurveAxis, CurvePoint,
    StatisticKind,
};
use sweep::{sweep, SweepSpec};

use crate::embedding::{cosine_distance, EmbeddingVector, Embeddings, SimilarityConfig};
use crate::error::{Error, Result};
use crate::exec::{Executor, Serial};
use crate::sample::SampleSet;

/// Number of dense modes listed by default.
pub const DEFAULT_TOP_K: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MccsValue {
    pub value: f64,
    pub anchor_index: usize,
    pub mean_similarity: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationStats {
    pub mu: f64,
    pub sigma: f64,
    pub m: usize,
    pub per_anchor: Vec<MccsValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseModeResult {
    pub anchor_index: usize,
    pub neighbor_count: u64,
    pub radius: f64,
    /// Next-best `(anchor_index, neighbor_count)` pairs in rank order.
    pub runner_ups: Vec<(usize, u64)>,
    /// Set when no anchor has any neighbor in the pool.
    pub no_dense_mode: bool,
}

/// `1 / (1 - ln s)` for `s > 0`, else 0.
pub fn mccs_from_mean(mean_similarity: f64) -> f64 {
    if mean_similarity > 0.0 {
        1.0 / (1.0 - libm::log(mean_similarity))
    } else {
        0.0
    }
}

/// Mean and (m - 1)-denominator standard deviation.
pub fn population_moments(values: &[f64]) -> Result<(f64, f64)> {
    let m = values.len();
    if m < 2 {
        return Err(Error::TooFewAnchors { m });
    }
    let mut sum = sweep::CompensatedSum::default();
    values.iter().for_each(|&v| sum.add(v));
    let mu = sum.value() / m as f64;
    let mut sq = sweep::CompensatedSum::default();
    values.iter().for_each(|&v| sq.add((v - mu) * (v - mu)));
    Ok((mu, libm::sqrt(sq.value() / (m - 1) as f64)))
}

fn check_anchor(anchor: &EmbeddingVector, pool: &Embeddings) -> Result<()> {
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if anchor.dim() != pool.dim() {
        return Err(Error::DimensionMismatch { expected: pool.dim(), found: anchor.dim() });
    }
    Ok(())
}

/// Monte Carlo estimate of the expected similarity between `anchor` and a
/// generated sample.
pub fn expected_similarity(anchor: &EmbeddingVector, pool: &Embeddings, cfg: &SimilarityConfig) -> Result<f64> {
    check_anchor(anchor, pool)?;
    let anchors = Embeddings::from_vectors(anchor.dim(), [anchor])?;
    let stat = sweep(&Serial, &anchors, pool, SweepSpec { radius: None, theta: Some(cfg.theta) });
    Ok(stat[0].similarity.value() / pool.len() as f64)
}

/// Collapse score of one anchor against the pool.
pub fn mccs(
    anchor_index: usize,
    anchor: &EmbeddingVector,
    pool: &Embeddings,
    cfg: &SimilarityConfig,
) -> Result<MccsValue> {
    let mean = expected_similarity(anchor, pool, cfg)?;
    Ok(MccsValue { value: mccs_from_mean(mean), anchor_index, mean_similarity: mean, n_samples: pool.len() })
}

fn check_collections(anchors: &SampleSet, pool: &SampleSet) -> Result<()> {
    if anchors.is_empty() || pool.is_empty() {
        return Err(Error::EmptyCollections);
    }
    if anchors.embed_dim() != pool.embed_dim() {
        return Err(Error::DimensionMismatch { expected: pool.embed_dim(), found: anchors.embed_dim() });
    }
    anchors.check_disjoint(pool)
}

/// Anchor indices sorted by descending count, ties by ascending index; the
/// first `k` are returned.
pub fn rank_by_count(counts: &[u64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    order.truncate(k);
    order
}

/// Per-anchor neighbor counts within `radius`.
pub fn neighbor_counts<E: Executor>(exec: &E, anchors: &Embeddings, pool: &Embeddings, radius: f64) -> Vec<u64> {
    sweep(exec, anchors, pool, SweepSpec { radius: Some(radius), theta: None })
        .into_iter()
        .map(|s| s.count)
        .collect()
}

fn dense_modes(counts: &[u64], radius: f64, k: usize) -> Vec<DenseModeResult> {
    rank_by_count(counts, k)
        .into_iter()
        .map(|i| DenseModeResult {
            anchor_index: i,
            neighbor_count: counts[i],
            radius,
            runner_ups: Vec::new(),
            no_dense_mode: counts[i] == 0,
        })
        .collect()
}

fn worst_mode(counts: &[u64], radius: f64) -> DenseModeResult {
    let ranked = rank_by_count(counts, DEFAULT_TOP_K);
    let best = ranked[0];
    DenseModeResult {
        anchor_index: best,
        neighbor_count: counts[best],
        radius,
        runner_ups: ranked[1..].iter().map(|&i| (i, counts[i])).collect(),
        no_dense_mode: counts[best] == 0,
    }
}

/// MCCS for every anchor plus their mean and standard deviation.
pub fn population_stats<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    cfg: &SimilarityConfig,
) -> Result<PopulationStats> {
    if anchors.len() < 2 && !anchors.is_empty() {
        return Err(Error::TooFewAnchors { m: anchors.len() });
    }
    check_collections(anchors, pool)?;
    let stats = sweep(exec, anchors.embeddings(), pool.embeddings(), SweepSpec { radius: None, theta: Some(cfg.theta) });
    population_from_sums(stats.iter().map(|s| s.similarity.value()), pool.len())
}

fn population_from_sums(sums: impl Iterator<Item = f64>, n: usize) -> Result<PopulationStats> {
    let per_anchor: Vec<MccsValue> = sums
        .enumerate()
        .map(|(i, sum)| {
            let mean = sum / n as f64;
            MccsValue { value: mccs_from_mean(mean), anchor_index: i, mean_similarity: mean, n_samples: n }
        })
        .collect();
    let values: Vec<f64> = per_anchor.iter().map(|v| v.value).collect();
    let (mu, sigma) = population_moments(&values)?;
    Ok(PopulationStats { mu, sigma, m: per_anchor.len(), per_anchor })
}

/// The anchor with the most pool neighbors within `radius` (lowest index on
/// ties), with up to [`DEFAULT_TOP_K`]` - 1` runner-ups.
pub fn find_worst_mode<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    radius: f64,
) -> Result<DenseModeResult> {
    check_collections(anchors, pool)?;
    let counts = neighbor_counts(exec, anchors.embeddings(), pool.embeddings(), radius);
    Ok(worst_mode(&counts, radius))
}

/// The `k` densest anchors in descending order of neighbor count.
pub fn top_k_modes<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    radius: f64,
    k: usize,
) -> Result<Vec<DenseModeResult>> {
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    check_collections(anchors, pool)?;
    let counts = neighbor_counts(exec, anchors.embeddings(), pool.embeddings(), radius);
    Ok(dense_modes(&counts, radius, k))
}

/// Everything a diagnosis report needs, from a single anchor x pool sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnosis {
    pub config: SimilarityConfig,
    pub stats: PopulationStats,
    pub counts: Vec<u64>,
    pub worst: DenseModeResult,
    pub top_k: Vec<DenseModeResult>,
    pub n: usize,
}

pub fn diagnose<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    cfg: &SimilarityConfig,
    k: usize,
) -> Result<Diagnosis> {
    cfg.validate()?;
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if anchors.len() < 2 && !anchors.is_empty() {
        return Err(Error::TooFewAnchors { m: anchors.len() });
    }
    check_collections(anchors, pool)?;
    let raw = sweep(
        exec,
        anchors.embeddings(),
        pool.embeddings(),
        SweepSpec { radius: Some(cfg.radius), theta: Some(cfg.theta) },
    );
    let counts: Vec<u64> = raw.iter().map(|s| s.count).collect();
    let stats = population_from_sums(raw.iter().map(|s| s.similarity.value()), pool.len())?;
    Ok(Diagnosis {
        config: *cfg,
        worst: worst_mode(&counts, cfg.radius),
        top_k: dense_modes(&counts, cfg.radius, k),
        stats,
        counts,
        n: pool.len(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyEntry {
    pub size: usize,
    pub anchor_index: usize,
    pub neighbor_count: u64,
    pub embedding: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeConsistency {
    pub entries: Vec<ConsistencyEntry>,
    /// Largest pairwise distance among the recovered worst-case embeddings.
    pub max_pairwise_distance: f64,
}

/// Worst-case mode recovered from each anchor prefix `anchors[..size]`.
pub fn mode_consistency_check<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    anchor_sizes: &[usize],
    radius: f64,
) -> Result<ModeConsistency> {
    check_collections(anchors, pool)?;
    if anchor_sizes.is_empty() || anchor_sizes.iter().any(|&s| s == 0 || s > anchors.len()) {
        return Err(Error::SizesOutOfRange(alloc::format!(
            "anchor sizes must lie in 1..={}",
            anchors.len()
        )));
    }
    let largest = *anchor_sizes.iter().max().unwrap_or(&0);
    let prefix = anchors.embeddings().prefix(largest);
    let counts = neighbor_counts(exec, &prefix, pool.embeddings(), radius);
    let entries: Vec<ConsistencyEntry> = anchor_sizes
        .iter()
        .map(|&size| {
            let best = rank_by_count(&counts[..size], 1)[0];
            ConsistencyEntry {
                size,
                anchor_index: best,
                neighbor_count: counts[best],
                embedding: prefix.get(best),
            }
        })
        .collect();
    let mut max_pairwise_distance: f64 = 0.0;
    for (i, a) in entries.iter().enumerate() {
        for b in &entries[i + 1..] {
            max_pairwise_distance = max_pairwise_distance.max(cosine_distance(&a.embedding, &b.embedding)?);
        }
    }
    Ok(ModeConsistency { entries, max_pairwise_distance })
}
