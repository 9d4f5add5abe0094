//! Sampling-efficiency curves: statistics on growing prefixes of a seeded
//! shuffle of the pool or anchor collection.

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::sweep::{sweep, CompensatedSum, SweepSpec};
use super::{mccs_from_mean, population_moments};
use crate::embedding::{dot, EmbeddingVector, SimilarityConfig, SimilarityKernel};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::rng::{indexed_rng, purpose};
use crate::sample::SampleSet;
use crate::Embeddings;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StatisticKind {
    MccsSingle,
    MuMccs,
    SigmaMccs,
}

/// Which collection grows along the curve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CurveAxis {
    Pool,
    Anchors,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub size: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceCurve {
    pub statistic: StatisticKind,
    pub axis: CurveAxis,
    pub points: Vec<CurvePoint>,
}

/// Permutation of `0..n` determined by `seed`.
pub fn shuffled_order(n: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut indexed_rng(seed, purpose::SHUFFLE, n as u64));
    order
}

fn check_sizes(sizes: &[usize], limit: usize, min: usize, what: &str) -> Result<()> {
    if sizes.is_empty() {
        return Err(Error::SizesOutOfRange("no sizes given".into()));
    }
    if sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::SizesOutOfRange("sizes must be strictly increasing".into()));
    }
    if sizes[0] < min {
        return Err(Error::SizesOutOfRange(format!("smallest size must be at least {min}")));
    }
    let last = sizes[sizes.len() - 1];
    if last > limit {
        return Err(Error::SizesOutOfRange(format!("size {last} exceeds {what} of {limit}")));
    }
    Ok(())
}

/// MCCS of one anchor on prefixes of the shuffled pool.
pub fn mccs_curve(
    anchor: &EmbeddingVector,
    pool: &Embeddings,
    cfg: &SimilarityConfig,
    sizes: &[usize],
    seed: u64,
) -> Result<ConvergenceCurve> {
    check_sizes(sizes, pool.len(), 1, "pool size")?;
    if pool.dim() != anchor.dim() {
        return Err(Error::DimensionMismatch { expected: pool.dim(), found: anchor.dim() });
    }
    let kernel = SimilarityKernel::new(cfg.theta);
    let order = shuffled_order(pool.len(), seed);
    let mut acc = CompensatedSum::default();
    let mut points = Vec::with_capacity(sizes.len());
    let mut seen = 0;
    for &size in sizes {
        for &j in &order[seen..size] {
            let s = kernel.eval(dot(anchor.as_slice(), pool.row(j)));
            if s > 0.0 {
                acc.add(s);
            }
        }
        seen = size;
        points.push(CurvePoint { size, value: mccs_from_mean(acc.value() / size as f64) });
    }
    Ok(ConvergenceCurve { statistic: StatisticKind::MccsSingle, axis: CurveAxis::Pool, points })
}

/// `(mu, sigma)` curves as either the pool or the anchor collection grows.
pub fn population_curves<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    cfg: &SimilarityConfig,
    axis: CurveAxis,
    sizes: &[usize],
    seed: u64,
) -> Result<(ConvergenceCurve, ConvergenceCurve)> {
    if anchors.len() < 2 {
        return Err(Error::TooFewAnchors { m: anchors.len() });
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    anchors.check_disjoint(pool)?;
    let spec = SweepSpec { radius: None, theta: Some(cfg.theta) };
    let mut mu = Vec::with_capacity(sizes.len());
    let mut sigma = Vec::with_capacity(sizes.len());
    match axis {
        CurveAxis::Pool => {
            check_sizes(sizes, pool.len(), 1, "pool size")?;
            let order = shuffled_order(pool.len(), seed);
            for &size in sizes {
                let prefix = pool.embeddings().select(&order[..size]);
                let stats = sweep(exec, anchors.embeddings(), &prefix, spec);
                let values: Vec<f64> =
                    stats.iter().map(|s| mccs_from_mean(s.similarity.value() / size as f64)).collect();
                let (m, s) = population_moments(&values)?;
                mu.push(CurvePoint { size, value: m });
                sigma.push(CurvePoint { size, value: s });
            }
        }
        CurveAxis::Anchors => {
            check_sizes(sizes, anchors.len(), 2, "anchor count")?;
            let n = pool.len() as f64;
            let stats = sweep(exec, anchors.embeddings(), pool.embeddings(), spec);
            let order = shuffled_order(anchors.len(), seed);
            let values: Vec<f64> =
                order.iter().map(|&i| mccs_from_mean(stats[i].similarity.value() / n)).collect();
            for &size in sizes {
                let (m, s) = population_moments(&values[..size])?;
                mu.push(CurvePoint { size, value: m });
                sigma.push(CurvePoint { size, value: s });
            }
        }
    }
    Ok((
        ConvergenceCurve { statistic: StatisticKind::MuMccs, axis, points: mu },
        ConvergenceCurve { statistic: StatisticKind::SigmaMccs, axis, points: sigma },
    ))
}
