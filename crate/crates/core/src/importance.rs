//! Latent reshaping by rejection sampling inside convex hulls.
//!
//! Each dense mode gets the convex hull of the latents of its nearest stored
//! samples and an acceptance probability `p = min(1, ref_count / dense_count)`.
//! Prior draws landing in a hull are kept with that probability, everything
//! else is kept unconditionally.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diagnosis::neighbor_counts;
use crate::embedding::{dot, EmbeddingVector, Embeddings};
use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::hull::{Hull, HullConfig};
use crate::latent::{latent_at, Latents};
use crate::rng::{indexed_rng, purpose};
use crate::sample::{Sample, SampleSet};

pub const DEFAULT_HULL_SIZE: usize = 100;
/// Proposals allowed per requested sample before giving up.
pub const STALL_FACTOR: u64 = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IsConfig {
    pub r0: f64,
    pub hull_size: usize,
    /// Number of random reference anchors whose counts are averaged.
    pub references: usize,
    pub seed: u64,
}

impl IsConfig {
    pub fn new(r0: f64, hull_size: usize, seed: u64) -> Self {
        Self { r0, hull_size, references: 1, seed }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanEntry {
    pub p: f64,
    pub hull: Hull,
    /// Position of the mode in the list handed to [`build_plan`].
    pub mode_index: usize,
    pub dense_count: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceSamplingPlan {
    /// Sorted by descending dense count; the first matching hull wins.
    pub entries: Vec<PlanEntry>,
    pub reference_anchor: Sample,
    pub reference_indices: Vec<usize>,
    pub reference_count: f64,
    pub r0: f64,
    pub hull_size: usize,
}

impl ImportanceSamplingPlan {
    pub fn new(
        entries: Vec<PlanEntry>,
        reference_anchor: Sample,
        reference_indices: Vec<usize>,
        reference_count: f64,
        r0: f64,
        hull_size: usize,
    ) -> Result<Self> {
        let dim = reference_anchor.latent.dim();
        for e in &entries {
            if !(e.p > 0.0 && e.p <= 1.0) {
                return Err(Error::InvalidConfig(format!("acceptance probability {} outside (0, 1]", e.p)));
            }
            if e.hull.dim() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: e.hull.dim() });
            }
        }
        Ok(Self { entries, reference_anchor, reference_indices, reference_count, r0, hull_size })
    }

    pub fn latent_dim(&self) -> usize {
        self.reference_anchor.latent.dim()
    }
}

/// `min(1, ref / dense)`.
pub fn acceptance_probability(reference_count: f64, dense_count: u64) -> f64 {
    if dense_count as f64 <= reference_count {
        1.0
    } else {
        reference_count / dense_count as f64
    }
}

/// Indices of the `k` rows nearest to `target` (ties by index), nearest first.
pub fn nearest_indices(embeddings: &Embeddings, target: &[f64], k: usize) -> Vec<usize> {
    // larger dot = smaller angular distance
    let mut keyed: Vec<(f64, usize)> = embeddings.rows().map(|e| -dot(e, target)).zip(0..).collect();
    let k = k.min(keyed.len());
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if k < keyed.len() && k > 0 {
        keyed.select_nth_unstable_by(k - 1, cmp);
    }
    keyed.truncate(k);
    keyed.sort_unstable_by(cmp);
    keyed.into_iter().map(|(_, i)| i).collect()
}

pub fn build_plan<E: Executor>(
    exec: &E,
    store: &SampleSet,
    dense_modes: &[EmbeddingVector],
    cfg: &IsConfig,
) -> Result<ImportanceSamplingPlan> {
    if store.is_empty() {
        return Err(Error::EmptyStore);
    }
    if dense_modes.is_empty() {
        return Err(Error::EmptyDenseModeList);
    }
    if cfg.hull_size == 0 || cfg.references == 0 {
        return Err(Error::InvalidConfig("hull size and reference count must be at least 1".into()));
    }
    if !(cfg.r0 > 0.0 && cfg.r0 <= 1.0) {
        return Err(Error::InvalidConfig(format!("r0 = {} outside (0, 1]", cfg.r0)));
    }
    let n = store.len();
    let reference_indices: Vec<usize> = (0..cfg.references as u64)
        .map(|j| indexed_rng(cfg.seed, purpose::IS_REFERENCE, j).random_range(0..n))
        .collect();

    let mut anchors = Embeddings::with_capacity(store.embed_dim(), dense_modes.len() + reference_indices.len());
    for m in dense_modes {
        anchors.push(m)?;
    }
    for &i in &reference_indices {
        anchors.push(&store.embeddings().get(i))?;
    }
    let counts = neighbor_counts(exec, &anchors, store.embeddings(), cfg.r0);
    let (dense_counts, ref_counts) = counts.split_at(dense_modes.len());
    let reference_count = ref_counts.iter().sum::<u64>() as f64 / ref_counts.len() as f64;

    let mut order: Vec<usize> = (0..dense_modes.len()).collect();
    order.sort_by(|&a, &b| dense_counts[b].cmp(&dense_counts[a]).then(a.cmp(&b)));
    let mut entries = Vec::with_capacity(order.len());
    for mode in order {
        let dense_count = dense_counts[mode];
        if dense_count == 0 {
            return Err(Error::ZeroDenseCount { mode });
        }
        let nearest = nearest_indices(store.embeddings(), dense_modes[mode].as_slice(), cfg.hull_size);
        entries.push(PlanEntry {
            p: acceptance_probability(reference_count, dense_count),
            hull: Hull::new(store.latents().select(&nearest))?,
            mode_index: mode,
            dense_count,
        });
    }
    ImportanceSamplingPlan::new(
        entries,
        store.get(reference_indices[0]),
        reference_indices,
        reference_count,
        cfg.r0,
        cfg.hull_size,
    )
}

/// Proposal bookkeeping of a calibrated run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IsStats {
    pub proposals: u64,
    pub in_hull_proposals: u64,
    pub in_hull_accepted: u64,
    pub out_of_hull_proposals: u64,
    pub out_of_hull_accepted: u64,
    /// Proposals and acceptances per plan entry, in plan order.
    pub per_entry: Vec<(u64, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsOutput {
    pub latents: Latents,
    /// Prior-stream index of each accepted latent.
    pub proposal_indices: Vec<u64>,
    pub stats: IsStats,
}

const PROPOSAL_BLOCK: usize = 1024;
const ROUND_BLOCKS: usize = 16;

/// First hull containing `z`, if any.
pub fn matching_entry(plan: &ImportanceSamplingPlan, z: &[f64], hull_cfg: &HullConfig) -> Result<Option<usize>> {
    for (k, e) in plan.entries.iter().enumerate() {
        if e.hull.contains(z, hull_cfg)? {
            return Ok(Some(k));
        }
    }
    Ok(None)
}

/// Accepted draws until `n` are collected. Proposal `i` is draw `i` of the
/// prior stream for `seed`, and its uniform is draw `i` of a separate stream,
/// so the output only depends on `(plan, n, seed)`.
pub fn sample_calibrated_is<E: Executor>(
    exec: &E,
    plan: &ImportanceSamplingPlan,
    n: usize,
    seed: u64,
    hull_cfg: &HullConfig,
) -> Result<IsOutput> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of latents must be at least 1".into()));
    }
    let dim = plan.latent_dim();
    let budget = STALL_FACTOR.saturating_mul(n as u64);
    let mut stats = IsStats { per_entry: alloc::vec![(0, 0); plan.entries.len()], ..IsStats::default() };
    let mut latents = Latents::with_capacity(dim, n);
    let mut proposal_indices = Vec::with_capacity(n);
    let mut next: u64 = 0;

    while latents.len() < n {
        let base = next;
        let blocks = exec.map_range(ROUND_BLOCKS, |b| {
            let start = base + (b * PROPOSAL_BLOCK) as u64;
            (start..start + PROPOSAL_BLOCK as u64)
                .map(|i| {
                    let z = latent_at(seed, dim, i);
                    let hit = matching_entry(plan, z.as_slice(), hull_cfg)?;
                    let accept = match hit {
                        None => true,
                        Some(k) => {
                            let u: f64 = indexed_rng(seed, purpose::IS_ACCEPT, i).random();
                            u < plan.entries[k].p
                        }
                    };
                    Ok((z, hit, accept))
                })
                .collect::<Result<Vec<_>>>()
        });
        for block in blocks {
            for (z, hit, accept) in block? {
                if latents.len() == n {
                    break;
                }
                if stats.proposals >= budget {
                    return Err(Error::AcceptanceStall { proposals: stats.proposals, accepted: latents.len() });
                }
                stats.proposals += 1;
                match hit {
                    None => {
                        stats.out_of_hull_proposals += 1;
                        stats.out_of_hull_accepted += u64::from(accept);
                    }
                    Some(k) => {
                        stats.in_hull_proposals += 1;
                        stats.in_hull_accepted += u64::from(accept);
                        stats.per_entry[k].0 += 1;
                        stats.per_entry[k].1 += u64::from(accept);
                    }
                }
                if accept {
                    latents.push(&z)?;
                    proposal_indices.push(next);
                }
                next += 1;
            }
        }
    }
    Ok(IsOutput { latents, proposal_indices, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embedding::normalize;
    use crate::exec::Serial;
    use crate::latent::sample_latents;

    #[test]
    fn probability_rule() {
        assert_eq!(acceptance_probability(10.0, 100), 0.1);
        assert_eq!(acceptance_probability(10.0, 5), 1.0);
        assert_eq!(acceptance_probability(10.0, 10), 1.0);
    }

    fn tiny_store() -> SampleSet {
        let lat = Latents::from_flat(1, alloc::vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let a = normalize(&[1.0, 0.0]).unwrap();
        let b = normalize(&[0.0, 1.0]).unwrap();
        let emb = Embeddings::from_vectors(2, [&a, &a, &a, &b]).unwrap();
        SampleSet::from_parts(lat, emb).unwrap()
    }

    #[test]
    fn plan_errors() {
        let store = tiny_store();
        let mode = normalize(&[1.0, 0.0]).unwrap();
        let far = normalize(&[-1.0, 0.0]).unwrap();
        let cfg = IsConfig::new(0.25, 2, 1);
        assert_eq!(
            build_plan(&Serial, &SampleSet::new(1, 2), core::slice::from_ref(&mode), &cfg),
            Err(Error::EmptyStore)
        );
        assert_eq!(build_plan(&Serial, &store, &[], &cfg), Err(Error::EmptyDenseModeList));
        assert_eq!(build_plan(&Serial, &store, &[mode, far], &cfg), Err(Error::ZeroDenseCount { mode: 1 }));
    }

    #[test]
    fn plan_hull_is_nearest_latents() {
        let store = tiny_store();
        let mode = normalize(&[1.0, 0.0]).unwrap();
        let plan = build_plan(&Serial, &store, &[mode], &IsConfig::new(0.25, 2, 1)).unwrap();
        assert_eq!(plan.entries[0].dense_count, 3);
        assert_eq!(plan.entries[0].hull.vertices().as_flat(), &[0.0, 1.0]);
        assert!(plan.entries[0].p > 0.0 && plan.entries[0].p <= 1.0);
    }

    #[test]
    fn empty_plan_is_prior() {
        let store = tiny_store();
        let plan = ImportanceSamplingPlan::new(Vec::new(), store.get(0), alloc::vec![0], 3.0, 0.25, 2).unwrap();
        let out = sample_calibrated_is(&Serial, &plan, 300, 9, &HullConfig::default()).unwrap();
        assert_eq!(out.latents, sample_latents(300, 1, 9).unwrap());
        assert_eq!(out.stats.proposals, 300);
    }
}
