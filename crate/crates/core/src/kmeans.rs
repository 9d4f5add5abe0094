//! Lloyd's k-means with k-means++ seeding over latent codes.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::latent::Latents;
use crate::rng::{indexed_rng, purpose};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iters: usize,
    /// Stop once the relative inertia improvement falls below this.
    pub tol: f64,
    pub seed: u64,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self { k, max_iters: 100, tol: 1e-6, seed }
    }
}

/// Cluster label per point (0-based) and the total within-cluster squared distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub inertia: f64,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self, k: usize) -> Vec<usize> {
        let mut sizes = vec![0; k];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub means: Latents,
    pub assignment: ClusterAssignment,
    pub iterations: usize,
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

const ASSIGN_BLOCK: usize = 4096;

/// Nearest mean per point (lowest index on ties) with its squared distance.
fn assign<E: Executor>(exec: &E, points: &Latents, means: &Latents) -> (Vec<usize>, Vec<f64>) {
    let n = points.len();
    let parts = exec.map_range(n.div_ceil(ASSIGN_BLOCK), |b| {
        let end = ((b + 1) * ASSIGN_BLOCK).min(n);
        (b * ASSIGN_BLOCK..end)
            .map(|i| {
                let p = points.row(i);
                let mut best = (0usize, f64::INFINITY);
                for (k, m) in means.rows().enumerate() {
                    let d = sq_dist(p, m);
                    if d < best.1 {
                        best = (k, d);
                    }
                }
                best
            })
            .collect::<Vec<_>>()
    });
    parts.into_iter().flatten().unzip()
}

fn total(values: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut c = 0.0;
    for &v in values {
        let t = s + v;
        c += if s.abs() >= v.abs() { (s - t) + v } else { (v - t) + s };
        s = t;
    }
    s + c
}

fn kmeans_plus_plus(points: &Latents, k: usize, seed: u64) -> Latents {
    let n = points.len();
    let mut rng = indexed_rng(seed, purpose::KMEANS_INIT, 0);
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut means = Latents::with_capacity(points.dim(), k);
    means.push(&points.get(first)).expect("same dimension");
    let mut d2: Vec<f64> = points.rows().map(|p| sq_dist(p, points.row(first))).collect();
    while means.len() < k {
        let sum = total(&d2);
        let pick = if sum > 0.0 {
            let target = rng.random::<f64>() * sum;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc >= target {
                    pick = Some(i);
                    break;
                }
            }
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap_or(0))
        } else {
            // All remaining points coincide with a chosen mean.
            chosen.iter().position(|&c| !c).unwrap_or(0)
        };
        chosen[pick] = true;
        means.push(&points.get(pick)).expect("same dimension");
        let row = points.row(pick);
        for (d, p) in d2.iter_mut().zip(points.rows()) {
            *d = d.min(sq_dist(p, row));
        }
    }
    means
}

fn centroids(points: &Latents, labels: &[usize], dist2: &[f64], k: usize) -> Latents {
    let dim = points.dim();
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l * dim..(l + 1) * dim].iter_mut().zip(p) {
            *s += v;
        }
    }
    // Empty clusters take the points farthest from their current mean.
    let mut far: Vec<usize> = (0..points.len()).collect();
    far.sort_by(|&a, &b| dist2[b].total_cmp(&dist2[a]).then(a.cmp(&b)));
    let mut far = far.into_iter();
    for (c, &count) in counts.iter().enumerate() {
        let slot = &mut sums[c * dim..(c + 1) * dim];
        if count == 0 {
            if let Some(i) = far.next() {
                slot.copy_from_slice(points.row(i));
            }
        } else {
            slot.iter_mut().for_each(|s| *s /= count as f64);
        }
    }
    Latents::from_flat(dim, sums).expect("finite centroids")
}

/// Clusters `points` into `cfg.k` groups.
pub fn kmeans_fit<E: Executor>(exec: &E, points: &Latents, cfg: &KMeansConfig) -> Result<KMeansFit> {
    let n = points.len();
    if cfg.k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if cfg.k > n {
        return Err(Error::KTooLarge { k: cfg.k, n });
    }
    let mut means = kmeans_plus_plus(points, cfg.k, cfg.seed);
    let (mut labels, mut dist2) = assign(exec, points, &means);
    let mut inertia = total(&dist2);
    let mut iterations = 0;
    while iterations < cfg.max_iters && inertia > 0.0 {
        iterations += 1;
        let next = centroids(points, &labels, &dist2, cfg.k);
        let (next_labels, next_dist2) = assign(exec, points, &next);
        let next_inertia = total(&next_dist2);
        let improvement = (inertia - next_inertia) / inertia;
        means = next;
        labels = next_labels;
        dist2 = next_dist2;
        inertia = next_inertia;
        if improvement < cfg.tol {
            break;
        }
    }
    Ok(KMeansFit { means, assignment: ClusterAssignment { labels, inertia }, iterations })
}
