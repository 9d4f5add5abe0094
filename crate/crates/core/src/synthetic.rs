//! Planted-collapse synthetic generator.
//!
//! Embeddings are drawn around a set of background identity centers plus
//! planted point-mass (or tight) modes with configured probability mass. A
//! planted mode owns a region of latent space: mode `j` is produced whenever the
//! upper Gaussian tail probability of the first latent coordinate falls inside
//! that mode's slice of `[0, sum of masses)`. Background components are chosen
//! by a counter-based hash of `(seed, z)` with probability proportional to their
//! weight. Within a component the embedding is the center perturbed by an
//! isotropic tangent-space Gaussian of per-coordinate scale `spread`, then
//! renormalized. The map `z -> embedding` is a deterministic function.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embedding::{dot, normalize, EmbeddingVector, Embeddings};
use crate::error::{Error, Result, SourceError};
use crate::exec::Executor;
use crate::latent::Latents;
use crate::rng::{derive_seed, hash_f64s, hashed_rng, indexed_rng, purpose};
use crate::source::Generator;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackgroundComponent {
    pub center: EmbeddingVector,
    pub spread: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedMode {
    pub center: EmbeddingVector,
    pub mass: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticModel {
    background: Vec<BackgroundComponent>,
    planted: Vec<PlantedMode>,
}

/// Which component produced an embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Component {
    Planted(usize),
    Background(usize),
}

/// Compact description of a random testbed; see [`SyntheticModel::testbed`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestbedConfig {
    pub embed_dim: usize,
    pub background_count: usize,
    pub background_spread: f64,
    #[serde(default)]
    pub planted: Vec<PlantedSpec>,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantedSpec {
    pub mass: f64,
    #[serde(default)]
    pub spread: f64,
}

fn invalid(msg: alloc::string::String) -> Error {
    Error::InvalidConfig(msg)
}

/// `P(X > x)` for a standard normal `X`.
fn upper_tail(x: f64) -> f64 {
    0.5 * libm::erfc(x / core::f64::consts::SQRT_2)
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Result<EmbeddingVector> {
    let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
    normalize(&v)
}

impl SyntheticModel {
    /// Validates and normalizes background weights to sum to one.
    pub fn new(mut background: Vec<BackgroundComponent>, planted: Vec<PlantedMode>) -> Result<Self> {
        let dim = background
            .first()
            .map(|b| b.center.dim())
            .or_else(|| planted.first().map(|p| p.center.dim()))
            .ok_or_else(|| invalid("synthetic model has no components".into()))?;
        if dim < 2 {
            return Err(invalid(format!("embedding dimension must be at least 2, got {dim}")));
        }
        let dims_ok = background.iter().map(|b| b.center.dim()).chain(planted.iter().map(|p| p.center.dim()));
        for d in dims_ok {
            if d != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: d });
            }
        }
        let mut total_mass = 0.0;
        for (j, p) in planted.iter().enumerate() {
            if !(0.0..=1.0).contains(&p.mass) {
                return Err(invalid(format!("planted mode {j} has mass {} outside [0, 1]", p.mass)));
            }
            if !(p.spread >= 0.0 && p.spread.is_finite()) {
                return Err(invalid(format!("planted mode {j} has invalid spread {}", p.spread)));
            }
            total_mass += p.mass;
        }
        if total_mass > 1.0 + 1e-12 {
            return Err(invalid(format!("planted masses sum to {total_mass} > 1")));
        }
        let mut weight_sum = 0.0;
        for (k, b) in background.iter().enumerate() {
            if !(b.weight >= 0.0 && b.weight.is_finite()) {
                return Err(invalid(format!("background component {k} has invalid weight {}", b.weight)));
            }
            if !(b.spread >= 0.0 && b.spread.is_finite()) {
                return Err(invalid(format!("background component {k} has invalid spread {}", b.spread)));
            }
            weight_sum += b.weight;
        }
        if total_mass < 1.0 && (weight_sum.is_nan() || weight_sum <= 0.0) {
            return Err(invalid("background weights must have positive sum when planted mass < 1".into()));
        }
        if weight_sum > 0.0 {
            for b in &mut background {
                b.weight /= weight_sum;
            }
        }
        Ok(Self { background, planted })
    }

    /// Random testbed: `background_count` equal-weight components with random
    /// centers, plus one planted mode per entry of `planted`, all drawn from
    /// the `seed` center stream.
    pub fn testbed(cfg: &TestbedConfig) -> Result<Self> {
        let mut index = 0u64;
        let mut next_center = || {
            let mut rng = indexed_rng(cfg.seed, purpose::SYNTHETIC_CENTERS, index);
            index += 1;
            random_unit(&mut rng, cfg.embed_dim)
        };
        let mut background = Vec::with_capacity(cfg.background_count);
        for _ in 0..cfg.background_count {
            background.push(BackgroundComponent {
                center: next_center()?,
                spread: cfg.background_spread,
                weight: 1.0,
            });
        }
        let mut planted = Vec::with_capacity(cfg.planted.len());
        for p in &cfg.planted {
            planted.push(PlantedMode { center: next_center()?, mass: p.mass, spread: p.spread });
        }
        Self::new(background, planted)
    }

    pub fn embed_dim(&self) -> usize {
        self.background
            .first()
            .map(|b| b.center.dim())
            .unwrap_or_else(|| self.planted[0].center.dim())
    }

    pub fn background(&self) -> &[BackgroundComponent] {
        &self.background
    }

    pub fn planted(&self) -> &[PlantedMode] {
        &self.planted
    }

    /// Component selected for latent `z`.
    pub fn component_of(&self, z: &[f64], seed: u64) -> Component {
        let mut rng = self.rng_for(z, seed);
        self.select(z, &mut rng)
    }

    fn rng_for(&self, z: &[f64], seed: u64) -> rand_chacha::ChaCha8Rng {
        hashed_rng(hash_f64s(derive_seed(seed, purpose::SYNTHETIC_EMBED), z))
    }

    fn select<R: Rng>(&self, z: &[f64], rng: &mut R) -> Component {
        let u: f64 = rng.random();
        let tail = upper_tail(z[0]);
        let mut cum = 0.0;
        for (j, p) in self.planted.iter().enumerate() {
            cum += p.mass;
            if tail < cum {
                return Component::Planted(j);
            }
        }
        let mut acc = 0.0;
        for (k, b) in self.background.iter().enumerate() {
            acc += b.weight;
            if u < acc {
                return Component::Background(k);
            }
        }
        // Rounding left u above the final cumulative weight.
        let last = self.background.iter().rposition(|b| b.weight > 0.0).unwrap_or(0);
        Component::Background(last)
    }

    /// Deterministic embedding of latent `z` under generator seed `seed`.
    pub fn synthesize(&self, z: &[f64], seed: u64) -> EmbeddingVector {
        let mut rng = self.rng_for(z, seed);
        let (center, spread) = match self.select(z, &mut rng) {
            Component::Planted(j) => (&self.planted[j].center, self.planted[j].spread),
            Component::Background(k) => (&self.background[k].center, self.background[k].spread),
        };
        if spread == 0.0 {
            return center.clone();
        }
        let c = center.as_slice();
        let g: Vec<f64> = (0..c.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
        let along = dot(&g, c);
        let v: Vec<f64> = c.iter().zip(&g).map(|(ci, gi)| ci + spread * (gi - along * ci)).collect();
        // v has norm >= 1 by construction (the tangent part is orthogonal to c).
        normalize(&v).unwrap_or_else(|_| center.clone())
    }

    /// Embeds every row of `latents`, parallelized through `exec`.
    pub fn embed_all<E: Executor>(&self, exec: &E, latents: &Latents, seed: u64) -> Embeddings {
        const BLOCK: usize = 2048;
        let n = latents.len();
        let parts = exec.map_range(n.div_ceil(BLOCK), |b| {
            let end = ((b + 1) * BLOCK).min(n);
            (b * BLOCK..end).map(|i| self.synthesize(latents.row(i), seed)).collect::<Vec<_>>()
        });
        let mut out = Embeddings::with_capacity(self.embed_dim(), n);
        for v in parts.iter().flatten() {
            out.push(v).expect("synthetic embeddings share the model dimension");
        }
        out
    }
}

/// A [`SyntheticModel`] bound to a latent dimension and generator seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSource {
    pub model: SyntheticModel,
    pub latent_dim: usize,
    pub seed: u64,
}

impl SyntheticSource {
    pub fn new(model: SyntheticModel, latent_dim: usize, seed: u64) -> Result<Self> {
        if latent_dim == 0 {
            return Err(invalid("latent dimension must be at least 1".into()));
        }
        Ok(Self { model, latent_dim, seed })
    }

    pub fn embed_all<E: Executor>(&self, exec: &E, latents: &Latents) -> Embeddings {
        self.model.embed_all(exec, latents, self.seed)
    }
}

impl Generator for SyntheticSource {
    fn latent_dim(&self) -> usize {
        self.latent_dim
    }

    fn embed_dim(&self) -> usize {
        self.model.embed_dim()
    }

    fn generate_batch(&self, latents: &Latents) -> core::result::Result<Embeddings, SourceError> {
        if latents.dim() != self.latent_dim {
            return Err(SourceError::MalformedResponse(format!(
                "latent dimension {} does not match source dimension {}",
                latents.dim(),
                self.latent_dim
            )));
        }
        Ok(self.model.embed_all(&crate::exec::Serial, latents, self.seed))
    }
}
