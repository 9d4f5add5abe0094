//! Black-box diagnosis and calibration of intra-mode collapse in generative models.
//!
//! Everything here is pure computation over latent codes and unit-norm identity
//! embeddings: the similarity kernel, Monte Carlo collapse scores, dense-mode
//! search, and two latent-space calibrations (Gaussian-mixture reweighting and
//! convex-hull rejection sampling). The crate is `no_std` and only needs `alloc`;
//! file formats, external generators and the command line live in the `bbgc` crate.
//!
//! Randomness is counter based: every random quantity is a pure function of
//! `(seed, stream, index)`, so results never depend on how work is split across
//! workers. Parallelism is injected through [`Executor`].

#![no_std]

extern crate alloc;

pub mod diagnosis;
pub mod embedding;
mod error;
pub mod exec;
pub mod gmm;
pub mod hull;
pub mod importance;
pub mod kmeans;
pub mod latent;
pub mod rng;
pub mod sample;
pub mod source;
pub mod synthetic;

pub use embedding::{
    cosine_distance, neighbor_count, normalize, similarity, EmbeddingVector, Embeddings,
    SimilarityConfig,
};
pub use error::{Error, Result, SourceError};
pub use exec::{Executor, Serial};
pub use latent::{sample_latents, LatentCode, Latents};
pub use sample::{Sample, SampleSet};
pub use source::Generator;
