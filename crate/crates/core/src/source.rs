//! The black-box generator abstraction.
//!
//! A generator fuses the image generator and the identity descriptor: it maps a
//! batch of latent codes to unit-norm identity embeddings. Nothing else about the
//! model is observable.

use alloc::format;

use crate::embedding::Embeddings;
use crate::error::{Error, Result, SourceError};
use crate::latent::Latents;
use crate::sample::SampleSet;

pub trait Generator {
    fn latent_dim(&self) -> usize;
    fn embed_dim(&self) -> usize;
    /// One embedding per latent, in input order.
    fn generate_batch(&self, latents: &Latents) -> core::result::Result<Embeddings, SourceError>;
}

impl<G: Generator + ?Sized> Generator for &G {
    fn latent_dim(&self) -> usize {
        (**self).latent_dim()
    }
    fn embed_dim(&self) -> usize {
        (**self).embed_dim()
    }
    fn generate_batch(&self, latents: &Latents) -> core::result::Result<Embeddings, SourceError> {
        (**self).generate_batch(latents)
    }
}

/// Runs `latents` through the generator and pairs the results into samples.
pub fn generate<G: Generator + ?Sized>(generator: &G, latents: Latents) -> Result<SampleSet> {
    if latents.dim() != generator.latent_dim() {
        return Err(Error::DimensionMismatch { expected: generator.latent_dim(), found: latents.dim() });
    }
    let embeddings = generator.generate_batch(&latents)?;
    if embeddings.len() != latents.len() || embeddings.dim() != generator.embed_dim() {
        return Err(SourceError::MalformedResponse(format!(
            "expected {} embeddings of dimension {}, got {} of dimension {}",
            latents.len(),
            generator.embed_dim(),
            embeddings.len(),
            embeddings.dim()
        ))
        .into());
    }
    SampleSet::from_parts(latents, embeddings)
}
