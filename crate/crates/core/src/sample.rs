//! Samples: (latent, embedding, optional image reference) triples.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::embedding::{EmbeddingVector, Embeddings};
use crate::error::{Error, Result};
use crate::latent::{LatentCode, Latents};
use crate::rng::hash_f64s;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub latent: LatentCode,
    pub embedding: EmbeddingVector,
    pub image_ref: Option<Vec<u8>>,
}

/// Column-oriented collection of samples with fixed dimensions.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SampleSet {
    latents: Latents,
    embeddings: Embeddings,
    image_refs: Vec<Option<Vec<u8>>>,
}

impl SampleSet {
    pub fn new(latent_dim: usize, embed_dim: usize) -> Self {
        Self {
            latents: Latents::new(latent_dim),
            embeddings: Embeddings::new(embed_dim),
            image_refs: Vec::new(),
        }
    }

    /// Pairs latents with embeddings row by row.
    pub fn from_parts(latents: Latents, embeddings: Embeddings) -> Result<Self> {
        if latents.len() != embeddings.len() {
            return Err(Error::InvalidConfig(alloc::format!(
                "{} latents paired with {} embeddings",
                latents.len(),
                embeddings.len()
            )));
        }
        let image_refs = alloc::vec![None; latents.len()];
        Ok(Self { latents, embeddings, image_refs })
    }

    pub fn len(&self) -> usize {
        self.latents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.latents.is_empty()
    }

    pub fn latent_dim(&self) -> usize {
        self.latents.dim()
    }

    pub fn embed_dim(&self) -> usize {
        self.embeddings.dim()
    }

    pub fn latents(&self) -> &Latents {
        &self.latents
    }

    pub fn embeddings(&self) -> &Embeddings {
        &self.embeddings
    }

    pub fn image_ref(&self, i: usize) -> Option<&[u8]> {
        self.image_refs[i].as_deref()
    }

    pub fn push(&mut self, sample: Sample) -> Result<()> {
        if sample.latent.dim() != self.latent_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.latent_dim(),
                found: sample.latent.dim(),
            });
        }
        self.embeddings.push(&sample.embedding)?;
        self.latents.push(&sample.latent)?;
        self.image_refs.push(sample.image_ref);
        Ok(())
    }

    pub fn get(&self, i: usize) -> Sample {
        Sample {
            latent: self.latents.get(i),
            embedding: self.embeddings.get(i),
            image_ref: self.image_refs[i].clone(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Sample> + '_ {
        (0..self.len()).map(|i| self.get(i))
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            latents: self.latents.select(indices),
            embeddings: self.embeddings.select(indices),
            image_refs: indices.iter().map(|&i| self.image_refs[i].clone()).collect(),
        }
    }

    pub fn prefix(&self, n: usize) -> Self {
        let idx: Vec<usize> = (0..n).collect();
        self.select(&idx)
    }

    /// Number of latent codes present in both collections (exact equality).
    pub fn overlap_count(&self, other: &SampleSet) -> usize {
        if self.latent_dim() != other.latent_dim() {
            return 0;
        }
        let (small, large) = if self.len() <= other.len() { (self, other) } else { (other, self) };
        let mut index: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
        for (i, row) in small.latents.rows().enumerate() {
            index.entry(hash_f64s(0, row)).or_default().push(i);
        }
        let eq = |a: &[f64], b: &[f64]| a.iter().zip(b).all(|(x, y)| x == y);
        large
            .latents
            .rows()
            .filter(|row| {
                index
                    .get(&hash_f64s(0, row))
                    .is_some_and(|cands| cands.iter().any(|&j| eq(small.latents.row(j), row)))
            })
            .count()
    }

    /// Fails with `OverlappingCollections` if any latent appears in both sets.
    pub fn check_disjoint(&self, other: &SampleSet) -> Result<()> {
        match self.overlap_count(other) {
            0 => Ok(()),
            count => Err(Error::OverlappingCollections { count }),
        }
    }
}
