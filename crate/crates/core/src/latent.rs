//! Latent codes and the standard-Gaussian prior sampler.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Executor;
use crate::rng::{indexed_rng, purpose};

/// A generator input vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct LatentCode(Vec<f64>);

impl LatentCode {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidConfig("latent code must have at least one component".into()));
        }
        if !values.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl TryFrom<Vec<f64>> for LatentCode {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<LatentCode> for Vec<f64> {
    fn from(v: LatentCode) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for LatentCode {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Row-major table of latent codes sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Latents {
    dim: usize,
    data: Vec<f64>,
}

impl Latents {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    /// Wraps a flat row-major buffer.
    pub fn from_flat(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::InvalidConfig(alloc::format!(
                "flat buffer of {} values does not hold rows of dimension {dim}",
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Self { dim, data })
    }

    pub fn from_codes<'a, I>(dim: usize, codes: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a LatentCode>,
    {
        let mut out = Self::new(dim);
        for c in codes {
            out.push(c)?;
        }
        Ok(out)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, code: &LatentCode) -> Result<()> {
        if code.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: code.dim() });
        }
        self.data.extend_from_slice(&code.0);
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize) -> LatentCode {
        LatentCode(self.row(i).to_vec())
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    pub fn extend(&mut self, other: &Latents) -> Result<()> {
        if other.dim != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: other.dim });
        }
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

/// Draws `dim` standard normals from an RNG, rounded to 32-bit precision.
///
/// Rounding makes a latent survive the 32-bit store format bit-exactly, so a
/// stored latent regenerates exactly the stored embedding.
pub(crate) fn gaussian_row<R: rand::Rng + ?Sized>(rng: &mut R, dim: usize, out: &mut Vec<f64>) {
    for _ in 0..dim {
        let x: f64 = StandardNormal.sample(rng);
        out.push(x as f32 as f64);
    }
}

/// Latent draw `index` of the prior stream for `seed`.
pub fn latent_at(seed: u64, dim: usize, index: u64) -> LatentCode {
    let mut rng = indexed_rng(seed, purpose::LATENT_PRIOR, index);
    let mut v = Vec::with_capacity(dim);
    gaussian_row(&mut rng, dim, &mut v);
    LatentCode(v)
}

fn check_request(n: usize, dim: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("number of latents must be at least 1".into()));
    }
    if dim == 0 {
        return Err(Error::InvalidConfig("latent dimension must be at least 1".into()));
    }
    Ok(())
}

/// `n` i.i.d. standard-normal latents; draw `i` depends only on `(seed, dim, i)`.
pub fn sample_latents(n: usize, dim: usize, seed: u64) -> Result<Latents> {
    sample_latents_range(seed, dim, 0, n)
}

/// Draws `start..start + n` of the prior stream.
pub fn sample_latents_range(seed: u64, dim: usize, start: u64, n: usize) -> Result<Latents> {
    check_request(n, dim)?;
    let mut data = Vec::with_capacity(n * dim);
    for i in 0..n as u64 {
        let mut rng = indexed_rng(seed, purpose::LATENT_PRIOR, start + i);
        gaussian_row(&mut rng, dim, &mut data);
    }
    Ok(Latents { dim, data })
}

const PAR_BLOCK: usize = 4096;

/// [`sample_latents`] evaluated through an executor; output is identical.
pub fn sample_latents_with<E: Executor>(exec: &E, n: usize, dim: usize, seed: u64) -> Result<Latents> {
    check_request(n, dim)?;
    let blocks = n.div_ceil(PAR_BLOCK);
    let parts = exec.map_range(blocks, |b| {
        let start = b * PAR_BLOCK;
        let len = PAR_BLOCK.min(n - start);
        sample_latents_range(seed, dim, start as u64, len).map(|l| l.data)
    });
    let mut data = Vec::with_capacity(n * dim);
    for p in parts {
        data.extend_from_slice(&p?);
    }
    Ok(Latents { dim, data })
}
