//! Distance, similarity and neighbor counting over unit-norm identity embeddings.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norm below which a vector is treated as zero.
pub const ZERO_NORM: f64 = 1e-12;
/// Accepted deviation from unit norm.
pub const UNIT_NORM_TOL: f64 = 1e-6;
/// Default maximum same-identity distance.
pub const DEFAULT_THETA: f64 = 0.3;
/// Default neighbor radius.
pub const DEFAULT_RADIUS: f64 = 0.25;

// Width of the band around a dot-product threshold inside which the exact
// arccos comparison is used instead of the fast test.
const DOT_BAND: f64 = 1e-9;

/// A unit-norm embedding vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector(Vec<f64>);

impl EmbeddingVector {
    /// Wraps values that are already unit norm.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        check_finite(&values)?;
        let norm = libm::sqrt(dot(&values, &values));
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(Error::NotUnitNorm { norm });
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

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.0
    }
}

impl AsRef<[f64]> for EmbeddingVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Similarity kernel parameters: `theta` bounds the same-identity distance and
/// `radius` is the neighbor radius used for dense-mode counting and calibration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimilarityConfig {
    pub theta: f64,
    pub radius: f64,
}

impl SimilarityConfig {
    pub fn new(theta: f64, radius: f64) -> Result<Self> {
        let cfg = Self { theta, radius };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let in_range = |x: f64| x > 0.0 && x <= 1.0;
        if !in_range(self.theta) {
            return Err(Error::InvalidConfig(alloc::format!(
                "theta must lie in (0, 1], got {}",
                self.theta
            )));
        }
        if !in_range(self.radius) {
            return Err(Error::InvalidConfig(alloc::format!(
                "radius must lie in (0, 1], got {}",
                self.radius
            )));
        }
        Ok(())
    }
}

impl Default for SimilarityConfig {
    fn default() -> Self {
        Self { theta: DEFAULT_THETA, radius: DEFAULT_RADIUS }
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite)
    }
}

/// Scales `values` to unit Euclidean norm.
pub fn normalize(values: &[f64]) -> Result<EmbeddingVector> {
    check_finite(values)?;
    let norm = libm::sqrt(dot(values, values));
    if norm.is_nan() || norm <= ZERO_NORM {
        return Err(Error::ZeroVector);
    }
    Ok(EmbeddingVector(values.iter().map(|v| v / norm).collect()))
}

/// Inner product with eight interleaved accumulators. The summation order is
/// fixed by the vector length only, so results are reproducible.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 8];
    let ca = a.chunks_exact(8);
    let cb = b.chunks_exact(8);
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] += x[l] * y[l];
        }
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7])) + tail
}

/// Inner products this close to +-1 are rounding noise of (anti)parallel vectors.
const DOT_SNAP: f64 = 4.0 * f64::EPSILON;

/// Normalized angular distance for a precomputed inner product.
#[inline]
pub fn distance_from_dot(dot: f64) -> f64 {
    if dot >= 1.0 - DOT_SNAP {
        0.0
    } else if dot <= -1.0 + DOT_SNAP {
        1.0
    } else {
        libm::acos(dot) / PI
    }
}

/// Truncated-exponential similarity as a function of distance.
#[inline]
pub fn similarity_at_distance(distance: f64, theta: f64) -> f64 {
    let gap = theta - distance;
    if gap <= 0.0 {
        0.0
    } else {
        libm::expm1(gap) / libm::expm1(theta)
    }
}

fn check_dims(a: usize, b: usize) -> Result<()> {
    if a == b {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected: a, found: b })
    }
}

/// `arccos(<a, b>) / pi`, with the inner product clamped to `[-1, 1]`.
pub fn cosine_distance(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64> {
    check_dims(a.dim(), b.dim())?;
    Ok(distance_from_dot(dot(&a.0, &b.0)))
}

/// `(e^{max(0, theta - d)} - 1) / (e^theta - 1)` for `d = cosine_distance(a, b)`.
pub fn similarity(a: &EmbeddingVector, b: &EmbeddingVector, cfg: &SimilarityConfig) -> Result<f64> {
    Ok(similarity_at_distance(cosine_distance(a, b)?, cfg.theta))
}

/// Fast inclusive test `distance(dot) <= radius`.
///
/// Dot products clearly on one side of `cos(pi * radius)` are decided by
/// comparison; those inside a narrow band fall back to the exact distance so
/// the result always agrees with [`cosine_distance`].
#[derive(Debug, Clone, Copy)]
pub(crate) struct RadiusTest {
    radius: f64,
    cos_radius: f64,
}

impl RadiusTest {
    pub(crate) fn new(radius: f64) -> Self {
        Self { radius, cos_radius: libm::cos(PI * radius) }
    }

    #[inline]
    pub(crate) fn contains(&self, dot: f64) -> bool {
        if dot >= self.cos_radius + DOT_BAND {
            true
        } else if dot <= self.cos_radius - DOT_BAND {
            false
        } else {
            distance_from_dot(dot) <= self.radius
        }
    }
}

/// Similarity evaluated from a dot product, skipping arccos when the pair is
/// clearly beyond `theta`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SimilarityKernel {
    theta: f64,
    cos_theta: f64,
}

impl SimilarityKernel {
    pub(crate) fn new(theta: f64) -> Self {
        Self { theta, cos_theta: libm::cos(PI * theta) }
    }

    #[inline]
    pub(crate) fn eval(&self, dot: f64) -> f64 {
        if dot <= self.cos_theta - DOT_BAND {
            0.0
        } else {
            similarity_at_distance(distance_from_dot(dot), self.theta)
        }
    }
}

/// A dense row-major table of unit-norm embeddings sharing one dimension.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Embeddings {
    dim: usize,
    data: Vec<f64>,
}

impl Embeddings {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn with_capacity(dim: usize, rows: usize) -> Self {
        Self { dim, data: Vec::with_capacity(dim * rows) }
    }

    pub fn from_vectors<'a, I>(dim: usize, vectors: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a EmbeddingVector>,
    {
        let mut out = Self::new(dim);
        for v in vectors {
            out.push(v)?;
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

    pub fn push(&mut self, v: &EmbeddingVector) -> Result<()> {
        check_dims(self.dim, v.dim())?;
        self.data.extend_from_slice(&v.0);
        Ok(())
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, i: usize) -> EmbeddingVector {
        EmbeddingVector(self.row(i).to_vec())
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim.max(1))
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// Rows `indices` in the given order.
    pub fn select(&self, indices: &[usize]) -> Self {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    /// First `n` rows.
    pub fn prefix(&self, n: usize) -> Self {
        Self { dim: self.dim, data: self.data[..n * self.dim].to_vec() }
    }

    pub fn extend(&mut self, other: &Embeddings) -> Result<()> {
        check_dims(self.dim, other.dim)?;
        self.data.extend_from_slice(&other.data);
        Ok(())
    }
}

/// Default chunk size used to partition the pool in [`neighbor_count`].
pub const NEIGHBOR_CHUNK: usize = 1024;

/// Number of pool members within `radius` of `anchor` (inclusive).
pub fn neighbor_count(anchor: &EmbeddingVector, pool: &Embeddings, radius: f64) -> Result<u64> {
    neighbor_count_chunked(anchor, pool, radius, NEIGHBOR_CHUNK)
}

/// [`neighbor_count`] with an explicit pool partition size. The result does not
/// depend on `chunk`.
pub fn neighbor_count_chunked(
    anchor: &EmbeddingVector,
    pool: &Embeddings,
    radius: f64,
    chunk: usize,
) -> Result<u64> {
    if !pool.is_empty() {
        check_dims(pool.dim(), anchor.dim())?;
    }
    let test = RadiusTest::new(radius);
    let chunk_rows = chunk.max(1) * pool.dim().max(1);
    Ok(pool
        .as_flat()
        .chunks(chunk_rows)
        .map(|block| {
            block
                .chunks_exact(pool.dim())
                .filter(|row| test.contains(dot(anchor.as_slice(), row)))
                .count() as u64
        })
        .sum())
}
