//! Generator backends selected by a JSON source specification.
//!
//! ```json
//! {"kind": "synthetic", "latent_dim": 2, "embed_dim": 128, "seed": 0,
//!  "parameters": {"background_count": 300, "background_spread": 0.02,
//!                 "planted": [{"mass": 0.01, "spread": 0.0}]}}
//! ```
//!
//! `subprocess` runs a child that speaks the store framing on stdin/stdout;
//! `remote` POSTs the same framing to an HTTP endpoint.

mod remote;
mod stdio;
mod subprocess;

use std::path::Path;
use std::sync::Arc;

use bbgc_core::synthetic::{PlantedSpec, SyntheticModel, SyntheticSource, TestbedConfig};
use bbgc_core::{normalize, Embeddings, Generator, Latents, SourceError};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use remote::{RemoteConfig, RemoteSource};
pub use stdio::serve;
pub use subprocess::{SubprocessConfig, SubprocessSource};

use crate::error::{Error, Result};
use crate::exec::RayonExecutor;
use crate::store::{RawRecord, StoreHeader, STORED_NORM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    Synthetic,
    Subprocess,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceSpec {
    pub kind: SourceKind,
    pub latent_dim: usize,
    pub embed_dim: usize,
    #[serde(default)]
    pub parameters: Value,
    #[serde(default)]
    pub seed: u64,
}

/// Synthetic parameters: an explicit model, or a random testbed whose
/// centers are drawn from `centers_seed` (default: the spec seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SyntheticParams {
    Explicit {
        model: SyntheticModel,
    },
    Testbed {
        background_count: usize,
        background_spread: f64,
        #[serde(default)]
        planted: Vec<PlantedSpec>,
        #[serde(default)]
        centers_seed: Option<u64>,
    },
}

impl SourceSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text).map_err(|e| Error::format("source spec", e))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.latent_dim < 1 || self.embed_dim < 2 {
            return Err(Error::format(
                "source spec",
                format!("need latent_dim >= 1 and embed_dim >= 2, got {} and {}", self.latent_dim, self.embed_dim),
            ));
        }
        Ok(())
    }

    fn params<T: serde::de::DeserializeOwned>(&self) -> Result<T> {
        let v = if self.parameters.is_null() { Value::Object(Default::default()) } else { self.parameters.clone() };
        serde_json::from_value(v).map_err(|e| Error::format("source parameters", e))
    }

    pub fn synthetic_model(&self) -> Result<SyntheticModel> {
        let model = match self.params::<SyntheticParams>()? {
            SyntheticParams::Explicit { model } => model,
            SyntheticParams::Testbed { background_count, background_spread, planted, centers_seed } => {
                SyntheticModel::testbed(&TestbedConfig {
                    embed_dim: self.embed_dim,
                    background_count,
                    background_spread,
                    planted,
                    seed: centers_seed.unwrap_or(self.seed),
                })?
            }
        };
        if model.embed_dim() != self.embed_dim {
            return Err(bbgc_core::Error::DimensionMismatch { expected: self.embed_dim, found: model.embed_dim() }.into());
        }
        Ok(model)
    }
}

/// A synthetic source evaluated on a worker pool.
#[derive(Debug)]
pub struct ParallelSynthetic {
    pub source: SyntheticSource,
    exec: Arc<RayonExecutor>,
}

impl ParallelSynthetic {
    pub fn new(source: SyntheticSource, exec: Arc<RayonExecutor>) -> Self {
        Self { source, exec }
    }
}

impl Generator for ParallelSynthetic {
    fn latent_dim(&self) -> usize {
        self.source.latent_dim
    }

    fn embed_dim(&self) -> usize {
        self.source.model.embed_dim()
    }

    fn generate_batch(&self, latents: &Latents) -> std::result::Result<Embeddings, SourceError> {
        if latents.dim() != self.source.latent_dim {
            return Err(SourceError::MalformedResponse(format!(
                "latent dimension {} does not match source dimension {}",
                latents.dim(),
                self.source.latent_dim
            )));
        }
        Ok(self.source.embed_all(&*self.exec, latents))
    }
}

#[derive(Debug)]
pub enum Source {
    Synthetic(ParallelSynthetic),
    Subprocess(SubprocessSource),
    Remote(RemoteSource),
}

impl Source {
    pub fn open(spec: &SourceSpec, exec: Arc<RayonExecutor>) -> Result<Self> {
        spec.validate()?;
        Ok(match spec.kind {
            SourceKind::Synthetic => {
                let src = SyntheticSource::new(spec.synthetic_model()?, spec.latent_dim, spec.seed)?;
                Source::Synthetic(ParallelSynthetic::new(src, exec))
            }
            SourceKind::Subprocess => {
                Source::Subprocess(SubprocessSource::spawn(spec.params()?, spec.latent_dim, spec.embed_dim)?)
            }
            SourceKind::Remote => Source::Remote(RemoteSource::new(spec.params()?, spec.latent_dim, spec.embed_dim)),
        })
    }
}

impl Generator for Source {
    fn latent_dim(&self) -> usize {
        match self {
            Source::Synthetic(s) => s.latent_dim(),
            Source::Subprocess(s) => s.latent_dim(),
            Source::Remote(s) => s.latent_dim(),
        }
    }

    fn embed_dim(&self) -> usize {
        match self {
            Source::Synthetic(s) => s.embed_dim(),
            Source::Subprocess(s) => s.embed_dim(),
            Source::Remote(s) => s.embed_dim(),
        }
    }

    fn generate_batch(&self, latents: &Latents) -> std::result::Result<Embeddings, SourceError> {
        match self {
            Source::Synthetic(s) => s.generate_batch(latents),
            Source::Subprocess(s) => s.generate_batch(latents),
            Source::Remote(s) => s.generate_batch(latents),
        }
    }
}

/// Checks a framed response against its request and extracts embeddings.
pub(crate) fn embeddings_from_response(
    request: &Latents,
    embed_dim: usize,
    header: &StoreHeader,
    records: Vec<RawRecord>,
) -> std::result::Result<Embeddings, SourceError> {
    let bad = |m: String| SourceError::MalformedResponse(m);
    if header.latent_dim() != request.dim() || header.embed_dim() != embed_dim {
        return Err(bad(format!(
            "response dimensions L={} D={}, expected L={} D={embed_dim}",
            header.latent_dim,
            header.embed_dim,
            request.dim()
        )));
    }
    if records.len() != request.len() {
        return Err(bad(format!("{} embeddings for {} latents", records.len(), request.len())));
    }
    let mut out = Embeddings::with_capacity(embed_dim, records.len());
    for (i, rec) in records.into_iter().enumerate() {
        let sent = request.row(i);
        if rec.latent.iter().zip(sent).any(|(got, want)| *got != (*want as f32) as f64) {
            return Err(bad(format!("record {i} does not echo its request latent")));
        }
        if rec.embedding.iter().any(|x| !x.is_finite()) {
            return Err(bad(format!("record {i} has a non-finite embedding")));
        }
        let norm = rec.embedding.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > STORED_NORM_TOL {
            return Err(bad(format!("record {i} embedding has norm {norm}")));
        }
        let v = normalize(&rec.embedding).map_err(|e| bad(e.to_string()))?;
        out.push(&v).map_err(|e| bad(e.to_string()))?;
    }
    Ok(out)
}

/// Splits `latents` into batches of at most `batch` rows.
pub(crate) fn batches(latents: &Latents, batch: usize) -> impl Iterator<Item = Latents> + '_ {
    let batch = batch.max(1);
    (0..latents.len()).step_by(batch).map(move |start| {
        let idx: Vec<usize> = (start..(start + batch).min(latents.len())).collect();
        latents.select(&idx)
    })
}
