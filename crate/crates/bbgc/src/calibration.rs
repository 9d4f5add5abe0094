//! Serialized calibration models: a reweighted mixture or a hull plan.

use base64::Engine;
use bbgc_core::gmm::MixtureModel;
use bbgc_core::hull::Hull;
use bbgc_core::importance::{ImportanceSamplingPlan, PlanEntry};
use bbgc_core::{EmbeddingVector, LatentCode, Latents, Sample};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{encode_batch, read_batch};

/// Where a model came from; enough to rerun the fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub seed: u64,
    pub radius: f64,
    /// Anchor indices (in the diagnosed anchor store) of the calibrated modes.
    pub modes: Vec<usize>,
    pub report_sha256: String,
    pub anchors_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pool_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_sha256: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kmeans_k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_fit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hull_size: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GmmDetails {
    /// Raw dense-neighbor count per cluster before smoothing.
    pub cluster_counts: Vec<u64>,
    pub covariance_floored: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanEntryJson {
    pub p: f64,
    pub mode_index: usize,
    pub dense_count: u64,
    pub vertex_count: usize,
    /// Base64 of a framed store batch holding the vertex latents.
    pub vertices: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceJson {
    pub store_indices: Vec<usize>,
    pub count: f64,
    pub latent: Vec<f64>,
    pub embedding: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanJson {
    pub r0: f64,
    pub hull_size: usize,
    pub latent_dim: usize,
    pub reference: ReferenceJson,
    pub entries: Vec<PlanEntryJson>,
}

fn b64() -> base64::engine::GeneralPurpose {
    base64::engine::general_purpose::STANDARD
}

impl PlanJson {
    pub fn from_plan(plan: &ImportanceSamplingPlan) -> Result<Self> {
        let entries = plan
            .entries
            .iter()
            .map(|e| {
                let frame = encode_batch(e.hull.vertices(), None, 0)?;
                Ok(PlanEntryJson {
                    p: e.p,
                    mode_index: e.mode_index,
                    dense_count: e.dense_count,
                    vertex_count: e.hull.vertices().len(),
                    vertices: b64().encode(frame),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            r0: plan.r0,
            hull_size: plan.hull_size,
            latent_dim: plan.latent_dim(),
            reference: ReferenceJson {
                store_indices: plan.reference_indices.clone(),
                count: plan.reference_count,
                latent: plan.reference_anchor.latent.as_slice().to_vec(),
                embedding: plan.reference_anchor.embedding.as_slice().to_vec(),
            },
            entries,
        })
    }

    pub fn to_plan(&self) -> Result<ImportanceSamplingPlan> {
        let entries = self
            .entries
            .iter()
            .map(|e| {
                let bytes = b64().decode(&e.vertices).map_err(|err| Error::format("plan vertices", err))?;
                let (header, records) = read_batch(&mut bytes.as_slice())?
                    .ok_or_else(|| Error::format("plan vertices", "empty payload"))?;
                if header.latent_dim() != self.latent_dim || records.len() != e.vertex_count {
                    return Err(Error::format(
                        "plan vertices",
                        format!("expected {} vertices of dimension {}", e.vertex_count, self.latent_dim),
                    ));
                }
                let mut v = Latents::with_capacity(self.latent_dim, records.len());
                for r in records {
                    v.push(&LatentCode::new(r.latent)?)?;
                }
                Ok(PlanEntry { p: e.p, hull: Hull::new(v)?, mode_index: e.mode_index, dense_count: e.dense_count })
            })
            .collect::<Result<Vec<_>>>()?;
        let reference = Sample {
            latent: LatentCode::new(self.reference.latent.clone())?,
            embedding: EmbeddingVector::new(self.reference.embedding.clone())?,
            image_ref: None,
        };
        if reference.latent.dim() != self.latent_dim {
            return Err(bbgc_core::Error::DimensionMismatch { expected: self.latent_dim, found: reference.latent.dim() }.into());
        }
        Ok(ImportanceSamplingPlan::new(
            entries,
            reference,
            self.reference.store_indices.clone(),
            self.reference.count,
            self.r0,
            self.hull_size,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum CalibrationModel {
    Gmm { schema_version: u32, model: MixtureModel, details: GmmDetails, provenance: Provenance },
    Is { schema_version: u32, plan: PlanJson, provenance: Provenance },
}

impl CalibrationModel {
    pub fn method(&self) -> &'static str {
        match self {
            CalibrationModel::Gmm { .. } => "gmm",
            CalibrationModel::Is { .. } => "is",
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            CalibrationModel::Gmm { model, .. } => model.latent_dim(),
            CalibrationModel::Is { plan, .. } => plan.latent_dim,
        }
    }

    pub fn provenance(&self) -> &Provenance {
        match self {
            CalibrationModel::Gmm { provenance, .. } | CalibrationModel::Is { provenance, .. } => provenance,
        }
    }
}
