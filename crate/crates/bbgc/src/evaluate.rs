use bbgc_core::importance::IsStats;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::report::{round_sig9, DiagnosisReport, SCHEMA_VERSION};

/// Before/after differences; always derived from the two reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Deltas {
    pub d_mu: f64,
    pub d_sigma: f64,
    pub d_worst_mccs: f64,
    /// Worst-mode neighbor fraction after over before; absent when the
    /// before fraction is zero.
    pub worst_count_ratio: Option<f64>,
}

impl Deltas {
    pub fn between(before: &DiagnosisReport, after: &DiagnosisReport) -> Self {
        let frac = |r: &DiagnosisReport| r.worst_mode.neighbor_count as f64 / r.n as f64;
        let b = frac(before);
        Self {
            d_mu: round_sig9(after.mu_mccs - before.mu_mccs),
            d_sigma: round_sig9(after.sigma_mccs - before.sigma_mccs),
            d_worst_mccs: round_sig9(after.worst_mode.mccs - before.worst_mode.mccs),
            worst_count_ratio: (b > 0.0).then(|| round_sig9(frac(after) / b)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub method: String,
    pub before: DiagnosisReport,
    pub after: DiagnosisReport,
    /// Proposal statistics of the hull sampler, for `is` models.
    pub sampler: Option<IsStats>,
}

impl EvaluationReport {
    pub fn deltas(&self) -> Deltas {
        Deltas::between(&self.before, &self.after)
    }
}

#[derive(Serialize, Deserialize)]
struct Wire {
    schema_version: u32,
    method: String,
    deltas: Deltas,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sampler: Option<IsStats>,
    before: DiagnosisReport,
    after: DiagnosisReport,
}

impl Serialize for EvaluationReport {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        Wire {
            schema_version: SCHEMA_VERSION,
            method: self.method.clone(),
            deltas: self.deltas(),
            sampler: self.sampler.clone(),
            before: self.before.clone(),
            after: self.after.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for EvaluationReport {
    /// Stored deltas are ignored and recomputed.
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = Wire::deserialize(d)?;
        Ok(Self { method: w.method, before: w.before, after: w.after, sampler: w.sampler })
    }
}
