//! JSON reports with pinned field order and 9-significant-digit floats.

use std::fs::File;
use std::io::{self, BufReader, Read, Write};
use std::path::Path;

use bbgc_core::diagnosis::{ConvergenceCurve, CurveAxis, Diagnosis, StatisticKind};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use tempfile::NamedTempFile;

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Rounds to 9 significant digits; serializing the result prints at most 9.
pub fn round_sig9(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.8e}").parse().expect("formatted float parses")
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = r.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON plus a trailing newline, written atomically.
pub fn write_json<T: Serialize>(path: impl AsRef<Path>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::format("json", e))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn write_atomic(path: impl AsRef<Path>, bytes: &[u8]) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_reader(BufReader::new(file)).map_err(|e| match e.classify() {
        serde_json::error::Category::Io => Error::io(path, io::Error::from(e)),
        _ => Error::format("json", format!("{}: {e}", path.display())),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputDigest {
    pub count: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Inputs {
    pub anchors: InputDigest,
    pub pool: InputDigest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorstMode {
    pub anchor_index: usize,
    pub neighbor_count: u64,
    pub mccs: f64,
    pub no_dense_mode: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeEntry {
    pub rank: usize,
    pub anchor_index: usize,
    pub neighbor_count: u64,
    pub mccs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorRow {
    pub anchor_index: usize,
    pub mccs: f64,
    pub mean_similarity: f64,
    pub neighbor_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub statistic: StatisticKind,
    pub axis: CurveAxis,
    /// Anchor of a single-anchor curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_index: Option<usize>,
    pub points: Vec<(usize, f64)>,
}

impl CurveReport {
    pub fn new(curve: &ConvergenceCurve, anchor_index: Option<usize>) -> Self {
        Self {
            statistic: curve.statistic,
            axis: curve.axis,
            anchor_index,
            points: curve.points.iter().map(|p| (p.size, round_sig9(p.value))).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosisReport {
    pub schema_version: u32,
    pub theta: f64,
    pub radius: f64,
    pub m: usize,
    pub n: usize,
    pub mu_mccs: f64,
    pub sigma_mccs: f64,
    pub worst_mode: WorstMode,
    pub top_k: Vec<ModeEntry>,
    pub curves: Vec<CurveReport>,
    pub per_anchor: Vec<AnchorRow>,
    pub inputs: Inputs,
}

impl DiagnosisReport {
    pub fn new(d: &Diagnosis, curves: Vec<CurveReport>, inputs: Inputs) -> Self {
        let mccs = |i: usize| round_sig9(d.stats.per_anchor[i].value);
        Self {
            schema_version: SCHEMA_VERSION,
            theta: d.config.theta,
            radius: d.config.radius,
            m: d.stats.m,
            n: d.n,
            mu_mccs: round_sig9(d.stats.mu),
            sigma_mccs: round_sig9(d.stats.sigma),
            worst_mode: WorstMode {
                anchor_index: d.worst.anchor_index,
                neighbor_count: d.worst.neighbor_count,
                mccs: mccs(d.worst.anchor_index),
                no_dense_mode: d.worst.no_dense_mode,
            },
            top_k: d
                .top_k
                .iter()
                .enumerate()
                .map(|(rank, t)| ModeEntry {
                    rank: rank + 1,
                    anchor_index: t.anchor_index,
                    neighbor_count: t.neighbor_count,
                    mccs: mccs(t.anchor_index),
                })
                .collect(),
            curves,
            per_anchor: d
                .stats
                .per_anchor
                .iter()
                .map(|v| AnchorRow {
                    anchor_index: v.anchor_index,
                    mccs: round_sig9(v.value),
                    mean_similarity: round_sig9(v.mean_similarity),
                    neighbor_count: d.counts[v.anchor_index],
                })
                .collect(),
            inputs,
        }
    }

    /// Anchor indices of the `k` densest modes that have at least one neighbor.
    pub fn dense_modes(&self, k: usize) -> Vec<usize> {
        self.top_k.iter().filter(|t| t.neighbor_count > 0).take(k).map(|t| t.anchor_index).collect()
    }
}

/// Output of `find-modes`: counts only, no similarity statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModesReport {
    pub schema_version: u32,
    pub radius: f64,
    pub m: usize,
    pub n: usize,
    pub worst_mode: ModeCount,
    pub top_k: Vec<ModeCount>,
    pub inputs: Inputs,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeCount {
    pub anchor_index: usize,
    pub neighbor_count: u64,
}

/// Writes plot-ready CSV tables for a diagnosis report into `dir` with the
/// file name prefix `prefix`.
pub fn write_tables(report: &DiagnosisReport, dir: impl AsRef<Path>, prefix: &str) -> Result<Vec<std::path::PathBuf>> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    let mut table = |name: &str, header: &[&str], rows: Vec<Vec<String>>| -> Result<()> {
        let path = dir.join(format!("{prefix}{name}.csv"));
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(|e| Error::format("csv", e))?;
        for r in rows {
            w.write_record(&r).map_err(|e| Error::format("csv", e))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::format("csv", e))?;
        write_atomic(&path, &bytes)?;
        written.push(path);
        Ok(())
    };
    let f = |x: f64| round_sig9(x).to_string();
    table(
        "per_anchor",
        &["anchor_index", "mccs", "mean_similarity", "neighbor_count"],
        report
            .per_anchor
            .iter()
            .map(|a| vec![a.anchor_index.to_string(), f(a.mccs), f(a.mean_similarity), a.neighbor_count.to_string()])
            .collect(),
    )?;
    table(
        "top_k",
        &["rank", "anchor_index", "neighbor_count", "mccs"],
        report
            .top_k
            .iter()
            .map(|t| vec![t.rank.to_string(), t.anchor_index.to_string(), t.neighbor_count.to_string(), f(t.mccs)])
            .collect(),
    )?;
    table(
        "summary",
        &["theta", "radius", "m", "n", "mu_mccs", "sigma_mccs", "worst_anchor", "worst_count", "worst_mccs"],
        vec![vec![
            f(report.theta),
            f(report.radius),
            report.m.to_string(),
            report.n.to_string(),
            f(report.mu_mccs),
            f(report.sigma_mccs),
            report.worst_mode.anchor_index.to_string(),
            report.worst_mode.neighbor_count.to_string(),
            f(report.worst_mode.mccs),
        ]],
    )?;
    if !report.curves.is_empty() {
        let name = |c: &CurveReport| {
            serde_json::to_value(c.statistic).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        };
        let axis = |c: &CurveReport| {
            serde_json::to_value(c.axis).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default()
        };
        let rows = report
            .curves
            .iter()
            .flat_map(|c| {
                c.points.iter().map(move |(size, value)| {
                    vec![
                        name(c),
                        axis(c),
                        c.anchor_index.map(|i| i.to_string()).unwrap_or_default(),
                        size.to_string(),
                        f(*value),
                    ]
                })
            })
            .collect();
        table("curves", &["statistic", "axis", "anchor_index", "size", "value"], rows)?;
    }
    Ok(written)
}
