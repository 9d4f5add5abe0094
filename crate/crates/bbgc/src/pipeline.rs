//! The command implementations, callable without the command line.

use std::path::Path;

use bbgc_core::diagnosis::{diagnose, mccs_curve, neighbor_counts, population_curves, rank_by_count, CurveAxis};
use bbgc_core::gmm::{calibrate_gmm, sample_calibrated, GmmConfig};
use bbgc_core::hull::HullConfig;
use bbgc_core::importance::{build_plan, sample_calibrated_is, IsConfig, IsStats};
use bbgc_core::latent::sample_latents_range;
use bbgc_core::rng::{derive_seed, purpose};
use bbgc_core::source::generate;
use bbgc_core::{EmbeddingVector, Executor, Generator, Latents, SampleSet, SimilarityConfig};

use crate::calibration::{CalibrationModel, GmmDetails, PlanJson, Provenance};
use crate::error::{Error, Result};
use crate::evaluate::EvaluationReport;
use crate::report::{
    read_json, sha256_bytes, sha256_file, CurveReport, DiagnosisReport, InputDigest, Inputs, ModeCount,
    ModesReport, SCHEMA_VERSION,
};
use crate::store::{read_store, write_record, StoreHeader, StoreWriter};

/// Latents generated and written per step, bounding memory on large stores.
pub const GENERATE_CHUNK: usize = 1 << 16;
const LATENT_BLOCK: usize = 4096;

/// Which seeded latent stream a collection is drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    Anchors,
    Pool,
    Fit,
    EvalAnchors,
    EvalPool,
}

impl Stream {
    pub fn seed(self, seed: u64) -> u64 {
        let p = match self {
            Stream::Anchors => purpose::ANCHORS,
            Stream::Pool => purpose::POOL,
            Stream::Fit => purpose::FIT,
            Stream::EvalAnchors => purpose::EVAL_ANCHORS,
            Stream::EvalPool => purpose::EVAL_POOL,
        };
        derive_seed(seed, p)
    }
}

/// Prior draws `start..start + n` of `seed`, in parallel blocks.
pub fn prior_latents<E: Executor>(exec: &E, seed: u64, dim: usize, start: u64, n: usize) -> Result<Latents> {
    let parts = exec.map_range(n.div_ceil(LATENT_BLOCK), |b| {
        let s = b * LATENT_BLOCK;
        sample_latents_range(seed, dim, start + s as u64, LATENT_BLOCK.min(n - s))
    });
    let mut out = Latents::with_capacity(dim, n);
    for p in parts {
        out.extend(&p?)?;
    }
    Ok(out)
}

/// Samples `n` prior latents from `stream`, generates them and writes a store.
pub fn sample_to_store<E: Executor, G: Generator + ?Sized>(
    exec: &E,
    generator: &G,
    n: usize,
    seed: u64,
    stream: Stream,
    out: impl AsRef<Path>,
) -> Result<u64> {
    if n == 0 {
        return Err(Error::Usage("--n must be at least 1".into()));
    }
    let stream_seed = stream.seed(seed);
    let mut w = StoreWriter::create(out, generator.latent_dim(), generator.embed_dim(), seed)?;
    let mut start = 0;
    while start < n {
        let len = GENERATE_CHUNK.min(n - start);
        let latents = prior_latents(exec, stream_seed, generator.latent_dim(), start as u64, len)?;
        w.push_set(&generate(generator, latents)?)?;
        start += len;
    }
    w.finish()
}

/// Store bytes of an in-memory collection, as [`StoreWriter`] would write them.
pub fn store_bytes(set: &SampleSet, seed: u64) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    StoreHeader::new(set.latent_dim(), set.embed_dim(), set.len() as u64, seed)?
        .write_to(&mut buf)
        .expect("writing to memory");
    for i in 0..set.len() {
        write_record(&mut buf, set.latents().row(i), set.embeddings().row(i), set.image_ref(i))
            .expect("writing to memory");
    }
    Ok(buf)
}

pub fn load_store(path: impl AsRef<Path>) -> Result<(SampleSet, InputDigest)> {
    let path = path.as_ref();
    let (header, set) = read_store(path)?;
    Ok((set, InputDigest { count: header.count, sha256: sha256_file(path)? }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnoseOptions {
    pub similarity: SimilarityConfig,
    pub k: usize,
    pub curves: bool,
    pub seed: u64,
}

/// Pool prefix sizes for convergence curves: 100, 300, 1000, ... below `n`, then `n`.
pub fn curve_sizes(n: usize) -> Vec<usize> {
    let mut sizes = Vec::new();
    let mut decade = 100;
    while decade < n {
        sizes.push(decade);
        if 3 * decade < n {
            sizes.push(3 * decade);
        }
        decade *= 10;
    }
    sizes.push(n);
    sizes
}

pub fn diagnose_sets<E: Executor>(
    exec: &E,
    anchors: &SampleSet,
    pool: &SampleSet,
    opts: &DiagnoseOptions,
    inputs: Inputs,
) -> Result<DiagnosisReport> {
    let d = diagnose(exec, anchors, pool, &opts.similarity, opts.k)?;
    let mut curves = Vec::new();
    if opts.curves {
        let sizes = curve_sizes(pool.len());
        let (mu, sigma) =
            population_curves(exec, anchors, pool, &opts.similarity, CurveAxis::Pool, &sizes, opts.seed)?;
        let worst = d.worst.anchor_index;
        let single =
            mccs_curve(&anchors.embeddings().get(worst), pool.embeddings(), &opts.similarity, &sizes, opts.seed)?;
        curves.push(CurveReport::new(&mu, None));
        curves.push(CurveReport::new(&sigma, None));
        curves.push(CurveReport::new(&single, Some(worst)));
    }
    Ok(DiagnosisReport::new(&d, curves, inputs))
}

pub fn diagnose_stores<E: Executor>(
    exec: &E,
    anchors: impl AsRef<Path>,
    pool: impl AsRef<Path>,
    opts: &DiagnoseOptions,
) -> Result<DiagnosisReport> {
    let (a, a_digest) = load_store(anchors)?;
    let (c, c_digest) = load_store(pool)?;
    diagnose_sets(exec, &a, &c, opts, Inputs { anchors: a_digest, pool: c_digest })
}

pub fn find_modes_stores<E: Executor>(
    exec: &E,
    anchors: impl AsRef<Path>,
    pool: impl AsRef<Path>,
    radius: f64,
    k: usize,
) -> Result<ModesReport> {
    if k == 0 {
        return Err(Error::Usage("--k must be at least 1".into()));
    }
    SimilarityConfig::new(bbgc_core::embedding::DEFAULT_THETA, radius)?;
    let (a, a_digest) = load_store(anchors)?;
    let (c, c_digest) = load_store(pool)?;
    if a.is_empty() || c.is_empty() {
        return Err(bbgc_core::Error::EmptyCollections.into());
    }
    if a.embed_dim() != c.embed_dim() {
        return Err(bbgc_core::Error::DimensionMismatch { expected: c.embed_dim(), found: a.embed_dim() }.into());
    }
    a.check_disjoint(&c)?;
    let counts = neighbor_counts(exec, a.embeddings(), c.embeddings(), radius);
    let ranked: Vec<ModeCount> = rank_by_count(&counts, k)
        .into_iter()
        .map(|i| ModeCount { anchor_index: i, neighbor_count: counts[i] })
        .collect();
    Ok(ModesReport {
        schema_version: SCHEMA_VERSION,
        radius,
        m: a.len(),
        n: c.len(),
        worst_mode: ranked[0].clone(),
        top_k: ranked,
        inputs: Inputs { anchors: a_digest, pool: c_digest },
    })
}

/// Dense-mode embeddings named by a diagnosis report, looked up in the
/// anchor store the report was computed from.
pub fn report_modes(
    report: &DiagnosisReport,
    report_anchors: impl AsRef<Path>,
    modes: usize,
) -> Result<(Vec<usize>, Vec<EmbeddingVector>, String)> {
    let (anchors, digest) = load_store(report_anchors)?;
    if digest.sha256 != report.inputs.anchors.sha256 {
        return Err(Error::format("anchor store", "does not match the anchors the report was computed from"));
    }
    let idx = report.dense_modes(modes.max(1));
    let embeddings = idx.iter().map(|&i| anchors.embeddings().get(i)).collect();
    Ok((idx, embeddings, digest.sha256))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GmmOptions {
    pub kmeans_k: usize,
    pub n_fit: usize,
    pub radius: f64,
    pub modes: usize,
    pub seed: u64,
}

pub fn calibrate_gmm_from_report<E: Executor, G: Generator + ?Sized>(
    exec: &E,
    generator: &G,
    source_sha256: Option<String>,
    report_path: impl AsRef<Path>,
    anchors_path: impl AsRef<Path>,
    opts: &GmmOptions,
) -> Result<CalibrationModel> {
    let report_sha256 = sha256_file(&report_path)?;
    let report: DiagnosisReport = read_json(&report_path)?;
    let (modes, embeddings, anchors_sha256) = report_modes(&report, anchors_path, opts.modes)?;
    let fit = calibrate_gmm(exec, generator, &embeddings, &GmmConfig::new(opts.kmeans_k, opts.radius, opts.n_fit, opts.seed))?;
    Ok(CalibrationModel::Gmm {
        schema_version: SCHEMA_VERSION,
        model: fit.model,
        details: GmmDetails { cluster_counts: fit.cluster_weights.raw_counts, covariance_floored: fit.covariance_floored },
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: opts.seed,
            radius: opts.radius,
            modes,
            report_sha256,
            anchors_sha256,
            pool_sha256: None,
            source_sha256,
            kmeans_k: Some(opts.kmeans_k),
            n_fit: Some(opts.n_fit),
            hull_size: None,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsOptions {
    pub hull_size: usize,
    pub radius: f64,
    pub modes: usize,
    pub references: usize,
    pub seed: u64,
}

/// Builds a hull plan; counts and hull vertices come from the pool store.
pub fn calibrate_is_from_report<E: Executor>(
    exec: &E,
    source_sha256: Option<String>,
    report_path: impl AsRef<Path>,
    anchors_path: impl AsRef<Path>,
    pool_path: impl AsRef<Path>,
    opts: &IsOptions,
) -> Result<CalibrationModel> {
    let report_sha256 = sha256_file(&report_path)?;
    let report: DiagnosisReport = read_json(&report_path)?;
    let (modes, embeddings, anchors_sha256) = report_modes(&report, anchors_path, opts.modes)?;
    let (pool, pool_digest) = load_store(pool_path)?;
    let cfg = IsConfig { r0: opts.radius, hull_size: opts.hull_size, references: opts.references, seed: opts.seed };
    let plan = build_plan(exec, &pool, &embeddings, &cfg)?;
    Ok(CalibrationModel::Is {
        schema_version: SCHEMA_VERSION,
        plan: PlanJson::from_plan(&plan)?,
        provenance: Provenance {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            seed: opts.seed,
            radius: opts.radius,
            modes,
            report_sha256,
            anchors_sha256,
            pool_sha256: Some(pool_digest.sha256),
            source_sha256,
            kmeans_k: None,
            n_fit: None,
            hull_size: Some(opts.hull_size),
        },
    })
}

/// `n` latents from the calibrated sampler described by `model`.
pub fn calibrated_latents<E: Executor>(
    exec: &E,
    model: &CalibrationModel,
    n: usize,
    seed: u64,
) -> Result<(Latents, Option<IsStats>)> {
    match model {
        CalibrationModel::Gmm { model, .. } => Ok((sample_calibrated(exec, model, n, seed)?, None)),
        CalibrationModel::Is { plan, .. } => {
            let out = sample_calibrated_is(exec, &plan.to_plan()?, n, seed, &HullConfig::default())?;
            Ok((out.latents, Some(out.stats)))
        }
    }
}

/// Diagnoses fresh calibrated collections of sizes `m` and `n` against `before`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_model<E: Executor, G: Generator + ?Sized>(
    exec: &E,
    generator: &G,
    model: &CalibrationModel,
    before: DiagnosisReport,
    m: usize,
    n: usize,
    seed: u64,
    opts: &DiagnoseOptions,
) -> Result<EvaluationReport> {
    if model.latent_dim() != generator.latent_dim() {
        return Err(bbgc_core::Error::DimensionMismatch { expected: generator.latent_dim(), found: model.latent_dim() }.into());
    }
    let (a_lat, _) = calibrated_latents(exec, model, m, Stream::EvalAnchors.seed(seed))?;
    let (c_lat, sampler) = calibrated_latents(exec, model, n, Stream::EvalPool.seed(seed))?;
    let anchors = generate(generator, a_lat)?;
    let pool = generate(generator, c_lat)?;
    let digest = |s: &SampleSet| -> Result<InputDigest> {
        Ok(InputDigest { count: s.len() as u64, sha256: sha256_bytes(&store_bytes(s, seed)?) })
    };
    let inputs = Inputs { anchors: digest(&anchors)?, pool: digest(&pool)? };
    let after = diagnose_sets(exec, &anchors, &pool, opts, inputs)?;
    Ok(EvaluationReport { method: model.method().into(), before, after, sampler })
}
