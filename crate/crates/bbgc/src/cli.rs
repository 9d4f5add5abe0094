use std::path::{Path, PathBuf};
use std::sync::Arc;

use bbgc_core::embedding::{DEFAULT_RADIUS, DEFAULT_THETA};
use bbgc_core::gmm::{DEFAULT_K, DEFAULT_N_FIT};
use bbgc_core::importance::DEFAULT_HULL_SIZE;
use bbgc_core::diagnosis::DEFAULT_TOP_K;
use bbgc_core::{Generator, SimilarityConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::calibration::CalibrationModel;
use crate::error::{Error, Result};
use crate::exec::RayonExecutor;
use crate::export::{export_table, Fields, TableFormat};
use crate::pipeline::{self, DiagnoseOptions, GmmOptions, IsOptions, Stream};
use crate::report::{read_json, sha256_file, write_json, write_tables, DiagnosisReport};
use crate::source::{serve, Source, SourceKind, SourceSpec};

#[derive(Debug, Parser)]
#[command(name = "bbgc", version, about = "Black-box diagnosis and calibration of intra-mode collapse")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample latents from the prior, run the source and write a store.
    Sample(SampleArgs),
    /// Population MCCS statistics, worst-case mode and top-k dense modes.
    Diagnose(DiagnoseArgs),
    /// Dense-mode neighbor counts only.
    FindModes(FindModesArgs),
    /// Fit a calibrated latent sampler from a diagnosis report.
    Calibrate {
        #[command(subcommand)]
        method: CalibrateCommand,
    },
    /// Diagnose fresh collections from a calibrated sampler against a baseline.
    Evaluate(EvaluateArgs),
    /// CSV tables from a report, or a store exported as CSV / JSON Lines.
    Report(ReportArgs),
    /// Serve a synthetic source over stdin/stdout in the subprocess framing.
    #[command(hide = true)]
    StdioSource(StdioArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StreamArg {
    Anchors,
    Pool,
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Latent stream; anchors and pool draw from disjoint streams of one seed.
    #[arg(long, value_enum, default_value_t = StreamArg::Pool)]
    pub stream: StreamArg,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimilarityArgs {
    #[arg(long, default_value_t = DEFAULT_THETA)]
    pub theta: f64,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[command(flatten)]
    pub similarity: SimilarityArgs,
    /// Also compute convergence curves over pool prefixes.
    #[arg(long)]
    pub curves: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for plot-ready CSV tables.
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FindModesArgs {
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long)]
    pub pool: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: f64,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CommonCalibrateArgs {
    /// Diagnosis report naming the dense modes.
    #[arg(long)]
    pub report: PathBuf,
    /// Anchor store the report was computed from.
    #[arg(long)]
    pub anchors: PathBuf,
    #[arg(long, default_value_t = DEFAULT_RADIUS)]
    pub radius: f64,
    /// Number of dense modes to calibrate, densest first.
    #[arg(long, default_value_t = 1)]
    pub modes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CalibrateCommand {
    /// Reweighted Gaussian mixture over k-means clusters of latents.
    Gmm {
        #[command(flatten)]
        common: CommonCalibrateArgs,
        #[arg(long)]
        source: PathBuf,
        #[arg(long, default_value_t = DEFAULT_K)]
        kmeans_k: usize,
        /// Latents drawn for the fit.
        #[arg(long, default_value_t = DEFAULT_N_FIT)]
        n: usize,
    },
    /// Hull-gated rejection sampling built from a pool store.
    Is {
        #[command(flatten)]
        common: CommonCalibrateArgs,
        #[arg(long)]
        pool: PathBuf,
        #[arg(long, default_value_t = DEFAULT_HULL_SIZE)]
        hull_size: usize,
        /// Store samples averaged into the reference density.
        #[arg(long, default_value_t = 1)]
        references: usize,
        /// Source spec, recorded in provenance only.
        #[arg(long)]
        source: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    /// Baseline diagnosis report.
    #[arg(long)]
    pub report: PathBuf,
    /// Fresh anchor count; defaults to the baseline's.
    #[arg(long)]
    pub m: Option<usize>,
    /// Fresh pool size; defaults to the baseline's.
    #[arg(long)]
    pub n: Option<usize>,
    /// Defaults to the baseline's.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Defaults to the baseline's.
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_TOP_K)]
    pub k: usize,
    #[arg(long)]
    pub curves: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub tables: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Csv,
    JsonLines,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Diagnosis or evaluation report to tabulate.
    #[arg(long, conflicts_with = "store", required_unless_present = "store")]
    pub report: Option<PathBuf>,
    /// Store to export.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    pub format: FormatArg,
    /// Comma-separated subset of latent,embedding,image_ref.
    #[arg(long, default_value = "latent,embedding,image_ref")]
    pub fields: String,
    /// Output directory for report tables, or output file for a store export.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct StdioArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub latent_dim: usize,
    #[arg(long)]
    pub embed_dim: usize,
}

fn open_source(path: &Path, exec: &Arc<RayonExecutor>) -> Result<(Source, String)> {
    let spec = SourceSpec::load(path)?;
    Ok((Source::open(&spec, exec.clone())?, sha256_file(path)?))
}

fn similarity(theta: f64, radius: f64) -> Result<SimilarityConfig> {
    SimilarityConfig::new(theta, radius).map_err(|e| Error::Usage(e.to_string()))
}

fn positive(name: &str, v: usize) -> Result<usize> {
    if v == 0 {
        return Err(Error::Usage(format!("--{name} must be at least 1")));
    }
    Ok(v)
}

/// Runs one parsed command on `exec`.
pub fn run(cli: Cli, exec: Arc<RayonExecutor>) -> Result<()> {
    let ex = &*exec;
    match cli.command {
        Command::Sample(a) => {
            positive("n", a.n)?;
            let (source, _) = open_source(&a.source, &exec)?;
            let stream = match a.stream {
                StreamArg::Anchors => Stream::Anchors,
                StreamArg::Pool => Stream::Pool,
            };
            let count = pipeline::sample_to_store(ex, &source, a.n, a.seed, stream, &a.out)?;
            println!("{count} samples -> {}", a.out.display());
        }
        Command::Diagnose(a) => {
            let opts = DiagnoseOptions {
                similarity: similarity(a.similarity.theta, a.similarity.radius)?,
                k: positive("k", a.similarity.k)?,
                curves: a.curves,
                seed: a.seed,
            };
            let report = pipeline::diagnose_stores(ex, &a.anchors, &a.pool, &opts)?;
            write_json(&a.out, &report)?;
            if let Some(dir) = &a.tables {
                write_tables(&report, dir, "")?;
            }
            println!(
                "worst mode: anchor {} with {} neighbors, mccs {}; mu {} sigma {} -> {}",
                report.worst_mode.anchor_index,
                report.worst_mode.neighbor_count,
                report.worst_mode.mccs,
                report.mu_mccs,
                report.sigma_mccs,
                a.out.display()
            );
        }
        Command::FindModes(a) => {
            let report = pipeline::find_modes_stores(ex, &a.anchors, &a.pool, a.radius, a.k)?;
            write_json(&a.out, &report)?;
            println!(
                "worst mode: anchor {} with {} neighbors -> {}",
                report.worst_mode.anchor_index,
                report.worst_mode.neighbor_count,
                a.out.display()
            );
        }
        Command::Calibrate { method } => {
            let (model, out) = match method {
                CalibrateCommand::Gmm { common, source, kmeans_k, n } => {
                    let (generator, source_sha) = open_source(&source, &exec)?;
                    let opts = GmmOptions {
                        kmeans_k: positive("kmeans-k", kmeans_k)?,
                        n_fit: positive("n", n)?,
                        radius: common.radius,
                        modes: positive("modes", common.modes)?,
                        seed: common.seed,
                    };
                    let model = pipeline::calibrate_gmm_from_report(
                        ex,
                        &generator,
                        Some(source_sha),
                        &common.report,
                        &common.anchors,
                        &opts,
                    )?;
                    (model, common.out)
                }
                CalibrateCommand::Is { common, pool, hull_size, references, source } => {
                    let source_sha = source.as_ref().map(sha256_file).transpose()?;
                    let opts = IsOptions {
                        hull_size: positive("hull-size", hull_size)?,
                        radius: common.radius,
                        modes: positive("modes", common.modes)?,
                        references: positive("references", references)?,
                        seed: common.seed,
                    };
                    let model = pipeline::calibrate_is_from_report(
                        ex,
                        source_sha,
                        &common.report,
                        &common.anchors,
                        &pool,
                        &opts,
                    )?;
                    (model, common.out)
                }
            };
            write_json(&out, &model)?;
            println!("{} model over modes {:?} -> {}", model.method(), model.provenance().modes, out.display());
        }
        Command::Evaluate(a) => {
            let (generator, _) = open_source(&a.source, &exec)?;
            let model: CalibrationModel = read_json(&a.model)?;
            let before: DiagnosisReport = read_json(&a.report)?;
            let opts = DiagnoseOptions {
                similarity: similarity(a.theta.unwrap_or(before.theta), a.radius.unwrap_or(before.radius))?,
                k: positive("k", a.k)?,
                curves: a.curves,
                seed: a.seed,
            };
            let m = positive("m", a.m.unwrap_or(before.m))?;
            let n = positive("n", a.n.unwrap_or(before.n))?;
            if model.latent_dim() != generator.latent_dim() {
                return Err(Error::format(
                    "model",
                    format!("latent dimension {} does not match the source's {}", model.latent_dim(), generator.latent_dim()),
                ));
            }
            let report = pipeline::evaluate_model(ex, &generator, &model, before, m, n, a.seed, &opts)?;
            write_json(&a.out, &report)?;
            if let Some(dir) = &a.tables {
                write_tables(&report.before, dir, "before_")?;
                write_tables(&report.after, dir, "after_")?;
            }
            let d = report.deltas();
            println!(
                "d_mu {} d_sigma {} d_worst_mccs {} -> {}",
                d.d_mu,
                d.d_sigma,
                d.d_worst_mccs,
                a.out.display()
            );
        }
        Command::Report(a) => match (&a.report, &a.store) {
            (Some(report), _) => {
                let value: serde_json::Value = read_json(report)?;
                let written = if value.get("before").is_some() {
                    let r: crate::evaluate::EvaluationReport = read_json(report)?;
                    let mut w = write_tables(&r.before, &a.out, "before_")?;
                    w.extend(write_tables(&r.after, &a.out, "after_")?);
                    w
                } else {
                    let r: DiagnosisReport = read_json(report)?;
                    write_tables(&r, &a.out, "")?
                };
                println!("{} tables -> {}", written.len(), a.out.display());
            }
            (None, Some(store)) => {
                let format = match a.format {
                    FormatArg::Csv => TableFormat::Csv,
                    FormatArg::JsonLines => TableFormat::JsonLines,
                };
                let fields: Fields = a.fields.parse()?;
                let rows = export_table(store, &a.out, format, fields)?;
                println!("{rows} rows -> {}", a.out.display());
            }
            (None, None) => return Err(Error::Usage("one of --report or --store is required".into())),
        },
        Command::StdioSource(a) => {
            let spec = SourceSpec::load(&a.source)?;
            if spec.kind != SourceKind::Synthetic {
                return Err(Error::Usage("stdio-source only serves synthetic specs".into()));
            }
            if spec.latent_dim != a.latent_dim || spec.embed_dim != a.embed_dim {
                return Err(bbgc_core::Error::DimensionMismatch { expected: spec.embed_dim, found: a.embed_dim }.into());
            }
            let source = Source::open(&spec, exec.clone())?;
            let stdin = std::io::stdin().lock();
            let stdout = std::io::stdout().lock();
            serve(&source, stdin, std::io::BufWriter::new(stdout))?;
        }
    }
    Ok(())
}
