//! Acceptance suite: one PASS/FAIL line per criterion, with the measured
//! quantity and runtime. Exits non-zero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use bbgc::pipeline::{diagnose_sets, prior_latents, store_bytes, DiagnoseOptions, Stream};
use bbgc::report::{sha256_bytes, write_json, InputDigest, Inputs};
use bbgc::store::{read_store, write_store};
use bbgc::RayonExecutor;
use bbgc_core::diagnosis::{
    diagnose, expected_similarity, find_worst_mode, mccs, mccs_from_mean, mode_consistency_check, population_stats,
    top_k_modes, Diagnosis,
};
use bbgc_core::embedding::similarity_at_distance;
use bbgc_core::gmm::{calibrate_gmm, sample_calibrated, GmmConfig};
use bbgc_core::hull::{Hull, HullConfig};
use bbgc_core::importance::{build_plan, sample_calibrated_is, IsConfig};
use bbgc_core::source::generate;
use bbgc_core::synthetic::{PlantedSpec, SyntheticModel, SyntheticSource, TestbedConfig};
use bbgc_core::{
    cosine_distance, neighbor_count, similarity, EmbeddingVector, Embeddings, LatentCode, Latents, SampleSet,
    SimilarityConfig,
};
use rand::Rng;
use support::{dd, hull_oracle, naive};

const LATENT_DIM: usize = 2;
const EMBED_DIM: usize = 128;
const PLANTED_MASS: f64 = 0.01;
const M: usize = 1_000;
const N: usize = 100_000;
const RADIUS: f64 = 0.25;

struct Outcome {
    pass: bool,
    detail: String,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self { pass, detail: detail.into() }
    }
}

fn main() {
    let exec = RayonExecutor::from_env();
    type Criterion = fn(&RayonExecutor) -> Outcome;
    let criteria: [(&str, Option<u64>, Criterion); 10] = [
        ("formula exactness", Some(1), formula_exactness),
        ("mccs analytic anchors", Some(1), mccs_anchors),
        ("oracle equivalence", Some(10), oracle_equivalence),
        ("planted-collapse detection", Some(300), planted_detection),
        ("sampling-efficiency curve", Some(300), sampling_efficiency),
        ("mode consistency", None, mode_consistency),
        ("gmm calibration efficacy", Some(600), gmm_efficacy),
        ("is calibration efficacy", Some(600), is_efficacy),
        ("hull membership correctness", Some(30), hull_correctness),
        ("determinism and persistence", None, determinism),
    ];
    let mut failed = 0;
    for (i, (name, budget, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| run(&exec)))
            .unwrap_or_else(|_| Outcome::new(false, "panicked"));
        let elapsed = start.elapsed();
        let in_time = budget.map_or(true, |b| elapsed <= Duration::from_secs(b));
        let pass = outcome.pass && in_time;
        failed += usize::from(!pass);
        let limit = budget.map_or(String::new(), |b| format!(" of {b} s"));
        println!(
            "{} criterion {}: {name}: {} ({:.2} s{limit})",
            if pass { "PASS" } else { "FAIL" },
            i + 1,
            outcome.detail,
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

// ---------------------------------------------------------------- fixtures

fn testbed(seed: u64) -> SyntheticSource {
    let model = SyntheticModel::testbed(&TestbedConfig {
        embed_dim: EMBED_DIM,
        background_count: 300,
        background_spread: 0.02,
        planted: vec![PlantedSpec { mass: PLANTED_MASS, spread: 0.0 }],
        seed,
    })
    .unwrap();
    SyntheticSource::new(model, LATENT_DIM, seed).unwrap()
}

fn center(src: &SyntheticSource) -> &EmbeddingVector {
    &src.model.planted()[0].center
}

fn draw(exec: &RayonExecutor, src: &SyntheticSource, stream: Stream, seed: u64, n: usize) -> SampleSet {
    generate(src, prior_latents(exec, stream.seed(seed), LATENT_DIM, 0, n).unwrap()).unwrap()
}

/// Planted samples have zero spread and reproduce the center up to rounding.
fn is_center(e: &[f64], center: &EmbeddingVector) -> bool {
    naive::dot(e, center.as_slice()) > 1.0 - 1e-12
}

fn planted_rows(set: &SampleSet, center: &EmbeddingVector) -> Vec<usize> {
    (0..set.len()).filter(|&i| is_center(set.embeddings().row(i), center)).collect()
}

/// Anchors of size `M` containing the planted center: if no prior draw hit
/// the mode, the last anchor is replaced by a planted pool sample.
fn anchors_with_center(a: SampleSet, pool: &SampleSet, center: &EmbeddingVector) -> SampleSet {
    if !planted_rows(&a, center).is_empty() {
        return a;
    }
    let donor = planted_rows(pool, center)[0];
    let mut out = a.select(&(0..a.len() - 1).collect::<Vec<_>>());
    out.push(pool.get(donor)).unwrap();
    out
}

struct Setup {
    src: SyntheticSource,
    anchors: SampleSet,
    pool: SampleSet,
    diagnosis: Diagnosis,
}

fn setup(exec: &RayonExecutor, seed: u64) -> Setup {
    let src = testbed(seed);
    let pool = draw(exec, &src, Stream::Pool, seed, N);
    let anchors = anchors_with_center(draw(exec, &src, Stream::Anchors, seed, M), &pool, center(&src));
    let diagnosis = diagnose(exec, &anchors, &pool, &SimilarityConfig::default(), 24).unwrap();
    Setup { src, anchors, pool, diagnosis }
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn ev(v: Vec<f64>) -> EmbeddingVector {
    EmbeddingVector::new(v).unwrap()
}

// ---------------------------------------------------------------- criteria

fn formula_exactness(_: &RayonExecutor) -> Outcome {
    let mut rng = support::rng(101);
    let (mut s_err, mut d_err): (f64, f64) = (0.0, 0.0);
    for i in 0..10_000 {
        let theta = rng.random_range(1e-3..=1.0);
        let d = rng.random_range(0.0..=1.0);
        s_err = s_err.max((similarity_at_distance(d, theta) - dd::similarity(d, theta)).abs());

        let dim = 2 + i % 127;
        let a = support::unit(&mut rng, dim);
        let dist = rng.random_range(0.0..=1.0);
        let b = support::at_distance(&mut rng, &a, dist);
        let got = cosine_distance(&ev(a.clone()), &ev(b.clone())).unwrap();
        d_err = d_err.max((got - dd::distance(&a, &b)).abs());
    }
    let cfg = SimilarityConfig::default();
    let u = ev(vec![0.6, 0.8]);
    let mut boundaries = similarity(&u, &u, &cfg).unwrap() == 1.0;
    for theta in [0.01, 0.3, 1.0] {
        boundaries &= similarity_at_distance(0.0, theta) == 1.0;
        boundaries &= similarity_at_distance(theta, theta) == 0.0;
        boundaries &= similarity_at_distance((theta + 0.1).min(1.0), theta) == 0.0;
    }
    Outcome::new(
        s_err <= 1e-12 && d_err <= 1e-12 && boundaries,
        format!("max |error| similarity {s_err:.1e}, distance {d_err:.1e}; boundaries exact: {boundaries}"),
    )
}

fn mccs_anchors(_: &RayonExecutor) -> Outcome {
    let exact = mccs_from_mean(1.0) == 1.0 && mccs_from_mean((-1.0f64).exp()) == 0.5 && mccs_from_mean(0.0) == 0.0;
    let cfg = SimilarityConfig::default();
    let mut rng = support::rng(102);
    let mut violations = 0;
    for _ in 0..1_000 {
        let anchor = support::unit(&mut rng, 16);
        let mut pool = Embeddings::new(16);
        for _ in 0..rng.random_range(1..40) {
            let d = rng.random_range(0.0..0.5);
            pool.push(&ev(support::at_distance(&mut rng, &anchor, d))).unwrap();
        }
        let a = ev(anchor.clone());
        let before = mccs(0, &a, &pool, &cfg).unwrap();
        let d = rng.random_range(0.0..0.5);
        let extra = ev(support::at_distance(&mut rng, &anchor, d));
        let s = similarity(&a, &extra, &cfg).unwrap();
        pool.push(&extra).unwrap();
        let after = mccs(0, &a, &pool, &cfg).unwrap().value;
        let ok = match s.partial_cmp(&before.mean_similarity).unwrap() {
            std::cmp::Ordering::Greater => after > before.value,
            std::cmp::Ordering::Less => after < before.value,
            std::cmp::Ordering::Equal => after == before.value,
        };
        violations += usize::from(!ok);
    }
    Outcome::new(
        exact && violations == 0,
        format!("analytic values exact: {exact}; monotonicity violations {violations}/1000"),
    )
}

/// Anchors on the sphere and a pool clustered around a third of them.
fn clustered(seed: u64) -> (SampleSet, SampleSet) {
    let (m, n, dim) = (50, 1_000, 32);
    let mut rng = support::rng(seed);
    let anchors: Vec<Vec<f64>> = (0..m).map(|_| support::unit(&mut rng, dim)).collect();
    let pool: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            if rng.random_bool(0.6) {
                let j = rng.random_range(0..m / 3);
                let d = rng.random_range(0.0..0.35);
                support::at_distance(&mut rng, &anchors[j], d)
            } else {
                support::unit(&mut rng, dim)
            }
        })
        .collect();
    let set = |vecs: &[Vec<f64>], offset: usize| {
        let mut latents = Latents::new(1);
        let mut emb = Embeddings::new(dim);
        for (i, v) in vecs.iter().enumerate() {
            latents.push(&LatentCode::new(vec![(offset + i) as f64]).unwrap()).unwrap();
            emb.push(&ev(v.clone())).unwrap();
        }
        SampleSet::from_parts(latents, emb).unwrap()
    };
    (set(&anchors, 0), set(&pool, m))
}

fn oracle_equivalence(exec: &RayonExecutor) -> Outcome {
    let cfg = SimilarityConfig::default();
    let mut worst_rel: f64 = 0.0;
    let mut rank_mismatches = 0;
    for seed in 0..5 {
        let (a, c) = clustered(200 + seed);
        let ar: Vec<Vec<f64>> = a.embeddings().rows().map(<[f64]>::to_vec).collect();
        let cr: Vec<Vec<f64>> = c.embeddings().rows().map(<[f64]>::to_vec).collect();
        let means: Vec<f64> = ar.iter().map(|x| naive::mean_similarity(x, &cr, cfg.theta)).collect();
        let values: Vec<f64> = means.iter().map(|&s| naive::mccs(s)).collect();
        let (mu, sigma) = naive::mean_std(&values);
        let counts: Vec<u64> = ar.iter().map(|x| naive::count(x, &cr, cfg.radius)).collect();
        let ranking = naive::ranking(&counts);

        for i in 0..a.len() {
            let e = a.embeddings().get(i);
            worst_rel = worst_rel.max(rel(expected_similarity(&e, c.embeddings(), &cfg).unwrap(), means[i]));
            worst_rel = worst_rel.max(rel(mccs(i, &e, c.embeddings(), &cfg).unwrap().value, values[i]));
        }
        let stats = population_stats(exec, &a, &c, &cfg).unwrap();
        worst_rel = worst_rel.max(rel(stats.mu, mu)).max(rel(stats.sigma, sigma));
        let worst = find_worst_mode(exec, &a, &c, cfg.radius).unwrap();
        rank_mismatches += usize::from((worst.anchor_index, worst.neighbor_count) != (ranking[0], counts[ranking[0]]));
        let top = top_k_modes(exec, &a, &c, cfg.radius, 24).unwrap();
        for (t, &i) in top.iter().zip(&ranking) {
            rank_mismatches += usize::from((t.anchor_index, t.neighbor_count) != (i, counts[i]));
        }
    }
    Outcome::new(
        worst_rel <= 1e-9 && rank_mismatches == 0,
        format!("max relative difference {worst_rel:.1e}; worst-mode/top-k mismatches {rank_mismatches}"),
    )
}

fn planted_detection(exec: &RayonExecutor) -> Outcome {
    let mut hits = 0;
    let mut min_z = f64::INFINITY;
    for seed in 1..=20 {
        let s = setup(exec, seed);
        let c = center(&s.src);
        let planted = planted_rows(&s.anchors, c);
        hits += usize::from(planted.contains(&s.diagnosis.worst.anchor_index));
        let st = &s.diagnosis.stats;
        min_z = min_z.min((st.per_anchor[planted[0]].value - st.mu) / st.sigma);
    }
    Outcome::new(
        hits >= 19 && min_z > 3.0,
        format!("worst mode is planted in {hits}/20 runs; min (MCCS(planted) - mu) / sigma = {min_z:.2}"),
    )
}

fn sampling_efficiency(exec: &RayonExecutor) -> Outcome {
    let seed = 1;
    let src = testbed(seed);
    let pool = draw(exec, &src, Stream::Pool, seed, N);
    let anchors = anchors_with_center(draw(exec, &src, Stream::Anchors, seed, M), &pool, center(&src));
    let planted = planted_rows(&anchors, center(&src))[0];
    let mut rng = support::rng(seed);
    let random = loop {
        let i = rng.random_range(0..anchors.len());
        if !is_center(anchors.embeddings().row(i), center(&src)) {
            break i;
        }
    };
    let cfg = SimilarityConfig::default();
    let small = pool.embeddings().prefix(10_000);
    let mut detail = String::new();
    let mut pass = true;
    for (label, i) in [("planted", planted), ("random", random)] {
        let e = anchors.embeddings().get(i);
        let full = mccs(i, &e, pool.embeddings(), &cfg).unwrap().value;
        let part = mccs(i, &e, &small, &cfg).unwrap().value;
        let r = (part - full).abs() / full;
        pass &= r < 0.05;
        let _ = write!(detail, "{label} anchor {i}: {part:.4} vs {full:.4}, relative {r:.4}; ");
    }
    Outcome::new(pass, detail.trim_end_matches("; "))
}

fn mode_consistency(exec: &RayonExecutor) -> Outcome {
    let mut far = 0;
    let mut worst: f64 = 0.0;
    for seed in 1..=5 {
        let src = testbed(seed);
        let pool = draw(exec, &src, Stream::Pool, seed, 10_000);
        let anchors = draw(exec, &src, Stream::Anchors, seed, 10_000);
        let check = mode_consistency_check(exec, &anchors, &pool, &[1_000, 10_000], RADIUS).unwrap();
        for e in &check.entries {
            let d = naive::distance(e.embedding.as_slice(), center(&src).as_slice());
            worst = worst.max(d);
            far += usize::from(d > RADIUS);
        }
    }
    Outcome::new(far == 0, format!("10 recovered modes, {far} beyond radius; max distance to planted center {worst:.3}"))
}

/// Mean and population std of MCCS over anchors farther than the radius from `c`.
fn off_mode(set: &SampleSet, d: &Diagnosis, c: &EmbeddingVector) -> (f64, f64) {
    let values: Vec<f64> = (0..set.len())
        .filter(|&i| naive::distance(set.embeddings().row(i), c.as_slice()) > RADIUS)
        .map(|i| d.stats.per_anchor[i].value)
        .collect();
    naive::mean_std(&values)
}

fn gmm_efficacy(exec: &RayonExecutor) -> Outcome {
    let seed = 1;
    let s = setup(exec, seed);
    let c = center(&s.src);
    let mode = s.anchors.embeddings().get(s.diagnosis.worst.anchor_index);
    let fit = calibrate_gmm(exec, &s.src, &[mode], &GmmConfig::new(64, RADIUS, N, seed)).unwrap();
    let a2 = generate(&s.src, sample_calibrated(exec, &fit.model, M, Stream::EvalAnchors.seed(seed)).unwrap()).unwrap();
    let c2 = generate(&s.src, sample_calibrated(exec, &fit.model, N, Stream::EvalPool.seed(seed)).unwrap()).unwrap();
    let after = diagnose(exec, &a2, &c2, &SimilarityConfig::default(), 24).unwrap();

    let before_count = neighbor_count(c, s.pool.embeddings(), RADIUS).unwrap();
    let after_count = neighbor_count(c, c2.embeddings(), RADIUS).unwrap();
    let drop = 1.0 - after_count as f64 / before_count as f64;

    let (b, a) = (&s.diagnosis.stats, &after.stats);
    let se = ((b.sigma * b.sigma + a.sigma * a.sigma) / M as f64).sqrt();
    let d_mu = a.mu - b.mu;

    let (mu0, sd0) = off_mode(&s.anchors, &s.diagnosis, c);
    let (mu1, sd1) = off_mode(&a2, &after, c);
    let shift = (mu1 - mu0).abs().max((sd1 - sd0).abs());
    Outcome::new(
        drop >= 0.5 && d_mu <= 3.0 * se && shift < 0.02,
        format!(
            "planted neighbors {before_count} -> {after_count} (drop {:.1}%); d_mu {d_mu:.4} (3 se {:.4}); \
             off-mode mu {mu0:.4} -> {mu1:.4}, sigma {sd0:.4} -> {sd1:.4}",
            100.0 * drop,
            3.0 * se
        ),
    )
}

fn is_efficacy(exec: &RayonExecutor) -> Outcome {
    let seed = 1;
    let s = setup(exec, seed);
    let c = center(&s.src);
    let mode = s.anchors.embeddings().get(s.diagnosis.worst.anchor_index);
    let plan = build_plan(exec, &s.pool, &[mode], &IsConfig::new(RADIUS, 100, seed)).unwrap();
    let out = sample_calibrated_is(exec, &plan, N, Stream::EvalPool.seed(seed), &HullConfig::default()).unwrap();
    let calibrated = generate(&s.src, out.latents).unwrap();
    let planted = neighbor_count(c, calibrated.embeddings(), RADIUS).unwrap();
    let reference = neighbor_count(&plan.reference_anchor.embedding, calibrated.embeddings(), RADIUS).unwrap();
    let ratio = planted as f64 / reference as f64;
    let st = &out.stats;
    let outside_exact = st.out_of_hull_accepted == st.out_of_hull_proposals;
    Outcome::new(
        (0.5..=2.0).contains(&ratio) && outside_exact && st.proposals >= N as u64,
        format!(
            "p = {:.4}; planted/reference density {planted}/{reference} = {ratio:.3}; \
             outside-hull acceptance {}/{} over {} proposals",
            plan.entries[0].p, st.out_of_hull_accepted, st.out_of_hull_proposals, st.proposals
        ),
    )
}

fn hull_correctness(_: &RayonExecutor) -> Outcome {
    let mut rng = support::rng(109);
    let cfg = HullConfig::default();
    let (mut disagreements, mut members) = (0, 0);
    for q in 0..1_000 {
        let dim = 8;
        let nv = rng.random_range(1..=10);
        let verts: Vec<Vec<f64>> = (0..nv).map(|_| support::gaussian(&mut rng, dim)).collect();
        let z: Vec<f64> = if q % 2 == 0 {
            let w: Vec<f64> = (0..nv).map(|_| rng.random_range(0.0..1.0)).collect();
            let total: f64 = w.iter().sum();
            let jitter = if q % 4 == 0 { 0.0 } else { rng.random_range(0.0..0.3) };
            (0..dim)
                .map(|j| {
                    let x: f64 = w.iter().zip(&verts).map(|(wi, v)| wi / total * v[j]).sum();
                    x + jitter * rng.random_range(-1.0..1.0)
                })
                .collect()
        } else {
            support::gaussian(&mut rng, dim)
        };
        let want = hull_oracle::is_member(&z, &verts, cfg.tol);
        let hull = Hull::new(Latents::from_flat(dim, verts.concat()).unwrap()).unwrap();
        let full = hull.membership(&z, &cfg).unwrap().is_member;
        let quick = hull.contains(&z, &cfg).unwrap();
        disagreements += usize::from(full != want) + usize::from(quick != want);
        members += usize::from(want);
    }
    Outcome::new(disagreements == 0, format!("{disagreements} disagreements over 1000 queries ({members} members)"))
}

/// Every artifact of a small end-to-end run, serialized.
fn artifacts(exec: &RayonExecutor, dir: &std::path::Path) -> Vec<Vec<u8>> {
    let seed = 3;
    let src = testbed(seed);
    let a = draw(exec, &src, Stream::Anchors, seed, 200);
    let c = draw(exec, &src, Stream::Pool, seed, 20_000);
    let (a_bytes, c_bytes) = (store_bytes(&a, seed).unwrap(), store_bytes(&c, seed).unwrap());
    let digest = |b: &[u8], n: usize| InputDigest { count: n as u64, sha256: sha256_bytes(b) };
    let inputs = Inputs { anchors: digest(&a_bytes, 200), pool: digest(&c_bytes, 20_000) };
    let opts = DiagnoseOptions { similarity: SimilarityConfig::default(), k: 24, curves: true, seed };
    let report = diagnose_sets(exec, &a, &c, &opts, inputs).unwrap();
    let path = dir.join("report.json");
    write_json(&path, &report).unwrap();

    let mode = a.embeddings().get(report.worst_mode.anchor_index);
    let fit = calibrate_gmm(exec, &src, std::slice::from_ref(&mode), &GmmConfig::new(16, RADIUS, 20_000, seed)).unwrap();
    let gmm = sample_calibrated(exec, &fit.model, 5_000, seed).unwrap();
    let plan = build_plan(exec, &c, &[mode], &IsConfig::new(RADIUS, 50, seed)).unwrap();
    let is = sample_calibrated_is(exec, &plan, 5_000, seed, &HullConfig::default()).unwrap();
    vec![
        a_bytes,
        c_bytes,
        std::fs::read(&path).unwrap(),
        serde_json::to_vec(&fit.model).unwrap(),
        bbgc::store::encode_batch(&gmm, None, 0).unwrap(),
        bbgc::store::encode_batch(&is.latents, None, 0).unwrap(),
    ]
}

fn determinism(_: &RayonExecutor) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let reference = artifacts(&RayonExecutor::new(1), dir.path());
    let mut identical = true;
    for threads in [1, 8, 8] {
        identical &= artifacts(&RayonExecutor::new(threads), dir.path()) == reference;
    }

    let src = testbed(4);
    let set = draw(&RayonExecutor::new(1), &src, Stream::Pool, 4, 5_000);
    let (first, second) = (dir.path().join("a.bbgc"), dir.path().join("b.bbgc"));
    write_store(&first, 4, &set).unwrap();
    let (_, back) = read_store(&first).unwrap();
    let latents_exact = set.latents().as_flat().iter().zip(back.latents().as_flat()).all(|(x, y)| (*x as f32) as f64 == *y);
    let emb_err = set
        .embeddings()
        .as_flat()
        .iter()
        .zip(back.embeddings().as_flat())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    write_store(&second, 4, &back).unwrap();
    let fixed_point = std::fs::read(&first).unwrap() == std::fs::read(&second).unwrap();
    Outcome::new(
        identical && latents_exact && emb_err <= 1e-6 && fixed_point,
        format!(
            "artifacts identical across reruns and 1/8 workers: {identical}; round trip: latents f32-exact {latents_exact}, \
             embedding error {emb_err:.1e}, rewrite byte-identical {fixed_point}"
        ),
    )
}
