mod support;

use bbgc_core::gmm::{compute_cluster_weights, estimate_covariance, sample_calibrated, MixtureModel};
use bbgc_core::hull::{Hull, HullConfig};
use bbgc_core::importance::{build_plan, IsConfig};
use bbgc_core::kmeans::{kmeans_fit, ClusterAssignment, KMeansConfig};
use bbgc_core::latent::sample_latents;
use bbgc_core::rng::{derive_seed, purpose};
use bbgc_core::source::generate;
use bbgc_core::synthetic::{PlantedSpec, SyntheticModel, SyntheticSource, TestbedConfig};
use bbgc_core::{EmbeddingVector, Embeddings, Latents, Serial};
use rand::Rng;
use support::{hull_oracle, kmeans_oracle, naive};

fn latents(rows: &[Vec<f64>]) -> Latents {
    Latents::from_flat(rows[0].len(), rows.concat()).unwrap()
}

#[test]
fn kmeans_finds_the_optimal_two_partition() {
    let pts = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
    let fit = kmeans_fit(&Serial, &latents(&pts), &KMeansConfig::new(2, 0)).unwrap();
    let mut means: Vec<Vec<f64>> = fit.means.rows().map(<[f64]>::to_vec).collect();
    means.sort_by(|a, b| a[0].total_cmp(&b[0]));
    assert_eq!(means, vec![vec![0.0, 0.5], vec![10.0, 0.5]]);
    assert_eq!(fit.assignment.inertia, kmeans_oracle::optimal_inertia(&pts, 2));
}

/// On well-separated blobs Lloyd reaches the exhaustive optimum, and at any
/// seed its output is a fixed point: nearest-mean labels, centroid means.
#[test]
fn kmeans_against_exhaustive_partitions() {
    let mut rng = support::rng(31);
    for trial in 0..20 {
        let k = 2 + trial % 2;
        let centers: Vec<Vec<f64>> = (0..k).map(|c| vec![20.0 * c as f64, -7.0 * c as f64]).collect();
        let pts: Vec<Vec<f64>> = (0..9)
            .map(|i| {
                let c = &centers[i % k];
                vec![c[0] + rng.random_range(-1.0..1.0), c[1] + rng.random_range(-1.0..1.0)]
            })
            .collect();
        let fit = kmeans_fit(&Serial, &latents(&pts), &KMeansConfig::new(k, trial as u64)).unwrap();
        let best = kmeans_oracle::optimal_inertia(&pts, k);
        assert!((fit.assignment.inertia - best).abs() <= 1e-9 * best.max(1.0), "trial {trial}");

        for (p, &l) in pts.iter().zip(&fit.assignment.labels) {
            let own = naive::sq_dist(p, fit.means.row(l));
            for m in fit.means.rows() {
                assert!(own <= naive::sq_dist(p, m));
            }
        }
        let inertia = kmeans_oracle::centroid_inertia(&pts, &fit.assignment.labels, k).unwrap();
        assert!((inertia - fit.assignment.inertia).abs() <= 1e-9);
    }
}

#[test]
fn standard_normal_single_cluster_variance() {
    let z = sample_latents(10_000, 4, 8).unwrap();
    let fit = kmeans_fit(&Serial, &z, &KMeansConfig::new(1, 0)).unwrap();
    let cov = estimate_covariance(&z, &fit.means, &fit.assignment).unwrap();
    for v in &cov.variances {
        assert!((v - 1.0).abs() < 0.05, "variance {v}");
    }
}

/// Two tight clusters far apart: pooled variance is the within-cluster spread.
#[test]
fn pooled_variance_ignores_cluster_gap() {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..2000 {
        let c = (i % 2) as f64 * 100.0;
        let s = if (i / 2) % 2 == 0 { 0.1 } else { -0.1 };
        rows.push(vec![c + s, c - s]);
        labels.push(i % 2);
    }
    let means = latents(&[vec![0.0, 0.0], vec![100.0, 100.0]]);
    let assignment = ClusterAssignment { labels, inertia: 0.0 };
    let cov = estimate_covariance(&latents(&rows), &means, &assignment).unwrap();
    for v in &cov.variances {
        let want = 0.01 * 2000.0 / 1998.0;
        assert!((v - want).abs() < 1e-12, "{v} vs {want}");
    }
}

#[test]
fn cluster_counts_match_brute_force() {
    let mut rng = support::rng(41);
    let dim = 16;
    let mode = support::unit(&mut rng, dim);
    let emb: Vec<Vec<f64>> = (0..2000)
        .map(|_| {
            let d = rng.random_range(0.0..0.6);
            support::at_distance(&mut rng, &mode, d)
        })
        .collect();
    let labels: Vec<usize> = (0..2000).map(|_| rng.random_range(0..7)).collect();
    let e = Embeddings::from_vectors(dim, emb.iter().map(|v| EmbeddingVector::new(v.clone()).unwrap()).collect::<Vec<_>>().iter()).unwrap();
    let assignment = ClusterAssignment { labels: labels.clone(), inertia: 0.0 };
    let m = EmbeddingVector::new(mode.clone()).unwrap();
    let cw = compute_cluster_weights(&Serial, &assignment, 7, &e, &[m], 0.25).unwrap();
    let mut want = vec![0u64; 7];
    for (v, &l) in emb.iter().zip(&labels) {
        if naive::distance(v, &mode) <= 0.25 {
            want[l] += 1;
        }
    }
    assert_eq!(cw.raw_counts, want);
    let inv: Vec<f64> = want.iter().map(|&c| 1.0 / (c as f64 + 1.0)).collect();
    let total: f64 = inv.iter().sum();
    for (w, i) in cw.weights.iter().zip(&inv) {
        assert!((w - i / total).abs() < 1e-15);
    }
}

#[test]
fn mixture_occupancy_within_five_sigma() {
    let weights = vec![0.5, 0.3, 0.15, 0.05];
    let means = latents(&[vec![-30.0], vec![-10.0], vec![10.0], vec![30.0]]);
    let model = MixtureModel::new(means, vec![1.0], weights.clone(), 0).unwrap();
    let n = 100_000;
    let z = sample_calibrated(&Serial, &model, n, 77).unwrap();
    let mut counts = [0usize; 4];
    for r in z.rows() {
        counts[((r[0] + 40.0) / 20.0) as usize] += 1;
    }
    for (c, w) in counts.iter().zip(&weights) {
        let sd = (n as f64 * w * (1.0 - w)).sqrt();
        assert!((*c as f64 - n as f64 * w).abs() < 5.0 * sd, "{counts:?}");
    }
    for k in 0..4 {
        let draw = model.draw(77, k as u64);
        assert_eq!(draw.1, z.row(k));
    }
}

#[test]
fn acceptance_probability_from_synthetic_counts() {
    // 2000 background identities of mass 5e-4 each against a planted mode of
    // mass 0.05; the seed draws a background sample as the reference
    let model = SyntheticModel::testbed(&TestbedConfig {
        embed_dim: 128,
        background_count: 2000,
        background_spread: 0.02,
        planted: vec![PlantedSpec { mass: 0.05, spread: 0.0 }],
        seed: 3,
    })
    .unwrap();
    let center = model.planted()[0].center.clone();
    let src = SyntheticSource::new(model, 2, 3).unwrap();
    let store = generate(&src, sample_latents(100_000, 2, derive_seed(3, purpose::POOL)).unwrap()).unwrap();
    let plan = build_plan(&Serial, &store, &[center], &IsConfig::new(0.25, 100, 3)).unwrap();
    let p = plan.entries[0].p;
    assert!((0.005..=0.02).contains(&p), "p = {p}");
}

#[test]
fn hull_membership_agrees_with_active_set_oracle() {
    let mut rng = support::rng(51);
    let cfg = HullConfig::default();
    let mut members = 0;
    for q in 0..1000 {
        let dim = 8;
        let nv = rng.random_range(1..=10);
        let verts: Vec<Vec<f64>> = (0..nv).map(|_| support::gaussian(&mut rng, dim)).collect();
        let hull = Hull::new(latents(&verts)).unwrap();
        let z: Vec<f64> = if q % 2 == 0 {
            let w: Vec<f64> = (0..nv).map(|_| rng.random_range(0.0..1.0)).collect();
            let s: f64 = w.iter().sum();
            let mut z = vec![0.0; dim];
            for (wi, v) in w.iter().zip(&verts) {
                for j in 0..dim {
                    z[j] += wi / s * v[j];
                }
            }
            let jitter = if q % 4 == 0 { 0.0 } else { rng.random_range(0.0..0.3) };
            z.iter().map(|x| x + jitter * rng.random_range(-1.0..1.0)).collect()
        } else {
            support::gaussian(&mut rng, dim)
        };
        let want = hull_oracle::is_member(&z, &verts, cfg.tol);
        assert_eq!(hull.contains(&z, &cfg).unwrap(), want, "query {q}");
        assert_eq!(hull.membership(&z, &cfg).unwrap().is_member, want, "query {q}");
        members += want as usize;
    }
    assert!(members > 50 && members < 950, "{members} members");
}

#[test]
fn orthogonal_offset_residual() {
    let verts = vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0]];
    let z = vec![0.25, 0.25, 10.0];
    let m = Hull::new(latents(&verts)).unwrap().membership(&z, &HullConfig::default()).unwrap();
    assert!(!m.is_member);
    assert!((m.residual - 10.0).abs() < 1e-6);
    assert!((hull_oracle::sq_distance(&z, &verts).sqrt() - 10.0).abs() < 1e-12);
}
