//! Reference implementations for tests: plain double loops, exhaustive
//! enumeration and high-precision arithmetic, sharing no code with the crate.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

pub fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v = gaussian(rng, dim);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// A unit vector at angle `dist * pi` from `base` in a random plane.
pub fn at_distance(rng: &mut impl Rng, base: &[f64], dist: f64) -> Vec<f64> {
    let mut w = gaussian(rng, base.len());
    let proj: f64 = w.iter().zip(base).map(|(a, b)| a * b).sum();
    for (x, b) in w.iter_mut().zip(base) {
        *x -= proj * b;
    }
    let n = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    let a = dist * std::f64::consts::PI;
    base.iter().zip(&w).map(|(b, x)| a.cos() * b + a.sin() * x / n).collect()
}

pub mod naive {
    use std::f64::consts::PI;

    pub fn dot(a: &[f64], b: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..a.len() {
            s += a[i] * b[i];
        }
        s
    }

    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        dot(a, b).clamp(-1.0, 1.0).acos() / PI
    }

    pub fn similarity(d: f64, theta: f64) -> f64 {
        if d < theta {
            (theta - d).exp_m1() / theta.exp_m1()
        } else {
            0.0
        }
    }

    pub fn mean_similarity(anchor: &[f64], pool: &[Vec<f64>], theta: f64) -> f64 {
        let mut s = 0.0;
        for c in pool {
            s += similarity(distance(anchor, c), theta);
        }
        s / pool.len() as f64
    }

    pub fn mccs(mean: f64) -> f64 {
        if mean > 0.0 {
            1.0 / (1.0 - mean.ln())
        } else {
            0.0
        }
    }

    pub fn count(anchor: &[f64], pool: &[Vec<f64>], radius: f64) -> u64 {
        let mut c = 0;
        for x in pool {
            if distance(anchor, x) <= radius {
                c += 1;
            }
        }
        c
    }

    pub fn mean_std(values: &[f64]) -> (f64, f64) {
        let m = values.len() as f64;
        let mu = values.iter().sum::<f64>() / m;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (m - 1.0);
        (mu, var.sqrt())
    }

    /// Anchor indices by descending count; the earlier anchor wins ties.
    pub fn ranking(counts: &[u64]) -> Vec<usize> {
        let mut out: Vec<usize> = Vec::new();
        let mut used = vec![false; counts.len()];
        for _ in 0..counts.len() {
            let mut best = None;
            for i in 0..counts.len() {
                if used[i] {
                    continue;
                }
                match best {
                    Some(b) if counts[i] <= counts[b] => {}
                    _ => best = Some(i),
                }
            }
            let b = best.unwrap();
            used[b] = true;
            out.push(b);
        }
        out
    }

    pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

/// Euclidean projection onto a convex hull by enumerating vertex subsets.
pub mod hull_oracle {
    use nalgebra::{DMatrix, DVector};

    /// Squared distance from `z` to the hull of `vertices`.
    ///
    /// For every subset of affinely independent vertices, projects `z` onto
    /// the subset's affine hull and keeps the projection if its barycentric
    /// coordinates are nonnegative. The optimum lies on one such face.
    pub fn sq_distance(z: &[f64], vertices: &[Vec<f64>]) -> f64 {
        let n = vertices.len();
        let d = z.len();
        assert!(n <= 16, "exhaustive oracle is exponential in the vertex count");
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << n) {
            let idx: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            if idx.len() > d + 1 {
                continue;
            }
            if let Some(w) = face_projection(z, vertices, &idx) {
                if w.iter().all(|&x| x >= -1e-12) {
                    let mut p = vec![0.0; d];
                    for (k, &i) in idx.iter().enumerate() {
                        for j in 0..d {
                            p[j] += w[k] * vertices[i][j];
                        }
                    }
                    best = best.min(super::naive::sq_dist(&p, z));
                }
            }
        }
        best
    }

    /// Barycentric coordinates of the projection of `z` on the affine hull of
    /// `vertices[idx]`; `None` when the vertices are affinely dependent.
    fn face_projection(z: &[f64], vertices: &[Vec<f64>], idx: &[usize]) -> Option<Vec<f64>> {
        let d = z.len();
        let base = &vertices[idx[0]];
        let k = idx.len() - 1;
        if k == 0 {
            return Some(vec![1.0]);
        }
        let e = DMatrix::from_fn(d, k, |r, c| vertices[idx[c + 1]][r] - base[r]);
        let rhs = DVector::from_fn(d, |r, _| z[r] - base[r]);
        let gram = e.transpose() * &e;
        let chol = gram.clone().cholesky()?;
        let min_pivot = (0..k).map(|i| chol.l_dirty()[(i, i)]).fold(f64::INFINITY, f64::min);
        let scale = (0..k).map(|i| gram[(i, i)]).fold(0.0, f64::max).sqrt();
        if min_pivot <= 1e-10 * scale.max(1e-300) {
            return None;
        }
        let beta = chol.solve(&(e.transpose() * rhs));
        let mut w = Vec::with_capacity(k + 1);
        w.push(1.0 - beta.sum());
        w.extend(beta.iter().copied());
        Some(w)
    }

    pub fn is_member(z: &[f64], vertices: &[Vec<f64>], tol: f64) -> bool {
        let norm = z.iter().map(|x| x * x).sum::<f64>().sqrt();
        let thr = tol * (1.0 + norm);
        sq_distance(z, vertices).sqrt() <= thr
    }
}

/// Closed forms evaluated with 128-bit floats.
pub mod precise {
    use astro_float::{BigFloat, Consts, RoundingMode};

    const P: usize = 128;
    const RM: RoundingMode = RoundingMode::ToEven;

    pub struct Ctx(Consts);

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    /// Compensated dot product; the pair sums to the inner product with
    /// relative error near the square of the unit roundoff.
    pub fn dot2(a: &[f64], b: &[f64]) -> (f64, f64) {
        let (mut s, mut c) = (0.0, 0.0);
        for (x, y) in a.iter().zip(b) {
            let p = x * y;
            let e = x.mul_add(*y, -p);
            let (t, r) = two_sum(s, p);
            s = t;
            c += r + e;
        }
        two_sum(s, c)
    }

    impl Ctx {
        pub fn new() -> Self {
            Ctx(Consts::new().expect("constants cache"))
        }

        fn big(x: f64) -> BigFloat {
            BigFloat::from_f64(x, P)
        }

        fn narrow(&mut self, x: &BigFloat) -> f64 {
            x.format(astro_float::Radix::Dec, RM, &mut self.0).unwrap().parse().unwrap()
        }

        /// `arccos(<a, b>) / pi`, the inner product carried as a double-double
        /// with error-free products and sums.
        pub fn distance(&mut self, a: &[f64], b: &[f64]) -> f64 {
            let (hi, lo) = dot2(a, b);
            let mut dot = Self::big(hi).add(&Self::big(lo), P, RM);
            let one = Self::big(1.0);
            if dot > one {
                dot = one.clone();
            }
            if dot < one.neg() {
                dot = one.neg();
            }
            let pi = self.0.pi(P, RM);
            let d = dot.acos(P, RM, &mut self.0).div(&pi, P, RM);
            self.narrow(&d)
        }

        /// `(e^(theta - d) - 1) / (e^theta - 1)` below `theta`, else 0.
        pub fn similarity(&mut self, d: f64, theta: f64) -> f64 {
            if d >= theta {
                return 0.0;
            }
            let one = Self::big(1.0);
            let gap = Self::big(theta).sub(&Self::big(d), P, RM);
            let num = gap.exp(P, RM, &mut self.0).sub(&one, P, RM);
            let den = Self::big(theta).exp(P, RM, &mut self.0).sub(&one, P, RM);
            self.narrow(&num.div(&den, P, RM))
        }

        /// `1 / (1 - ln s)` for `s > 0`.
        pub fn mccs(&mut self, s: f64) -> f64 {
            let one = Self::big(1.0);
            let ln = Self::big(s).ln(P, RM, &mut self.0);
            let v = one.div(&one.sub(&ln, P, RM), P, RM);
            self.narrow(&v)
        }
    }
}

/// Optimal k-means by enumerating all labelings of a tiny point set.
pub mod kmeans_oracle {
    use super::naive::sq_dist;

    pub fn centroid_inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> Option<f64> {
        let d = points[0].len();
        let mut sums = vec![vec![0.0; d]; k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(labels) {
            counts[l] += 1;
            for j in 0..d {
                sums[l][j] += p[j];
            }
        }
        if counts.contains(&0) {
            return None;
        }
        let mut total = 0.0;
        for (p, &l) in points.iter().zip(labels) {
            let c: Vec<f64> = sums[l].iter().map(|s| s / counts[l] as f64).collect();
            total += sq_dist(p, &c);
        }
        Some(total)
    }

    pub fn optimal_inertia(points: &[Vec<f64>], k: usize) -> f64 {
        let n = points.len();
        let mut labels = vec![0usize; n];
        let mut best = f64::INFINITY;
        loop {
            if let Some(v) = centroid_inertia(points, &labels, k) {
                best = best.min(v);
            }
            let mut i = 0;
            loop {
                if i == n {
                    return best;
                }
                labels[i] += 1;
                if labels[i] < k {
                    break;
                }
                labels[i] = 0;
                i += 1;
            }
        }
    }
}

/// Double-double arithmetic (about 106 bits): a fast high-precision
/// reference for the closed forms, checked against [`precise`].
pub mod dd {
    #[derive(Debug, Clone, Copy, PartialEq)]
    pub struct Dd(pub f64, pub f64);

    pub const PI: Dd = Dd(std::f64::consts::PI, 1.2246467991473532e-16);

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn fast_two_sum(a: f64, b: f64) -> Dd {
        let s = a + b;
        Dd(s, b - (s - a))
    }

    impl Dd {
        pub fn from(x: f64) -> Self {
            Dd(x, 0.0)
        }

        pub fn to_f64(self) -> f64 {
            self.0 + self.1
        }

        pub fn add(self, o: Dd) -> Dd {
            let (s, e) = two_sum(self.0, o.0);
            let (t, f) = two_sum(self.1, o.1);
            let r = fast_two_sum(s, e + t);
            fast_two_sum(r.0, r.1 + f)
        }

        pub fn neg(self) -> Dd {
            Dd(-self.0, -self.1)
        }

        pub fn sub(self, o: Dd) -> Dd {
            self.add(o.neg())
        }

        pub fn mul(self, o: Dd) -> Dd {
            let p = self.0 * o.0;
            let e = self.0.mul_add(o.0, -p);
            fast_two_sum(p, e + (self.0 * o.1 + self.1 * o.0))
        }

        pub fn div(self, o: Dd) -> Dd {
            let q1 = self.0 / o.0;
            let r = self.sub(o.mul(Dd::from(q1)));
            let q2 = r.0 / o.0;
            let r = r.sub(o.mul(Dd::from(q2)));
            let q3 = r.0 / o.0;
            fast_two_sum(q1, q2).add(Dd::from(q3))
        }

        pub fn sqrt(self) -> Dd {
            if self.0 <= 0.0 {
                return Dd::from(0.0);
            }
            let y = Dd::from(self.0.sqrt());
            // one Newton step doubles the precision
            y.add(self.sub(y.mul(y)).div(y.add(y)))
        }
    }

    /// Exact products and sums: the result is the inner product correctly
    /// rounded to double-double, up to a few units in the last place.
    pub fn dot(a: &[f64], b: &[f64]) -> Dd {
        let mut acc = Dd::from(0.0);
        for (x, y) in a.iter().zip(b) {
            let p = x * y;
            acc = acc.add(Dd(p, x.mul_add(*y, -p)));
        }
        acc
    }

    /// Taylor series of `(sin y, cos y)` for `|y| <= pi`.
    pub fn sin_cos(y: Dd) -> (Dd, Dd) {
        let y2 = y.mul(y);
        let (mut sin, mut cos) = (y, Dd::from(1.0));
        let (mut ts, mut tc) = (y, Dd::from(1.0));
        let mut k = 1.0;
        loop {
            tc = tc.mul(y2).div(Dd::from(-(k * (k + 1.0))));
            ts = ts.mul(y2).div(Dd::from(-((k + 1.0) * (k + 2.0))));
            cos = cos.add(tc);
            sin = sin.add(ts);
            if tc.0.abs() < 1e-40 && ts.0.abs() < 1e-40 {
                return (sin, cos);
            }
            k += 2.0;
        }
    }

    /// `arccos x` by Newton iteration on `cos y = x`.
    pub fn acos(x: Dd) -> Dd {
        if x.0 >= 1.0 {
            return Dd::from(0.0);
        }
        if x.0 <= -1.0 {
            return PI;
        }
        let near_one = Dd::from(1.0).sub(x);
        let near_minus_one = Dd::from(1.0).add(x);
        let mut y = if near_one.0 < 1e-4 {
            near_one.add(near_one).sqrt()
        } else if near_minus_one.0 < 1e-4 {
            PI.sub(near_minus_one.add(near_minus_one).sqrt())
        } else {
            Dd::from(x.0.acos())
        };
        for _ in 0..4 {
            let (s, c) = sin_cos(y);
            y = y.add(c.sub(x).div(s));
        }
        y
    }

    /// `e^x - 1` by its Taylor series, for `|x| <= 1`.
    pub fn exp_m1(x: Dd) -> Dd {
        let (mut sum, mut term) = (x, x);
        let mut k = 2.0;
        while term.0.abs() > 1e-40 {
            term = term.mul(x).div(Dd::from(k));
            sum = sum.add(term);
            k += 1.0;
        }
        sum
    }

    pub fn distance(a: &[f64], b: &[f64]) -> f64 {
        acos(dot(a, b)).div(PI).to_f64()
    }

    pub fn similarity(d: f64, theta: f64) -> f64 {
        if d >= theta {
            return 0.0;
        }
        exp_m1(Dd::from(theta).sub(Dd::from(d))).div(exp_m1(Dd::from(theta))).to_f64()
    }
}
