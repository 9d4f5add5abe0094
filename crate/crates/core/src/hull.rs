//! Convex-hull membership by Frank–Wolfe projection onto the simplex.
//!
//! Minimizes `f(a) = 0.5 * |V a - z|^2` over the probability simplex. Each
//! iteration takes the Frank–Wolfe vertex (most negative gradient) and then
//! minimizes exactly over the active vertex set (Wolfe's min-norm-point
//! variant), which terminates in finitely many steps where line-search steps
//! can stall on interior points. Every iterate bounds the distance from above
//! (the residual) and, through the duality gap, from below: `f* >= f - gap`.

use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::embedding::dot;
use crate::error::{Error, Result};
use crate::latent::Latents;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HullConfig {
    /// Membership threshold, relative to `1 + |z|`.
    pub tol: f64,
    pub max_iters: usize,
    /// Stop once the duality gap falls below this, relative to the largest
    /// squared vertex offset.
    pub gap_tol: f64,
}

impl Default for HullConfig {
    fn default() -> Self {
        Self { tol: 1e-4, max_iters: 500, gap_tol: 1e-15 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HullMembership {
    pub is_member: bool,
    /// `|z - sum_i a_i v_i|` at the returned coefficients.
    pub residual: f64,
    pub coefficients: Vec<f64>,
    pub iterations: usize,
}

/// A vertex set prepared for repeated membership queries.
#[derive(Debug, Clone, PartialEq)]
pub struct Hull {
    vertices: Latents,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Hull {
    pub fn new(vertices: Latents) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidConfig("hull needs at least one vertex".into()));
        }
        let dim = vertices.dim();
        let mut lower = vec![f64::INFINITY; dim];
        let mut upper = vec![f64::NEG_INFINITY; dim];
        for v in vertices.rows() {
            for ((lo, hi), &x) in lower.iter_mut().zip(upper.iter_mut()).zip(v) {
                *lo = lo.min(x);
                *hi = hi.max(x);
            }
        }
        Ok(Self { vertices, lower, upper })
    }

    pub fn vertices(&self) -> &Latents {
        &self.vertices
    }

    pub fn dim(&self) -> usize {
        self.vertices.dim()
    }

    /// Threshold on the residual for `z`.
    pub fn threshold(z: &[f64], cfg: &HullConfig) -> f64 {
        cfg.tol * (1.0 + libm::sqrt(dot(z, z)))
    }

    /// Cheap rejection: the distance to the hull is at least the distance to
    /// its bounding box, so a coordinate outside the box by more than the
    /// threshold settles non-membership.
    pub fn outside_bounding_box(&self, z: &[f64], threshold: f64) -> bool {
        let mut excess2 = 0.0;
        for ((lo, hi), &x) in self.lower.iter().zip(&self.upper).zip(z) {
            let e = if x < *lo {
                lo - x
            } else if x > *hi {
                x - hi
            } else {
                0.0
            };
            excess2 += e * e;
        }
        excess2 > threshold * threshold
    }

    /// Membership with the bounding-box shortcut, stopping as soon as the
    /// duality gap certifies non-membership.
    pub fn contains(&self, z: &[f64], cfg: &HullConfig) -> Result<bool> {
        self.check_dim(z)?;
        if self.outside_bounding_box(z, Self::threshold(z, cfg)) {
            return Ok(false);
        }
        Ok(self.solve(z, cfg, true).is_member)
    }

    /// Full query; runs until a member is found or the projection converges,
    /// so the residual is the distance to the hull for non-members.
    pub fn membership(&self, z: &[f64], cfg: &HullConfig) -> Result<HullMembership> {
        self.check_dim(z)?;
        Ok(self.solve(z, cfg, false))
    }

    fn check_dim(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: z.len() });
        }
        Ok(())
    }

    fn solve(&self, z: &[f64], cfg: &HullConfig, certify_outside: bool) -> HullMembership {
        let n = self.vertices.len();
        let dim = self.dim();
        let threshold = Self::threshold(z, cfg);
        let member_f = 0.5 * threshold * threshold;

        // offsets p_i = v_i - z; the residual is |sum_i a_i p_i|
        let mut p = Vec::with_capacity(n * dim);
        for v in self.vertices.rows() {
            p.extend(v.iter().zip(z).map(|(a, b)| a - b));
        }
        let row = |i: usize| &p[i * dim..(i + 1) * dim];
        let norms: Vec<f64> = (0..n).map(|i| dot(row(i), row(i))).collect();
        let scale = norms.iter().copied().fold(f64::MIN_POSITIVE, f64::max);

        let start = argmin(&norms).0;
        let mut corral = vec![start];
        let mut lambda = vec![1.0];
        let mut x = row(start).to_vec();
        let mut iterations = 0;

        loop {
            let xx = dot(&x, &x);
            let f = 0.5 * xx;
            if f <= member_f || iterations >= cfg.max_iters {
                break;
            }
            let grad: Vec<f64> = (0..n).map(|i| dot(row(i), &x)).collect();
            let (s, gs) = argmin(&grad);
            let gap = xx - gs;
            if gap <= cfg.gap_tol * scale || (certify_outside && f - gap > member_f) || corral.contains(&s) {
                break;
            }
            corral.push(s);
            lambda.push(0.0);
            iterations += 1;

            // minor cycles: move toward the affine minimizer of the corral,
            // dropping vertices whose weight reaches zero
            let stalled = loop {
                let Some(mu) = affine_minimizer(&corral, &row) else {
                    break true;
                };
                if mu.iter().all(|&m| m > 0.0) {
                    lambda = mu;
                    break false;
                }
                let (mut theta, mut drop) = (1.0, 0);
                for (k, (l, m)) in lambda.iter().zip(&mu).enumerate() {
                    if *m <= 0.0 {
                        let t = if *l > 0.0 { l / (l - m) } else { 0.0 };
                        if t < theta {
                            theta = t;
                            drop = k;
                        }
                    }
                }
                if theta == 0.0 && corral[drop] == s {
                    break true;
                }
                for (l, m) in lambda.iter_mut().zip(&mu) {
                    *l = (1.0 - theta) * *l + theta * m;
                }
                lambda[drop] = 0.0;
                let mut k = 0;
                while k < corral.len() {
                    if lambda[k] <= 0.0 {
                        corral.swap_remove(k);
                        lambda.swap_remove(k);
                    } else {
                        k += 1;
                    }
                }
                let sum: f64 = lambda.iter().sum();
                lambda.iter_mut().for_each(|l| *l /= sum);
            };
            if stalled {
                if let Some(k) = corral.iter().position(|&c| c == s) {
                    corral.swap_remove(k);
                    lambda.swap_remove(k);
                    let sum: f64 = lambda.iter().sum();
                    lambda.iter_mut().for_each(|l| *l /= sum);
                }
            }
            x.fill(0.0);
            for (&c, l) in corral.iter().zip(&lambda) {
                for (o, pi) in x.iter_mut().zip(row(c)) {
                    *o += l * pi;
                }
            }
            if stalled {
                break;
            }
        }

        let mut alpha = vec![0.0; n];
        for (&c, l) in corral.iter().zip(&lambda) {
            alpha[c] = *l;
        }
        let mut y = vec![0.0; dim];
        self.combine(&alpha, &mut y);
        let residual = libm::sqrt(sq_dist(&y, z));
        HullMembership { is_member: residual <= threshold, residual, coefficients: alpha, iterations }
    }

    fn combine(&self, alpha: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (w, vi) in alpha.iter().zip(self.vertices.rows()) {
            if *w > 0.0 {
                for (o, x) in out.iter_mut().zip(vi) {
                    *o += w * x;
                }
            }
        }
    }
}

/// Minimizer of `|sum_k mu_k p_k|` over `sum_k mu_k = 1` for the corral
/// points, from `(P^T P + 1 1^T) m = 1` and `mu = m / sum(m)`. `None` when
/// the points are numerically affinely dependent.
fn affine_minimizer<'a>(corral: &[usize], row: &impl Fn(usize) -> &'a [f64]) -> Option<Vec<f64>> {
    let k = corral.len();
    let mut g = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..=a {
            let v = dot(row(corral[a]), row(corral[b])) + 1.0;
            g[a * k + b] = v;
            g[b * k + a] = v;
        }
    }
    let diag = (0..k).map(|a| g[a * k + a]).fold(0.0, f64::max);
    // in-place Cholesky, lower triangle
    for j in 0..k {
        let mut d = g[j * k + j];
        for t in 0..j {
            d -= g[j * k + t] * g[j * k + t];
        }
        if d.is_nan() || d <= 1e-12 * diag {
            return None;
        }
        let d = libm::sqrt(d);
        g[j * k + j] = d;
        for i in j + 1..k {
            let mut s = g[i * k + j];
            for t in 0..j {
                s -= g[i * k + t] * g[j * k + t];
            }
            g[i * k + j] = s / d;
        }
    }
    let mut m = vec![1.0; k];
    for i in 0..k {
        for t in 0..i {
            m[i] -= g[i * k + t] * m[t];
        }
        m[i] /= g[i * k + i];
    }
    for i in (0..k).rev() {
        for t in i + 1..k {
            m[i] -= g[t * k + i] * m[t];
        }
        m[i] /= g[i * k + i];
    }
    let sum: f64 = m.iter().sum();
    if sum.is_nan() || sum <= 0.0 {
        return None;
    }
    Some(m.into_iter().map(|v| v / sum).collect())
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn argmin(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &x)| if x < acc.1 { (i, x) } else { acc })
}

/// One-off membership query; see [`Hull::membership`].
pub fn hull_membership(z: &[f64], vertices: &Latents, cfg: &HullConfig) -> Result<HullMembership> {
    Hull::new(vertices.clone())?.membership(z, cfg)
}
