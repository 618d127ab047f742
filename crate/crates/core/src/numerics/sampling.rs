//! Reparameterized Gaussian sampling and Wood's rejection sampler for vMF.
//!
//! vMF sampling is split into a canonical draw around `e1` and a Householder
//! reflection onto the mean direction, so training code can freeze the
//! canonical draw and differentiate the reflection alone.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use super::{GaussianPosterior, NumericsError, VmfPosterior};

/// Rejection attempts before `sample_vmf` gives up.
pub const MAX_REJECTIONS: usize = 1000;

/// `mu + exp(log_var / 2) ⊙ noise`.
pub fn sample_gaussian(post: &GaussianPosterior, noise: &[f64]) -> Result<Vec<f64>, NumericsError> {
    if noise.len() != post.mu.len() {
        return Err(NumericsError::LengthMismatch { expected: post.mu.len(), got: noise.len() });
    }
    Ok(post
        .mu
        .iter()
        .zip(&post.log_var)
        .zip(noise)
        .map(|((&mu, &lv), &eps)| mu + (0.5 * lv).exp() * eps)
        .collect())
}

pub fn standard_normal_vec<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

/// Uniform draw on the unit sphere `S^{n-1}`.
pub fn uniform_sphere<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v = standard_normal_vec(rng, n);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// `Beta(alpha, alpha)` as `X / (X + Y)` with `X, Y ~ Gamma(alpha, 1)`.
fn symmetric_beta<R: Rng + ?Sized>(rng: &mut R, gamma: &Gamma<f64>) -> f64 {
    let x = gamma.sample(rng);
    let y = gamma.sample(rng);
    x / (x + y)
}

/// A vMF draw with mean direction `e1`: `[ω; √(1−ω²)·v]`.
pub fn sample_vmf_canonical<R: Rng + ?Sized>(kappa: f64, m: usize, rng: &mut R) -> Result<Vec<f64>, NumericsError> {
    if m < 3 {
        return Err(NumericsError::Domain(format!("vMF dimension must be >= 3, got {m}")));
    }
    if kappa == 0.0 {
        return Ok(uniform_sphere(rng, m));
    }
    let omega = sample_vmf_radial(kappa, m, rng)?;
    let v = uniform_sphere(rng, m - 1);
    let s = (1.0 - omega * omega).max(0.0).sqrt();
    let mut z = Vec::with_capacity(m);
    z.push(omega);
    z.extend(v.into_iter().map(|x| s * x));
    Ok(z)
}

fn sample_vmf_radial<R: Rng + ?Sized>(kappa: f64, m: usize, rng: &mut R) -> Result<f64, NumericsError> {
    let dim = (m - 1) as f64;
    let root = (4.0 * kappa * kappa + dim * dim).sqrt();
    // b = (−2κ + root)/dim, rewritten to avoid cancellation at large κ
    let b = dim / (2.0 * kappa + root);
    let a = (dim + 2.0 * kappa + root) / 4.0;
    let d = 4.0 * a * b / (1.0 + b) - dim * dim.ln();
    let gamma = Gamma::new(dim / 2.0, 1.0).map_err(|e| NumericsError::Domain(e.to_string()))?;
    for _ in 0..MAX_REJECTIONS {
        let eps = symmetric_beta(rng, &gamma);
        let denom = 1.0 - (1.0 - b) * eps;
        let omega = (1.0 - (1.0 + b) * eps) / denom;
        let t = 2.0 * a * b / denom;
        let u: f64 = rng.random();
        if dim * t.ln() - t + d >= u.ln() {
            return Ok(omega.clamp(-1.0, 1.0));
        }
    }
    Err(NumericsError::RejectionLimit { kappa, m, attempts: MAX_REJECTIONS })
}

/// Reflects `z` by the Householder map sending `e1` to `mu`.
pub fn householder_rotate(mu: &[f64], z: &[f64]) -> Vec<f64> {
    let (w, n2) = householder_axis(mu);
    if n2 < 1e-24 {
        return z.to_vec();
    }
    let wz: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum();
    let scale = 2.0 * wz / n2;
    z.iter().zip(&w).map(|(zi, wi)| zi - scale * wi).collect()
}

/// Gradient of `L(householder_rotate(mu, z))` with respect to `mu`, given
/// `upstream = dL/d(output)` and fixed `z`.
pub fn householder_rotate_backward(mu: &[f64], z: &[f64], upstream: &[f64]) -> Vec<f64> {
    let (w, n2) = householder_axis(mu);
    if n2 < 1e-24 {
        // H(mu)·e1 = mu for every mu, the only direction-free part of the Jacobian
        return upstream.iter().map(|g| g * z[0]).collect();
    }
    let wz: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum();
    let gw: f64 = w.iter().zip(upstream).map(|(a, b)| a * b).sum();
    // out = z − 2 w (wᵀz) / n²  with  w = e1 − mu
    let c = 2.0 / n2;
    let c2 = 4.0 * wz * gw / (n2 * n2);
    w.iter()
        .zip(z)
        .zip(upstream)
        .map(|((&wi, &zi), &gi)| {
            let d_w = -c * (gi * wz + zi * gw) + c2 * wi;
            -d_w
        })
        .collect()
}

fn householder_axis(mu: &[f64]) -> (Vec<f64>, f64) {
    let mut w: Vec<f64> = mu.iter().map(|x| -x).collect();
    w[0] += 1.0;
    let n2 = w.iter().map(|x| x * x).sum();
    (w, n2)
}

/// One draw from `vMF(mu, kappa)`.
pub fn sample_vmf<R: Rng + ?Sized>(post: &VmfPosterior, rng: &mut R) -> Result<Vec<f64>, NumericsError> {
    let z = sample_vmf_canonical(post.kappa, post.mu.len(), rng)?;
    Ok(householder_rotate(&post.mu, &z))
}
