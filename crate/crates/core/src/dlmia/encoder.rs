//! Linear Gaussian and vMF heads over difference vectors.

use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};

use super::DlMiaError;
use crate::nn::{DenseMatrix, Linear, Parameterized, Tensor};
use crate::numerics::{householder_rotate, householder_rotate_backward, kl_vmf, sample_vmf_canonical};

/// Source of reparameterization noise for one encoder pass.
pub enum Noise<'a> {
    /// Gaussian mean and vMF mean direction, no randomness.
    Deterministic,
    Sampled(&'a mut dyn RngCore),
    /// Fixed standard-normal `eps` and canonical vMF draws `z`.
    Frozen(&'a FrozenNoise),
}

/// Reparameterization noise for a batch: `eps` is `N × d_inv`, `z` is
/// `N × m` canonical vMF draws around `e1`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenNoise {
    pub eps: DenseMatrix,
    pub z: DenseMatrix,
}

impl FrozenNoise {
    pub fn draw<R: Rng + ?Sized>(rng: &mut R, kappa: &[f64], d_inv: usize, m: usize) -> Result<Self, DlMiaError> {
        let n = kappa.len();
        let eps: Vec<f64> = (0..n * d_inv).map(|_| StandardNormal.sample(rng)).collect();
        let mut z = Vec::with_capacity(n * m);
        for &k in kappa {
            z.extend(sample_vmf_canonical(k, m, rng)?);
        }
        Ok(Self { eps: DenseMatrix::from_vec(n, d_inv, eps)?, z: DenseMatrix::from_vec(n, m, z)? })
    }
}

/// `gaussian` maps a diff to `[μ_β | log σ²_β]`; `vmf` maps it to
/// `[raw direction | raw concentration]` with `μ_α = normalize(raw)` and
/// `κ_α = softplus(raw concentration)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderHeads {
    pub gaussian: Linear,
    pub vmf: Linear,
}

/// Forward results needed for the backward pass.
#[derive(Debug, Clone)]
pub struct EncodeCache {
    x: DenseMatrix,
    mu: DenseMatrix,
    log_var: DenseMatrix,
    mu_alpha: DenseMatrix,
    raw_norm: Vec<f64>,
    raw_conc: Vec<f64>,
    pub kappa: Vec<f64>,
    noise: Option<FrozenNoise>,
    /// `[f_inv | f_spe]`, `N × (d_inv + m)`.
    pub features: DenseMatrix,
    pub kl_inv: Vec<f64>,
    pub kl_spe: Vec<f64>,
    kl_spe_grad: Vec<f64>,
}

impl EncodeCache {
    pub fn d_inv(&self) -> usize {
        self.mu.cols()
    }

    pub fn m(&self) -> usize {
        self.mu_alpha.cols()
    }
}

impl EncoderHeads {
    pub fn glorot<R: Rng + ?Sized>(input: usize, d_inv: usize, m: usize, rng: &mut R) -> Self {
        Self { gaussian: Linear::glorot(input, 2 * d_inv, rng), vmf: Linear::glorot(input, m + 1, rng) }
    }

    pub fn d_inv(&self) -> usize {
        self.gaussian.output_width() / 2
    }

    pub fn m(&self) -> usize {
        self.vmf.output_width() - 1
    }

    pub fn input_width(&self) -> usize {
        self.gaussian.input_width()
    }

    pub fn forward(&self, x: &DenseMatrix, noise: Noise<'_>) -> Result<EncodeCache, DlMiaError> {
        let (d, m, n) = (self.d_inv(), self.m(), x.rows());
        let g = self.gaussian.forward(x)?;
        let v = self.vmf.forward(x)?;
        let mu = g.columns(0, d);
        let log_var = g.columns(d, 2 * d);
        let mut mu_alpha = v.columns(0, m);
        let mut raw_norm = Vec::with_capacity(n);
        for i in 0..n {
            let row = mu_alpha.row_mut(i);
            let norm = row.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
            row.iter_mut().for_each(|a| *a /= norm);
            raw_norm.push(norm);
        }
        let raw_conc: Vec<f64> = (0..n).map(|i| v.get(i, m)).collect();
        let kappa: Vec<f64> = raw_conc.iter().map(|&c| softplus(c)).collect();

        let noise = match noise {
            Noise::Deterministic => None,
            Noise::Sampled(rng) => Some(FrozenNoise::draw(rng, &kappa, d, m)?),
            Noise::Frozen(f) => {
                if f.eps.shape() != (n, d) || f.z.shape() != (n, m) {
                    return Err(DlMiaError::Shape(format!("frozen noise {:?}/{:?} for batch of {n}", f.eps.shape(), f.z.shape())));
                }
                Some(f.clone())
            }
        };

        let mut features = DenseMatrix::zeros(n, d + m);
        let mut kl_inv = Vec::with_capacity(n);
        let mut kl_spe = Vec::with_capacity(n);
        let mut kl_spe_grad = Vec::with_capacity(n);
        for i in 0..n {
            let (mu_i, lv_i) = (mu.row(i), log_var.row(i));
            let row = features.row_mut(i);
            match &noise {
                None => {
                    row[..d].copy_from_slice(mu_i);
                    row[d..].copy_from_slice(mu_alpha.row(i));
                }
                Some(f) => {
                    for k in 0..d {
                        row[k] = mu_i[k] + (0.5 * lv_i[k]).exp() * f.eps.get(i, k);
                    }
                    row[d..].copy_from_slice(&householder_rotate(mu_alpha.row(i), f.z.row(i)));
                }
            }
            let kl: f64 = mu_i.iter().zip(lv_i).map(|(&a, &l)| -l + l.exp() + a * a - 1.0).sum::<f64>() * 0.5;
            kl_inv.push(kl);
            let (val, grad) = kl_vmf(kappa[i], m)?;
            kl_spe.push(val);
            kl_spe_grad.push(grad);
        }
        Ok(EncodeCache { x: x.clone(), mu, log_var, mu_alpha, raw_norm, raw_conc, kappa, noise, features, kl_inv, kl_spe, kl_spe_grad })
    }

    /// Parameter gradients for `dL/d(features)` plus `Σᵢ kl_weight[i]·(KL_inv,i + KL_spe,i)`.
    ///
    /// The canonical vMF draw is held fixed, so `κ` receives gradient only
    /// through its KL term.
    pub fn backward(&self, cache: &EncodeCache, d_features: &DenseMatrix, kl_weight: &[f64]) -> Result<EncoderHeads, DlMiaError> {
        let (d, m, n) = (cache.d_inv(), cache.m(), cache.x.rows());
        if d_features.shape() != (n, d + m) || kl_weight.len() != n {
            return Err(DlMiaError::Shape(format!(
                "encoder backward: features grad {:?}, {} KL weights, batch {n}",
                d_features.shape(),
                kl_weight.len()
            )));
        }
        let mut dg = DenseMatrix::zeros(n, 2 * d);
        let mut dv = DenseMatrix::zeros(n, m + 1);
        for i in 0..n {
            let up = d_features.row(i);
            let (mu_i, lv_i) = (cache.mu.row(i), cache.log_var.row(i));
            let w = kl_weight[i];
            let row = dg.row_mut(i);
            for k in 0..d {
                let var = lv_i[k].exp();
                let mut dlv = w * 0.5 * (var - 1.0);
                if let Some(f) = &cache.noise {
                    dlv += up[k] * f.eps.get(i, k) * 0.5 * (0.5 * lv_i[k]).exp();
                }
                row[k] = up[k] + w * mu_i[k];
                row[d + k] = dlv;
            }
            let alpha = cache.mu_alpha.row(i);
            let d_alpha = match &cache.noise {
                None => up[d..].to_vec(),
                Some(f) => householder_rotate_backward(alpha, f.z.row(i), &up[d..]),
            };
            let proj: f64 = alpha.iter().zip(&d_alpha).map(|(a, g)| a * g).sum();
            let row = dv.row_mut(i);
            for k in 0..m {
                row[k] = (d_alpha[k] - alpha[k] * proj) / cache.raw_norm[i];
            }
            row[m] = w * cache.kl_spe_grad[i] * sigmoid(cache.raw_conc[i]);
        }
        let (gaussian, _) = self.gaussian.backward(&cache.x, &dg)?;
        let (vmf, _) = self.vmf.backward(&cache.x, &dv)?;
        Ok(EncoderHeads { gaussian, vmf })
    }
}

impl Parameterized for EncoderHeads {
    fn params(&self) -> Vec<&[f64]> {
        let mut p = self.gaussian.params();
        p.extend(self.vmf.params());
        p
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut p = self.gaussian.params_mut();
        p.extend(self.vmf.params_mut());
        p
    }

    fn tensors(&self, prefix: &str) -> Vec<Tensor> {
        let mut t = self.gaussian.tensors(&format!("{prefix}.gaussian"));
        t.extend(self.vmf.tensors(&format!("{prefix}.vmf")));
        t
    }
}

pub(crate) fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
