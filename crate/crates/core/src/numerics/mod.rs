//! Scalar math shared by every other module: Bessel and gamma functions,
//! Gaussian and von Mises–Fisher KL terms and samplers, and ROC AUC.

mod auc;
mod kl;
mod sampling;
mod special;

pub use auc::{auc, auc_from};
pub use kl::{kl_gaussian, kl_vmf, log_vmf_normalizer, mean_resultant_length, GaussianKl, KAPPA_ZERO};
pub use sampling::{
    householder_rotate, householder_rotate_backward, sample_gaussian, sample_vmf, sample_vmf_canonical,
    standard_normal_vec, uniform_sphere, MAX_REJECTIONS,
};
pub use special::{bessel_i, log_bessel_i, log_gamma, BESSEL_OVERFLOW_GUARD, SERIES_SWITCH};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum NumericsError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("overflow: {0}")]
    Overflow(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("AUC needs both classes, got {positives} positives and {negatives} negatives")]
    DegenerateLabels { positives: usize, negatives: usize },
    #[error("vMF rejection sampler exceeded {attempts} attempts (kappa={kappa}, m={m})")]
    RejectionLimit { kappa: f64, m: usize, attempts: usize },
    #[error("invalid posterior: {0}")]
    InvalidPosterior(String),
}

/// Diagonal Gaussian posterior, parameterized by mean and log-variance.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub log_var: Vec<f64>,
}

impl GaussianPosterior {
    pub fn new(mu: Vec<f64>, log_var: Vec<f64>) -> Result<Self, NumericsError> {
        if mu.is_empty() || mu.len() != log_var.len() {
            return Err(NumericsError::InvalidPosterior(format!(
                "mu has {} entries, log_var has {}",
                mu.len(),
                log_var.len()
            )));
        }
        if mu.iter().chain(&log_var).any(|x| !x.is_finite()) {
            return Err(NumericsError::InvalidPosterior("non-finite entry".into()));
        }
        Ok(Self { mu, log_var })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// von Mises–Fisher posterior on `S^{m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfPosterior {
    pub mu: Vec<f64>,
    pub kappa: f64,
}

impl VmfPosterior {
    pub fn new(mu: Vec<f64>, kappa: f64) -> Result<Self, NumericsError> {
        if mu.len() < 3 {
            return Err(NumericsError::InvalidPosterior(format!("vMF needs m >= 3, got {}", mu.len())));
        }
        let norm = mu.iter().map(|x| x * x).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-6 {
            return Err(NumericsError::InvalidPosterior(format!("mean direction has norm {norm}")));
        }
        if !(kappa >= 0.0) || !kappa.is_finite() {
            return Err(NumericsError::InvalidPosterior(format!("kappa = {kappa}")));
        }
        Ok(Self { mu, kappa })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Classifier scores paired with binary ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredLabels {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredLabels {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self, NumericsError> {
        if scores.is_empty() || scores.len() != labels.len() {
            return Err(NumericsError::LengthMismatch { expected: scores.len(), got: labels.len() });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(NumericsError::Domain("labels must be 0 or 1".into()));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(NumericsError::Domain("NaN score".into()));
        }
        Ok(Self { scores, labels })
    }
}
