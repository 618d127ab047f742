//! The disentangled attack: a Gaussian/vMF encoder over difference vectors,
//! a reconstruction decoder, the attack MLP, and truth-level score
//! reweighting trained in alternation.
//!
//! The biased baseline is [`DlMiaConfig::biased`]: identity encoding, no
//! ELBO and no alternating phase, through the same code path.

mod encoder;
mod model;
mod train;

pub use encoder::{EncodeCache, EncoderHeads, FrozenNoise, Noise};
pub use model::{
    elbo_loss, objective, pretrain_loss, reweighted_loss, Batch, DlMiaConfig, DlMiaState, EncoderMode, Gradients, LossTerms,
    ScoreMap,
};
pub use train::{
    truth_score, write_features_csv, write_metrics_jsonl, AlternatingOutput, EpochMetrics, EstimationProblem,
    EstimationSummary, Phase, Trainer, TRUTH_DENOMINATOR_FLOOR,
};

use rand::RngCore;
use thiserror::Error;

use crate::nn::{DenseMatrix, NnError};
use crate::numerics::NumericsError;

#[derive(Debug, Error)]
pub enum DlMiaError {
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error("non-finite loss in {phase} phase at epoch {epoch}: {detail}")]
    NonFinite { phase: &'static str, epoch: usize, detail: String },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("I/O: {0}")]
    Io(String),
}

/// Encoding of one difference vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoding {
    pub f_inv: Vec<f64>,
    pub f_spe: Vec<f64>,
    pub kl_inv: f64,
    pub kl_spe: f64,
}

/// Encodes a single difference vector with the disentangled heads.
pub fn encode(state: &DlMiaState, diff: &[f64], noise: Noise<'_>) -> Result<Encoding, DlMiaError> {
    let enc = state.encoder.as_ref().ok_or_else(|| DlMiaError::InvalidConfig("identity mode has no encoder".into()))?;
    if diff.iter().any(|v| !v.is_finite()) {
        return Err(DlMiaError::Shape("difference vector has non-finite entries".into()));
    }
    let x = DenseMatrix::from_vec(1, diff.len(), diff.to_vec())?;
    let cache = enc.forward(&x, noise)?;
    let d = enc.d_inv();
    let row = cache.features.row(0);
    Ok(Encoding { f_inv: row[..d].to_vec(), f_spe: row[d..].to_vec(), kl_inv: cache.kl_inv[0], kl_spe: cache.kl_spe[0] })
}

/// Member probabilities `y₁` from deterministic encodings.
pub fn attack_predict(state: &DlMiaState, x: &DenseMatrix) -> Result<Vec<f64>, DlMiaError> {
    state.predict(x)
}

/// Result of a full pretrain + alternating run.
#[derive(Debug, Clone)]
pub struct AttackRun {
    pub state: DlMiaState,
    /// Target member probabilities right after pretraining.
    pub pretrain_probs: Vec<f64>,
    /// Target member probabilities after alternating training.
    pub final_probs: Vec<f64>,
    /// Deterministic encodings after pretraining (all rows).
    pub f_dis: DenseMatrix,
    pub f_rew: DenseMatrix,
    pub metrics: Vec<EpochMetrics>,
    pub estimation: Vec<EstimationSummary>,
}

/// Initializes from `init_rng`, then pretrains and alternates with noise from `noise_rng`.
pub fn train_attack(
    config: DlMiaConfig,
    batch: &Batch,
    eval_labels: Option<Vec<u8>>,
    init_rng: &mut dyn RngCore,
    noise_rng: &mut dyn RngCore,
) -> Result<AttackRun, DlMiaError> {
    let state = DlMiaState::init(config.clone(), batch.x.cols(), init_rng)?;
    let mut trainer = Trainer::new(state, noise_rng, eval_labels)?;
    trainer.pretrain(batch, config.pretrain_epochs)?;
    let f_dis = trainer.state.features(&batch.x, Noise::Deterministic)?;
    let pretrain_probs = trainer.state.predict(&batch.target_rows())?;
    let out = trainer.alternate(batch, config.epoch_out, config.epoch_in)?;
    let metrics = std::mem::take(&mut trainer.metrics);
    Ok(AttackRun {
        state: trainer.into_state(),
        pretrain_probs,
        final_probs: out.target_probs,
        f_dis,
        f_rew: out.f_rew,
        metrics,
        estimation: out.estimation,
    })
}
