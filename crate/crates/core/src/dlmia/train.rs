//! Pretraining and the alternating reweight / score-refinement loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::encoder::Noise;
use super::model::{pretrain_loss, reweighted_loss, Batch, DlMiaState, Gradients, LossTerms};
use super::DlMiaError;
use crate::nn::{bce_per_sample, DenseMatrix, Optimizer, OptimizerSpec, Parameterized};
use crate::numerics::auc_from;

/// Floor on the denominator of a truth-level score.
pub const TRUTH_DENOMINATOR_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Pretrain,
    Reweight,
    Estimate,
}

impl Phase {
    pub fn name(self) -> &'static str {
        match self {
            Phase::Pretrain => "pretrain",
            Phase::Reweight => "reweight",
            Phase::Estimate => "estimate",
        }
    }
}

/// One JSON-lines metrics record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub phase: Phase,
    pub epoch: usize,
    pub loss_bce: f64,
    pub loss_elbo: f64,
    pub loss_est: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_auc: Option<f64>,
}

/// Start and end of one score-refinement phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimationSummary {
    pub outer_epoch: usize,
    pub residual_start: f64,
    pub residual_end: f64,
    pub loss_start: f64,
    pub loss_end: f64,
}

/// `p = δ(A(f'), y) / max(δ(A(f_dis), y), floor)` with clamped BCE `δ`.
pub fn truth_score(probs_dis: [f64; 2], probs_truth: [f64; 2], label: u8) -> f64 {
    let delta = |p: [f64; 2]| {
        let m = DenseMatrix::from_vec(1, 2, p.to_vec()).expect("1x2");
        bce_per_sample(&m, &[label]).expect("shape")[0]
    };
    delta(probs_truth) / delta(probs_dis).max(TRUTH_DENOMINATOR_FLOOR)
}

/// The estimation constraint over scores with fixed per-sample losses.
///
/// `L(p) = Σ_j (1/N_j) Σ_i (pᵢ·δ_dis,i − δ_rew,i)²` where `j` ranges over
/// the shadow rows (first `n_shadow`) and the target rows.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationProblem {
    pub delta_dis: Vec<f64>,
    pub delta_rew: Vec<f64>,
    pub n_shadow: usize,
}

impl EstimationProblem {
    fn lambda(&self, i: usize) -> f64 {
        let n = self.delta_dis.len();
        if i < self.n_shadow {
            1.0 / self.n_shadow as f64
        } else {
            1.0 / (n - self.n_shadow) as f64
        }
    }

    pub fn loss_and_grad(&self, scores: &[f64]) -> Result<(f64, Vec<f64>), DlMiaError> {
        if scores.len() != self.delta_dis.len() || self.delta_rew.len() != self.delta_dis.len() {
            return Err(DlMiaError::Shape(format!("{} scores for {} losses", scores.len(), self.delta_dis.len())));
        }
        let mut loss = 0.0;
        let mut grad = Vec::with_capacity(scores.len());
        for (i, &p) in scores.iter().enumerate() {
            let lam = self.lambda(i);
            let r = p * self.delta_dis[i] - self.delta_rew[i];
            loss += lam * r * r;
            grad.push(2.0 * lam * r * self.delta_dis[i]);
        }
        Ok((loss, grad))
    }

    /// Mean of `|pᵢ·δ_dis,i − δ_rew,i|`.
    pub fn mean_residual(&self, scores: &[f64]) -> f64 {
        let total: f64 = scores.iter().zip(&self.delta_dis).zip(&self.delta_rew).map(|((p, d), r)| (p * d - r).abs()).sum();
        total / scores.len().max(1) as f64
    }

    /// Damped diagonal Newton step `p ← p − fraction·g/h` with `h = 2λδ_dis²`, then clamp.
    pub fn newton_step(&self, scores: &mut [f64], fraction: f64, clamp: (f64, f64)) -> Result<(), DlMiaError> {
        let (_, grad) = self.loss_and_grad(scores)?;
        for (i, p) in scores.iter_mut().enumerate() {
            let h = 2.0 * self.lambda(i) * self.delta_dis[i] * self.delta_dis[i];
            if h > 0.0 {
                *p -= fraction * grad[i] / h;
            }
            *p = p.clamp(clamp.0, clamp.1);
        }
        Ok(())
    }
}

/// Outputs of alternating training.
#[derive(Debug, Clone, PartialEq)]
pub struct AlternatingOutput {
    /// Deterministic encodings of every row after the final reweighting phase.
    pub f_rew: DenseMatrix,
    /// Member probability for each target row.
    pub target_probs: Vec<f64>,
    pub estimation: Vec<EstimationSummary>,
}

/// Owns a state, its optimizers and the noise stream.
pub struct Trainer<'r> {
    pub state: DlMiaState,
    opt_encoder: Optimizer,
    opt_decoder: Optimizer,
    opt_attack: Optimizer,
    opt_map: Optimizer,
    rng: &'r mut dyn RngCore,
    pub metrics: Vec<EpochMetrics>,
    eval_labels: Option<Vec<u8>>,
}

impl<'r> Trainer<'r> {
    /// `eval_labels` are target labels used only to log `target_auc`.
    pub fn new(state: DlMiaState, rng: &'r mut dyn RngCore, eval_labels: Option<Vec<u8>>) -> Result<Self, DlMiaError> {
        let c = &state.config;
        Ok(Self {
            opt_encoder: Optimizer::new(OptimizerSpec::adam(c.encoder_lr))?,
            opt_decoder: Optimizer::new(OptimizerSpec::adam(c.encoder_lr))?,
            opt_attack: Optimizer::new(OptimizerSpec::sgd(c.attack_lr, c.attack_momentum))?,
            opt_map: Optimizer::new(OptimizerSpec::adam(c.score_map_lr))?,
            state,
            rng,
            metrics: Vec::new(),
            eval_labels,
        })
    }

    pub fn into_state(self) -> DlMiaState {
        self.state
    }

    fn target_auc(&self, batch: &Batch) -> Result<Option<f64>, DlMiaError> {
        match &self.eval_labels {
            Some(labels) => {
                let probs = self.state.predict(&batch.target_rows())?;
                Ok(auc_from(&probs, labels).ok())
            }
            None => Ok(None),
        }
    }

    fn apply(&mut self, grads: &Gradients, update_map: bool) -> Result<(), DlMiaError> {
        if let (Some(e), Some(g)) = (&mut self.state.encoder, &grads.encoder) {
            self.opt_encoder.step(&mut e.params_mut(), &g.params())?;
        }
        if let (Some(d), Some(g)) = (&mut self.state.decoder, &grads.decoder) {
            self.opt_decoder.step(&mut d.params_mut(), &g.params())?;
        }
        self.opt_attack.step(&mut self.state.attack.params_mut(), &grads.attack.params())?;
        if update_map {
            self.opt_map.step(&mut self.state.score_map.params_mut(), &grads.score_map.params())?;
        }
        Ok(())
    }

    fn log(&mut self, phase: Phase, epoch: usize, terms: Option<&LossTerms>, loss_est: f64, batch: &Batch) -> Result<(), DlMiaError> {
        let target_auc = self.target_auc(batch)?;
        self.metrics.push(EpochMetrics {
            phase,
            epoch,
            loss_bce: terms.map_or(0.0, |t| t.bce),
            loss_elbo: terms.map_or(0.0, |t| t.elbo),
            loss_est,
            target_auc,
        });
        Ok(())
    }

    /// Joint BCE + ELBO training for `epochs` full-batch steps.
    pub fn pretrain(&mut self, batch: &Batch, epochs: usize) -> Result<(), DlMiaError> {
        for epoch in 0..epochs {
            let noise = training_noise(&self.state, &mut *self.rng);
            let (terms, grads) = pretrain_loss(&self.state, batch, noise)?;
            check_finite(&terms, Phase::Pretrain, epoch)?;
            self.apply(&grads, false)?;
            self.log(Phase::Pretrain, epoch, Some(&terms), 0.0, batch)?;
        }
        Ok(())
    }

    /// Alternates `epoch_in` reweighted steps with `epoch_in` score-refinement
    /// steps, `epoch_out` times. Scores are drawn on first use.
    pub fn alternate(&mut self, batch: &Batch, epoch_out: usize, epoch_in: usize) -> Result<AlternatingOutput, DlMiaError> {
        let cfg = self.state.config.clone();
        if epoch_out > 0 && self.state.scores.len() != batch.len() {
            let (lo, hi) = cfg.score_init;
            self.state.scores = (0..batch.len()).map(|_| self.rng.random_range(lo..=hi)).collect();
        }
        let mut estimation = Vec::with_capacity(epoch_out);
        for outer in 0..epoch_out {
            let f_dis = self.state.features(&batch.x, Noise::Deterministic)?;
            for inner in 0..epoch_in {
                let noise = training_noise(&self.state, &mut *self.rng);
                let (terms, grads) = reweighted_loss(&self.state, batch, noise)?;
                let epoch = outer * epoch_in + inner;
                check_finite(&terms, Phase::Reweight, epoch)?;
                self.apply(&grads, true)?;
                self.log(Phase::Reweight, epoch, Some(&terms), 0.0, batch)?;
            }
            let f_rew = self.state.features(&batch.x, Noise::Deterministic)?;
            let probs_rew = self.state.attack.predict(&f_rew)?;
            let probs_dis = self.state.attack.predict(&f_dis)?;
            let mut labels = batch.labels.clone();
            labels.extend((batch.n_shadow..batch.len()).map(|i| u8::from(probs_rew.get(i, 0) >= probs_rew.get(i, 1))));
            let problem = EstimationProblem {
                delta_dis: bce_per_sample(&probs_dis, &labels)?,
                delta_rew: bce_per_sample(&probs_rew, &labels)?,
                n_shadow: batch.n_shadow,
            };
            let (loss_start, _) = problem.loss_and_grad(&self.state.scores)?;
            let residual_start = problem.mean_residual(&self.state.scores);
            let mut loss_end = loss_start;
            for inner in 0..epoch_in {
                problem.newton_step(&mut self.state.scores, cfg.score_step, cfg.score_clamp)?;
                let (loss, _) = problem.loss_and_grad(&self.state.scores)?;
                if !loss.is_finite() {
                    return Err(DlMiaError::NonFinite { phase: "estimate", epoch: outer * epoch_in + inner, detail: format!("loss {loss}") });
                }
                loss_end = loss;
                self.log(Phase::Estimate, outer * epoch_in + inner, None, loss, batch)?;
            }
            estimation.push(EstimationSummary {
                outer_epoch: outer,
                residual_start,
                residual_end: problem.mean_residual(&self.state.scores),
                loss_start,
                loss_end,
            });
        }
        let f_rew = self.state.features(&batch.x, Noise::Deterministic)?;
        let target_rows: Vec<usize> = (batch.n_shadow..batch.len()).collect();
        let target_probs = self.state.predict_features(&f_rew.select_rows(&target_rows))?;
        Ok(AlternatingOutput { f_rew, target_probs, estimation })
    }
}

fn training_noise<'a>(state: &DlMiaState, rng: &'a mut dyn RngCore) -> Noise<'a> {
    if state.encoder.is_some() {
        Noise::Sampled(rng)
    } else {
        Noise::Deterministic
    }
}

fn check_finite(terms: &LossTerms, phase: Phase, epoch: usize) -> Result<(), DlMiaError> {
    if terms.total.is_finite() {
        Ok(())
    } else {
        Err(DlMiaError::NonFinite { phase: phase.name(), epoch, detail: format!("bce {} elbo {}", terms.bce, terms.elbo) })
    }
}

pub fn write_metrics_jsonl(path: &Path, metrics: &[EpochMetrics]) -> Result<(), DlMiaError> {
    let mut out = String::new();
    for m in metrics {
        out.push_str(&serde_json::to_string(m).map_err(|e| DlMiaError::Io(e.to_string()))?);
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DlMiaError::Io(format!("{}: {e}", path.display())))
}

/// CSV `user_id,origin,{prefix}0..` for a block of feature columns.
pub fn write_features_csv(path: &Path, prefix: &str, features: &DenseMatrix, users: &[u64], origins: &[&str]) -> Result<(), DlMiaError> {
    let mut out = String::from("user_id,origin");
    (0..features.cols()).for_each(|k| write!(out, ",{prefix}{k}").unwrap());
    out.push('\n');
    for i in 0..features.rows() {
        write!(out, "{},{}", users[i], origins[i]).unwrap();
        features.row(i).iter().for_each(|v| write!(out, ",{v:?}").unwrap());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| DlMiaError::Io(format!("{}: {e}", path.display())))
}
