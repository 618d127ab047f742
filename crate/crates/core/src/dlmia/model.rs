use rand::Rng;
use serde::{Deserialize, Serialize};

use super::encoder::{EncodeCache, EncoderHeads, Noise};
use super::DlMiaError;
use crate::nn::{bce_loss, Checkpoint, DenseMatrix, Mlp, MlpSpec, OutputHead, Parameterized, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EncoderMode {
    /// Gaussian + vMF heads with a decoder.
    Disentangled,
    /// `f_dis = f_diff`: no encoder, no decoder, no ELBO.
    Identity,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DlMiaConfig {
    pub encoder: EncoderMode,
    pub d_inv: usize,
    pub m: usize,
    pub decoder_hidden: Vec<usize>,
    pub attack_hidden: Vec<usize>,
    pub pretrain_epochs: usize,
    pub epoch_out: usize,
    pub epoch_in: usize,
    pub encoder_lr: f64,
    pub attack_lr: f64,
    pub attack_momentum: f64,
    pub score_map_lr: f64,
    /// Scores start uniform in `[score_init.0, score_init.1]`.
    pub score_init: (f64, f64),
    pub score_clamp: (f64, f64),
    /// Fraction of the exact per-score Newton step taken in each estimation step.
    pub score_step: f64,
    /// Per-sample losses are summed and scaled by `loss_batch / N`, so one
    /// full-batch step is the mean of summed-loss steps over batches of this size.
    pub loss_batch: usize,
}

impl Default for DlMiaConfig {
    fn default() -> Self {
        Self {
            encoder: EncoderMode::Disentangled,
            d_inv: 32,
            m: 32,
            decoder_hidden: vec![128, 128, 128],
            attack_hidden: vec![32, 8],
            pretrain_epochs: 200,
            epoch_out: 10,
            epoch_in: 10,
            encoder_lr: 0.001,
            attack_lr: 0.01,
            attack_momentum: 0.7,
            score_map_lr: 0.001,
            score_init: (0.9, 1.1),
            score_clamp: (1e-3, 1e3),
            score_step: 0.3,
            loss_batch: 10,
        }
    }
}

impl DlMiaConfig {
    /// The biased baseline: the attack MLP trained directly on difference vectors.
    pub fn biased() -> Self {
        Self { encoder: EncoderMode::Identity, epoch_out: 0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), DlMiaError> {
        let bad = |m: String| Err(DlMiaError::InvalidConfig(m));
        if self.encoder == EncoderMode::Disentangled && (self.d_inv == 0 || self.m < 3) {
            return bad(format!("latent sizes d_inv={} m={} (need d_inv >= 1, m >= 3)", self.d_inv, self.m));
        }
        if self.attack_hidden.contains(&0) || self.decoder_hidden.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        let (lo, hi) = self.score_clamp;
        if !(lo > 0.0 && lo < hi) || !(self.score_init.0 >= lo && self.score_init.1 <= hi && self.score_init.0 <= self.score_init.1) {
            return bad(format!("score range {:?} / init {:?}", self.score_clamp, self.score_init));
        }
        if self.loss_batch == 0 {
            return bad("loss_batch must be positive".into());
        }
        if !(self.score_step > 0.0 && self.score_step <= 1.0) {
            return bad(format!("score step {} outside (0, 1]", self.score_step));
        }
        Ok(())
    }

    pub fn feature_dim(&self, input: usize) -> usize {
        match self.encoder {
            EncoderMode::Disentangled => self.d_inv + self.m,
            EncoderMode::Identity => input,
        }
    }

    pub fn attack_spec(&self, input: usize) -> Result<MlpSpec, DlMiaError> {
        let mut widths = vec![self.feature_dim(input)];
        widths.extend(&self.attack_hidden);
        widths.push(2);
        Ok(MlpSpec::new(widths, OutputHead::Softmax2)?)
    }
}

/// `w = max(0, a·p + b)`, starting at the identity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreMap {
    pub coef: [f64; 2],
}

impl Default for ScoreMap {
    fn default() -> Self {
        Self { coef: [1.0, 0.0] }
    }
}

impl ScoreMap {
    pub fn weight(&self, p: f64) -> f64 {
        (self.coef[0] * p + self.coef[1]).max(0.0)
    }

    /// Gradient of `Σᵢ gᵢ·w(pᵢ)` given `gᵢ = dL/dwᵢ`.
    pub fn backward(&self, scores: &[f64], d_weights: &[f64]) -> ScoreMap {
        let mut coef = [0.0; 2];
        for (&p, &g) in scores.iter().zip(d_weights) {
            if self.coef[0] * p + self.coef[1] > 0.0 {
                coef[0] += g * p;
                coef[1] += g;
            }
        }
        ScoreMap { coef }
    }
}

impl Parameterized for ScoreMap {
    fn params(&self) -> Vec<&[f64]> {
        vec![&self.coef]
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.coef]
    }

    fn tensors(&self, prefix: &str) -> Vec<Tensor> {
        vec![Tensor::new(format!("{prefix}.coef"), vec![2], self.coef.to_vec())]
    }
}

/// All trainable state plus the truth-level score table.
#[derive(Debug, Clone, PartialEq)]
pub struct DlMiaState {
    pub config: DlMiaConfig,
    pub input_dim: usize,
    pub encoder: Option<EncoderHeads>,
    pub decoder: Option<Mlp>,
    pub attack: Mlp,
    pub score_map: ScoreMap,
    /// One score per training row (shadow rows first); empty until alternating training starts.
    pub scores: Vec<f64>,
}

impl DlMiaState {
    /// Glorot-initialized state. Draw order: encoder heads, decoder, attack;
    /// identity mode draws only the attack MLP.
    pub fn init<R: Rng + ?Sized>(config: DlMiaConfig, input_dim: usize, rng: &mut R) -> Result<Self, DlMiaError> {
        config.validate()?;
        if input_dim == 0 {
            return Err(DlMiaError::InvalidConfig("input dimension must be positive".into()));
        }
        let (encoder, decoder) = match config.encoder {
            EncoderMode::Disentangled => {
                let enc = EncoderHeads::glorot(input_dim, config.d_inv, config.m, rng);
                let spec = MlpSpec::decoder(config.d_inv + config.m, &config.decoder_hidden, input_dim)?;
                (Some(enc), Some(Mlp::glorot(spec, rng)))
            }
            EncoderMode::Identity => (None, None),
        };
        let attack = Mlp::glorot(config.attack_spec(input_dim)?, rng);
        Ok(Self { config, input_dim, encoder, decoder, attack, score_map: ScoreMap::default(), scores: Vec::new() })
    }

    /// `f_dis` for every row of `x`.
    pub fn features(&self, x: &DenseMatrix, noise: Noise<'_>) -> Result<DenseMatrix, DlMiaError> {
        match &self.encoder {
            Some(enc) => Ok(enc.forward(x, noise)?.features),
            None => Ok(x.clone()),
        }
    }

    /// Deterministic encodings fed through the attack; returns the member probability `y₁`.
    pub fn predict(&self, x: &DenseMatrix) -> Result<Vec<f64>, DlMiaError> {
        let f = self.features(x, Noise::Deterministic)?;
        self.predict_features(&f)
    }

    pub fn predict_features(&self, f: &DenseMatrix) -> Result<Vec<f64>, DlMiaError> {
        let probs = self.attack.predict(f)?;
        Ok((0..probs.rows()).map(|i| probs.get(i, 0)).collect())
    }

    pub fn weights(&self) -> Vec<f64> {
        self.scores.iter().map(|&p| self.score_map.weight(p)).collect()
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut t = Vec::new();
        if let Some(e) = &self.encoder {
            t.extend(e.tensors("encoder"));
        }
        if let Some(d) = &self.decoder {
            t.extend(d.tensors("decoder"));
        }
        t.extend(self.attack.tensors("attack"));
        t.extend(self.score_map.tensors("score_map"));
        t.push(Tensor::new("scores", vec![self.scores.len()], self.scores.clone()));
        Checkpoint::new(t)
    }

    /// Restores parameters into a state of matching architecture.
    pub fn load_checkpoint(&mut self, ckpt: &Checkpoint) -> Result<(), DlMiaError> {
        if let Some(e) = &mut self.encoder {
            e.load_tensors(&ckpt.with_prefix("encoder."))?;
        }
        if let Some(d) = &mut self.decoder {
            d.load_tensors(&ckpt.with_prefix("decoder."))?;
        }
        self.attack.load_tensors(&ckpt.with_prefix("attack."))?;
        self.score_map.load_tensors(&ckpt.with_prefix("score_map."))?;
        self.scores = ckpt.get("scores").map(|t| t.data.clone()).unwrap_or_default();
        Ok(())
    }
}

/// Full-batch training rows: `x` stacks shadow rows (first `n_shadow`) over
/// target rows; `labels` holds the shadow labels only.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub x: DenseMatrix,
    pub n_shadow: usize,
    pub labels: Vec<u8>,
}

impl Batch {
    pub fn new(shadow: &DenseMatrix, labels: Vec<u8>, target: &DenseMatrix) -> Result<Self, DlMiaError> {
        if labels.len() != shadow.rows() {
            return Err(DlMiaError::Shape(format!("{} labels for {} shadow rows", labels.len(), shadow.rows())));
        }
        Ok(Self { x: DenseMatrix::vconcat(shadow, target)?, n_shadow: shadow.rows(), labels })
    }

    pub fn len(&self) -> usize {
        self.x.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.x.rows() == 0
    }

    pub fn n_target(&self) -> usize {
        self.x.rows() - self.n_shadow
    }

    pub fn shadow_rows(&self) -> DenseMatrix {
        self.x.select_rows(&(0..self.n_shadow).collect::<Vec<_>>())
    }

    pub fn target_rows(&self) -> DenseMatrix {
        self.x.select_rows(&(self.n_shadow..self.len()).collect::<Vec<_>>())
    }
}

/// Loss values of one objective evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub bce: f64,
    pub elbo: f64,
    /// Unweighted per-sample BCE for shadow rows.
    pub bce_per_sample: Vec<f64>,
    /// Unweighted per-sample negative ELBO for all rows (empty in identity mode).
    pub elbo_per_sample: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub encoder: Option<EncoderHeads>,
    pub decoder: Option<Mlp>,
    pub attack: Mlp,
    pub score_map: ScoreMap,
}

/// `Σ_{shadow} bce_coef[i]·BCEᵢ + Σ_{all} elbo_coef[i]·(−ELBOᵢ)` with gradients.
///
/// `−ELBOᵢ = ½‖decoder(f_dis,i) − xᵢ‖² + KL_inv,i + KL_spe,i`. In identity
/// mode only the BCE term exists and `elbo_coef` is ignored.
pub fn objective(
    state: &DlMiaState,
    batch: &Batch,
    bce_coef: &[f64],
    elbo_coef: &[f64],
    noise: Noise<'_>,
) -> Result<(LossTerms, Gradients), DlMiaError> {
    let n_s = batch.n_shadow;
    if bce_coef.len() != n_s || batch.labels.len() != n_s {
        return Err(DlMiaError::Shape(format!("{} BCE coefficients, {} labels, {} shadow rows", bce_coef.len(), batch.labels.len(), n_s)));
    }
    match (&state.encoder, &state.decoder) {
        (Some(enc), Some(dec)) => {
            if elbo_coef.len() != batch.len() {
                return Err(DlMiaError::Shape(format!("{} ELBO coefficients for {} rows", elbo_coef.len(), batch.len())));
            }
            let cache = enc.forward(&batch.x, noise)?;
            disentangled_objective(state, enc, dec, batch, &cache, bce_coef, elbo_coef)
        }
        _ => {
            let xs = batch.shadow_rows();
            let out = state.attack.forward(&xs)?;
            let bce = bce_loss(out.output(), &batch.labels, bce_coef)?;
            let (attack, _) = state.attack.backward(&out, &bce.grad)?;
            let terms = LossTerms { total: bce.value, bce: bce.value, elbo: 0.0, bce_per_sample: bce.per_sample, elbo_per_sample: Vec::new() };
            Ok((terms, Gradients { encoder: None, decoder: None, attack, score_map: ScoreMap { coef: [0.0; 2] } }))
        }
    }
}

fn disentangled_objective(
    state: &DlMiaState,
    enc: &EncoderHeads,
    dec: &Mlp,
    batch: &Batch,
    cache: &EncodeCache,
    bce_coef: &[f64],
    elbo_coef: &[f64],
) -> Result<(LossTerms, Gradients), DlMiaError> {
    let n = batch.len();
    let n_s = batch.n_shadow;
    let features = &cache.features;

    let dec_cache = dec.forward(features)?;
    let recon = dec_cache.output();
    let mut d_recon = DenseMatrix::zeros(n, batch.x.cols());
    let mut elbo_per_sample = Vec::with_capacity(n);
    let mut elbo = 0.0;
    for i in 0..n {
        let mut sq = 0.0;
        for (k, (&r, &x)) in recon.row(i).iter().zip(batch.x.row(i)).enumerate() {
            let e = r - x;
            sq += e * e;
            d_recon.set(i, k, elbo_coef[i] * e);
        }
        let l = 0.5 * sq + cache.kl_inv[i] + cache.kl_spe[i];
        elbo_per_sample.push(l);
        elbo += elbo_coef[i] * l;
    }
    let (decoder, mut d_features) = dec.backward(&dec_cache, &d_recon)?;

    let (attack, bce) = if n_s > 0 {
        let fs = features.select_rows(&(0..n_s).collect::<Vec<_>>());
        let out = state.attack.forward(&fs)?;
        let bce = bce_loss(out.output(), &batch.labels, bce_coef)?;
        let (attack, d_fs) = state.attack.backward(&out, &bce.grad)?;
        for i in 0..n_s {
            d_features.row_mut(i).iter_mut().zip(d_fs.row(i)).for_each(|(a, b)| *a += b);
        }
        (attack, Some(bce))
    } else {
        let mut zero = state.attack.clone();
        zero.params_mut().into_iter().for_each(|p| p.fill(0.0));
        (zero, None)
    };
    let encoder = enc.backward(cache, &d_features, elbo_coef)?;
    let (bce_value, bce_per_sample) = bce.map_or((0.0, Vec::new()), |b| (b.value, b.per_sample));
    let terms = LossTerms { total: bce_value + elbo, bce: bce_value, elbo, bce_per_sample, elbo_per_sample };
    Ok((terms, Gradients { encoder: Some(encoder), decoder: Some(decoder), attack, score_map: ScoreMap { coef: [0.0; 2] } }))
}

/// Pretraining objective: `(1/N_s)·Σ BCE + (1/N)·Σ (−ELBO)`.
pub fn pretrain_loss(state: &DlMiaState, batch: &Batch, noise: Noise<'_>) -> Result<(LossTerms, Gradients), DlMiaError> {
    let (bc, ec) = coefficients(batch, None, state.config.loss_batch);
    objective(state, batch, &bc, &ec, noise)
}

/// Reweighted objective: per-sample weights `w = score_map(p)` scale both
/// terms; the gradient also reaches the score map. Scores stay fixed.
pub fn reweighted_loss(state: &DlMiaState, batch: &Batch, noise: Noise<'_>) -> Result<(LossTerms, Gradients), DlMiaError> {
    if state.scores.len() != batch.len() {
        return Err(DlMiaError::Shape(format!("{} scores for {} rows", state.scores.len(), batch.len())));
    }
    let w = state.weights();
    let loss_batch = state.config.loss_batch;
    let (bc, ec) = coefficients(batch, Some(&w), loss_batch);
    let (terms, mut grads) = objective(state, batch, &bc, &ec, noise)?;
    let (c_s, c) = (batch_scale(loss_batch, batch.n_shadow), batch_scale(loss_batch, batch.len()));
    let d_w: Vec<f64> = (0..batch.len())
        .map(|i| {
            let b = terms.bce_per_sample.get(i).map_or(0.0, |l| l * c_s);
            let e = terms.elbo_per_sample.get(i).map_or(0.0, |l| l * c);
            b + e
        })
        .collect();
    grads.score_map = state.score_map.backward(&state.scores, &d_w);
    Ok((terms, grads))
}

/// Sum of per-sample negative ELBO (no BCE) for single-vector use.
pub fn elbo_loss(state: &DlMiaState, x: &DenseMatrix, noise: Noise<'_>) -> Result<(LossTerms, Gradients), DlMiaError> {
    let batch = Batch { x: x.clone(), n_shadow: 0, labels: Vec::new() };
    objective(state, &batch, &[], &vec![1.0; x.rows()], noise)
}

fn batch_scale(loss_batch: usize, n: usize) -> f64 {
    loss_batch as f64 / n.max(1) as f64
}

fn coefficients(batch: &Batch, weights: Option<&[f64]>, loss_batch: usize) -> (Vec<f64>, Vec<f64>) {
    let w = |i: usize| weights.map_or(1.0, |w| w[i]);
    let (c_s, c) = (batch_scale(loss_batch, batch.n_shadow), batch_scale(loss_batch, batch.len()));
    let bc = (0..batch.n_shadow).map(|i| w(i) * c_s).collect();
    let ec = (0..batch.len()).map(|i| w(i) * c).collect();
    (bc, ec)
}
