use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::RecError;
use crate::data::RatingDataset;
use crate::nn::DenseMatrix;

/// Regularized matrix factorization trained by per-observation SGD.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LfmConfig {
    pub embed: usize,
    pub lr: f64,
    pub reg: f64,
    pub epochs: usize,
    pub init_sd: f64,
}

impl Default for LfmConfig {
    fn default() -> Self {
        Self { embed: 100, lr: 0.01, reg: 0.01, epochs: 50, init_sd: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Factorization {
    pub user_factors: DenseMatrix,
    pub item_factors: DenseMatrix,
    /// Training RMSE before the first epoch, then after each epoch.
    pub rmse_trace: Vec<f64>,
}

impl Factorization {
    pub fn final_rmse(&self) -> f64 {
        *self.rmse_trace.last().expect("trace holds the initial RMSE")
    }

    pub fn predict(&self, user: u32, item: u32) -> f64 {
        dot(self.user_factors.row(user as usize), self.item_factors.row(item as usize))
    }
}

/// Minimizes `Σ (r − pᵤᵀqᵢ)² + reg(‖pᵤ‖² + ‖qᵢ‖²)` over observed ratings.
///
/// Observations are visited in a fresh shuffled order each epoch. Training
/// aborts when the RMSE exceeds ten times its initial value.
pub fn factorize<R: Rng + ?Sized>(train: &RatingDataset, cfg: &LfmConfig, rng: &mut R) -> Result<Factorization, RecError> {
    if cfg.embed == 0 {
        return Err(RecError::InvalidArgument("embedding size must be at least 1".into()));
    }
    if train.is_empty() {
        return Err(RecError::EmptyTraining);
    }
    let init = Normal::new(0.0, cfg.init_sd).map_err(|e| RecError::InvalidArgument(e.to_string()))?;
    let mut draw = |rows: usize| {
        let data = (0..rows * cfg.embed).map(|_| init.sample(rng)).collect();
        DenseMatrix::from_vec(rows, cfg.embed, data).expect("sized")
    };
    let mut users = draw(train.n_users);
    let mut items = draw(train.n_items);
    let rmse = |u: &DenseMatrix, i: &DenseMatrix| {
        let sse: f64 = train
            .records
            .iter()
            .map(|r| (r.rating - dot(u.row(r.user as usize), i.row(r.item as usize))).powi(2))
            .sum();
        (sse / train.len() as f64).sqrt()
    };
    let initial = rmse(&users, &items);
    let mut trace = vec![initial];
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(rng);
        for &idx in &order {
            let r = &train.records[idx];
            let p = users.row_mut(r.user as usize);
            let q = items.row_mut(r.item as usize);
            let err = r.rating - dot(p, q);
            for (pk, qk) in p.iter_mut().zip(q.iter_mut()) {
                let (pv, qv) = (*pk, *qk);
                *pk += cfg.lr * (err * qv - cfg.reg * pv);
                *qk += cfg.lr * (err * pv - cfg.reg * qv);
            }
        }
        let current = rmse(&users, &items);
        trace.push(current);
        if !current.is_finite() || current > 10.0 * initial {
            return Err(RecError::Diverged { epoch: epoch + 1, rmse: current, initial });
        }
    }
    Ok(Factorization { user_factors: users, item_factors: items, rmse_trace: trace })
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Rating;
    use crate::seed::stage_rng;

    fn rank_one(n_users: usize, n_items: usize) -> RatingDataset {
        let mut records = Vec::new();
        for u in 0..n_users {
            for i in 0..n_items {
                let a = 1.0 + (u % 5) as f64 * 0.2;
                let b = 1.0 + (i % 4) as f64 * 0.3;
                records.push(Rating { user: u as u32, item: i as u32, rating: a * b, timestamp: 0 });
            }
        }
        RatingDataset::from_parts(records, (0..n_users as u64).collect(), (0..n_items as u64).collect())
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let ds = rank_one(4, 3);
        let cfg = LfmConfig { embed: 2, epochs: 0, ..LfmConfig::default() };
        let f = factorize(&ds, &cfg, &mut stage_rng(1, "lfm")).unwrap();
        let mut rng = stage_rng(1, "lfm");
        let init = Normal::new(0.0, 0.1).unwrap();
        let expected: Vec<f64> = (0..8).map(|_| init.sample(&mut rng)).collect();
        assert_eq!(f.user_factors.as_slice(), &expected[..]);
        assert_eq!(f.rmse_trace.len(), 1);
    }

    #[test]
    fn huge_learning_rate_diverges() {
        let ds = rank_one(10, 8);
        let cfg = LfmConfig { embed: 4, lr: 5.0, epochs: 20, ..LfmConfig::default() };
        assert!(matches!(factorize(&ds, &cfg, &mut stage_rng(1, "lfm")), Err(RecError::Diverged { .. })));
    }
}
