//! Target and shadow recommenders: item-based collaborative filtering and a
//! latent factor model, plus popularity lists for non-members and the
//! Popularity Randomization defense.

mod itembase;
mod lfm;
mod popularity;

pub use itembase::{cosine_similarity, itembase_scores};
pub use lfm::{factorize, Factorization, LfmConfig};
pub use popularity::{recommend_popular, recommend_popular_randomized, PopularityRanking};

use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::RatingDataset;
use crate::nn::{Checkpoint, DenseMatrix, NnError, Tensor};

#[derive(Debug, Error)]
pub enum RecError {
    #[error("training data is empty")]
    EmptyTraining,
    #[error("LFM diverged at epoch {epoch}: RMSE {rmse} vs initial {initial}")]
    Diverged { epoch: usize, rmse: f64, initial: f64 },
    #[error("user {user}: need {needed} candidate items, only {available} available")]
    InsufficientCatalog { user: u32, needed: usize, available: usize },
    #[error("user {0} is not in the recommender's training set")]
    UnknownUser(u32),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("checkpoint: {0}")]
    Checkpoint(#[from] NnError),
    #[error("{path}: {source}")]
    Io { path: String, #[source] source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RecommenderKind {
    ItemBase,
    Lfm,
}

impl RecommenderKind {
    pub fn code(self) -> char {
        match self {
            RecommenderKind::ItemBase => 'I',
            RecommenderKind::Lfm => 'L',
        }
    }

    pub fn from_code(c: char) -> Option<Self> {
        match c {
            'I' => Some(RecommenderKind::ItemBase),
            'L' => Some(RecommenderKind::Lfm),
            _ => None,
        }
    }
}

impl fmt::Display for RecommenderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RecommenderKind::ItemBase => "item_base",
            RecommenderKind::Lfm => "lfm",
        })
    }
}

impl FromStr for RecommenderKind {
    type Err = RecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "item_base" | "itembase" | "I" => Ok(RecommenderKind::ItemBase),
            "lfm" | "L" => Ok(RecommenderKind::Lfm),
            other => Err(RecError::InvalidArgument(format!("unknown recommender {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RecSource {
    Model,
    Popularity,
    PopularityRandomized,
}

impl RecSource {
    pub fn as_str(self) -> &'static str {
        match self {
            RecSource::Model => "model",
            RecSource::Popularity => "popularity",
            RecSource::PopularityRandomized => "popularity_randomized",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendationSet {
    pub user: u32,
    pub items: Vec<u32>,
    pub source: RecSource,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FittedState {
    ItemBase { similarity: DenseMatrix },
    Lfm(Factorization),
}

/// A fitted recommender with the training histories it scores from.
#[derive(Debug, Clone, PartialEq)]
pub struct RecommenderModel {
    pub state: FittedState,
    /// `(item, rating)` lists indexed by dense user id; empty for non-training users.
    histories: Vec<Vec<(u32, f64)>>,
    training_users: Vec<u32>,
    n_items: usize,
}

pub fn train_itembase(train: &RatingDataset) -> Result<RecommenderModel, RecError> {
    if train.is_empty() {
        return Err(RecError::EmptyTraining);
    }
    Ok(RecommenderModel::new(FittedState::ItemBase { similarity: cosine_similarity(train) }, train))
}

pub fn train_lfm<R: Rng + ?Sized>(train: &RatingDataset, cfg: &LfmConfig, rng: &mut R) -> Result<RecommenderModel, RecError> {
    Ok(RecommenderModel::new(FittedState::Lfm(factorize(train, cfg, rng)?), train))
}

pub fn train_recommender<R: Rng + ?Sized>(
    kind: RecommenderKind,
    train: &RatingDataset,
    cfg: &LfmConfig,
    rng: &mut R,
) -> Result<RecommenderModel, RecError> {
    match kind {
        RecommenderKind::ItemBase => train_itembase(train),
        RecommenderKind::Lfm => train_lfm(train, cfg, rng),
    }
}

impl RecommenderModel {
    fn new(state: FittedState, train: &RatingDataset) -> Self {
        Self { state, histories: train.histories(), training_users: train.active_users(), n_items: train.n_items }
    }

    pub fn kind(&self) -> RecommenderKind {
        match self.state {
            FittedState::ItemBase { .. } => RecommenderKind::ItemBase,
            FittedState::Lfm(_) => RecommenderKind::Lfm,
        }
    }

    pub fn training_users(&self) -> &[u32] {
        &self.training_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn history(&self, user: u32) -> &[(u32, f64)] {
        self.histories.get(user as usize).map_or(&[], Vec::as_slice)
    }

    pub fn is_training_user(&self, user: u32) -> bool {
        self.training_users.binary_search(&user).is_ok()
    }

    /// Model score of every item for a training user.
    pub fn scores(&self, user: u32) -> Result<Vec<f64>, RecError> {
        if !self.is_training_user(user) {
            return Err(RecError::UnknownUser(user));
        }
        Ok(match &self.state {
            FittedState::ItemBase { similarity } => itembase_scores(similarity, self.history(user)),
            FittedState::Lfm(f) => {
                let p = f.user_factors.row(user as usize);
                (0..self.n_items).map(|i| lfm::dot(p, f.item_factors.row(i))).collect()
            }
        })
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        match &self.state {
            FittedState::ItemBase { similarity } => {
                tensors.push(matrix_tensor("itembase.similarity", similarity));
            }
            FittedState::Lfm(f) => {
                tensors.push(matrix_tensor("lfm.user_factors", &f.user_factors));
                tensors.push(matrix_tensor("lfm.item_factors", &f.item_factors));
                tensors.push(Tensor::new("lfm.rmse_trace", vec![f.rmse_trace.len()], f.rmse_trace.clone()));
            }
        }
        let mut offsets = vec![0.0];
        let mut items = Vec::new();
        let mut ratings = Vec::new();
        for h in &self.histories {
            items.extend(h.iter().map(|&(i, _)| i as f64));
            ratings.extend(h.iter().map(|&(_, r)| r));
            offsets.push(items.len() as f64);
        }
        tensors.push(Tensor::new("meta.n_items", vec![1], vec![self.n_items as f64]));
        tensors.push(Tensor::new("history.offsets", vec![offsets.len()], offsets));
        tensors.push(Tensor::new("history.items", vec![items.len()], items));
        tensors.push(Tensor::new("history.ratings", vec![ratings.len()], ratings));
        Checkpoint::new(tensors)
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, RecError> {
        let missing = |n: &str| RecError::Checkpoint(NnError::Checkpoint(format!("missing tensor {n}")));
        let get = |n: &str| ckpt.get(n).ok_or_else(|| missing(n));
        let state = if let Some(sim) = ckpt.get("itembase.similarity") {
            FittedState::ItemBase { similarity: tensor_matrix(sim)? }
        } else {
            FittedState::Lfm(Factorization {
                user_factors: tensor_matrix(get("lfm.user_factors")?)?,
                item_factors: tensor_matrix(get("lfm.item_factors")?)?,
                rmse_trace: get("lfm.rmse_trace")?.data.clone(),
            })
        };
        let offsets = &get("history.offsets")?.data;
        let items = &get("history.items")?.data;
        let ratings = &get("history.ratings")?.data;
        let histories: Vec<Vec<(u32, f64)>> = offsets
            .windows(2)
            .map(|w| (w[0] as usize..w[1] as usize).map(|k| (items[k] as u32, ratings[k])).collect())
            .collect();
        let training_users = histories.iter().enumerate().filter(|(_, h)| !h.is_empty()).map(|(u, _)| u as u32).collect();
        let n_items = get("meta.n_items")?.data[0] as usize;
        Ok(Self { state, histories, training_users, n_items })
    }
}

fn matrix_tensor(name: &str, m: &DenseMatrix) -> Tensor {
    Tensor::new(name, vec![m.rows(), m.cols()], m.as_slice().to_vec())
}

fn tensor_matrix(t: &Tensor) -> Result<DenseMatrix, RecError> {
    match t.shape.as_slice() {
        [r, c] => Ok(DenseMatrix::from_vec(*r, *c, t.data.clone())?),
        _ => Err(RecError::Checkpoint(NnError::Checkpoint(format!("tensor {} is not a matrix", t.name)))),
    }
}

/// The `k` highest-scoring items outside the user's training history; ties by ascending id.
pub fn recommend_top_k(model: &RecommenderModel, user: u32, k: usize) -> Result<RecommendationSet, RecError> {
    let scores = model.scores(user)?;
    let seen: HashSet<u32> = model.history(user).iter().map(|&(i, _)| i).collect();
    let mut candidates: Vec<u32> = (0..model.n_items as u32).filter(|i| !seen.contains(i)).collect();
    if candidates.len() < k {
        return Err(RecError::InsufficientCatalog { user, needed: k, available: candidates.len() });
    }
    candidates.sort_by(|&a, &b| scores[b as usize].total_cmp(&scores[a as usize]).then(a.cmp(&b)));
    candidates.truncate(k);
    Ok(RecommendationSet { user, items: candidates, source: RecSource::Model })
}

/// CSV `user_id,rank,item_id,source` in original ids; ranks start at 1.
pub fn write_recommendations(path: &Path, sets: &[RecommendationSet], user_ids: &[u64], item_ids: &[u64]) -> Result<(), RecError> {
    let mut out = String::from("user_id,rank,item_id,source\n");
    for s in sets {
        for (rank, &item) in s.items.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{},{}\n",
                user_ids[s.user as usize],
                rank + 1,
                item_ids[item as usize],
                s.source.as_str()
            ));
        }
    }
    std::fs::write(path, out).map_err(|e| RecError::Io { path: path.display().to_string(), source: e })
}
