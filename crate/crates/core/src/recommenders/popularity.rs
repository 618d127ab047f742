use std::collections::HashSet;

use rand::seq::index::sample;
use rand::Rng;

use super::{RecError, RecSource, RecommendationSet};
use crate::data::RatingDataset;

/// Items ranked by interaction count, ties by ascending id.
#[derive(Debug, Clone, PartialEq)]
pub struct PopularityRanking {
    ranked: Vec<u32>,
    counts: Vec<usize>,
}

impl PopularityRanking {
    pub fn from_dataset(ds: &RatingDataset) -> Self {
        let counts = ds.item_counts();
        let mut ranked: Vec<u32> = (0..ds.n_items as u32).collect();
        ranked.sort_by(|&a, &b| counts[b as usize].cmp(&counts[a as usize]).then(a.cmp(&b)));
        Self { ranked, counts }
    }

    pub fn ranked(&self) -> &[u32] {
        &self.ranked
    }

    pub fn count(&self, item: u32) -> usize {
        self.counts[item as usize]
    }

    /// The first `n` ranked items outside `history`.
    pub fn pool(&self, history: &[u32], n: usize) -> Vec<u32> {
        let seen: HashSet<u32> = history.iter().copied().collect();
        self.ranked.iter().copied().filter(|i| !seen.contains(i)).take(n).collect()
    }
}

/// Top-`k` popular items the user has not interacted with.
pub fn recommend_popular(ranking: &PopularityRanking, user: u32, history: &[u32], k: usize) -> Result<RecommendationSet, RecError> {
    let items = ranking.pool(history, k);
    if items.len() < k {
        return Err(RecError::InsufficientCatalog { user, needed: k, available: items.len() });
    }
    Ok(RecommendationSet { user, items, source: RecSource::Popularity })
}

/// `k` distinct items drawn uniformly from the top `pool_multiplier · k` popular unseen items.
pub fn recommend_popular_randomized<R: Rng + ?Sized>(
    ranking: &PopularityRanking,
    user: u32,
    history: &[u32],
    k: usize,
    pool_multiplier: usize,
    rng: &mut R,
) -> Result<RecommendationSet, RecError> {
    if pool_multiplier == 0 {
        return Err(RecError::InvalidArgument("pool multiplier must be at least 1".into()));
    }
    let pool = ranking.pool(history, pool_multiplier * k);
    if pool.len() < k {
        return Err(RecError::InsufficientCatalog { user, needed: k, available: pool.len() });
    }
    let items = sample(rng, pool.len(), k).into_iter().map(|i| pool[i]).collect();
    Ok(RecommendationSet { user, items, source: RecSource::PopularityRandomized })
}
