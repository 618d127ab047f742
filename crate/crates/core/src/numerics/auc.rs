//! ROC AUC as the Mann–Whitney statistic.

use super::{NumericsError, ScoredLabels};

/// Probability that a random positive outscores a random negative, ties
/// counted as one half. `O(n log n)`.
///
/// The count is accumulated as the integer `2·wins + ties` so the result is
/// exact rather than a sum of averaged ranks.
pub fn auc(data: &ScoredLabels) -> Result<f64, NumericsError> {
    let mut pairs: Vec<(f64, u8)> = data.scores.iter().copied().zip(data.labels.iter().copied()).collect();
    let positives = pairs.iter().filter(|(_, l)| *l == 1).count() as u64;
    let negatives = pairs.len() as u64 - positives;
    if positives == 0 || negatives == 0 {
        return Err(NumericsError::DegenerateLabels { positives: positives as usize, negatives: negatives as usize });
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut doubled_u: u128 = 0;
    let mut negatives_below: u64 = 0;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0u64, 0u64);
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            if pairs[j].1 == 1 {
                pos += 1;
            } else {
                neg += 1;
            }
            j += 1;
        }
        doubled_u += 2 * pos as u128 * negatives_below as u128 + pos as u128 * neg as u128;
        negatives_below += neg;
        i = j;
    }
    Ok(doubled_u as f64 / (2 * positives as u128 * negatives as u128) as f64)
}

/// Convenience wrapper over raw slices.
pub fn auc_from(scores: &[f64], labels: &[u8]) -> Result<f64, NumericsError> {
    auc(&ScoredLabels::new(scores.to_vec(), labels.to_vec())?)
}
