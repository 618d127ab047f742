use crate::data::RatingDataset;
use crate::nn::DenseMatrix;

/// Item-item cosine similarities over the raw rating matrix.
///
/// Norms run over every rater of an item; items without co-raters get 0.
pub fn cosine_similarity(train: &RatingDataset) -> DenseMatrix {
    let n = train.n_items;
    let mut sim = DenseMatrix::zeros(n, n);
    let mut norms = vec![0.0; n];
    for h in train.histories() {
        for (a, &(i, ri)) in h.iter().enumerate() {
            norms[i as usize] += ri * ri;
            for &(j, rj) in &h[a + 1..] {
                let v = sim.get(i as usize, j as usize) + ri * rj;
                sim.set(i as usize, j as usize, v);
                sim.set(j as usize, i as usize, v);
            }
        }
    }
    let norms: Vec<f64> = norms.into_iter().map(f64::sqrt).collect();
    for i in 0..n {
        for j in 0..n {
            let d = norms[i] * norms[j];
            let v = if i == j {
                if norms[i] > 0.0 { 1.0 } else { 0.0 }
            } else if d > 0.0 {
                sim.get(i, j) / d
            } else {
                0.0
            };
            sim.set(i, j, v);
        }
    }
    sim
}

/// `score(i) = Σ_{j ∈ history} sim(i, j) · r_j` for every item.
pub fn itembase_scores(sim: &DenseMatrix, history: &[(u32, f64)]) -> Vec<f64> {
    let mut scores = vec![0.0; sim.rows()];
    for &(j, r) in history {
        for (s, &v) in scores.iter_mut().zip(sim.row(j as usize)) {
            *s += v * r;
        }
    }
    scores
}
