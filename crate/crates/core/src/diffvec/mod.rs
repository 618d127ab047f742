//! Difference vectors: the mean embedding of a user's history minus the mean
//! embedding of what a recommender served them.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{RatingDataset, SplitBundle};
use crate::nn::DenseMatrix;
use crate::recommenders::{
    factorize, recommend_popular, recommend_popular_randomized, recommend_top_k, LfmConfig, PopularityRanking, RecError,
    RecommendationSet, RecommenderModel,
};

#[derive(Debug, Error)]
pub enum DiffError {
    #[error("{0} items have no interactions in the extraction subset (first: {1})")]
    Coverage(usize, u32),
    #[error("difference vector needs a nonempty {0}")]
    EmptySet(&'static str),
    #[error("item {item} is outside the {n_items}-item catalog")]
    UnknownItem { item: u32, n_items: usize },
    #[error(transparent)]
    Recommender(#[from] RecError),
    #[error("{path}: {source}")]
    Io { path: String, #[source] source: std::io::Error },
}

/// One row per catalog item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemEmbeddings {
    pub matrix: DenseMatrix,
}

impl ItemEmbeddings {
    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn n_items(&self) -> usize {
        self.matrix.rows()
    }

    /// CSV `item_id,dim0..dimD` in original item ids.
    pub fn write_csv(&self, path: &Path, item_ids: &[u64]) -> Result<(), DiffError> {
        let mut out = String::from("item_id");
        (0..self.dim()).for_each(|d| write!(out, ",dim{d}").unwrap());
        out.push('\n');
        for (i, id) in item_ids.iter().enumerate().take(self.n_items()) {
            write!(out, "{id}").unwrap();
            self.matrix.row(i).iter().for_each(|v| write!(out, ",{v}").unwrap());
            out.push('\n');
        }
        write(path, out)
    }
}

/// Factorizes the extraction ratings and keeps the item factors.
pub fn fit_item_embeddings<R: Rng + ?Sized>(extraction: &RatingDataset, cfg: &LfmConfig, rng: &mut R) -> Result<ItemEmbeddings, DiffError> {
    let counts = extraction.item_counts();
    let uncovered: Vec<u32> = (0..counts.len() as u32).filter(|&i| counts[i as usize] == 0).collect();
    if let Some(&first) = uncovered.first() {
        return Err(DiffError::Coverage(uncovered.len(), first));
    }
    Ok(ItemEmbeddings { matrix: factorize(extraction, cfg, rng)?.item_factors })
}

/// `mean(emb[history]) − mean(emb[recs])`.
pub fn difference_vector(emb: &ItemEmbeddings, history: &[u32], recs: &[u32]) -> Result<Vec<f64>, DiffError> {
    let h = mean_embedding(emb, history, "history")?;
    let r = mean_embedding(emb, recs, "recommendation list")?;
    Ok(h.iter().zip(&r).map(|(a, b)| a - b).collect())
}

fn mean_embedding(emb: &ItemEmbeddings, items: &[u32], what: &'static str) -> Result<Vec<f64>, DiffError> {
    if items.is_empty() {
        return Err(DiffError::EmptySet(what));
    }
    let mut sum = vec![0.0; emb.dim()];
    for &i in items {
        if i as usize >= emb.n_items() {
            return Err(DiffError::UnknownItem { item: i, n_items: emb.n_items() });
        }
        sum.iter_mut().zip(emb.matrix.row(i as usize)).for_each(|(s, v)| *s += v);
    }
    let n = items.len() as f64;
    Ok(sum.into_iter().map(|s| s / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Origin {
    Shadow,
    Target,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Origin::Shadow => "shadow",
            Origin::Target => "target",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSample {
    pub user: u32,
    pub diff: Vec<f64>,
    pub origin: Origin,
    /// Known for shadow samples only.
    pub label: Option<u8>,
    pub truth_score: f64,
    pub weight: f64,
}

/// Attack-training inputs. Target labels live apart from the samples and
/// are only for evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackDataset {
    pub shadow: Vec<AttackSample>,
    pub target: Vec<AttackSample>,
    pub target_labels: Vec<u8>,
    pub shadow_recs: Vec<RecommendationSet>,
    pub target_recs: Vec<RecommendationSet>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    pub pool_multiplier: usize,
}

/// Builds shadow and target samples.
///
/// Members get the recommender's top-`k`; non-members get the top-`k`
/// popular items of the recommender's training data, or a randomized draw
/// from the popular pool when `defense` is set on the target side. Member
/// histories are their training interactions; non-member histories are their
/// records in the shadow or target subset.
pub fn build_attack_dataset<R: Rng + ?Sized>(
    bundle: &SplitBundle,
    emb: &ItemEmbeddings,
    shadow_model: &RecommenderModel,
    target_model: &RecommenderModel,
    k: usize,
    defense: Option<DefenseConfig>,
    rng: &mut R,
) -> Result<AttackDataset, DiffError> {
    let (shadow, shadow_recs) = side(
        &bundle.shadow,
        &bundle.shadow_members,
        &bundle.shadow_nonmembers,
        emb,
        shadow_model,
        k,
        None,
        rng,
        Origin::Shadow,
    )?;
    let (mut target, target_recs) = side(
        &bundle.target,
        &bundle.target_members,
        &bundle.target_nonmembers,
        emb,
        target_model,
        k,
        defense,
        rng,
        Origin::Target,
    )?;
    let target_labels = target.iter().map(|s| s.label.expect("assigned above")).collect();
    target.iter_mut().for_each(|s| s.label = None);
    Ok(AttackDataset { shadow, target, target_labels, shadow_recs, target_recs })
}

#[allow(clippy::too_many_arguments)]
fn side<R: Rng + ?Sized>(
    subset: &RatingDataset,
    members: &[u32],
    nonmembers: &[u32],
    emb: &ItemEmbeddings,
    model: &RecommenderModel,
    k: usize,
    defense: Option<DefenseConfig>,
    rng: &mut R,
    origin: Origin,
) -> Result<(Vec<AttackSample>, Vec<RecommendationSet>), DiffError> {
    let member_recs: Vec<RecommendationSet> =
        members.par_iter().map(|&u| recommend_top_k(model, u, k)).collect::<Result<_, _>>()?;
    let ranking = PopularityRanking::from_dataset(&subset.subset_users(members));
    let mut nonmember_recs = Vec::with_capacity(nonmembers.len());
    for &u in nonmembers {
        let history = subset.history_items(u);
        nonmember_recs.push(match defense {
            Some(d) => recommend_popular_randomized(&ranking, u, &history, k, d.pool_multiplier, rng)?,
            None => recommend_popular(&ranking, u, &history, k)?,
        });
    }
    let mut samples = Vec::with_capacity(member_recs.len() + nonmember_recs.len());
    for (recs, label) in [(&member_recs, 1u8), (&nonmember_recs, 0u8)] {
        for rec in recs.iter() {
            let history = subset.history_items(rec.user);
            samples.push(AttackSample {
                user: rec.user,
                diff: difference_vector(emb, &history, &rec.items)?,
                origin,
                label: Some(label),
                truth_score: 1.0,
                weight: 1.0,
            });
        }
    }
    let mut recs = member_recs;
    recs.extend(nonmember_recs);
    Ok((samples, recs))
}

/// CSV `user_id,origin,label,diff0..diffD`; `labels` overrides missing sample labels.
pub fn write_attack_csv(path: &Path, samples: &[AttackSample], labels: Option<&[u8]>, user_ids: &[u64]) -> Result<(), DiffError> {
    let dim = samples.first().map_or(0, |s| s.diff.len());
    let mut out = String::from("user_id,origin,label");
    (0..dim).for_each(|d| write!(out, ",diff{d}").unwrap());
    out.push('\n');
    for (i, s) in samples.iter().enumerate() {
        let label = s.label.or_else(|| labels.map(|l| l[i]));
        write!(out, "{},{},", user_ids[s.user as usize], s.origin.as_str()).unwrap();
        if let Some(l) = label {
            write!(out, "{l}").unwrap();
        }
        s.diff.iter().for_each(|v| write!(out, ",{v:?}").unwrap());
        out.push('\n');
    }
    write(path, out)
}

/// Parses a file written by [`write_attack_csv`]. Returns samples (origin
/// from the file, labels as written) keyed by original user id.
pub fn read_attack_csv(path: &Path) -> Result<Vec<(u64, AttackSample)>, DiffError> {
    let text = std::fs::read_to_string(path).map_err(|e| DiffError::Io { path: path.display().to_string(), source: e })?;
    let bad = |line: usize, m: &str| DiffError::Io {
        path: path.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::InvalidData, format!("line {line}: {m}")),
    };
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 3 {
            return Err(bad(idx + 1, "too few fields"));
        }
        let user: u64 = f[0].parse().map_err(|_| bad(idx + 1, "user id"))?;
        let origin = match f[1] {
            "shadow" => Origin::Shadow,
            "target" => Origin::Target,
            _ => return Err(bad(idx + 1, "origin")),
        };
        let label = match f[2] {
            "" => None,
            "0" => Some(0),
            "1" => Some(1),
            _ => return Err(bad(idx + 1, "label")),
        };
        let diff = f[3..].iter().map(|v| v.parse::<f64>()).collect::<Result<Vec<_>, _>>().map_err(|_| bad(idx + 1, "diff value"))?;
        out.push((user, AttackSample { user: out.len() as u32, diff, origin, label, truth_score: 1.0, weight: 1.0 }));
    }
    Ok(out)
}

/// How difference vectors are rescaled before the attack sees them. The
/// statistics come from shadow rows only and are applied to every row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    None,
    /// One global factor making the mean squared entry 1.
    Rms,
    /// Per-dimension z-scores.
    Zscore,
}

impl Scaling {
    pub fn as_str(self) -> &'static str {
        match self {
            Scaling::None => "none",
            Scaling::Rms => "rms",
            Scaling::Zscore => "zscore",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "none" => Some(Scaling::None),
            "rms" => Some(Scaling::Rms),
            "zscore" => Some(Scaling::Zscore),
            _ => None,
        }
    }

    pub fn fit(self, rows: &[&[f64]]) -> Standardizer {
        let dim = rows.first().map_or(0, |r| r.len());
        match self {
            Scaling::None => Standardizer::identity(dim),
            Scaling::Rms => Standardizer::rms(rows),
            Scaling::Zscore => Standardizer::zscore(rows),
        }
    }
}

/// Per-dimension affine map `(x − mean)·scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    /// z-scores from the given rows; constant dimensions keep unit scale.
    pub fn zscore(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        rows.iter().for_each(|r| mean.iter_mut().zip(*r).for_each(|(m, v)| *m += v / n));
        let mut var = vec![0.0; dim];
        rows.iter().for_each(|r| var.iter_mut().zip(*r).zip(&mean).for_each(|((s, v), m)| *s += (v - m).powi(2) / n));
        let scale = var.into_iter().map(|v| if v > 1e-24 { 1.0 / v.sqrt() } else { 1.0 }).collect();
        Self { mean, scale }
    }

    /// No centring; every entry divided by the root mean square of all entries.
    pub fn rms(rows: &[&[f64]]) -> Self {
        let dim = rows.first().map_or(0, |r| r.len());
        let count = (rows.len() * dim).max(1) as f64;
        let ms = rows.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>() / count;
        let scale = if ms > 1e-24 { 1.0 / ms.sqrt() } else { 1.0 };
        Self { mean: vec![0.0; dim], scale: vec![scale; dim] }
    }

    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        v.iter().zip(&self.mean).zip(&self.scale).map(|((x, m), s)| (x - m) * s).collect()
    }

    /// Rows of `samples` after rescaling.
    pub fn matrix(&self, samples: &[AttackSample]) -> DenseMatrix {
        let dim = self.mean.len();
        let mut data = Vec::with_capacity(samples.len() * dim);
        samples.iter().for_each(|s| data.extend(self.apply(&s.diff)));
        DenseMatrix::from_vec(samples.len(), dim, data).expect("rows share the embedding dimension")
    }
}

fn write(path: &Path, text: String) -> Result<(), DiffError> {
    std::fs::write(path, text).map_err(|e| DiffError::Io { path: path.display().to_string(), source: e })
}
