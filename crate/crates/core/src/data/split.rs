use std::collections::HashSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::dataset::write_file;
use super::{DataError, Rating, RatingDataset};

/// Split fractions `(shadow, target, extraction)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub shadow: f64,
    pub target: f64,
    pub extraction: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        Self { shadow: 0.4, target: 0.4, extraction: 0.2 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<(), DataError> {
        let all = [self.shadow, self.target, self.extraction];
        if all.iter().any(|f| !(*f > 0.0) || !f.is_finite()) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(DataError::InvalidArgument(format!("split fractions {all:?} must be positive and sum to 1")));
        }
        Ok(())
    }
}

/// Shadow, target and extraction subsets over one shared id space.
///
/// Item ids are dense over the extraction catalog; user ids are those of the
/// source dataset. Member lists are sorted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitBundle {
    pub shadow: RatingDataset,
    pub target: RatingDataset,
    pub extraction: RatingDataset,
    pub shadow_members: Vec<u32>,
    pub shadow_nonmembers: Vec<u32>,
    pub target_members: Vec<u32>,
    pub target_nonmembers: Vec<u32>,
}

impl SplitBundle {
    pub fn n_items(&self) -> usize {
        self.extraction.n_items
    }

    /// Member interactions only: the training set of the shadow recommender.
    pub fn shadow_train(&self) -> RatingDataset {
        self.shadow.subset_users(&self.shadow_members)
    }

    /// Member interactions only: the training set of the target recommender.
    pub fn target_train(&self) -> RatingDataset {
        self.target.subset_users(&self.target_members)
    }

    /// Writes `shadow.csv`, `target.csv`, `extraction.csv` and `bundle.json`.
    pub fn write_dir(&self, dir: &Path) -> Result<(), DataError> {
        std::fs::create_dir_all(dir).map_err(|e| DataError::Io { path: dir.display().to_string(), source: e })?;
        self.shadow.write_csv(&dir.join("shadow.csv"))?;
        self.target.write_csv(&dir.join("target.csv"))?;
        self.extraction.write_csv(&dir.join("extraction.csv"))?;
        let original = |users: &[u32]| users.iter().map(|&u| self.shadow.user_ids[u as usize]).collect::<Vec<_>>();
        let sidecar = serde_json::json!({
            "counts": {
                "users": self.shadow.n_users,
                "items": self.n_items(),
                "shadow_interactions": self.shadow.len(),
                "target_interactions": self.target.len(),
                "extraction_interactions": self.extraction.len(),
                "shadow_users": self.shadow_members.len() + self.shadow_nonmembers.len(),
                "target_users": self.target_members.len() + self.target_nonmembers.len(),
                "extraction_users": self.extraction.active_users().len(),
            },
            "user_ids": self.shadow.user_ids,
            "item_ids": self.extraction.item_ids,
            "shadow_members": original(&self.shadow_members),
            "shadow_nonmembers": original(&self.shadow_nonmembers),
            "target_members": original(&self.target_members),
            "target_nonmembers": original(&self.target_nonmembers),
        });
        let text = serde_json::to_string_pretty(&sidecar).map_err(|e| DataError::Format(e.to_string()))?;
        write_file(&dir.join("bundle.json"), text.as_bytes())
    }
}

/// Shuffles users and partitions them by `fractions`, then enforces item
/// containment and draws member halves.
pub fn make_splits<R: Rng + ?Sized>(ds: &RatingDataset, fractions: SplitFractions, rng: &mut R) -> Result<SplitBundle, DataError> {
    fractions.validate()?;
    let mut users = ds.active_users();
    users.shuffle(rng);
    let n = users.len();
    let n_shadow = (fractions.shadow * n as f64).round() as usize;
    let n_target = ((fractions.target * n as f64).round() as usize).min(n - n_shadow.min(n));
    if n_shadow == 0 || n_target == 0 || n_shadow + n_target >= n {
        return Err(DataError::Degenerate(format!("{n} users cannot be split by {fractions:?}")));
    }
    let shadow = users[..n_shadow].to_vec();
    let target = users[n_shadow..n_shadow + n_target].to_vec();
    let extraction = users[n_shadow + n_target..].to_vec();
    assemble(ds, shadow, target, extraction, rng)
}

/// Split across two datasets: `a` supplies shadow users, `b` supplies target
/// users, and both contribute extraction users in proportion to
/// `fractions.extraction`. Items are aligned by original id over the union of
/// both catalogs. Users of `b` are renumbered after those of `a`; their
/// original ids are offset past the largest id of `a`.
pub fn make_cross_splits<R: Rng + ?Sized>(
    a: &RatingDataset,
    b: &RatingDataset,
    fractions: SplitFractions,
    rng: &mut R,
) -> Result<SplitBundle, DataError> {
    fractions.validate()?;
    let mut item_ids: Vec<u64> = a.item_ids.iter().chain(&b.item_ids).copied().collect();
    item_ids.sort_unstable();
    item_ids.dedup();
    let align = |ds: &RatingDataset| -> Vec<u32> {
        ds.item_ids.iter().map(|id| item_ids.binary_search(id).expect("union contains every id") as u32).collect()
    };
    let (map_a, map_b) = (align(a), align(b));
    let offset = a.user_ids.iter().max().map_or(0, |m| m + 1);
    let mut user_ids = a.user_ids.clone();
    user_ids.extend(b.user_ids.iter().map(|u| u + offset));
    let shift = a.n_users as u32;
    let mut records: Vec<Rating> = a.records.iter().map(|r| Rating { item: map_a[r.item as usize], ..*r }).collect();
    records.extend(b.records.iter().map(|r| Rating { user: r.user + shift, item: map_b[r.item as usize], ..*r }));
    let combined = RatingDataset::from_parts(records, user_ids, item_ids);

    let mut part = |users: Vec<u32>, keep: f64| -> Result<(Vec<u32>, Vec<u32>), DataError> {
        let mut users = users;
        users.shuffle(rng);
        let n = users.len();
        let k = (keep * n as f64).round() as usize;
        if k == 0 || k >= n {
            return Err(DataError::Degenerate(format!("{n} users cannot be split {keep:.3}/{:.3}", 1.0 - keep)));
        }
        let rest = users.split_off(k);
        Ok((users, rest))
    };
    let (shadow, mut extraction) = part(a.active_users(), fractions.shadow / (fractions.shadow + fractions.extraction))?;
    let (target, ext_b) = part(
        b.active_users().into_iter().map(|u| u + shift).collect(),
        fractions.target / (fractions.target + fractions.extraction),
    )?;
    extraction.extend(ext_b);
    assemble(&combined, shadow, target, extraction, rng)
}

fn assemble<R: Rng + ?Sized>(
    ds: &RatingDataset,
    shadow_users: Vec<u32>,
    target_users: Vec<u32>,
    extraction_users: Vec<u32>,
    rng: &mut R,
) -> Result<SplitBundle, DataError> {
    let extraction = ds.subset_users(&extraction_users);
    let catalog = extraction.active_items();
    let mut item_map = vec![u32::MAX; ds.n_items];
    catalog.iter().enumerate().for_each(|(i, &it)| item_map[it as usize] = i as u32);
    let item_ids: Vec<u64> = catalog.iter().map(|&i| ds.item_ids[i as usize]).collect();
    let remap = |sub: RatingDataset| {
        let records = sub
            .records
            .iter()
            .filter(|r| item_map[r.item as usize] != u32::MAX)
            .map(|r| Rating { item: item_map[r.item as usize], ..*r })
            .collect();
        RatingDataset::from_parts(records, ds.user_ids.clone(), item_ids.clone())
    };
    let shadow = remap(ds.subset_users(&shadow_users));
    let target = remap(ds.subset_users(&target_users));
    let extraction = remap(extraction);

    let mut halves = |data: &RatingDataset, name: &str| -> Result<(Vec<u32>, Vec<u32>), DataError> {
        let mut users = data.active_users();
        if users.len() < 2 {
            return Err(DataError::Degenerate(format!("{name} split has {} users with interactions", users.len())));
        }
        users.shuffle(rng);
        let mut nonmembers = users.split_off(users.len().div_ceil(2));
        users.sort_unstable();
        nonmembers.sort_unstable();
        Ok((users, nonmembers))
    };
    let (shadow_members, shadow_nonmembers) = halves(&shadow, "shadow")?;
    let (target_members, target_nonmembers) = halves(&target, "target")?;
    if extraction.is_empty() {
        return Err(DataError::Degenerate("extraction split is empty".into()));
    }
    Ok(SplitBundle { shadow, target, extraction, shadow_members, shadow_nonmembers, target_members, target_nonmembers })
}

/// Rescans a bundle and checks disjointness, item containment and the member partitions.
pub fn verify_bundle(bundle: &SplitBundle) -> Result<(), DataError> {
    let fail = |m: String| Err(DataError::InvariantViolation(m));
    let users_of = |d: &RatingDataset| d.records.iter().map(|r| r.user).collect::<HashSet<u32>>();
    let (s, t, e) = (users_of(&bundle.shadow), users_of(&bundle.target), users_of(&bundle.extraction));
    if let Some(u) = s.intersection(&t).chain(s.intersection(&e)).chain(t.intersection(&e)).next() {
        return fail(format!("user {u} appears in two subsets"));
    }
    let catalog: HashSet<u32> = bundle.extraction.records.iter().map(|r| r.item).collect();
    for (name, d) in [("shadow", &bundle.shadow), ("target", &bundle.target)] {
        if let Some(r) = d.records.iter().find(|r| !catalog.contains(&r.item)) {
            return fail(format!("{name} item {} is missing from the extraction subset", r.item));
        }
    }
    for (name, users, members, nonmembers) in [
        ("shadow", &s, &bundle.shadow_members, &bundle.shadow_nonmembers),
        ("target", &t, &bundle.target_members, &bundle.target_nonmembers),
    ] {
        let m: HashSet<u32> = members.iter().copied().collect();
        let n: HashSet<u32> = nonmembers.iter().copied().collect();
        if m.len() != members.len() || n.len() != nonmembers.len() {
            return fail(format!("{name} member lists contain repeats"));
        }
        if !m.is_disjoint(&n) {
            return fail(format!("{name} members and non-members overlap"));
        }
        let union: HashSet<u32> = m.union(&n).copied().collect();
        if &union != users {
            return fail(format!("{name} member partition does not cover its users"));
        }
    }
    Ok(())
}
