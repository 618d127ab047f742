use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DataError;

/// One interaction, in dense ids.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rating {
    pub user: u32,
    pub item: u32,
    pub rating: f64,
    pub timestamp: i64,
}

/// Interactions over dense user and item ids `0..n_users`, `0..n_items`.
///
/// `user_ids[u]` and `item_ids[i]` hold the original ids. Records are kept
/// sorted by `(user, item)`. Subsets produced by [`RatingDataset::subset_users`]
/// and [`RatingDataset::retain`] share the parent's id space, so some dense
/// ids may have no records.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingDataset {
    pub records: Vec<Rating>,
    pub n_users: usize,
    pub n_items: usize,
    pub user_ids: Vec<u64>,
    pub item_ids: Vec<u64>,
}

/// A parsed line before id remapping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RawRating {
    pub user: u64,
    pub item: u64,
    pub rating: f64,
    pub timestamp: i64,
}

impl RatingDataset {
    /// Remaps original ids densely (ascending original id) and rejects duplicate pairs.
    /// Duplicate errors name the 1-based position of the repeated entry.
    pub fn from_raw(raw: &[RawRating]) -> Result<Self, DataError> {
        Self::from_located(raw.iter().enumerate().map(|(i, r)| (i + 1, *r)))
    }

    fn from_located(raw: impl Iterator<Item = (usize, RawRating)>) -> Result<Self, DataError> {
        let raw: Vec<(usize, RawRating)> = raw.collect();
        let mut seen = HashSet::with_capacity(raw.len());
        for (line, r) in &raw {
            if !seen.insert((r.user, r.item)) {
                return Err(DataError::Duplicate { line: *line, user: r.user, item: r.item });
            }
        }
        let user_ids: Vec<u64> = raw.iter().map(|(_, r)| r.user).collect::<BTreeSet<_>>().into_iter().collect();
        let item_ids: Vec<u64> = raw.iter().map(|(_, r)| r.item).collect::<BTreeSet<_>>().into_iter().collect();
        let user_index: HashMap<u64, u32> = user_ids.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
        let item_index: HashMap<u64, u32> = item_ids.iter().enumerate().map(|(i, &u)| (u, i as u32)).collect();
        let records = raw
            .iter()
            .map(|(_, r)| Rating { user: user_index[&r.user], item: item_index[&r.item], rating: r.rating, timestamp: r.timestamp })
            .collect();
        Ok(Self::from_parts(records, user_ids, item_ids))
    }

    /// Builds a dataset in an existing id space; records are sorted.
    pub fn from_parts(mut records: Vec<Rating>, user_ids: Vec<u64>, item_ids: Vec<u64>) -> Self {
        records.sort_by_key(|r| (r.user, r.item));
        Self { records, n_users: user_ids.len(), n_items: item_ids.len(), user_ids, item_ids }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Users with at least one record, ascending.
    pub fn active_users(&self) -> Vec<u32> {
        let mut users: Vec<u32> = self.records.iter().map(|r| r.user).collect();
        users.dedup();
        users
    }

    /// Items with at least one record, ascending.
    pub fn active_items(&self) -> Vec<u32> {
        self.records.iter().map(|r| r.item).collect::<BTreeSet<_>>().into_iter().collect()
    }

    /// `(item, rating)` lists indexed by dense user id.
    pub fn histories(&self) -> Vec<Vec<(u32, f64)>> {
        let mut h = vec![Vec::new(); self.n_users];
        for r in &self.records {
            h[r.user as usize].push((r.item, r.rating));
        }
        h
    }

    pub fn history_items(&self, user: u32) -> Vec<u32> {
        let start = self.records.partition_point(|r| r.user < user);
        self.records[start..].iter().take_while(|r| r.user == user).map(|r| r.item).collect()
    }

    pub fn user_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_users];
        self.records.iter().for_each(|r| c[r.user as usize] += 1);
        c
    }

    pub fn item_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.n_items];
        self.records.iter().for_each(|r| c[r.item as usize] += 1);
        c
    }

    /// Records of the given users, same id space.
    pub fn subset_users(&self, users: &[u32]) -> RatingDataset {
        let keep: HashSet<u32> = users.iter().copied().collect();
        self.retain(|r| keep.contains(&r.user))
    }

    pub fn retain(&self, keep: impl Fn(&Rating) -> bool) -> RatingDataset {
        RatingDataset {
            records: self.records.iter().filter(|r| keep(r)).copied().collect(),
            n_users: self.n_users,
            n_items: self.n_items,
            user_ids: self.user_ids.clone(),
            item_ids: self.item_ids.clone(),
        }
    }

    /// Drops ids without records and renumbers densely, preserving order.
    pub fn compact(&self) -> RatingDataset {
        let users = self.active_users();
        let items = self.active_items();
        let mut user_map = vec![u32::MAX; self.n_users];
        users.iter().enumerate().for_each(|(i, &u)| user_map[u as usize] = i as u32);
        let mut item_map = vec![u32::MAX; self.n_items];
        items.iter().enumerate().for_each(|(i, &it)| item_map[it as usize] = i as u32);
        let records = self
            .records
            .iter()
            .map(|r| Rating { user: user_map[r.user as usize], item: item_map[r.item as usize], ..*r })
            .collect();
        RatingDataset::from_parts(
            records,
            users.iter().map(|&u| self.user_ids[u as usize]).collect(),
            items.iter().map(|&i| self.item_ids[i as usize]).collect(),
        )
    }

    /// Sorted CSV `user_id,item_id,rating,timestamp` in original ids.
    pub fn write_csv(&self, path: &Path) -> Result<(), DataError> {
        let mut rows: Vec<(u64, u64, f64, i64)> = self
            .records
            .iter()
            .map(|r| (self.user_ids[r.user as usize], self.item_ids[r.item as usize], r.rating, r.timestamp))
            .collect();
        rows.sort_by_key(|r| (r.0, r.1));
        let mut out = String::from("user_id,item_id,rating,timestamp\n");
        for (u, i, r, t) in rows {
            out.push_str(&format!("{u},{i},{r},{t}\n"));
        }
        write_file(path, out.as_bytes())
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<(), DataError> {
    let io = |e| DataError::Io { path: path.display().to_string(), source: e };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

/// MovieLens `UserID::MovieID::Rating::Timestamp` lines.
pub fn load_movielens(path: &Path) -> Result<RatingDataset, DataError> {
    let text = read(path)?;
    parse_lines(&text, "::", false)
}

/// Comma-separated `user,item,rating,timestamp`; a non-numeric first line is a header.
pub fn load_csv(path: &Path) -> Result<RatingDataset, DataError> {
    let text = read(path)?;
    parse_lines(&text, ",", true)
}

pub fn parse_movielens(text: &str) -> Result<RatingDataset, DataError> {
    parse_lines(text, "::", false)
}

pub fn parse_csv(text: &str) -> Result<RatingDataset, DataError> {
    parse_lines(text, ",", true)
}

fn read(path: &Path) -> Result<String, DataError> {
    fs::read_to_string(path).map_err(|e| DataError::Io { path: path.display().to_string(), source: e })
}

fn parse_lines(text: &str, sep: &str, allow_header: bool) -> Result<RatingDataset, DataError> {
    let mut raw = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(sep).map(str::trim).collect();
        if idx == 0 && allow_header && fields[0].parse::<u64>().is_err() {
            continue;
        }
        if fields.len() != 4 {
            return Err(DataError::Parse { line: line_no, message: format!("expected 4 fields, found {}", fields.len()) });
        }
        let parse_err = |what: &str, v: &str| DataError::Parse { line: line_no, message: format!("invalid {what} {v:?}") };
        let user = fields[0].parse::<u64>().map_err(|_| parse_err("user id", fields[0]))?;
        let item = fields[1].parse::<u64>().map_err(|_| parse_err("item id", fields[1]))?;
        let rating = fields[2].parse::<f64>().map_err(|_| parse_err("rating", fields[2]))?;
        if !(1.0..=5.0).contains(&rating) {
            return Err(DataError::Parse { line: line_no, message: format!("rating {rating} outside [1, 5]") });
        }
        let timestamp = fields[3].parse::<i64>().map_err(|_| parse_err("timestamp", fields[3]))?;
        raw.push((line_no, RawRating { user, item, rating, timestamp }));
    }
    RatingDataset::from_located(raw.into_iter())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn movielens_lines_are_remapped_in_id_order() {
        let ds = parse_movielens("10::200::4::5\n3::200::5::6\n10::7::1::9\n").unwrap();
        assert_eq!((ds.n_users, ds.n_items, ds.len()), (2, 2, 3));
        assert_eq!(ds.user_ids, vec![3, 10]);
        assert_eq!(ds.item_ids, vec![7, 200]);
        assert_eq!(ds.records[0], Rating { user: 0, item: 1, rating: 5.0, timestamp: 6 });
        assert_eq!(ds.history_items(1), vec![0, 1]);
    }

    #[test]
    fn empty_input_gives_empty_dataset() {
        let ds = parse_movielens("").unwrap();
        assert_eq!((ds.n_users, ds.n_items, ds.len()), (0, 0, 0));
    }

    #[test]
    fn duplicate_pair_names_its_line() {
        let err = parse_movielens("1::2::3::0\n1::3::3::0\n1::2::4::1\n").unwrap_err();
        assert!(matches!(err, DataError::Duplicate { line: 3, user: 1, item: 2 }), "{err}");
    }

    #[test]
    fn malformed_lines_report_location() {
        let err = parse_movielens("1::2::3::0\n1::x::3::0\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 2, .. }));
        let err = parse_movielens("1::2::9::0\n").unwrap_err();
        assert!(matches!(err, DataError::Parse { line: 1, .. }));
    }

    #[test]
    fn csv_with_header() {
        let ds = parse_csv("user,item,rating,timestamp\n5,6,3.5,100\n5,8,2,101\n").unwrap();
        assert_eq!((ds.n_users, ds.n_items, ds.len()), (1, 2, 2));
    }

    #[test]
    fn compact_is_identity_on_dense_data() {
        let ds = parse_movielens("1::1::3::0\n2::2::3::0\n2::3::1::0\n").unwrap();
        assert_eq!(ds.compact(), ds);
        let sub = ds.subset_users(&[1]).compact();
        assert_eq!(sub.user_ids, vec![2]);
        assert_eq!(sub.item_ids, vec![2, 3]);
    }
}
