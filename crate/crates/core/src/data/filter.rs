use super::RatingDataset;

/// Repeatedly drops users with fewer than `min_user` and items with fewer
/// than `min_item` records until both thresholds hold, then compacts ids.
pub fn filter_min_interactions(ds: &RatingDataset, min_user: usize, min_item: usize) -> RatingDataset {
    let mut current = ds.clone();
    loop {
        let users = current.user_counts();
        let items = current.item_counts();
        let before = current.len();
        current = current.retain(|r| users[r.user as usize] >= min_user && items[r.item as usize] >= min_item);
        if current.len() == before {
            return current.compact();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{parse_movielens, RawRating};

    #[test]
    fn zero_thresholds_are_identity() {
        let ds = parse_movielens("1::1::3::0\n2::2::3::0\n2::3::1::0\n").unwrap();
        assert_eq!(filter_min_interactions(&ds, 0, 0), ds);
    }

    #[test]
    fn sparse_user_is_removed() {
        let raw: Vec<RawRating> =
            (0..3).map(|i| RawRating { user: 1, item: i, rating: 3.0, timestamp: 0 }).collect();
        let ds = RatingDataset::from_raw(&raw).unwrap();
        let out = filter_min_interactions(&ds, 20, 0);
        assert!(out.is_empty());
        assert_eq!((out.n_users, out.n_items), (0, 0));
    }
}
