use std::collections::HashMap;
use std::fmt;

use super::raw::Interaction;
use crate::error::{Error, Result};

/// One user's leave-one-out split; ids are dense item ids `1..=V`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UserSplit {
    pub user: String,
    pub train: Vec<usize>,
    pub valid: usize,
    pub test: usize,
}

/// Summary counts: users, items, interactions and mean interactions per user.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DatasetStats {
    pub users: usize,
    pub items: usize,
    pub interactions: usize,
    pub avg_interactions: f64,
}

impl DatasetStats {
    pub const HEADER: &'static str = "users\titems\tinteractions\tavg_interactions";

    pub fn line(&self) -> String {
        format!(
            "{}\t{}\t{}\t{:.1}",
            self.users, self.items, self.interactions, self.avg_interactions
        )
    }
}

impl fmt::Display for DatasetStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "users {}, items {}, interactions {}, avg {:.1}",
            self.users, self.items, self.interactions, self.avg_interactions
        )
    }
}

/// Per-user chronological splits with training-set item popularity.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionDataset {
    users: Vec<UserSplit>,
    /// Original item names; `items[id - 1]` names item `id`.
    items: Vec<String>,
    /// Indexed by item id; entry 0 is unused.
    popularity: Vec<u64>,
}

impl InteractionDataset {
    /// Builds a dataset over items `1..=items.len()` and counts popularity on training prefixes.
    pub fn from_splits(users: Vec<UserSplit>, items: Vec<String>) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let v = items.len();
        let mut popularity = vec![0u64; v + 1];
        for u in &users {
            for &i in u.train.iter().chain([&u.valid, &u.test]) {
                if i == 0 || i > v {
                    return Err(Error::Input(format!(
                        "item id {i} outside 1..={v} for user {}",
                        u.user
                    )));
                }
            }
            if u.train.is_empty() {
                return Err(Error::Input(format!(
                    "user {} has an empty training prefix",
                    u.user
                )));
            }
            for &i in &u.train {
                popularity[i] += 1;
            }
        }
        Ok(InteractionDataset {
            users,
            items,
            popularity,
        })
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn users(&self) -> &[UserSplit] {
        &self.users
    }

    pub fn item_names(&self) -> &[String] {
        &self.items
    }

    /// Training-prefix interaction count of item `id`.
    pub fn popularity(&self, id: usize) -> u64 {
        self.popularity[id]
    }

    /// Popularity indexed by item id, entry 0 unused.
    pub fn popularity_table(&self) -> &[u64] {
        &self.popularity
    }

    /// Training prefixes, the masked-item training inputs.
    pub fn train_sequences(&self) -> Vec<Vec<usize>> {
        self.users.iter().map(|u| u.train.clone()).collect()
    }

    pub fn stats(&self) -> DatasetStats {
        let interactions: usize = self.users.iter().map(|u| u.train.len() + 2).sum();
        DatasetStats {
            users: self.users.len(),
            items: self.items.len(),
            interactions,
            avg_interactions: interactions as f64 / self.users.len() as f64,
        }
    }
}

/// Groups rows by user, orders each user's items by timestamp (ties keep file order), re-indexes
/// items densely from 1 in order of first appearance, and holds out the last two items.
///
/// Users with fewer than three interactions are dropped with a warning.
pub fn split_leave_one_out(filtered: &[Interaction]) -> Result<InteractionDataset> {
    let mut item_ids: HashMap<&str, usize> = HashMap::new();
    let mut items = Vec::new();
    let mut user_index: HashMap<&str, usize> = HashMap::new();
    let mut grouped: Vec<(&str, Vec<(f64, usize)>)> = Vec::new();
    for r in filtered {
        let id = *item_ids.entry(&r.item).or_insert_with(|| {
            items.push(r.item.clone());
            items.len()
        });
        let u = *user_index.entry(&r.user).or_insert_with(|| {
            grouped.push((&r.user, Vec::new()));
            grouped.len() - 1
        });
        grouped[u].1.push((r.timestamp, id));
    }
    let mut users = Vec::with_capacity(grouped.len());
    let mut dropped = 0usize;
    for (user, mut seq) in grouped {
        if seq.len() < 3 {
            dropped += 1;
            continue;
        }
        seq.sort_by(|a, b| a.0.total_cmp(&b.0));
        let ids: Vec<usize> = seq.into_iter().map(|(_, id)| id).collect();
        let n = ids.len();
        users.push(UserSplit {
            user: user.to_string(),
            train: ids[..n - 2].to_vec(),
            valid: ids[n - 2],
            test: ids[n - 1],
        });
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} user(s) with fewer than three interactions");
    }
    InteractionDataset::from_splits(users, items)
}

/// Keeps the most recent `s` items, left-padding shorter sequences with id 0.
pub fn pad_truncate(sequence: &[usize], s: usize) -> Vec<usize> {
    let keep = &sequence[sequence.len().saturating_sub(s)..];
    let mut out = vec![0; s - keep.len()];
    out.extend_from_slice(keep);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(spec: &[(&str, &str, f64)]) -> Vec<Interaction> {
        spec.iter()
            .map(|&(u, i, t)| Interaction {
                user: u.into(),
                item: i.into(),
                timestamp: t,
            })
            .collect()
    }

    #[test]
    fn last_two_are_held_out() {
        let r = rows(&[
            ("u", "a", 1.0),
            ("u", "b", 2.0),
            ("u", "c", 3.0),
            ("u", "d", 4.0),
            ("u", "e", 5.0),
        ]);
        let ds = split_leave_one_out(&r).unwrap();
        let u = &ds.users()[0];
        assert_eq!((u.train.clone(), u.valid, u.test), (vec![1, 2, 3], 4, 5));
    }

    #[test]
    fn timestamp_order_with_stable_ties() {
        let r = rows(&[
            ("u", "a", 5.0),
            ("u", "b", 1.0),
            ("u", "c", 1.0),
            ("u", "d", 0.5),
        ]);
        let ds = split_leave_one_out(&r).unwrap();
        // ids by first appearance: a=1 b=2 c=3 d=4; order by time: d b c a
        let u = &ds.users()[0];
        assert_eq!((u.train.clone(), u.valid, u.test), (vec![4, 2], 3, 1));
    }

    #[test]
    fn short_users_dropped_and_boundary() {
        let r = rows(&[
            ("a", "x", 1.0),
            ("a", "y", 2.0),
            ("b", "x", 1.0),
            ("b", "y", 2.0),
            ("b", "z", 3.0),
        ]);
        let ds = split_leave_one_out(&r).unwrap();
        assert_eq!(ds.num_users(), 1);
        assert_eq!(ds.users()[0].train, vec![1]);
    }

    #[test]
    fn popularity_counts_training_only() {
        let r = rows(&[
            ("u", "a", 1.0),
            ("u", "b", 2.0),
            ("u", "c", 3.0),
            ("v", "c", 1.0),
            ("v", "a", 2.0),
            ("v", "b", 3.0),
        ]);
        let ds = split_leave_one_out(&r).unwrap();
        assert_eq!(ds.popularity_table(), &[0, 1, 0, 1]);
        assert_eq!(ds.stats().interactions, 6);
    }

    #[test]
    fn pad_and_truncate() {
        assert_eq!(pad_truncate(&[1, 2, 3], 5), vec![0, 0, 1, 2, 3]);
        assert_eq!(pad_truncate(&[1, 2, 3, 4, 5, 6, 7], 5), vec![3, 4, 5, 6, 7]);
        assert_eq!(pad_truncate(&[4, 5], 2), vec![4, 5]);
    }
}
