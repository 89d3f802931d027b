//! On-disk layout of a processed dataset.
//!
//! `train.tsv`, `valid.tsv` and `test.tsv` hold `user<TAB>item` rows with dense item ids,
//! training rows in chronological order. `popularity.tsv` holds `item<TAB>count`, `items.tsv`
//! maps dense ids back to original names and `stats.tsv` carries the summary line.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::split::{DatasetStats, InteractionDataset, UserSplit};
use crate::error::{Error, Result};

fn write(dir: &Path, name: &str, content: String) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, content).map_err(|e| Error::io(&path, e))
}

pub fn write_dataset(ds: &InteractionDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let (mut train, mut valid, mut test) = (String::new(), String::new(), String::new());
    for u in ds.users() {
        for i in &u.train {
            writeln!(train, "{}\t{i}", u.user).unwrap();
        }
        writeln!(valid, "{}\t{}", u.user, u.valid).unwrap();
        writeln!(test, "{}\t{}", u.user, u.test).unwrap();
    }
    let mut popularity = String::new();
    let mut items = String::new();
    for (k, name) in ds.item_names().iter().enumerate() {
        writeln!(popularity, "{}\t{}", k + 1, ds.popularity(k + 1)).unwrap();
        writeln!(items, "{}\t{name}", k + 1).unwrap();
    }
    write(dir, "train.tsv", train)?;
    write(dir, "valid.tsv", valid)?;
    write(dir, "test.tsv", test)?;
    write(dir, "popularity.tsv", popularity)?;
    write(dir, "items.tsv", items)?;
    write(
        dir,
        "stats.tsv",
        format!("{}\n{}\n", DatasetStats::HEADER, ds.stats().line()),
    )
}

fn read_pairs(dir: &Path, name: &str) -> Result<Vec<(String, String)>> {
    let path = dir.join(name);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            l.split_once('\t')
                .map(|(a, b)| (a.to_string(), b.to_string()))
                .ok_or_else(|| Error::Format {
                    path: path.clone(),
                    reason: format!("line {}: expected two tab-separated fields", n + 1),
                })
        })
        .collect()
}

fn parse_id(s: &str, name: &str, dir: &Path) -> Result<usize> {
    s.parse().map_err(|_| Error::Format {
        path: dir.join(name),
        reason: format!("bad item id '{s}'"),
    })
}

/// Reads a dataset written by [`write_dataset`], checking the stored popularity counts.
pub fn load_dataset(dir: &Path) -> Result<InteractionDataset> {
    let items: Vec<String> = read_pairs(dir, "items.tsv")?
        .into_iter()
        .map(|(_, n)| n)
        .collect();
    let mut order: Vec<String> = Vec::new();
    let mut train: HashMap<String, Vec<usize>> = HashMap::new();
    for (u, i) in read_pairs(dir, "train.tsv")? {
        let id = parse_id(&i, "train.tsv", dir)?;
        train
            .entry(u.clone())
            .or_insert_with(|| {
                order.push(u);
                Vec::new()
            })
            .push(id);
    }
    let held = |name: &str| -> Result<HashMap<String, usize>> {
        read_pairs(dir, name)?
            .into_iter()
            .map(|(u, i)| Ok((u, parse_id(&i, name, dir)?)))
            .collect()
    };
    let (valid, test) = (held("valid.tsv")?, held("test.tsv")?);
    let mut users = Vec::with_capacity(order.len());
    for u in order {
        let missing = || Error::Format {
            path: dir.to_path_buf(),
            reason: format!("user {u} lacks a validation or test item"),
        };
        let (v, t) = (
            *valid.get(&u).ok_or_else(missing)?,
            *test.get(&u).ok_or_else(missing)?,
        );
        users.push(UserSplit {
            train: train.remove(&u).unwrap_or_default(),
            user: u,
            valid: v,
            test: t,
        });
    }
    if users.len() != valid.len() || users.len() != test.len() {
        return Err(Error::Format {
            path: dir.to_path_buf(),
            reason: "valid/test users do not match training users".into(),
        });
    }
    let ds = InteractionDataset::from_splits(users, items)?;
    for (k, c) in read_pairs(dir, "popularity.tsv")? {
        let id = parse_id(&k, "popularity.tsv", dir)?;
        if id == 0 || id > ds.num_items() || c.parse::<u64>().ok() != Some(ds.popularity(id)) {
            return Err(Error::Format {
                path: dir.join("popularity.tsv"),
                reason: format!("count for item {k} disagrees with train.tsv"),
            });
        }
    }
    Ok(ds)
}
