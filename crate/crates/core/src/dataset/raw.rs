use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Minimum interactions per user and per item after filtering.
pub const MIN_INTERACTIONS: usize = 5;

/// One `user<TAB>item<TAB>timestamp` row.
#[derive(Debug, Clone, PartialEq)]
pub struct Interaction {
    pub user: String,
    pub item: String,
    pub timestamp: f64,
}

/// Reads an interaction log. See [`parse_tsv_str`].
pub fn parse_tsv(path: &Path) -> Result<Vec<Interaction>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_tsv_str(&text, path)
}

/// Parses `user<TAB>item<TAB>timestamp` lines in file order.
///
/// Blank lines are ignored. Lines with the wrong field count, empty ids or a non-numeric
/// timestamp are skipped and counted; more than 1% of such lines is a format error.
pub fn parse_tsv_str(text: &str, path: &Path) -> Result<Vec<Interaction>> {
    let mut out = Vec::new();
    let mut malformed = 0usize;
    let mut first_bad = None;
    let mut seen = 0usize;
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        seen += 1;
        let fields: Vec<&str> = line.split('\t').collect();
        let parsed = match fields.as_slice() {
            [u, i, t] if !u.trim().is_empty() && !i.trim().is_empty() => t
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|t| t.is_finite())
                .map(|timestamp| Interaction {
                    user: u.trim().to_string(),
                    item: i.trim().to_string(),
                    timestamp,
                }),
            _ => None,
        };
        match parsed {
            Some(r) => out.push(r),
            None => {
                malformed += 1;
                first_bad.get_or_insert(n + 1);
            }
        }
    }
    if seen == 0 {
        log::warn!("{}: no interactions", path.display());
    }
    if malformed > 0 {
        log::warn!(
            "{}: skipped {malformed} malformed line(s), first at line {}",
            path.display(),
            first_bad.unwrap_or(0)
        );
        if malformed * 100 > seen {
            return Err(Error::Format {
                path: path.to_path_buf(),
                reason: format!("{malformed} of {seen} lines malformed (more than 1%)"),
            });
        }
    }
    Ok(out)
}

/// Drops users and items with fewer than `min_count` interactions, repeating until every
/// remaining user and item meets the threshold. Row order is preserved.
pub fn core_filter(raw: &[Interaction], min_count: usize) -> Result<Vec<Interaction>> {
    let mut keep = vec![true; raw.len()];
    loop {
        let mut users: HashMap<&str, usize> = HashMap::new();
        let mut items: HashMap<&str, usize> = HashMap::new();
        for (r, _) in raw.iter().zip(&keep).filter(|(_, k)| **k) {
            *users.entry(&r.user).or_default() += 1;
            *items.entry(&r.item).or_default() += 1;
        }
        let mut changed = false;
        for (r, k) in raw.iter().zip(keep.iter_mut()) {
            if *k && (users[r.user.as_str()] < min_count || items[r.item.as_str()] < min_count) {
                *k = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let out: Vec<Interaction> = raw
        .iter()
        .zip(&keep)
        .filter(|(_, k)| **k)
        .map(|(r, _)| r.clone())
        .collect();
    if out.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(out)
}
