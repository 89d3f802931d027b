use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::split::{InteractionDataset, UserSplit};
use crate::error::{Error, Result};

/// How synthetic sequences are generated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthRule {
    /// `i, i+1, i+2, …` cycling through `1..=V` from a uniform start.
    Successor,
    /// Independent uniform items.
    Uniform,
}

impl fmt::Display for SynthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SynthRule::Successor => "successor",
            SynthRule::Uniform => "uniform",
        })
    }
}

impl FromStr for SynthRule {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "successor" => Ok(SynthRule::Successor),
            "uniform" => Ok(SynthRule::Uniform),
            _ => Err(Error::Config(format!(
                "unknown rule '{s}', expected successor or uniform"
            ))),
        }
    }
}

/// Generates `users` sequences with lengths uniform in `min_len..=max_len` over items `1..=V`,
/// split leave-one-out.
pub fn synth_generate(
    num_items: usize,
    users: usize,
    min_len: usize,
    max_len: usize,
    rule: SynthRule,
    seed: u64,
) -> Result<InteractionDataset> {
    if num_items < 3 {
        return Err(Error::Config(format!(
            "synthetic data needs at least 3 items, got {num_items}"
        )));
    }
    if min_len < 3 || min_len > max_len {
        return Err(Error::Config(format!(
            "need 3 <= min_len <= max_len, got {min_len}..{max_len}"
        )));
    }
    if users == 0 {
        return Err(Error::Config("users must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let splits = (0..users)
        .map(|u| {
            let len = rng.random_range(min_len..=max_len);
            let seq: Vec<usize> = match rule {
                SynthRule::Successor => {
                    let start = rng.random_range(0..num_items);
                    (0..len).map(|t| 1 + (start + t) % num_items).collect()
                }
                SynthRule::Uniform => (0..len).map(|_| rng.random_range(1..=num_items)).collect(),
            };
            UserSplit {
                user: format!("u{u}"),
                train: seq[..len - 2].to_vec(),
                valid: seq[len - 2],
                test: seq[len - 1],
            }
        })
        .collect();
    let items = (1..=num_items).map(|i| i.to_string()).collect();
    InteractionDataset::from_splits(splits, items)
}
