use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::split::InteractionDataset;

/// Negatives paired with each ground-truth item at evaluation time.
pub const NUM_NEGATIVES: usize = 100;

/// Which held-out item is being ranked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalTarget {
    /// Second-to-last item; history is the training prefix.
    Valid,
    /// Last item; history is the training prefix plus the validation item.
    Test,
}

impl EvalTarget {
    pub fn history(self, ds: &InteractionDataset, user: usize) -> Vec<usize> {
        let u = &ds.users()[user];
        let mut h = u.train.clone();
        if self == EvalTarget::Test {
            h.push(u.valid);
        }
        h
    }

    pub fn ground_truth(self, ds: &InteractionDataset, user: usize) -> usize {
        let u = &ds.users()[user];
        match self {
            EvalTarget::Valid => u.valid,
            EvalTarget::Test => u.test,
        }
    }
}

/// Draws up to `n` distinct indices with probability proportional to `weights`, without
/// replacement, skipping indices where `excluded` is true or the weight is zero.
///
/// The result is in draw order. When fewer than `n` indices are eligible, all of them are
/// returned in index order.
pub fn sample_by_weight<R: Rng + ?Sized>(
    weights: &[f64],
    excluded: &[bool],
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    assert_eq!(weights.len(), excluded.len());
    let eligible = |i: usize| weights[i] > 0.0 && !excluded[i];
    let count = (0..weights.len()).filter(|&i| eligible(i)).count();
    if count <= n {
        if count < n {
            log::debug!("only {count} eligible negatives, wanted {n}");
        }
        return (0..weights.len()).filter(|&i| eligible(i)).collect();
    }
    let dist = WeightedIndex::new(weights).expect("at least one positive weight");
    let mut taken = vec![false; weights.len()];
    let mut out = Vec::with_capacity(n);
    // Rejection against the full distribution is exact for successive sampling; fall back to
    // exponential keys when exclusions eat most of the mass.
    let mut budget = 20 * n + 100;
    while out.len() < n && budget > 0 {
        budget -= 1;
        let i = dist.sample(rng);
        if eligible(i) && !taken[i] {
            taken[i] = true;
            out.push(i);
        }
    }
    if out.len() < n {
        let mut keyed: Vec<(f64, usize)> = (0..weights.len())
            .filter(|&i| eligible(i) && !taken[i])
            .map(|i| {
                let u: f64 = rng.random::<f64>();
                (u.max(f64::MIN_POSITIVE).ln() / weights[i], i)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0));
        out.extend(keyed.into_iter().take(n - out.len()).map(|(_, i)| i));
    }
    out
}

/// Popularity-proportional negatives for one user, excluding the ground truth and the history.
pub fn sample_negatives<R: Rng + ?Sized>(
    ds: &InteractionDataset,
    user: usize,
    target: EvalTarget,
    n: usize,
    rng: &mut R,
) -> Vec<usize> {
    let weights: Vec<f64> = ds.popularity_table().iter().map(|&c| c as f64).collect();
    let mut excluded = vec![false; weights.len()];
    excluded[0] = true;
    excluded[target.ground_truth(ds, user)] = true;
    for i in target.history(ds, user) {
        excluded[i] = true;
    }
    sample_by_weight(&weights, &excluded, n, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn two_item_proportions() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let w = [3.0, 1.0, 5.0];
        let ex = [false, false, true];
        let trials = 100_000;
        let first = (0..trials)
            .filter(|_| sample_by_weight(&w, &ex, 1, &mut rng)[0] == 0)
            .count();
        let p = first as f64 / trials as f64;
        // four standard errors at p = 0.75
        assert!(
            (p - 0.75).abs() < 4.0 * (0.75f64 * 0.25 / trials as f64).sqrt(),
            "{p}"
        );
    }

    #[test]
    fn distinct_and_excluding() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let w: Vec<f64> = (0..300)
            .map(|i| if i % 7 == 0 { 0.0 } else { (i % 13 + 1) as f64 })
            .collect();
        let ex: Vec<bool> = (0..300).map(|i| i % 5 == 0).collect();
        for _ in 0..200 {
            let s = sample_by_weight(&w, &ex, 100, &mut rng);
            assert_eq!(s.len(), 100);
            let mut d = s.clone();
            d.sort_unstable();
            d.dedup();
            assert_eq!(d.len(), 100);
            assert!(s.iter().all(|&i| !ex[i] && w[i] > 0.0));
        }
    }

    #[test]
    fn heavy_exclusion_falls_back() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut w = vec![1.0; 1000];
        w[0] = 1e9;
        let mut ex = vec![false; 1000];
        ex[0] = true;
        let s = sample_by_weight(&w, &ex, 100, &mut rng);
        assert_eq!(s.len(), 100);
        assert!(!s.contains(&0));
    }

    #[test]
    fn too_few_returns_all() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = sample_by_weight(
            &[1.0, 0.0, 2.0, 1.0],
            &[false, false, false, true],
            5,
            &mut rng,
        );
        assert_eq!(s, vec![0, 2]);
    }
}
