/// 1-based rank of `scores[0]` (the ground truth) among all of `scores`.
///
/// Each competitor with a strictly greater score adds one; each exact tie adds one half, so
/// an all-equal list of `n + 1` scores ranks the ground truth at `1 + n/2`.
pub fn rank_ground_truth(scores: &[f64]) -> f64 {
    let (&gt, rest) = scores
        .split_first()
        .expect("at least the ground-truth score");
    let mut rank = 1.0;
    for &x in rest {
        if x > gt {
            rank += 1.0;
        } else if x == gt {
            rank += 0.5;
        }
    }
    rank
}

/// Fraction of ranks within the top `n`.
pub fn hr_at_n(ranks: &[f64], n: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks.iter().filter(|&&r| r <= n as f64).count() as f64 / ranks.len() as f64
}

/// Mean of `1 / log2(rank + 1)` over ranks within the top `n`, zero otherwise.
pub fn ndcg_at_n(ranks: &[f64], n: usize) -> f64 {
    if ranks.is_empty() {
        return 0.0;
    }
    ranks
        .iter()
        .map(|&r| {
            if r <= n as f64 {
                1.0 / (r + 1.0).log2()
            } else {
                0.0
            }
        })
        .sum::<f64>()
        / ranks.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranks() {
        let mut s = vec![0.5; 101];
        assert_eq!(rank_ground_truth(&s), 51.0);
        s[0] = 2.0;
        assert_eq!(rank_ground_truth(&s), 1.0);
        s[0] = -1.0;
        assert_eq!(rank_ground_truth(&s), 101.0);
    }

    #[test]
    fn monotone_transform_invariance() {
        let s: Vec<f64> = (0..101)
            .map(|i| ((i * 37) % 101) as f64 * 0.1 - 3.0)
            .collect();
        let t: Vec<f64> = s.iter().map(|x| (2.0 * x).exp() + 7.0).collect();
        assert_eq!(rank_ground_truth(&s), rank_ground_truth(&t));
    }

    #[test]
    fn hit_ratio() {
        assert_eq!(hr_at_n(&[1.0, 1.0, 1.0], 10), 1.0);
        assert_eq!(hr_at_n(&[11.0, 12.0], 10), 0.0);
        assert_eq!(hr_at_n(&[1.0, 5.0, 11.0, 200.0], 10), 0.5);
    }

    #[test]
    fn ndcg() {
        assert_eq!(ndcg_at_n(&[1.0], 10), 1.0);
        assert!((ndcg_at_n(&[2.0], 10) - 0.630_929_753_571_457_4).abs() < 1e-15);
        assert_eq!(ndcg_at_n(&[11.0], 10), 0.0);
    }
}
