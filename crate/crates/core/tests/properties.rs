use moi_mixer::dataset::{core_filter, Interaction};
use moi_mixer::evaluation::{ndcg_at_n, rank_ground_truth};
use moi_mixer::training::mask_sequence;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

proptest! {
    #[test]
    fn rank_lies_in_range(scores in prop::collection::vec(-3i32..3, 1..120)) {
        let s: Vec<f64> = scores.iter().map(|&x| x as f64).collect();
        let r = rank_ground_truth(&s);
        prop_assert!(r >= 1.0 && r <= s.len() as f64);
        let n = ndcg_at_n(&[r], 10);
        prop_assert!((0.0..=1.0).contains(&n));
    }

    #[test]
    fn masking_hits_only_items(
        seq in prop::collection::vec(0usize..30, 1..40),
        rho in 0.0f64..1.0,
        seed in any::<u64>(),
    ) {
        prop_assume!(seq.iter().any(|&x| x != 0));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let m = mask_sequence(&seq, rho, 31, &mut rng).unwrap();
        prop_assert!(!m.positions.is_empty());
        prop_assert_eq!(m.positions.len(), m.targets.len());
        for (&p, &t) in m.positions.iter().zip(&m.targets) {
            prop_assert_eq!(m.ids[p], 31);
            prop_assert_eq!(seq[p], t);
            prop_assert!(t != 0);
        }
        for (i, (&a, &b)) in seq.iter().zip(&m.ids).enumerate() {
            if !m.positions.contains(&i) {
                prop_assert_eq!(a, b);
            }
        }
    }

    #[test]
    fn core_filter_reaches_a_fixpoint(
        rows in prop::collection::vec((0u8..12, 0u8..10), 0..300),
        k in 1usize..6,
    ) {
        let log: Vec<Interaction> = rows
            .iter()
            .enumerate()
            .map(|(t, &(u, i))| Interaction { user: u.to_string(), item: i.to_string(), timestamp: t as f64 })
            .collect();
        if let Ok(kept) = core_filter(&log, k) {
            let count = |f: &dyn Fn(&Interaction) -> &str, key: &str| kept.iter().filter(|r| f(r) == key).count();
            for r in &kept {
                prop_assert!(count(&|x| &x.user, &r.user) >= k);
                prop_assert!(count(&|x| &x.item, &r.item) >= k);
            }
            prop_assert_eq!(core_filter(&kept, k).unwrap(), kept);
        }
    }
}
