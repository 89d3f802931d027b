use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::complexity::{count_flops, count_params};
use super::metrics::rank_ground_truth;
use super::report::EvalReport;
use crate::dataset::{pad_truncate, sample_negatives, EvalTarget, InteractionDataset};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, MoiMixerModel};
use crate::training::{train, TrainConfig, TrainLog};

/// Users scored per forward pass.
pub const EVAL_BATCH: usize = 128;

/// Ground truth followed by its negatives, for every user in order.
///
/// All evaluators draw candidates from the same seeded stream, so a model and the popularity
/// baseline evaluated with one seed rank identical candidate sets.
fn candidates(
    ds: &InteractionDataset,
    target: EvalTarget,
    negatives: usize,
    seed: u64,
) -> Vec<Vec<usize>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out: Vec<Vec<usize>> = (0..ds.num_users())
        .map(|u| {
            let mut c = vec![target.ground_truth(ds, u)];
            c.extend(sample_negatives(ds, u, target, negatives, &mut rng));
            c
        })
        .collect();
    let short = out.iter().filter(|c| c.len() <= negatives).count();
    if short > 0 {
        log::warn!("{short} of {} users have fewer than {negatives} eligible negatives; all eligible items used", out.len());
    }
    out
}

/// Ranks each user's held-out item against popularity-sampled negatives.
///
/// The model sees the user's history (most recent `s − 1` items) followed by the mask id and
/// scores candidates at the final position.
pub fn evaluate_model(
    model: &MoiMixerModel,
    ds: &InteractionDataset,
    target: EvalTarget,
    negatives: usize,
    seed: u64,
) -> Result<EvalReport> {
    let config = model.config();
    if ds.num_items() != config.num_items {
        return Err(Error::Config(format!(
            "model expects {} items, dataset has {}",
            config.num_items,
            ds.num_items()
        )));
    }
    let s = config.max_len;
    let cands = candidates(ds, target, negatives, seed);
    let mut ranks = Vec::with_capacity(ds.num_users());
    let users: Vec<usize> = (0..ds.num_users()).collect();
    for chunk in users.chunks(EVAL_BATCH) {
        let inputs: Vec<Vec<usize>> = chunk
            .iter()
            .map(|&u| {
                let mut h = target.history(ds, u);
                h.push(config.mask_id());
                pad_truncate(&h, s)
            })
            .collect();
        let logits = model.score_last(&inputs)?;
        for (b, &u) in chunk.iter().enumerate() {
            let row = logits.row(b);
            let scores: Vec<f64> = cands[u].iter().map(|&i| row[i - 1]).collect();
            ranks.push(rank_ground_truth(&scores));
        }
    }
    let mut report = EvalReport::from_ranks(ranks);
    report.params = Some(count_params(model));
    report.flops = Some(count_flops(config));
    Ok(report)
}

/// Scores candidates by training popularity.
///
/// Integer counts tie often; a seeded jitter in `[0, 0.5)` orders tied items randomly
/// without ever reordering distinct counts.
pub fn pop_baseline(
    ds: &InteractionDataset,
    target: EvalTarget,
    negatives: usize,
    seed: u64,
) -> EvalReport {
    let cands = candidates(ds, target, negatives, seed);
    let mut jitter = ChaCha8Rng::seed_from_u64(seed);
    jitter.set_stream(1);
    let ranks = cands
        .iter()
        .map(|c| {
            let scores: Vec<f64> = c
                .iter()
                .map(|&i| ds.popularity(i) as f64 + 0.5 * jitter.random::<f64>())
                .collect();
            rank_ground_truth(&scores)
        })
        .collect();
    EvalReport::from_ranks(ranks)
}

/// Builds a model seeded by `train_config.seed`, trains it on the training prefixes and
/// evaluates it on `target`.
pub fn fit_and_evaluate(
    ds: &InteractionDataset,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
    target: EvalTarget,
    negatives: usize,
    log: Option<&mut dyn Write>,
) -> Result<(MoiMixerModel, TrainLog, EvalReport)> {
    let mut config = model_config.clone();
    config.num_items = ds.num_items();
    let mut model = MoiMixerModel::new(config, train_config.seed)?;
    let log = train(&mut model, &ds.train_sequences(), train_config, log)?;
    let report = evaluate_model(&model, ds, target, negatives, train_config.seed)?;
    Ok((model, log, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_generate, SynthRule, UserSplit};

    fn popular_truth() -> InteractionDataset {
        // item 1 appears in every training prefix; each user's test item is item 1
        let users = (0..30)
            .map(|u| UserSplit {
                user: u.to_string(),
                train: vec![2 + u % 5, 1, 7 + u % 3],
                valid: 10 + u % 4,
                test: 1,
            })
            .collect();
        InteractionDataset::from_splits(users, (1..=15).map(|i| i.to_string()).collect()).unwrap()
    }

    #[test]
    fn pop_finds_the_most_popular() {
        let ds = popular_truth();
        let r = pop_baseline(&ds, EvalTarget::Test, 5, 1);
        assert_eq!(r.hr1, 1.0);
    }

    #[test]
    fn pop_is_seeded() {
        let ds = synth_generate(200, 300, 5, 9, SynthRule::Uniform, 3).unwrap();
        assert_eq!(
            pop_baseline(&ds, EvalTarget::Test, 100, 4),
            pop_baseline(&ds, EvalTarget::Test, 100, 4)
        );
    }

    #[test]
    fn model_report_satisfies_invariants() {
        let ds = synth_generate(30, 40, 4, 8, SynthRule::Successor, 5).unwrap();
        let mut c = ModelConfig::default_for(30, 6);
        c.hidden = 8;
        c.layers = 1;
        let m = MoiMixerModel::new(c, 1).unwrap();
        let r = evaluate_model(&m, &ds, EvalTarget::Valid, 20, 7).unwrap();
        r.check_invariants().unwrap();
        assert_eq!(r.ranks.len(), 40);
        assert!(r.ranks.iter().all(|&x| (1.0..=21.0).contains(&x)));
        assert_eq!(
            r,
            evaluate_model(&m, &ds, EvalTarget::Valid, 20, 7).unwrap()
        );
    }
}
