use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::objective::mask_sequence;
use super::optim::{adam_step, cosine_lr, AdamState};
use crate::dataset::pad_truncate;
use crate::error::{Error, Result};
use crate::model::{MoiMixerModel, Positions};
use crate::numcore::Tape;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean masked-item loss over the epoch's batches.
    pub loss: f64,
    pub lr: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    pub fn line(r: &EpochRecord) -> String {
        format!("{}\t{:.10}\t{:e}", r.epoch, r.loss, r.lr)
    }

    /// `epoch<TAB>loss<TAB>lr`, one line per epoch.
    pub fn to_text(&self) -> String {
        self.epochs.iter().map(|r| Self::line(r) + "\n").collect()
    }
}

/// Trains `model` on item sequences with the masked-item objective.
///
/// Each sequence keeps its most recent `s` items. Batches are reshuffled every epoch from a
/// stream seeded by `config.seed`, which also drives masking and dropout. When `log` is given,
/// each epoch's line is written to it as soon as the epoch ends.
pub fn train(
    model: &mut MoiMixerModel,
    sequences: &[Vec<usize>],
    config: &TrainConfig,
    mut log: Option<&mut dyn Write>,
) -> Result<TrainLog> {
    config.validate()?;
    let s = model.config().max_len;
    let mask_id = model.config().mask_id();
    let inputs: Vec<Vec<usize>> = sequences
        .iter()
        .filter(|seq| !seq.is_empty())
        .map(|seq| pad_truncate(seq, s))
        .collect();
    if inputs.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let shapes: Vec<(usize, usize)> = model.params().iter().map(|e| e.value.shape()).collect();
    let mut adam = AdamState::new(&shapes);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut out = TrainLog::default();

    for epoch in 0..config.epochs {
        let lr = cosine_lr(epoch, config.epochs, config.lr);
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = Vec::with_capacity(chunk.len());
            let mut rows = Vec::new();
            let mut targets = Vec::new();
            for (b, &i) in chunk.iter().enumerate() {
                let m = mask_sequence(&inputs[i], config.mask_prob, mask_id, &mut rng)?;
                rows.extend(m.positions.iter().map(|&p| b * s + p));
                targets.extend(m.targets.iter().map(|&t| t - 1));
                batch.push(m.ids);
            }
            let mut tape = Tape::new();
            let vars = model.bind(&mut tape);
            let selected: Vec<usize> = (0..rows.len()).collect();
            let logits = model.forward_tape(
                &mut tape,
                &vars,
                &batch,
                Positions::Rows(rows),
                Some(&mut rng),
            )?;
            let loss = tape.cross_entropy(logits, &selected, &targets)?;
            let value = tape.value(loss).get(0, 0);
            if !value.is_finite() {
                return Err(Error::Input(format!("loss diverged at epoch {epoch}")));
            }
            let grads = tape.backward(loss)?;
            let grads = model.collect_grads(&vars, &grads);
            adam_step(
                &mut model.params_mut(),
                &grads,
                &mut adam,
                lr,
                config.weight_decay,
            )?;
            total += value;
            batches += 1;
        }
        let record = EpochRecord {
            epoch,
            loss: total / batches as f64,
            lr,
        };
        log::info!("{}", TrainLog::line(&record));
        if let Some(w) = log.as_deref_mut() {
            writeln!(w, "{}", TrainLog::line(&record)).map_err(|e| Error::io("training log", e))?;
        }
        out.epochs.push(record);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn tiny_model(seed: u64) -> MoiMixerModel {
        let mut c = ModelConfig::default_for(12, 6);
        c.layers = 1;
        c.hidden = 16;
        MoiMixerModel::new(c, seed).unwrap()
    }

    fn successor(users: usize) -> Vec<Vec<usize>> {
        (0..users)
            .map(|u| (0..6).map(|t| 1 + (u + t) % 12).collect())
            .collect()
    }

    #[test]
    fn zero_lr_leaves_parameters() {
        let mut m = tiny_model(1);
        let before = m.clone();
        let cfg = TrainConfig {
            lr: 0.0,
            epochs: 1,
            batch_size: 8,
            ..Default::default()
        };
        train(&mut m, &successor(20), &cfg, None).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn seeded_runs_are_identical() {
        let cfg = TrainConfig {
            lr: 1e-2,
            epochs: 3,
            batch_size: 8,
            seed: 5,
            ..Default::default()
        };
        let (mut a, mut b) = (tiny_model(2), tiny_model(2));
        let mut text = Vec::new();
        let la = train(&mut a, &successor(30), &cfg, Some(&mut text)).unwrap();
        let lb = train(&mut b, &successor(30), &cfg, None).unwrap();
        assert_eq!(la, lb);
        assert_eq!(a, b);
        assert_eq!(String::from_utf8(text).unwrap(), la.to_text());
        assert_eq!(la.to_text().lines().count(), 3);
    }

    #[test]
    fn empty_input_is_an_error() {
        let mut m = tiny_model(3);
        assert!(train(&mut m, &[], &TrainConfig::default(), None).is_err());
    }
}
