use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::ops::log_sum_exp;
use crate::numcore::Matrix;

/// A sequence with some items replaced by the mask id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedSequence {
    pub ids: Vec<usize>,
    /// Masked positions, ascending.
    pub positions: Vec<usize>,
    /// Original item ids at `positions`.
    pub targets: Vec<usize>,
}

/// Masks each non-pad position independently with probability `rho`.
///
/// Id `0` is padding. When no position is drawn, one non-pad position is chosen uniformly
/// and masked, so every sequence contributes at least one target.
pub fn mask_sequence<R: Rng + ?Sized>(
    ids: &[usize],
    rho: f64,
    mask_id: usize,
    rng: &mut R,
) -> Result<MaskedSequence> {
    let items: Vec<usize> = (0..ids.len()).filter(|&i| ids[i] != 0).collect();
    if items.is_empty() {
        return Err(Error::Input("cannot mask a sequence without items".into()));
    }
    let mut chosen: Vec<usize> = items
        .iter()
        .copied()
        .filter(|_| rng.random::<f64>() < rho)
        .collect();
    if chosen.is_empty() {
        chosen.push(items[rng.random_range(0..items.len())]);
    }
    let mut out = ids.to_vec();
    let targets = chosen.iter().map(|&p| ids[p]).collect();
    for &p in &chosen {
        out[p] = mask_id;
    }
    Ok(MaskedSequence {
        ids: out,
        positions: chosen,
        targets,
    })
}

/// Mean softmax cross-entropy over the masked positions of one `s × V` logit matrix.
///
/// `target_ids` are item ids `1..=V`; column `j` of `logits` scores item `j + 1`.
pub fn mlm_loss(logits: &Matrix, positions: &[usize], target_ids: &[usize]) -> Result<f64> {
    if positions.is_empty() || positions.len() != target_ids.len() {
        return Err(Error::Input(
            "mlm_loss needs at least one target and matching lengths".into(),
        ));
    }
    let mut total = 0.0;
    for (&p, &t) in positions.iter().zip(target_ids) {
        if p >= logits.rows() || t == 0 || t > logits.cols() {
            return Err(Error::Input(format!(
                "target ({p}, {t}) outside {}x{} logits",
                logits.rows(),
                logits.cols()
            )));
        }
        let row = logits.row(p);
        total += log_sum_exp(row) - row[t - 1];
    }
    Ok(total / positions.len() as f64)
}
