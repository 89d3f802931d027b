use std::fmt::Write as _;

use super::protocol::fit_and_evaluate;
use super::report::EvalReport;
use crate::dataset::{EvalTarget, InteractionDataset, NUM_NEGATIVES};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, ParamCount};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub token_order: usize,
    pub channel_order: usize,
    pub params: ParamCount,
    pub report: EvalReport,
}

/// Test NDCG@10 for each `(k_s, k_c)` pair.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub token_orders: Vec<usize>,
    pub channel_orders: Vec<usize>,
    /// Row-major over `token_orders × channel_orders`.
    pub cells: Vec<GridCell>,
}

impl GridTable {
    pub fn cell(&self, k_s: usize, k_c: usize) -> Option<&GridCell> {
        self.cells
            .iter()
            .find(|c| c.token_order == k_s && c.channel_order == k_c)
    }

    /// Rows are `k_s`, columns are `k_c`, values are NDCG@10.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("k_s\\k_c");
        for k in &self.channel_orders {
            write!(s, "\t{k}").unwrap();
        }
        s.push('\n');
        for &ks in &self.token_orders {
            write!(s, "{ks}").unwrap();
            for &kc in &self.channel_orders {
                write!(
                    s,
                    "\t{:.4}",
                    self.cell(ks, kc).expect("full grid").report.ndcg10
                )
                .unwrap();
            }
            s.push('\n');
        }
        s
    }
}

fn check_orders(name: &str, orders: &[usize]) -> Result<()> {
    if orders.is_empty() || orders.iter().any(|&k| !(1..=4).contains(&k)) {
        return Err(Error::Config(format!(
            "{name} orders must be a non-empty subset of 1..=4, got {orders:?}"
        )));
    }
    Ok(())
}

/// Trains and tests one model per `(k_s, k_c)` cell, other settings fixed.
pub fn grid_experiment(
    ds: &InteractionDataset,
    base: &ModelConfig,
    token_orders: &[usize],
    channel_orders: &[usize],
    train_config: &TrainConfig,
) -> Result<GridTable> {
    check_orders("token", token_orders)?;
    check_orders("channel", channel_orders)?;
    let mut cells = Vec::new();
    for &ks in token_orders {
        for &kc in channel_orders {
            let mut config = base.clone();
            config.token_order = ks;
            config.channel_order = kc;
            let (model, _, report) = fit_and_evaluate(
                ds,
                &config,
                train_config,
                EvalTarget::Test,
                NUM_NEGATIVES,
                None,
            )?;
            log::info!("grid cell k_s={ks} k_c={kc}: ndcg@10 {:.4}", report.ndcg10);
            cells.push(GridCell {
                token_order: ks,
                channel_order: kc,
                params: model.encoder_param_count(),
                report,
            });
        }
    }
    Ok(GridTable {
        token_orders: token_orders.to_vec(),
        channel_orders: channel_orders.to_vec(),
        cells,
    })
}

/// Validation NDCG@10 for each learning-rate and weight-decay pair.
#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    /// `(lr, weight_decay, validation NDCG@10)` in search order.
    pub trials: Vec<(f64, f64, f64)>,
    /// The first trial with the highest validation NDCG@10.
    pub best: TrainConfig,
}

/// Chooses `lr` and `weight_decay` by validation NDCG@10.
pub fn select_hyperparameters(
    ds: &InteractionDataset,
    model_config: &ModelConfig,
    base: &TrainConfig,
    lrs: &[f64],
    weight_decays: &[f64],
) -> Result<TuningResult> {
    if lrs.is_empty() || weight_decays.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let mut trials = Vec::new();
    let mut best: Option<(f64, TrainConfig)> = None;
    for &lr in lrs {
        for &wd in weight_decays {
            let cfg = TrainConfig {
                lr,
                weight_decay: wd,
                ..base.clone()
            };
            let (_, _, report) = fit_and_evaluate(
                ds,
                model_config,
                &cfg,
                EvalTarget::Valid,
                NUM_NEGATIVES,
                None,
            )?;
            trials.push((lr, wd, report.ndcg10));
            if best.as_ref().is_none_or(|(b, _)| report.ndcg10 > *b) {
                best = Some((report.ndcg10, cfg));
            }
        }
    }
    Ok(TuningResult {
        trials,
        best: best.expect("non-empty grid").1,
    })
}
