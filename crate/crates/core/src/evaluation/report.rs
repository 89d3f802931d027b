use std::fmt::Write as _;

use super::metrics::{hr_at_n, ndcg_at_n};
use crate::error::{Error, Result};
use crate::model::{rounded_millions, ParamCount};

/// Leave-one-out ranking results for one model on one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub hr1: f64,
    pub hr10: f64,
    pub ndcg10: f64,
    /// Encoder-stack parameter count, when a model was evaluated.
    pub params: Option<ParamCount>,
    /// Encoder forward FLOPs per sequence, when a model was evaluated.
    pub flops: Option<u64>,
    /// Per-user ground-truth ranks, in user order.
    pub ranks: Vec<f64>,
}

impl EvalReport {
    pub fn from_ranks(ranks: Vec<f64>) -> Self {
        EvalReport {
            hr1: hr_at_n(&ranks, 1),
            hr10: hr_at_n(&ranks, 10),
            ndcg10: ndcg_at_n(&ranks, 10),
            params: None,
            flops: None,
            ranks,
        }
    }

    /// `0 ≤ NDCG@10 ≤ HR@10 ≤ 1` and `HR@1 ≤ HR@10`.
    pub fn check_invariants(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.hr1)
            && (0.0..=1.0).contains(&self.hr10)
            && self.ndcg10 >= 0.0
            && self.ndcg10 <= self.hr10
            && self.hr1 <= self.hr10
            && self.hr10 <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Input(format!(
                "report violates metric ordering: HR@1 {} HR@10 {} NDCG@10 {}",
                self.hr1, self.hr10, self.ndcg10
            )))
        }
    }

    /// `metric<TAB>value` lines.
    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        writeln!(s, "hr@1\t{:.6}", self.hr1).unwrap();
        writeln!(s, "hr@10\t{:.6}", self.hr10).unwrap();
        writeln!(s, "ndcg@10\t{:.6}", self.ndcg10).unwrap();
        writeln!(s, "users\t{}", self.ranks.len()).unwrap();
        if let Some(p) = self.params {
            writeln!(s, "params_weights\t{}", p.weights).unwrap();
            writeln!(s, "params_total\t{}", p.total()).unwrap();
        }
        if let Some(f) = self.flops {
            writeln!(s, "flops\t{f}").unwrap();
        }
        s
    }

    /// Aligned two-column table for terminals.
    pub fn to_table(&self) -> String {
        let mut rows = vec![
            ("HR@1".to_string(), format!("{:.4}", self.hr1)),
            ("HR@10".to_string(), format!("{:.4}", self.hr10)),
            ("NDCG@10".to_string(), format!("{:.4}", self.ndcg10)),
            ("users".to_string(), self.ranks.len().to_string()),
        ];
        if let Some(p) = self.params {
            rows.push((
                "Params (M)".into(),
                format!("{:.2}", rounded_millions(p.weights, 2)),
            ));
        }
        if let Some(f) = self.flops {
            rows.push(("FLOPs (M)".into(), format!("{:.2}", f as f64 / 1e6)));
        }
        let mut s = String::from("metric      value\n");
        for (k, v) in rows {
            writeln!(s, "{k:<11} {v}").unwrap();
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_hold_for_any_ranks() {
        let ranks: Vec<f64> = (0..300)
            .map(|i| 1.0 + ((i * 7919) % 101) as f64 / 2.0)
            .collect();
        let r = EvalReport::from_ranks(ranks);
        r.check_invariants().unwrap();
        assert!(r.to_kv().starts_with("hr@1\t"));
        assert!(r.to_table().contains("NDCG@10"));
    }

    #[test]
    fn violation_detected() {
        let mut r = EvalReport::from_ranks(vec![1.0, 20.0]);
        r.ndcg10 = 0.9;
        assert!(r.check_invariants().is_err());
    }
}
