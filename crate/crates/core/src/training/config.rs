use std::str::FromStr;

use crate::error::{Error, Result};

/// Optimisation hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Peak learning rate, decayed by a cosine schedule.
    pub lr: f64,
    /// Decoupled weight decay.
    pub weight_decay: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Mask proportion `ρ`, in `(0, 1)`.
    pub mask_prob: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            weight_decay: 1e-4,
            epochs: 200,
            batch_size: 256,
            mask_prob: 0.2,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rates searched by the validation grid.
    pub const LR_GRID: [f64; 4] = [1e-3, 5e-4, 3e-4, 1e-4];
    /// Weight decays searched by the validation grid.
    pub const WD_GRID: [f64; 3] = [1e-3, 1e-4, 1e-5];

    pub fn validate(&self) -> Result<()> {
        if !(self.mask_prob > 0.0 && self.mask_prob < 1.0) {
            return Err(Error::Config(format!(
                "mask_prob must lie in (0, 1), got {}",
                self.mask_prob
            )));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "epochs and batch_size must be at least 1".into(),
            ));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite())
            || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite())
        {
            return Err(Error::Config(
                "lr and weight_decay must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("lr", self.lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("epochs", self.epochs.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("mask_prob", self.mask_prob.to_string()),
            ("seed", self.seed.to_string()),
        ]
    }

    /// Sets one key. Returns `Ok(false)` when the key is not a training key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
        }
        match key {
            "lr" => self.lr = parse(key, value)?,
            "weight_decay" => self.weight_decay = parse(key, value)?,
            "epochs" => self.epochs = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "mask_prob" => self.mask_prob = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_round_trip() {
        let c = TrainConfig::default();
        assert_eq!((c.epochs, c.batch_size), (200, 256));
        c.validate().unwrap();
        let mut d = TrainConfig {
            lr: 0.5,
            ..Default::default()
        };
        for (k, v) in c.to_pairs() {
            assert!(d.set(k, &v).unwrap());
        }
        assert_eq!(c, d);
        assert!(!d.set("hidden", "3").unwrap());
    }

    #[test]
    fn mask_prob_bounds() {
        for rho in [0.0, 1.0, -0.1] {
            let c = TrainConfig {
                mask_prob: rho,
                ..Default::default()
            };
            assert!(c.validate().is_err());
        }
    }
}
