use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::moi::{Activation, MoiSpec, NormKind, NormLocation};

/// What mixes information across positions inside an encoder block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenMixerKind {
    /// An MOI layer of order `token_order`.
    Moi,
    /// A single `s × s` matrix, no hidden layer or activation.
    Linear,
}

/// Encoder block family.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Token-mixing then channel-mixing, each with its own residual.
    MoiMixer,
    /// Single gMLP spatial-gating block per layer.
    Gmlp,
}

impl fmt::Display for TokenMixerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TokenMixerKind::Moi => "moi",
            TokenMixerKind::Linear => "linear",
        })
    }
}

impl FromStr for TokenMixerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moi" => Ok(TokenMixerKind::Moi),
            "linear" => Ok(TokenMixerKind::Linear),
            _ => Err(Error::Config(format!(
                "unknown token mixer '{s}', expected moi or linear"
            ))),
        }
    }
}

impl fmt::Display for Arch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Arch::MoiMixer => "moi-mixer",
            Arch::Gmlp => "gmlp",
        })
    }
}

impl FromStr for Arch {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "moi-mixer" => Ok(Arch::MoiMixer),
            "gmlp" => Ok(Arch::Gmlp),
            _ => Err(Error::Config(format!(
                "unknown arch '{s}', expected moi-mixer or gmlp"
            ))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub layers: usize,
    /// Token width `d_h`.
    pub hidden: usize,
    /// Token-mixer hidden width `d_s`; `None` means `d_h / 2`.
    pub token_hidden: Option<usize>,
    /// Channel-mixer hidden width `d_c`; `None` means `6·d_h / (k_c + 1)` for the MOI-Mixer
    /// and `2·d_h` per gate branch for gMLP.
    pub channel_hidden: Option<usize>,
    pub token_order: usize,
    pub channel_order: usize,
    /// Maximum sequence length `s`.
    pub max_len: usize,
    /// Item vocabulary size `V`; ids `1..=V` are items, `0` pads and `V + 1` masks.
    pub num_items: usize,
    pub dropout: f64,
    pub positional_embedding: bool,
    pub token_mixer: TokenMixerKind,
    pub arch: Arch,
    pub use_bias: bool,
    /// Normalisation inside MOI layers of order two and above; first-order layers have none.
    pub norm_kind: NormKind,
    pub norm_location: NormLocation,
    pub activation: Activation,
    /// Reuse the item embedding table as the output projection.
    pub tie_weights: bool,
}

impl ModelConfig {
    /// `L = 2`, `d_h = 256`, `k_s = 1`, `k_c = 2`, dropout 0.2.
    pub fn default_for(num_items: usize, max_len: usize) -> Self {
        ModelConfig {
            layers: 2,
            hidden: 256,
            token_hidden: None,
            channel_hidden: None,
            token_order: 1,
            channel_order: 2,
            max_len,
            num_items,
            dropout: 0.2,
            positional_embedding: false,
            token_mixer: TokenMixerKind::Moi,
            arch: Arch::MoiMixer,
            use_bias: true,
            norm_kind: NormKind::LayerNorm,
            norm_location: NormLocation::AfterProduct,
            activation: Activation::Gelu,
            tie_weights: true,
        }
    }

    pub fn token_hidden(&self) -> usize {
        self.token_hidden.unwrap_or(self.hidden / 2)
    }

    pub fn channel_hidden(&self) -> usize {
        self.channel_hidden.unwrap_or(match self.arch {
            Arch::MoiMixer => 6 * self.hidden / (self.channel_order + 1),
            Arch::Gmlp => 2 * self.hidden,
        })
    }

    pub fn pad_id(&self) -> usize {
        0
    }

    pub fn mask_id(&self) -> usize {
        self.num_items + 1
    }

    /// Rows of the item embedding table (items plus pad and mask).
    pub fn vocab_rows(&self) -> usize {
        self.num_items + 2
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("token_order", self.token_order),
            ("channel_order", self.channel_order),
            ("max_len", self.max_len),
            ("num_items", self.num_items),
            ("token_hidden", self.token_hidden()),
            ("channel_hidden", self.channel_hidden()),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::Config(format!(
                "dropout must lie in [0, 1), got {}",
                self.dropout
            )));
        }
        Ok(())
    }

    fn norm_for(&self, order: usize) -> NormKind {
        if order == 1 {
            NormKind::None
        } else {
            self.norm_kind
        }
    }

    /// Token mixer acting on length-`s` columns.
    pub fn token_spec(&self) -> MoiSpec {
        MoiSpec::new(self.token_order, self.max_len, self.token_hidden())
            .with_bias(self.use_bias)
            .with_norm(self.norm_for(self.token_order))
            .with_norm_location(self.norm_location)
            .with_activation(self.activation)
    }

    /// Channel mixer acting on length-`d_h` rows.
    pub fn channel_spec(&self) -> MoiSpec {
        MoiSpec::new(self.channel_order, self.hidden, self.channel_hidden())
            .with_bias(self.use_bias)
            .with_norm(self.norm_for(self.channel_order))
            .with_norm_location(self.norm_location)
            .with_activation(self.activation)
    }

    /// Every configurable key with its current value, in a stable order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |v| v.to_string());
        vec![
            ("layers", self.layers.to_string()),
            ("hidden", self.hidden.to_string()),
            ("token_hidden", opt(self.token_hidden)),
            ("channel_hidden", opt(self.channel_hidden)),
            ("token_order", self.token_order.to_string()),
            ("channel_order", self.channel_order.to_string()),
            ("max_len", self.max_len.to_string()),
            ("num_items", self.num_items.to_string()),
            ("dropout", self.dropout.to_string()),
            (
                "positional_embedding",
                self.positional_embedding.to_string(),
            ),
            ("token_mixer", self.token_mixer.to_string()),
            ("arch", self.arch.to_string()),
            ("use_bias", self.use_bias.to_string()),
            ("norm_kind", self.norm_kind.to_string()),
            ("norm_location", self.norm_location.to_string()),
            ("activation", self.activation.to_string()),
            ("tie_weights", self.tie_weights.to_string()),
        ]
    }

    /// Sets one key. Returns `Ok(false)` when the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("invalid value '{value}' for {key}")))
        }
        let opt = |key: &str, value: &str| -> Result<Option<usize>> {
            if value == "auto" {
                Ok(None)
            } else {
                parse(key, value).map(Some)
            }
        };
        match key {
            "layers" => self.layers = parse(key, value)?,
            "hidden" => self.hidden = parse(key, value)?,
            "token_hidden" => self.token_hidden = opt(key, value)?,
            "channel_hidden" => self.channel_hidden = opt(key, value)?,
            "token_order" => self.token_order = parse(key, value)?,
            "channel_order" => self.channel_order = parse(key, value)?,
            "max_len" => self.max_len = parse(key, value)?,
            "num_items" => self.num_items = parse(key, value)?,
            "dropout" => self.dropout = parse(key, value)?,
            "positional_embedding" => self.positional_embedding = parse(key, value)?,
            "token_mixer" => self.token_mixer = value.parse()?,
            "arch" => self.arch = value.parse()?,
            "use_bias" => self.use_bias = parse(key, value)?,
            "norm_kind" => self.norm_kind = value.parse()?,
            "norm_location" => self.norm_location = value.parse()?,
            "activation" => self.activation = value.parse()?,
            "tie_weights" => self.tie_weights = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }
}
