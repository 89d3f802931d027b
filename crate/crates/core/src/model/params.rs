//! Parameter bookkeeping: scopes, kinds and counts.

use super::config::{Arch, ModelConfig, TokenMixerKind};
use crate::moi::{MoiSpec, NormKind};

/// Where a parameter lives in the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scope {
    Embedding,
    Encoder,
    Head,
}

/// Dense weight matrices versus per-channel vectors (biases, norm gains and shifts).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Vector,
}

/// Split parameter count.
///
/// `weights` counts dense weight-matrix entries only and is what `Params (M)` reports.
/// `vectors` holds everything else that is trainable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ParamCount {
    pub weights: u64,
    pub vectors: u64,
}

impl ParamCount {
    pub fn total(&self) -> u64 {
        self.weights + self.vectors
    }

    pub fn add(&mut self, kind: ParamKind, n: u64) {
        match kind {
            ParamKind::Weight => self.weights += n,
            ParamKind::Vector => self.vectors += n,
        }
    }
}

impl std::ops::Add for ParamCount {
    type Output = ParamCount;
    fn add(self, rhs: ParamCount) -> ParamCount {
        ParamCount {
            weights: self.weights + rhs.weights,
            vectors: self.vectors + rhs.vectors,
        }
    }
}

/// `n / 10⁶` rounded half-away-from-zero to `decimals` places.
pub fn rounded_millions(n: u64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (n as f64 / 1e6 * scale).round() / scale
}

fn moi_count(spec: &MoiSpec) -> ParamCount {
    let h = spec.hidden as u64;
    let mut c = ParamCount::default();
    for &d in &spec.input_dims {
        c.weights += d as u64 * h;
    }
    c.weights += h * spec.output_dim as u64;
    if spec.use_bias {
        c.vectors += spec.order as u64 * h;
    }
    match spec.norm_kind {
        NormKind::LayerNorm => c.vectors += 2 * h,
        NormKind::LayerScale => c.vectors += h,
        NormKind::None | NormKind::L2 => {}
    }
    c
}

impl ModelConfig {
    /// Closed-form count of encoder-stack parameters (mixers and block norms).
    pub fn encoder_param_count(&self) -> ParamCount {
        let d = self.hidden as u64;
        let s = self.max_len as u64;
        let mut layer = ParamCount::default();
        match self.arch {
            Arch::MoiMixer => {
                layer.vectors += 4 * d;
                layer = layer
                    + match self.token_mixer {
                        TokenMixerKind::Moi => moi_count(&self.token_spec()),
                        TokenMixerKind::Linear => ParamCount {
                            weights: s * s,
                            vectors: 0,
                        },
                    };
                layer = layer + moi_count(&self.channel_spec());
            }
            Arch::Gmlp => {
                let h = self.channel_hidden() as u64;
                layer.vectors += 2 * d;
                layer.weights += 3 * d * h + s * s;
                layer.vectors += s;
                if self.use_bias {
                    layer.vectors += 2 * h;
                }
            }
        }
        ParamCount {
            weights: layer.weights * self.layers as u64,
            vectors: layer.vectors * self.layers as u64,
        }
    }
}
