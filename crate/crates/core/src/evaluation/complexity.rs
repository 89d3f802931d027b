use crate::model::{Arch, ModelConfig, MoiMixerModel, ParamCount, TokenMixerKind};
use crate::moi::{Activation, MoiSpec, NormKind, NormLocation};

/// One-line statement of how [`count_flops`] counts.
pub const FLOPS_CONVENTION: &str = "encoder forward pass, one sequence: 2 FLOPs per multiply-add, \
1 per element for bias, activation, product, residual and scaling ops, 5 per element for layernorm, \
3 per element for L2 normalisation; embedding, head and dropout excluded";

/// Sequence lengths reported alongside the configured one.
pub const FLOPS_LENGTHS: [usize; 6] = [100, 200, 400, 600, 800, 1000];

/// Encoder-stack parameters of a built model.
pub fn count_params(model: &MoiMixerModel) -> ParamCount {
    model.encoder_param_count()
}

fn norm_flops(kind: NormKind, elements: u64) -> u64 {
    match kind {
        NormKind::None => 0,
        NormKind::LayerNorm => 5 * elements,
        NormKind::L2 => 3 * elements,
        NormKind::LayerScale => elements,
    }
}

/// One MOI layer applied independently to `rows` vectors.
fn moi_flops(spec: &MoiSpec, rows: u64) -> u64 {
    let h = spec.hidden as u64;
    let hidden = rows * h;
    let mut f = 0;
    for &d in &spec.input_dims {
        f += 2 * rows * d as u64 * h;
        if spec.use_bias {
            f += hidden;
        }
        if spec.activation == Activation::Gelu {
            f += hidden;
        }
        if spec.norm_location == NormLocation::BeforeActivation {
            f += norm_flops(spec.norm_kind, hidden);
        }
    }
    f += (spec.order as u64 - 1) * hidden;
    if spec.norm_location == NormLocation::AfterProduct {
        f += norm_flops(spec.norm_kind, hidden);
    }
    f + 2 * hidden * spec.output_dim as u64
}

/// Analytic encoder FLOPs for one sequence of length `config.max_len`.
pub fn count_flops(config: &ModelConfig) -> u64 {
    let s = config.max_len as u64;
    let d = config.hidden as u64;
    let tokens = s * d;
    let per_layer = match config.arch {
        Arch::MoiMixer => {
            let token = match config.token_mixer {
                TokenMixerKind::Moi => moi_flops(&config.token_spec(), d),
                TokenMixerKind::Linear => 2 * d * s * s,
            };
            let channel = moi_flops(&config.channel_spec(), s);
            2 * 5 * tokens + 2 * tokens + token + channel
        }
        Arch::Gmlp => {
            let h = config.channel_hidden() as u64;
            let hidden = s * h;
            let bias = if config.use_bias { 2 * hidden } else { 0 };
            5 * tokens
                + 2 * (2 * s * d * h)
                + bias
                + 2 * hidden
                + 2 * s * s * h
                + hidden
                + hidden
                + 2 * hidden * d
                + tokens
        }
    };
    per_layer * config.layers as u64
}

/// `(s, encoder params, FLOPs)` for each length in [`FLOPS_LENGTHS`].
pub fn flops_table(config: &ModelConfig) -> Vec<(usize, ParamCount, u64)> {
    FLOPS_LENGTHS
        .iter()
        .map(|&s| {
            let mut c = config.clone();
            c.max_len = s;
            (s, c.encoder_param_count(), count_flops(&c))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_dense_product() {
        // one first-order layer without bias, activation or norm: two products only
        let spec = MoiSpec::new(1, 6, 4)
            .with_bias(false)
            .with_norm(NormKind::None)
            .with_activation(Activation::Identity)
            .with_output_dim(1);
        assert_eq!(moi_flops(&spec, 3), 2 * 3 * 6 * 4 + 2 * 3 * 4);
    }

    #[test]
    fn moi_mixer_doubles_with_length() {
        let mut c = ModelConfig::default_for(100, 100);
        c.hidden = 64;
        let f1 = count_flops(&c);
        c.max_len = 200;
        let r = count_flops(&c) as f64 / f1 as f64;
        assert!((1.9..=2.1).contains(&r), "{r}");
    }

    #[test]
    fn gmlp_is_superlinear() {
        let mut c = ModelConfig::default_for(100, 256);
        c.hidden = 64;
        c.arch = Arch::Gmlp;
        let f1 = count_flops(&c);
        c.max_len = 512;
        assert!(count_flops(&c) as f64 / f1 as f64 > 2.2);
    }

    #[test]
    fn table_is_monotone() {
        let t = flops_table(&ModelConfig::default_for(100, 200));
        assert!(t.windows(2).all(|w| w[1].2 > w[0].2));
        let r = t[5].2 as f64 / t[0].2 as f64;
        assert!((9.5..=10.5).contains(&r));
    }
}
