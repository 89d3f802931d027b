//! The full recommender: embedding, encoder stack and prediction head.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{Arch, ModelConfig, TokenMixerKind};
use super::params::{ParamCount, ParamKind, Scope};
use crate::error::{Error, Result};
use crate::moi::{gmlp_rows, moi_rows, GmlpParams, GmlpVars, MoiLayerParams, MoiVars};
use crate::numcore::ops::{dropout_mask, truncated_normal_with};
use crate::numcore::{Gradients, Matrix, Tape, Var};

#[derive(Debug, Clone, PartialEq)]
struct Norm {
    gamma: Matrix,
    beta: Matrix,
}

impl Norm {
    fn new(width: usize) -> Self {
        Norm {
            gamma: Matrix::filled(1, width, 1.0),
            beta: Matrix::zeros(1, width),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum TokenMixer {
    Moi(MoiLayerParams),
    /// `s × s`, applied to each length-`s` column.
    Linear(Matrix),
}

#[derive(Debug, Clone, PartialEq)]
enum Block {
    Mixer {
        token_norm: Norm,
        token: TokenMixer,
        channel_norm: Norm,
        channel: MoiLayerParams,
    },
    Gmlp {
        norm: Norm,
        gmlp: GmlpParams,
    },
}

/// One named parameter with its bookkeeping tags.
#[derive(Debug)]
pub struct ParamEntry<'a> {
    pub name: String,
    pub value: &'a Matrix,
    pub scope: Scope,
    pub kind: ParamKind,
}

fn kind_of(short_name: &str) -> ParamKind {
    if short_name.starts_with('w') || short_name == "spatial" {
        ParamKind::Weight
    } else {
        ParamKind::Vector
    }
}

fn entry<'a>(name: String, short: &str, value: &'a Matrix, scope: Scope) -> ParamEntry<'a> {
    let kind = match scope {
        Scope::Encoder => kind_of(short),
        _ if value.rows() == 1 => ParamKind::Vector,
        _ => ParamKind::Weight,
    };
    ParamEntry {
        name,
        value,
        scope,
        kind,
    }
}

/// MOI-Mixer (or its gMLP variant) with embedding and prediction head.
#[derive(Debug, Clone, PartialEq)]
pub struct MoiMixerModel {
    config: ModelConfig,
    /// `(V + 2) × d_h`: pad row 0, items `1..=V`, mask row `V + 1`.
    item_embedding: Matrix,
    positional: Option<Matrix>,
    blocks: Vec<Block>,
    head_w: Matrix,
    head_b: Matrix,
    /// `V × d_h` when weights are untied.
    out_proj: Option<Matrix>,
    out_bias: Matrix,
}

enum BlockVars {
    Mixer {
        token_gamma: Var,
        token_beta: Var,
        token: TokenVars,
        channel_gamma: Var,
        channel_beta: Var,
        channel: MoiVars,
    },
    Gmlp {
        gamma: Var,
        beta: Var,
        gmlp: GmlpVars,
    },
}

enum TokenVars {
    Moi(MoiVars),
    Linear(Var),
}

/// Tape handles for every model parameter.
///
/// Parameters are recorded as the first leaves of the tape in [`MoiMixerModel::params`]
/// order, so leaf `i` is parameter `i`.
pub struct ModelVars {
    item_embedding: Var,
    positional: Option<Var>,
    blocks: Vec<BlockVars>,
    head_w: Var,
    head_b: Var,
    out_proj: Option<Var>,
    out_bias: Var,
    count: usize,
}

impl ModelVars {
    pub fn param_count(&self) -> usize {
        self.count
    }

    /// Handle of parameter `i` in [`MoiMixerModel::params`] order.
    pub fn param(&self, i: usize) -> Var {
        assert!(i < self.count);
        Var(i)
    }
}

/// Which positions receive logits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Positions {
    All,
    Last,
    /// Flat row indices `b·s + t` into the stacked batch.
    Rows(Vec<usize>),
}

impl MoiMixerModel {
    /// Truncated-normal initialisation, deterministic in `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = config.hidden;
        let s = config.max_len;
        let item_embedding = truncated_normal_with(config.vocab_rows(), d, &mut rng);
        let positional = config
            .positional_embedding
            .then(|| truncated_normal_with(s, d, &mut rng));
        let mut blocks = Vec::with_capacity(config.layers);
        for _ in 0..config.layers {
            let block = match config.arch {
                Arch::MoiMixer => {
                    let token = match config.token_mixer {
                        TokenMixerKind::Moi => {
                            TokenMixer::Moi(MoiLayerParams::init(config.token_spec(), &mut rng)?)
                        }
                        TokenMixerKind::Linear => {
                            TokenMixer::Linear(truncated_normal_with(s, s, &mut rng))
                        }
                    };
                    let channel = MoiLayerParams::init(config.channel_spec(), &mut rng)?;
                    Block::Mixer {
                        token_norm: Norm::new(d),
                        token,
                        channel_norm: Norm::new(d),
                        channel,
                    }
                }
                Arch::Gmlp => Block::Gmlp {
                    norm: Norm::new(d),
                    gmlp: GmlpParams::init(
                        s,
                        d,
                        config.channel_hidden(),
                        config.use_bias,
                        &mut rng,
                    ),
                },
            };
            blocks.push(block);
        }
        let head_w = truncated_normal_with(d, d, &mut rng);
        let out_proj =
            (!config.tie_weights).then(|| truncated_normal_with(config.num_items, d, &mut rng));
        Ok(MoiMixerModel {
            item_embedding,
            positional,
            blocks,
            head_w,
            head_b: Matrix::zeros(1, d),
            out_proj,
            out_bias: Matrix::zeros(1, config.num_items),
            config,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    /// Every parameter in a fixed order, with names and tags.
    pub fn params(&self) -> Vec<ParamEntry<'_>> {
        let mut out: Vec<ParamEntry<'_>> = Vec::new();
        let mut push =
            |name: String, short: &str, value, scope| out.push(entry(name, short, value, scope));
        push(
            "item_embedding".into(),
            "item_embedding",
            &self.item_embedding,
            Scope::Embedding,
        );
        if let Some(p) = &self.positional {
            push("positional".into(), "positional", p, Scope::Embedding);
        }
        for (i, block) in self.blocks.iter().enumerate() {
            match block {
                Block::Mixer {
                    token_norm,
                    token,
                    channel_norm,
                    channel,
                } => {
                    push(
                        format!("layer{i}.token_norm.gamma"),
                        "gamma",
                        &token_norm.gamma,
                        Scope::Encoder,
                    );
                    push(
                        format!("layer{i}.token_norm.beta"),
                        "beta",
                        &token_norm.beta,
                        Scope::Encoder,
                    );
                    match token {
                        TokenMixer::Moi(p) => {
                            for (n, v) in p.named_params() {
                                push(format!("layer{i}.token.{n}"), &n, v, Scope::Encoder);
                            }
                        }
                        TokenMixer::Linear(w) => {
                            push(format!("layer{i}.token.w"), "w", w, Scope::Encoder)
                        }
                    }
                    push(
                        format!("layer{i}.channel_norm.gamma"),
                        "gamma",
                        &channel_norm.gamma,
                        Scope::Encoder,
                    );
                    push(
                        format!("layer{i}.channel_norm.beta"),
                        "beta",
                        &channel_norm.beta,
                        Scope::Encoder,
                    );
                    for (n, v) in channel.named_params() {
                        push(format!("layer{i}.channel.{n}"), &n, v, Scope::Encoder);
                    }
                }
                Block::Gmlp { norm, gmlp } => {
                    push(
                        format!("layer{i}.norm.gamma"),
                        "gamma",
                        &norm.gamma,
                        Scope::Encoder,
                    );
                    push(
                        format!("layer{i}.norm.beta"),
                        "beta",
                        &norm.beta,
                        Scope::Encoder,
                    );
                    for (n, v) in gmlp.named_params() {
                        push(format!("layer{i}.gmlp.{n}"), &n, v, Scope::Encoder);
                    }
                }
            }
        }
        push("head.w".into(), "w", &self.head_w, Scope::Head);
        push("head.b".into(), "b", &self.head_b, Scope::Head);
        if let Some(p) = &self.out_proj {
            push("head.out_proj".into(), "w", p, Scope::Head);
        }
        push("head.out_bias".into(), "b", &self.out_bias, Scope::Head);
        out
    }

    /// Mutable parameters in [`Self::params`] order.
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = vec![&mut self.item_embedding];
        out.extend(self.positional.as_mut());
        for block in &mut self.blocks {
            match block {
                Block::Mixer {
                    token_norm,
                    token,
                    channel_norm,
                    channel,
                } => {
                    out.push(&mut token_norm.gamma);
                    out.push(&mut token_norm.beta);
                    match token {
                        TokenMixer::Moi(p) => out.extend(p.params_mut()),
                        TokenMixer::Linear(w) => out.push(w),
                    }
                    out.push(&mut channel_norm.gamma);
                    out.push(&mut channel_norm.beta);
                    out.extend(channel.params_mut());
                }
                Block::Gmlp { norm, gmlp } => {
                    out.push(&mut norm.gamma);
                    out.push(&mut norm.beta);
                    out.extend(gmlp.params_mut());
                }
            }
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out.extend(self.out_proj.as_mut());
        out.push(&mut self.out_bias);
        out
    }

    /// Encoder-stack parameters counted from the live tensors.
    pub fn encoder_param_count(&self) -> ParamCount {
        let mut c = ParamCount::default();
        for e in self
            .params()
            .into_iter()
            .filter(|e| e.scope == Scope::Encoder)
        {
            c.add(e.kind, e.value.len() as u64);
        }
        c
    }

    /// Records every parameter as a leaf on an empty tape.
    pub fn bind(&self, tape: &mut Tape) -> ModelVars {
        assert!(
            tape.is_empty(),
            "parameters must be the first leaves on the tape"
        );
        let item_embedding = tape.leaf(self.item_embedding.clone());
        let positional = self.positional.as_ref().map(|p| tape.leaf(p.clone()));
        let blocks = self
            .blocks
            .iter()
            .map(|block| match block {
                Block::Mixer {
                    token_norm,
                    token,
                    channel_norm,
                    channel,
                } => {
                    let token_gamma = tape.leaf(token_norm.gamma.clone());
                    let token_beta = tape.leaf(token_norm.beta.clone());
                    let token = match token {
                        TokenMixer::Moi(p) => TokenVars::Moi(p.bind(tape)),
                        TokenMixer::Linear(w) => TokenVars::Linear(tape.leaf(w.clone())),
                    };
                    let channel_gamma = tape.leaf(channel_norm.gamma.clone());
                    let channel_beta = tape.leaf(channel_norm.beta.clone());
                    let channel = channel.bind(tape);
                    BlockVars::Mixer {
                        token_gamma,
                        token_beta,
                        token,
                        channel_gamma,
                        channel_beta,
                        channel,
                    }
                }
                Block::Gmlp { norm, gmlp } => BlockVars::Gmlp {
                    gamma: tape.leaf(norm.gamma.clone()),
                    beta: tape.leaf(norm.beta.clone()),
                    gmlp: gmlp.bind(tape),
                },
            })
            .collect();
        let head_w = tape.leaf(self.head_w.clone());
        let head_b = tape.leaf(self.head_b.clone());
        let out_proj = self.out_proj.as_ref().map(|p| tape.leaf(p.clone()));
        let out_bias = tape.leaf(self.out_bias.clone());
        ModelVars {
            item_embedding,
            positional,
            blocks,
            head_w,
            head_b,
            out_proj,
            out_bias,
            count: tape.len(),
        }
    }

    /// Handles for a tape whose first leaves are this model's parameters in [`Self::params`]
    /// order, as recorded by [`Self::bind`] or by [`crate::numcore::check_gradient`].
    pub fn leaf_layout(&self) -> ModelVars {
        let mut scratch = Tape::new();
        self.bind(&mut scratch)
    }

    /// Gradients of the bound parameters, in [`Self::params`] order.
    pub fn collect_grads(&self, vars: &ModelVars, grads: &Gradients) -> Vec<Matrix> {
        self.params()
            .iter()
            .enumerate()
            .map(|(i, e)| grads.get_or_zeros(vars.param(i), e.value.shape()))
            .collect()
    }

    fn check_ids(&self, batch: &[Vec<usize>]) -> Result<()> {
        let s = self.config.max_len;
        if batch.is_empty() {
            return Err(Error::Input("empty batch".into()));
        }
        for seq in batch {
            if seq.len() != s {
                return Err(Error::shape(
                    "model input",
                    format!("length {s}"),
                    format!("{}", seq.len()),
                ));
            }
            if let Some(&bad) = seq.iter().find(|&&id| id > self.config.mask_id()) {
                return Err(Error::Input(format!(
                    "item id {bad} outside [0, {}]",
                    self.config.mask_id()
                )));
            }
        }
        Ok(())
    }

    fn maybe_dropout(
        &self,
        tape: &mut Tape,
        x: Var,
        rng: &mut Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        match rng {
            Some(r) if self.config.dropout > 0.0 => {
                let (rows, cols) = tape.value(x).shape();
                let mask = dropout_mask(rows, cols, self.config.dropout, &mut **r)?;
                tape.mask_mul(x, mask)
            }
            _ => Ok(x),
        }
    }

    /// Embeds a batch of full-length sequences into `(B·s) × d_h`.
    fn embed_tape(&self, tape: &mut Tape, vars: &ModelVars, batch: &[Vec<usize>]) -> Result<Var> {
        let ids: Vec<usize> = batch.iter().flatten().copied().collect();
        let mut x = tape.gather_rows(vars.item_embedding, &ids)?;
        if let Some(pos) = vars.positional {
            let s = self.config.max_len;
            let rows: Vec<usize> = (0..batch.len()).flat_map(|_| 0..s).collect();
            let p = tape.gather_rows(pos, &rows)?;
            x = tape.add(x, p)?;
        }
        Ok(x)
    }

    fn block_tape(
        &self,
        tape: &mut Tape,
        block: usize,
        vars: &ModelVars,
        x: Var,
        batch: usize,
        rng: &mut Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        match (&self.blocks[block], &vars.blocks[block]) {
            (
                Block::Mixer { token, channel, .. },
                BlockVars::Mixer {
                    token_gamma,
                    token_beta,
                    token: token_vars,
                    channel_gamma,
                    channel_beta,
                    channel: channel_vars,
                },
            ) => {
                let normed = tape.layernorm(x, *token_gamma, *token_beta)?;
                let columns = tape.transpose_blocks(normed, batch)?;
                let mixed = match (token, token_vars) {
                    (TokenMixer::Moi(p), TokenVars::Moi(v)) => {
                        moi_rows(tape, p.spec(), v, columns)?
                    }
                    (TokenMixer::Linear(_), TokenVars::Linear(w)) => tape.matmul(columns, *w)?,
                    _ => unreachable!("token mixer and its handles are bound together"),
                };
                let mixed = tape.transpose_blocks(mixed, batch)?;
                let mixed = self.maybe_dropout(tape, mixed, rng)?;
                let y = tape.add(x, mixed)?;

                let normed = tape.layernorm(y, *channel_gamma, *channel_beta)?;
                let mixed = moi_rows(tape, channel.spec(), channel_vars, normed)?;
                let mixed = self.maybe_dropout(tape, mixed, rng)?;
                tape.add(y, mixed)
            }
            (Block::Gmlp { .. }, BlockVars::Gmlp { gamma, beta, gmlp }) => {
                let normed = tape.layernorm(x, *gamma, *beta)?;
                let mixed = gmlp_rows(tape, gmlp, normed, batch)?;
                let mixed = self.maybe_dropout(tape, mixed, rng)?;
                tape.add(x, mixed)
            }
            _ => unreachable!("blocks and their handles are bound together"),
        }
    }

    /// Logits for a batch of length-`s` sequences.
    ///
    /// Returns `(B·s) × V` for [`Positions::All`], `B × V` for [`Positions::Last`] and one row
    /// per index for [`Positions::Rows`]. Column
    /// `j` scores item id `j + 1`. Passing an RNG enables dropout.
    pub fn forward_tape(
        &self,
        tape: &mut Tape,
        vars: &ModelVars,
        batch: &[Vec<usize>],
        positions: Positions,
        mut rng: Option<&mut dyn RngCore>,
    ) -> Result<Var> {
        self.check_ids(batch)?;
        let b = batch.len();
        let s = self.config.max_len;
        let mut x = self.embed_tape(tape, vars, batch)?;
        x = self.maybe_dropout(tape, x, &mut rng)?;
        for i in 0..self.blocks.len() {
            x = self.block_tape(tape, i, vars, x, b, &mut rng)?;
        }
        match positions {
            Positions::All => {}
            Positions::Last => {
                let last: Vec<usize> = (0..b).map(|i| i * s + s - 1).collect();
                x = tape.gather_rows(x, &last)?;
            }
            Positions::Rows(rows) => x = tape.gather_rows(x, &rows)?,
        }
        let h = tape.matmul(x, vars.head_w)?;
        let h = tape.add_row(h, vars.head_b)?;
        let h = tape.gelu(h);
        let table = match vars.out_proj {
            Some(p) => p,
            None => {
                let items: Vec<usize> = (1..=self.config.num_items).collect();
                tape.gather_rows(vars.item_embedding, &items)?
            }
        };
        let logits = tape.matmul_nt(h, table)?;
        tape.add_row(logits, vars.out_bias)
    }

    /// Left-pads `ids` to `s`.
    pub fn pad_input(&self, ids: &[usize]) -> Result<Vec<usize>> {
        let s = self.config.max_len;
        if ids.len() > s {
            return Err(Error::Input(format!(
                "sequence of {} exceeds max_len {s}",
                ids.len()
            )));
        }
        let mut out = vec![self.config.pad_id(); s - ids.len()];
        out.extend_from_slice(ids);
        Ok(out)
    }

    /// `s × d_h` embedding of one sequence (inference).
    pub fn embed(&self, ids: &[usize]) -> Result<Matrix> {
        let seq = self.pad_input(ids)?;
        self.check_ids(std::slice::from_ref(&seq))?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let x = self.embed_tape(&mut tape, &vars, &[seq])?;
        Ok(tape.value(x).clone())
    }

    /// One encoder block applied to `x` (`s × d_h`), without dropout.
    pub fn encoder_block(&self, layer: usize, x: &Matrix) -> Result<Matrix> {
        if layer >= self.blocks.len() {
            return Err(Error::Input(format!("layer {layer} out of range")));
        }
        let want = (self.config.max_len, self.config.hidden);
        if x.shape() != want {
            return Err(Error::shape(
                "encoder_block",
                format!("{}x{}", want.0, want.1),
                format!("{}x{}", x.rows(), x.cols()),
            ));
        }
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let xv = tape.leaf(x.clone());
        let out = self.block_tape(&mut tape, layer, &vars, xv, 1, &mut None)?;
        Ok(tape.value(out).clone())
    }

    /// `s × V` logits for one sequence of at most `s` ids (left-padded), without dropout.
    pub fn forward(&self, ids: &[usize]) -> Result<Matrix> {
        let seq = self.pad_input(ids)?;
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward_tape(&mut tape, &vars, &[seq], Positions::All, None)?;
        Ok(tape.value(out).clone())
    }

    /// `B × V` logits at the final position of each full-length sequence, without dropout.
    pub fn score_last(&self, batch: &[Vec<usize>]) -> Result<Matrix> {
        let mut tape = Tape::new();
        let vars = self.bind(&mut tape);
        let out = self.forward_tape(&mut tape, &vars, batch, Positions::Last, None)?;
        Ok(tape.value(out).clone())
    }

    /// Replaces parameter values in [`Self::params`] order.
    pub fn load_params(&mut self, values: Vec<Matrix>) -> Result<()> {
        let mut slots = self.params_mut();
        if slots.len() != values.len() {
            return Err(Error::shape(
                "load_params",
                format!("{} tensors", slots.len()),
                format!("{}", values.len()),
            ));
        }
        for (slot, v) in slots.iter_mut().zip(&values) {
            if slot.shape() != v.shape() {
                return Err(Error::shape(
                    "load_params",
                    format!("{:?}", slot.shape()),
                    format!("{:?}", v.shape()),
                ));
            }
        }
        for (slot, v) in slots.into_iter().zip(values) {
            *slot = v;
        }
        Ok(())
    }
}
