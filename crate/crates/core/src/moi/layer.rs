//! The multi-order interaction layer.
//!
//! A k-th order layer projects its input through `k` factor matrices, activates each
//! projection, multiplies them elementwise, normalises the product and maps it back with an
//! output matrix:
//!
//! ```text
//! MOI_k(x) = W_oᵀ · norm( σ(W_1ᵀx + b_1) ⊙ … ⊙ σ(W_kᵀx + b_k) )
//! ```
//!
//! With `k = 1` and no normalisation this is a two-layer MLP; with `k = 2` it is low-rank
//! bilinear pooling of `x` with itself.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::ops::truncated_normal_with;
use crate::numcore::{Matrix, Tape, Var};

/// Initial per-channel value of the layer-scale normaliser.
pub const LAYER_SCALE_INIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormKind {
    LayerNorm,
    None,
    L2,
    LayerScale,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormLocation {
    /// After the Hadamard product of the activated projections.
    AfterProduct,
    /// On each projection, before the activation.
    BeforeActivation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Gelu,
    Identity,
}

macro_rules! keyword_enum {
    ($ty:ty, $($variant:path => $kw:literal),+ $(,)?) => {
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                let s = match self { $($variant => $kw),+ };
                f.write_str(s)
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($kw => Ok($variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} '{other}', expected one of: {}",
                        stringify!($ty),
                        [$($kw),+].join(", ")
                    ))),
                }
            }
        }
    };
}

keyword_enum!(NormKind, NormKind::LayerNorm => "layernorm", NormKind::None => "none", NormKind::L2 => "l2", NormKind::LayerScale => "layer-scale");
keyword_enum!(NormLocation, NormLocation::AfterProduct => "after-product", NormLocation::BeforeActivation => "before-activation");
keyword_enum!(Activation, Activation::Gelu => "gelu", Activation::Identity => "identity");

/// Shape and toggles of one MOI layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MoiSpec {
    pub order: usize,
    /// One input width per factor. In single-input mode all entries are equal.
    pub input_dims: Vec<usize>,
    pub hidden: usize,
    pub output_dim: usize,
    pub use_bias: bool,
    pub norm_kind: NormKind,
    pub norm_location: NormLocation,
    pub activation: Activation,
}

impl MoiSpec {
    /// Single-input layer `d → h → d` with biases, GELU and layer norm after the product.
    pub fn new(order: usize, dim: usize, hidden: usize) -> Self {
        MoiSpec {
            order,
            input_dims: vec![dim; order],
            hidden,
            output_dim: dim,
            use_bias: true,
            norm_kind: NormKind::LayerNorm,
            norm_location: NormLocation::AfterProduct,
            activation: Activation::Gelu,
        }
    }

    pub fn with_bias(mut self, use_bias: bool) -> Self {
        self.use_bias = use_bias;
        self
    }

    pub fn with_norm(mut self, kind: NormKind) -> Self {
        self.norm_kind = kind;
        self
    }

    pub fn with_norm_location(mut self, location: NormLocation) -> Self {
        self.norm_location = location;
        self
    }

    pub fn with_activation(mut self, activation: Activation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_input_dims(mut self, dims: Vec<usize>) -> Self {
        self.input_dims = dims;
        self
    }

    pub fn with_output_dim(mut self, dim: usize) -> Self {
        self.output_dim = dim;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::Config("interaction order must be at least 1".into()));
        }
        if self.input_dims.len() != self.order {
            return Err(Error::Config(format!(
                "order {} needs {} input widths, got {}",
                self.order,
                self.order,
                self.input_dims.len()
            )));
        }
        if self.hidden == 0 || self.output_dim == 0 || self.input_dims.contains(&0) {
            return Err(Error::Config("layer widths must be positive".into()));
        }
        Ok(())
    }

    fn single_input_dim(&self) -> Result<usize> {
        let d = self.input_dims[0];
        if self.input_dims.iter().any(|&x| x != d) {
            return Err(Error::Input(format!(
                "single-input mode needs equal factor widths, got {:?}",
                self.input_dims
            )));
        }
        Ok(d)
    }
}

/// Parameters of one MOI layer.
#[derive(Debug, Clone, PartialEq)]
pub struct MoiLayerParams {
    spec: MoiSpec,
    /// `W_m`, each `d_m × h`.
    factors: Vec<Matrix>,
    /// `b_m`, each `1 × h`; read only when `use_bias`.
    biases: Vec<Matrix>,
    /// `h × d_out`.
    out: Matrix,
    gamma: Matrix,
    beta: Matrix,
    layer_scale: Matrix,
}

/// Tape handles for the active parameters of a [`MoiLayerParams`].
#[derive(Debug, Clone)]
pub struct MoiVars {
    factors: Vec<Var>,
    biases: Option<Vec<Var>>,
    gamma: Option<Var>,
    beta: Option<Var>,
    layer_scale: Option<Var>,
    out: Var,
}

impl MoiLayerParams {
    /// Truncated-normal factors and output matrix, zero biases, unit norm gain.
    pub fn init<R: Rng + ?Sized>(spec: MoiSpec, rng: &mut R) -> Result<Self> {
        spec.validate()?;
        let h = spec.hidden;
        let factors = spec
            .input_dims
            .iter()
            .map(|&d| truncated_normal_with(d, h, rng))
            .collect();
        let out = truncated_normal_with(h, spec.output_dim, rng);
        Ok(Self::assemble(spec, factors, out))
    }

    fn assemble(spec: MoiSpec, factors: Vec<Matrix>, out: Matrix) -> Self {
        let h = spec.hidden;
        MoiLayerParams {
            biases: vec![Matrix::zeros(1, h); spec.order],
            gamma: Matrix::filled(1, h, 1.0),
            beta: Matrix::zeros(1, h),
            layer_scale: Matrix::filled(1, h, LAYER_SCALE_INIT),
            spec,
            factors,
            out,
        }
    }

    /// Builds a layer from explicit factor and output matrices; biases start at zero.
    pub fn from_parts(spec: MoiSpec, factors: Vec<Matrix>, out: Matrix) -> Result<Self> {
        spec.validate()?;
        if factors.len() != spec.order {
            return Err(Error::shape(
                "moi factors",
                format!("order {}", spec.order),
                format!("{} matrices", factors.len()),
            ));
        }
        for (w, &d) in factors.iter().zip(&spec.input_dims) {
            if w.shape() != (d, spec.hidden) {
                return Err(Error::shape(
                    "moi factor",
                    format!("{d}x{}", spec.hidden),
                    format!("{}x{}", w.rows(), w.cols()),
                ));
            }
        }
        if out.shape() != (spec.hidden, spec.output_dim) {
            return Err(Error::shape(
                "moi output",
                format!("{}x{}", spec.hidden, spec.output_dim),
                format!("{}x{}", out.rows(), out.cols()),
            ));
        }
        Ok(Self::assemble(spec, factors, out))
    }

    pub fn with_biases(mut self, biases: Vec<Matrix>) -> Result<Self> {
        if biases.len() != self.spec.order
            || biases.iter().any(|b| b.shape() != (1, self.spec.hidden))
        {
            return Err(Error::shape(
                "moi biases",
                format!("{} of 1x{}", self.spec.order, self.spec.hidden),
                format!("{} vectors", biases.len()),
            ));
        }
        self.biases = biases;
        Ok(self)
    }

    pub fn with_norm_params(mut self, gamma: Matrix, beta: Matrix) -> Result<Self> {
        let h = self.spec.hidden;
        if gamma.shape() != (1, h) || beta.shape() != (1, h) {
            return Err(Error::shape(
                "moi norm",
                format!("1x{h}"),
                format!("{:?}/{:?}", gamma.shape(), beta.shape()),
            ));
        }
        self.gamma = gamma;
        self.beta = beta;
        Ok(self)
    }

    pub fn spec(&self) -> &MoiSpec {
        &self.spec
    }

    pub fn order(&self) -> usize {
        self.spec.order
    }

    pub fn hidden(&self) -> usize {
        self.spec.hidden
    }

    pub fn factors(&self) -> &[Matrix] {
        &self.factors
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub fn output(&self) -> &Matrix {
        &self.out
    }

    fn has_norm_affine(&self) -> bool {
        self.spec.norm_kind == NormKind::LayerNorm
    }

    fn has_layer_scale(&self) -> bool {
        self.spec.norm_kind == NormKind::LayerScale
    }

    /// Active parameters in a fixed order, each with a short name.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (i, w) in self.factors.iter().enumerate() {
            out.push((format!("w{}", i + 1), w));
        }
        if self.spec.use_bias {
            for (i, b) in self.biases.iter().enumerate() {
                out.push((format!("b{}", i + 1), b));
            }
        }
        if self.has_norm_affine() {
            out.push(("norm_gamma".into(), &self.gamma));
            out.push(("norm_beta".into(), &self.beta));
        }
        if self.has_layer_scale() {
            out.push(("layer_scale".into(), &self.layer_scale));
        }
        out.push(("w_out".into(), &self.out));
        out
    }

    /// Mutable view of the same parameters, in the same order as [`Self::named_params`].
    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out: Vec<&mut Matrix> = self.factors.iter_mut().collect();
        if self.spec.use_bias {
            out.extend(self.biases.iter_mut());
        }
        if self.spec.norm_kind == NormKind::LayerNorm {
            out.push(&mut self.gamma);
            out.push(&mut self.beta);
        }
        if self.spec.norm_kind == NormKind::LayerScale {
            out.push(&mut self.layer_scale);
        }
        out.push(&mut self.out);
        out
    }

    /// Records every active parameter as a leaf, in [`Self::named_params`] order.
    pub fn bind(&self, tape: &mut Tape) -> MoiVars {
        let factors = self.factors.iter().map(|w| tape.leaf(w.clone())).collect();
        let biases = self
            .spec
            .use_bias
            .then(|| self.biases.iter().map(|b| tape.leaf(b.clone())).collect());
        let (gamma, beta) = if self.has_norm_affine() {
            (
                Some(tape.leaf(self.gamma.clone())),
                Some(tape.leaf(self.beta.clone())),
            )
        } else {
            (None, None)
        };
        let layer_scale = self
            .has_layer_scale()
            .then(|| tape.leaf(self.layer_scale.clone()));
        let out = tape.leaf(self.out.clone());
        MoiVars {
            factors,
            biases,
            gamma,
            beta,
            layer_scale,
            out,
        }
    }
}

impl MoiVars {
    /// Handles in [`MoiLayerParams::named_params`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut v = self.factors.clone();
        if let Some(b) = &self.biases {
            v.extend(b);
        }
        v.extend(self.gamma);
        v.extend(self.beta);
        v.extend(self.layer_scale);
        v.push(self.out);
        v
    }
}

fn apply_norm(tape: &mut Tape, spec: &MoiSpec, vars: &MoiVars, x: Var) -> Result<Var> {
    match spec.norm_kind {
        NormKind::None => Ok(x),
        NormKind::LayerNorm => tape.layernorm(
            x,
            vars.gamma.expect("bound gamma"),
            vars.beta.expect("bound beta"),
        ),
        NormKind::L2 => Ok(tape.l2_normalize_rows(x)),
        NormKind::LayerScale => tape.mul_row(x, vars.layer_scale.expect("bound layer scale")),
    }
}

fn activate(tape: &mut Tape, activation: Activation, x: Var) -> Var {
    match activation {
        Activation::Gelu => tape.gelu(x),
        Activation::Identity => x,
    }
}

/// Applies the layer to every row of `x` (`n × d`), returning `n × d_out`.
pub fn moi_rows(tape: &mut Tape, spec: &MoiSpec, vars: &MoiVars, x: Var) -> Result<Var> {
    let d = spec.single_input_dim()?;
    let width = tape.value(x).cols();
    if width != d {
        return Err(Error::shape(
            "moi_forward",
            format!("input width {d}"),
            format!("{width}"),
        ));
    }
    let mut product: Option<Var> = None;
    for (m, &w) in vars.factors.iter().enumerate() {
        let mut p = tape.matmul(x, w)?;
        if let Some(b) = &vars.biases {
            p = tape.add_row(p, b[m])?;
        }
        if spec.norm_location == NormLocation::BeforeActivation {
            p = apply_norm(tape, spec, vars, p)?;
        }
        let a = activate(tape, spec.activation, p);
        product = Some(match product {
            None => a,
            Some(acc) => tape.hadamard(acc, a)?,
        });
    }
    let mut z = product.expect("order >= 1");
    if spec.norm_location == NormLocation::AfterProduct {
        z = apply_norm(tape, spec, vars, z)?;
    }
    tape.matmul(z, vars.out)
}

/// Single-input forward pass on one vector.
pub fn moi_forward(params: &MoiLayerParams, x: &[f64]) -> Result<Vec<f64>> {
    Ok(moi_forward_rows(params, &Matrix::row_vector(x)?)?.into_vec())
}

/// Single-input forward pass on each row of `x`.
pub fn moi_forward_rows(params: &MoiLayerParams, x: &Matrix) -> Result<Matrix> {
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let out = moi_rows(&mut tape, params.spec(), &vars, xv)?;
    Ok(tape.value(out).clone())
}

/// The factorised interaction `(W_1ᵀx_1 + b_1) ⊙ … ⊙ (W_kᵀx_k + b_k)` on `k` separate inputs.
///
/// Biases enter only when the spec enables them. No activation, normalisation or output
/// projection is applied; this is the quantity the full tensor contraction approximates.
pub fn hadamard_interaction(params: &MoiLayerParams, inputs: &[&[f64]]) -> Result<Vec<f64>> {
    if inputs.len() != params.order() {
        return Err(Error::shape(
            "hadamard_interaction",
            format!("order {}", params.order()),
            format!("{} inputs", inputs.len()),
        ));
    }
    let mut z = vec![1.0; params.hidden()];
    for (m, (w, x)) in params.factors.iter().zip(inputs).enumerate() {
        if x.len() != w.rows() {
            return Err(Error::shape(
                "hadamard_interaction",
                format!("input {m} width {}", w.rows()),
                format!("{}", x.len()),
            ));
        }
        let mut p = Matrix::row_vector(x)?.matmul(w)?;
        if params.spec.use_bias {
            p = p.add(&params.biases[m])?;
        }
        for (zj, pj) in z.iter_mut().zip(p.data()) {
            *zj *= pj;
        }
    }
    Ok(z)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops::{gelu, layernorm, LAYERNORM_EPS};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn layer(spec: MoiSpec, seed: u64) -> MoiLayerParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = MoiLayerParams::init(spec, &mut rng).unwrap();
        // widen the weights so products are well away from zero
        let factors = p.factors().iter().map(|w| w.scale(60.0)).collect();
        let out = p.output().scale(60.0);
        let biases = p
            .factors()
            .iter()
            .enumerate()
            .map(|(i, w)| {
                Matrix::from_fn(1, w.cols(), |_, j| 0.1 * (i as f64 + 1.0) - 0.05 * j as f64)
            })
            .collect();
        MoiLayerParams::from_parts(p.spec().clone(), factors, out)
            .unwrap()
            .with_biases(biases)
            .unwrap()
    }

    #[test]
    fn zero_input_without_bias_gives_zero() {
        let p = layer(
            MoiSpec::new(3, 4, 5)
                .with_bias(false)
                .with_norm(NormKind::None),
            1,
        );
        assert!(moi_forward(&p, &[0.0; 4])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
    }

    #[test]
    fn layernorm_after_product_matches_manual_composition() {
        let p = layer(MoiSpec::new(2, 3, 4), 2);
        let x = Matrix::row_vector(&[0.4, -0.3, 1.2]).unwrap();
        let a1 = gelu(
            &x.matmul(&p.factors()[0])
                .unwrap()
                .add(&p.biases()[0])
                .unwrap(),
        );
        let a2 = gelu(
            &x.matmul(&p.factors()[1])
                .unwrap()
                .add(&p.biases()[1])
                .unwrap(),
        );
        let z = layernorm(
            &a1.hadamard(&a2).unwrap(),
            &Matrix::filled(1, 4, 1.0),
            &Matrix::zeros(1, 4),
            LAYERNORM_EPS,
        )
        .unwrap();
        let expected = z.matmul(p.output()).unwrap();
        let got = moi_forward(&p, x.data()).unwrap();
        for (g, e) in got.iter().zip(expected.data()) {
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let p = layer(MoiSpec::new(2, 3, 4), 3);
        assert!(matches!(
            moi_forward(&p, &[1.0, 2.0]),
            Err(Error::Shape { .. })
        ));
        assert!(hadamard_interaction(&p, &[&[1.0, 2.0, 3.0]]).is_err());
    }

    #[test]
    fn l2_variant_leaves_zero_rows_alone() {
        let p = layer(
            MoiSpec::new(2, 3, 4)
                .with_bias(false)
                .with_norm(NormKind::L2),
            4,
        );
        assert!(moi_forward(&p, &[0.0; 3])
            .unwrap()
            .iter()
            .all(|&v| v == 0.0));
        let y = moi_forward(&p, &[1.0, -1.0, 0.5]).unwrap();
        assert!(y.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn named_params_follow_toggles() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let full = MoiLayerParams::init(MoiSpec::new(2, 3, 4), &mut rng).unwrap();
        let names: Vec<String> = full.named_params().into_iter().map(|(n, _)| n).collect();
        assert_eq!(
            names,
            ["w1", "w2", "b1", "b2", "norm_gamma", "norm_beta", "w_out"]
        );
        let mut bare = MoiLayerParams::init(
            MoiSpec::new(1, 3, 4)
                .with_bias(false)
                .with_norm(NormKind::LayerScale),
            &mut rng,
        )
        .unwrap();
        assert_eq!(bare.named_params().len(), 3);
        assert_eq!(bare.params_mut().len(), 3);
    }

    #[test]
    fn keyword_round_trip() {
        for k in [
            NormKind::LayerNorm,
            NormKind::None,
            NormKind::L2,
            NormKind::LayerScale,
        ] {
            assert_eq!(k.to_string().parse::<NormKind>().unwrap(), k);
        }
        assert!("batchnorm".parse::<NormKind>().is_err());
    }

    #[test]
    fn zero_order_is_rejected() {
        assert!(MoiSpec::new(0, 3, 4).validate().is_err());
    }
}
