//! Dense interaction tensors and their contraction by mode products.
//!
//! This is the exact, exponentially sized form of a k-th order interaction. It exists to
//! validate the factorised layer and is capped at [`MAX_TENSOR_ELEMENTS`].

use super::layer::MoiLayerParams;
use crate::error::{Error, Result};

/// Largest tensor the oracle will allocate.
pub const MAX_TENSOR_ELEMENTS: usize = 10_000_000;

/// Row-major dense tensor of arbitrary order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

fn element_count(shape: &[usize]) -> Result<usize> {
    let mut n: usize = 1;
    for &d in shape {
        if d == 0 {
            return Err(Error::Input(format!(
                "tensor extents must be positive, got {shape:?}"
            )));
        }
        n = n
            .checked_mul(d)
            .filter(|&n| n <= MAX_TENSOR_ELEMENTS)
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "tensor {shape:?} exceeds {MAX_TENSOR_ELEMENTS} elements"
                ))
            })?;
    }
    Ok(n)
}

impl DenseTensor {
    pub fn zeros(shape: &[usize]) -> Result<Self> {
        let n = element_count(shape)?;
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data: vec![0.0; n],
        })
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        let n = element_count(shape)?;
        if data.len() != n {
            return Err(Error::shape(
                "tensor",
                format!("{shape:?}"),
                format!("{} values", data.len()),
            ));
        }
        Ok(DenseTensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(&[usize]) -> f64) -> Result<Self> {
        let mut t = Self::zeros(shape)?;
        let mut index = vec![0; shape.len()];
        for v in t.data.iter_mut() {
            *v = f(&index);
            for axis in (0..shape.len()).rev() {
                index[axis] += 1;
                if index[axis] < shape[axis] {
                    break;
                }
                index[axis] = 0;
            }
        }
        Ok(t)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn order(&self) -> usize {
        self.shape.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    fn offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    pub fn get(&self, index: &[usize]) -> f64 {
        assert_eq!(index.len(), self.shape.len());
        self.data[self.offset(index)]
    }

    /// Contracts `x` against axis `mode`; the result has one axis fewer.
    pub fn mode_product(&self, x: &[f64], mode: usize) -> Result<DenseTensor> {
        if mode >= self.order() {
            return Err(Error::Input(format!(
                "mode {mode} out of range for order {}",
                self.order()
            )));
        }
        if self.order() == 1 {
            return Err(Error::Input(
                "cannot contract the only axis of an order-1 tensor".into(),
            ));
        }
        if x.len() != self.shape[mode] {
            return Err(Error::shape(
                "mode_product",
                format!("extent {} along mode {mode}", self.shape[mode]),
                format!("vector of {}", x.len()),
            ));
        }
        let outer: usize = self.shape[..mode].iter().product();
        let extent = self.shape[mode];
        let inner: usize = self.shape[mode + 1..].iter().product();
        let mut out = vec![0.0; outer * inner];
        for o in 0..outer {
            for (m, &xv) in x.iter().enumerate() {
                let src = &self.data[(o * extent + m) * inner..(o * extent + m + 1) * inner];
                for (dst, &s) in out[o * inner..(o + 1) * inner].iter_mut().zip(src) {
                    *dst += xv * s;
                }
            }
        }
        let mut shape = self.shape.clone();
        shape.remove(mode);
        Ok(DenseTensor { shape, data: out })
    }
}

/// The full weight tensor of a k-th order interaction: shape `d_1 × … × d_k × h`.
#[derive(Debug, Clone, PartialEq)]
pub struct FullInteractionTensor {
    tensor: DenseTensor,
}

impl FullInteractionTensor {
    pub fn new(tensor: DenseTensor) -> Result<Self> {
        if tensor.order() < 2 {
            return Err(Error::Input(
                "interaction tensor needs at least one input axis and an output axis".into(),
            ));
        }
        Ok(FullInteractionTensor { tensor })
    }

    pub fn order(&self) -> usize {
        self.tensor.order() - 1
    }

    pub fn input_dims(&self) -> &[usize] {
        &self.tensor.shape()[..self.order()]
    }

    pub fn output_dim(&self) -> usize {
        *self.tensor.shape().last().unwrap()
    }

    pub fn tensor(&self) -> &DenseTensor {
        &self.tensor
    }
}

/// Exact k-fold contraction `(((T ×₁ x₁) ×₂ x₂) … ×ₖ xₖ)`, returning the `h` outputs.
pub fn oracle_interaction(t: &FullInteractionTensor, inputs: &[&[f64]]) -> Result<Vec<f64>> {
    if inputs.len() != t.order() {
        return Err(Error::shape(
            "oracle_interaction",
            format!("order {}", t.order()),
            format!("{} inputs", inputs.len()),
        ));
    }
    // After each contraction the next input axis becomes axis 0.
    let mut acc = t.tensor.clone();
    for x in inputs {
        acc = acc.mode_product(x, 0)?;
    }
    Ok(acc.data)
}

/// Expands rank-1 factors into the full tensor, `T[i₁,…,iₖ,j] = ∏ₘ Wₘ[iₘ, j]`.
///
/// This is the contraction of a superdiagonal core with the factor matrices. Biases have
/// no tensor counterpart here and must be disabled.
pub fn materialize_parafac(params: &MoiLayerParams) -> Result<FullInteractionTensor> {
    if params.spec().use_bias {
        return Err(Error::Input(
            "materialize_parafac requires biases to be disabled".into(),
        ));
    }
    let factors = params.factors();
    let h = params.hidden();
    let mut shape: Vec<usize> = factors.iter().map(|w| w.rows()).collect();
    shape.push(h);
    let k = factors.len();
    let tensor = DenseTensor::from_fn(&shape, |idx| {
        let j = idx[k];
        factors.iter().zip(idx).map(|(w, &i)| w.get(i, j)).product()
    })?;
    FullInteractionTensor::new(tensor)
}
