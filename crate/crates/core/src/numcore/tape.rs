//! Reverse-mode differentiation over a fixed set of matrix primitives.
//!
//! Every value computed through a [`Tape`] is recorded with the operation that produced
//! it. [`Tape::backward`] walks the record in reverse and returns one gradient per node.

use super::ops::{self, LayerNormCache};
use super::Matrix;
use crate::error::{Error, Result};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(pub(crate) usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`
    MatMulNt(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    /// Elementwise product with a constant (dropout masks).
    MaskMul(Var, Matrix),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        cache: LayerNormCache,
    },
    L2Rows {
        x: Var,
        norms: Vec<f64>,
    },
    TransposeBlocks(Var, usize),
    Gather {
        table: Var,
        ids: Vec<usize>,
    },
    Sum(Var),
    CrossEntropy {
        logits: Var,
        rows: Vec<usize>,
        targets: Vec<usize>,
        probs: Matrix,
    },
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Ordered record of primitive operations.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(value, Op::MatMulNt(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).add(self.value(b))?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn add_row(&mut self, a: Var, bias: Var) -> Result<Var> {
        let value = self.value(a).add_row(self.value(bias))?;
        Ok(self.push(value, Op::AddRow(a, bias)))
    }

    pub fn mul_row(&mut self, a: Var, scale: Var) -> Result<Var> {
        let value = self.value(a).mul_row(self.value(scale))?;
        Ok(self.push(value, Op::MulRow(a, scale)))
    }

    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Hadamard(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn mask_mul(&mut self, a: Var, mask: Matrix) -> Result<Var> {
        let value = self.value(a).hadamard(&mask)?;
        Ok(self.push(value, Op::MaskMul(a, mask)))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = ops::gelu(self.value(a));
        self.push(value, Op::Gelu(a))
    }

    /// Row-wise layer normalisation followed by `gamma` scaling and `beta` shift.
    pub fn layernorm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let width = self.value(x).cols();
        let zero = Matrix::zeros(1, width);
        let (scaled, cache) =
            ops::layernorm_rows(self.value(x), self.value(gamma), &zero, ops::LAYERNORM_EPS)?;
        let normed = self.push(scaled, Op::LayerNorm { x, gamma, cache });
        self.add_row(normed, beta)
    }

    pub fn l2_normalize_rows(&mut self, x: Var) -> Var {
        let input = self.value(x);
        let norms: Vec<f64> = input
            .row_iter()
            .map(|r| r.iter().map(|v| v * v).sum::<f64>().sqrt())
            .collect();
        let value = ops::l2_normalize_rows(input);
        self.push(value, Op::L2Rows { x, norms })
    }

    pub fn transpose_blocks(&mut self, x: Var, blocks: usize) -> Result<Var> {
        let value = self.value(x).transpose_blocks(blocks)?;
        Ok(self.push(value, Op::TransposeBlocks(x, blocks)))
    }

    pub fn gather_rows(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let value = self.value(table).gather_rows(ids)?;
        Ok(self.push(
            value,
            Op::Gather {
                table,
                ids: ids.to_vec(),
            },
        ))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let value = Matrix::filled(1, 1, self.value(x).sum());
        self.push(value, Op::Sum(x))
    }

    /// Mean softmax cross-entropy of `logits[rows[i]]` against class `targets[i]`.
    pub fn cross_entropy(&mut self, logits: Var, rows: &[usize], targets: &[usize]) -> Result<Var> {
        if rows.is_empty() || rows.len() != targets.len() {
            return Err(Error::Input(format!(
                "cross_entropy needs matching non-empty rows/targets, got {} and {}",
                rows.len(),
                targets.len()
            )));
        }
        let l = self.value(logits);
        let mut probs = Matrix::zeros(rows.len(), l.cols());
        let mut total = 0.0;
        for (i, (&r, &t)) in rows.iter().zip(targets).enumerate() {
            if r >= l.rows() || t >= l.cols() {
                return Err(Error::Input(format!(
                    "cross_entropy target ({r}, {t}) outside logits {}x{}",
                    l.rows(),
                    l.cols()
                )));
            }
            let row = l.row(r);
            let lse = ops::log_sum_exp(row);
            total += lse - row[t];
            for (p, &v) in probs.row_mut(i).iter_mut().zip(row) {
                *p = (v - lse).exp();
            }
        }
        let value = Matrix::filled(1, 1, total / rows.len() as f64);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                rows: rows.to_vec(),
                targets: targets.to_vec(),
                probs,
            },
        ))
    }

    /// Gradients of the scalar `loss` with respect to every node (zero where unreachable).
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let out = self.value(loss);
        if out.shape() != (1, 1) {
            return Err(Error::shape(
                "backward",
                "1x1",
                format!("{}x{}", out.rows(), out.cols()),
            ));
        }
        let mut grads: Vec<Option<Matrix>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_nt(self.value(*b))?;
                    let gb = self.value(*a).matmul_tn(&g)?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::MatMulNt(a, b) => {
                    let ga = g.matmul(self.value(*b))?;
                    let gb = g.matmul_tn(self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Add(a, b) => {
                    accumulate(&mut grads, *a, g.clone())?;
                    accumulate(&mut grads, *b, g.clone())?;
                }
                Op::AddRow(a, bias) => {
                    accumulate(&mut grads, *bias, g.sum_rows())?;
                    accumulate(&mut grads, *a, g.clone())?;
                }
                Op::MulRow(a, s) => {
                    let gs = g.hadamard(self.value(*a))?.sum_rows();
                    let ga = g.mul_row(self.value(*s))?;
                    accumulate(&mut grads, *s, gs)?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::Hadamard(a, b) => {
                    let ga = g.hadamard(self.value(*b))?;
                    let gb = g.hadamard(self.value(*a))?;
                    accumulate(&mut grads, *a, ga)?;
                    accumulate(&mut grads, *b, gb)?;
                }
                Op::Scale(a, f) => accumulate(&mut grads, *a, g.scale(*f))?,
                Op::MaskMul(a, mask) => accumulate(&mut grads, *a, g.hadamard(mask)?)?,
                Op::Gelu(a) => {
                    let ga = g.zip_with(self.value(*a), "gelu_backward", |gv, x| {
                        gv * ops::gelu_grad_scalar(x)
                    })?;
                    accumulate(&mut grads, *a, ga)?;
                }
                Op::LayerNorm { x, gamma, cache } => {
                    let (gx, ggamma) = layernorm_backward(&g, self.value(*gamma), cache)?;
                    accumulate(&mut grads, *gamma, ggamma)?;
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::L2Rows { x, norms } => {
                    let y = &node.value;
                    let mut gx = g.clone();
                    for (r, &n) in norms.iter().enumerate() {
                        if n == 0.0 {
                            continue;
                        }
                        let yr = y.row(r);
                        let dot: f64 = yr.iter().zip(g.row(r)).map(|(a, b)| a * b).sum();
                        for (o, &yv) in gx.row_mut(r).iter_mut().zip(yr) {
                            *o = (*o - yv * dot) / n;
                        }
                    }
                    accumulate(&mut grads, *x, gx)?;
                }
                Op::TransposeBlocks(x, blocks) => {
                    accumulate(&mut grads, *x, g.transpose_blocks(*blocks)?)?;
                }
                Op::Gather { table, ids } => {
                    let t = self.value(*table);
                    let mut gt = Matrix::zeros(t.rows(), t.cols());
                    for (i, &id) in ids.iter().enumerate() {
                        for (o, &v) in gt.row_mut(id).iter_mut().zip(g.row(i)) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, *table, gt)?;
                }
                Op::Sum(x) => {
                    let (r, c) = self.value(*x).shape();
                    accumulate(&mut grads, *x, Matrix::filled(r, c, g.get(0, 0)))?;
                }
                Op::CrossEntropy {
                    logits,
                    rows,
                    targets,
                    probs,
                } => {
                    let l = self.value(*logits);
                    let scale = g.get(0, 0) / rows.len() as f64;
                    let mut gl = Matrix::zeros(l.rows(), l.cols());
                    for (i, (&r, &t)) in rows.iter().zip(targets).enumerate() {
                        let out = gl.row_mut(r);
                        for (o, &p) in out.iter_mut().zip(probs.row(i)) {
                            *o += scale * p;
                        }
                        out[t] -= scale;
                    }
                    accumulate(&mut grads, *logits, gl)?;
                }
            }
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn layernorm_backward(
    g: &Matrix,
    gamma: &Matrix,
    cache: &LayerNormCache,
) -> Result<(Matrix, Matrix)> {
    let xhat = &cache.normalized;
    let ggamma = g.hadamard(xhat)?.sum_rows();
    let dxhat = g.mul_row(gamma)?;
    let width = g.cols() as f64;
    let mut gx = dxhat.clone();
    for r in 0..g.rows() {
        let d = dxhat.row(r);
        let xh = xhat.row(r);
        let mean_d = d.iter().sum::<f64>() / width;
        let mean_dx = d.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / width;
        let inv = cache.inv_std[r];
        for ((o, &dv), &xv) in gx.row_mut(r).iter_mut().zip(d).zip(xh) {
            *o = inv * (dv - mean_d - xv * mean_dx);
        }
    }
    Ok((gx, ggamma))
}

/// Per-node gradients returned by [`Tape::backward`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
}

impl Gradients {
    /// Gradient for `v`, or `None` when `v` does not influence the loss.
    pub fn get(&self, v: Var) -> Option<&Matrix> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for `v`, materialising zeros of the given shape when unreachable.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Matrix {
        self.get(v)
            .cloned()
            .unwrap_or_else(|| Matrix::zeros(shape.0, shape.1))
    }
}
