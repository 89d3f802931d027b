//! gMLP spatial-gating block, `Z = (σ(XW_1) ⊙ (W_s σ(XW_2) + b_s)) W_o`.
//!
//! `W_s` mixes tokens, so the block's cost carries an `s²` term.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numcore::ops::truncated_normal_with;
use crate::numcore::{Matrix, Tape, Var};

/// Scale applied to the truncated-normal draw for the token-mixing matrix, keeping it near zero.
pub const SPATIAL_INIT_SCALE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct GmlpParams {
    /// `c × h`
    pub w1: Matrix,
    /// `c × h`
    pub w2: Matrix,
    /// Optional `1 × h` biases for the two projections.
    pub b1: Option<Matrix>,
    pub b2: Option<Matrix>,
    /// `s × s`
    pub spatial: Matrix,
    /// Optional `1 × s` gate bias, one entry per token.
    pub gate_bias: Option<Matrix>,
    /// `h × c`
    pub out: Matrix,
}

#[derive(Debug, Clone)]
pub struct GmlpVars {
    w1: Var,
    w2: Var,
    b1: Option<Var>,
    b2: Option<Var>,
    spatial: Var,
    gate_bias: Option<Var>,
    out: Var,
}

impl GmlpParams {
    /// Projections from the truncated normal; `W_s` near zero and gate bias one.
    pub fn init<R: Rng + ?Sized>(
        seq_len: usize,
        width: usize,
        hidden: usize,
        use_bias: bool,
        rng: &mut R,
    ) -> Self {
        let w1 = truncated_normal_with(width, hidden, rng);
        let w2 = truncated_normal_with(width, hidden, rng);
        let spatial = truncated_normal_with(seq_len, seq_len, rng).scale(SPATIAL_INIT_SCALE);
        let out = truncated_normal_with(hidden, width, rng);
        GmlpParams {
            w1,
            w2,
            b1: use_bias.then(|| Matrix::zeros(1, hidden)),
            b2: use_bias.then(|| Matrix::zeros(1, hidden)),
            spatial,
            gate_bias: Some(Matrix::filled(1, seq_len, 1.0)),
            out,
        }
    }

    pub fn seq_len(&self) -> usize {
        self.spatial.rows()
    }

    pub fn validate(&self) -> Result<()> {
        let (c, h) = self.w1.shape();
        let s = self.spatial.rows();
        let check = |name: &'static str, m: &Matrix, want: (usize, usize)| {
            if m.shape() != want {
                Err(Error::shape(
                    name,
                    format!("{}x{}", want.0, want.1),
                    format!("{}x{}", m.rows(), m.cols()),
                ))
            } else {
                Ok(())
            }
        };
        check("gmlp w2", &self.w2, (c, h))?;
        check("gmlp spatial", &self.spatial, (s, s))?;
        check("gmlp out", &self.out, (h, c))?;
        for b in [&self.b1, &self.b2].into_iter().flatten() {
            check("gmlp bias", b, (1, h))?;
        }
        if let Some(g) = &self.gate_bias {
            check("gmlp gate bias", g, (1, s))?;
        }
        Ok(())
    }

    /// `(name, value)` for each present parameter, in binding order.
    pub fn named_params(&self) -> Vec<(String, &Matrix)> {
        let mut v = vec![("w1".to_string(), &self.w1), ("w2".to_string(), &self.w2)];
        if let Some(b) = &self.b1 {
            v.push(("b1".into(), b));
        }
        if let Some(b) = &self.b2 {
            v.push(("b2".into(), b));
        }
        v.push(("spatial".into(), &self.spatial));
        if let Some(g) = &self.gate_bias {
            v.push(("gate_bias".into(), g));
        }
        v.push(("w_out".into(), &self.out));
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut v = vec![&mut self.w1, &mut self.w2];
        v.extend(self.b1.as_mut());
        v.extend(self.b2.as_mut());
        v.push(&mut self.spatial);
        v.extend(self.gate_bias.as_mut());
        v.push(&mut self.out);
        v
    }

    pub fn bind(&self, tape: &mut Tape) -> GmlpVars {
        let w1 = tape.leaf(self.w1.clone());
        let w2 = tape.leaf(self.w2.clone());
        let b1 = self.b1.as_ref().map(|b| tape.leaf(b.clone()));
        let b2 = self.b2.as_ref().map(|b| tape.leaf(b.clone()));
        let spatial = tape.leaf(self.spatial.clone());
        let gate_bias = self.gate_bias.as_ref().map(|b| tape.leaf(b.clone()));
        let out = tape.leaf(self.out.clone());
        GmlpVars {
            w1,
            w2,
            b1,
            b2,
            spatial,
            gate_bias,
            out,
        }
    }
}

/// Applies the block to `blocks` stacked sequences, `x` being `(blocks·s) × c`.
pub fn gmlp_rows(tape: &mut Tape, vars: &GmlpVars, x: Var, blocks: usize) -> Result<Var> {
    let mut u = tape.matmul(x, vars.w1)?;
    if let Some(b) = vars.b1 {
        u = tape.add_row(u, b)?;
    }
    let u = tape.gelu(u);
    let mut v = tape.matmul(x, vars.w2)?;
    if let Some(b) = vars.b2 {
        v = tape.add_row(v, b)?;
    }
    let v = tape.gelu(v);
    // token mixing acts on each channel's length-s column
    let vt = tape.transpose_blocks(v, blocks)?;
    let mut mixed = tape.matmul_nt(vt, vars.spatial)?;
    if let Some(g) = vars.gate_bias {
        mixed = tape.add_row(mixed, g)?;
    }
    let gate = tape.transpose_blocks(mixed, blocks)?;
    let z = tape.hadamard(u, gate)?;
    tape.matmul(z, vars.out)
}

/// One sequence `x` (`s × c`) through the block.
pub fn gmlp_block(x: &Matrix, params: &GmlpParams) -> Result<Matrix> {
    params.validate()?;
    if x.rows() != params.seq_len() || x.cols() != params.w1.rows() {
        return Err(Error::shape(
            "gmlp_block",
            format!("{}x{}", params.seq_len(), params.w1.rows()),
            format!("{}x{}", x.rows(), x.cols()),
        ));
    }
    let mut tape = Tape::new();
    let vars = params.bind(&mut tape);
    let xv = tape.leaf(x.clone());
    let out = gmlp_rows(&mut tape, &vars, xv, 1)?;
    Ok(tape.value(out).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops::gelu_scalar;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(s: usize, c: usize, h: usize, seed: u64) -> GmlpParams {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = GmlpParams::init(s, c, h, false, &mut rng);
        p.w1 = p.w1.scale(50.0);
        p.w2 = p.w2.scale(50.0);
        p.out = p.out.scale(50.0);
        p.spatial = truncated_normal_with(s, s, &mut rng).scale(50.0);
        p.gate_bias = Some(Matrix::from_fn(1, s, |_, i| 0.1 * i as f64));
        p
    }

    fn loop_reference(x: &Matrix, p: &GmlpParams) -> Matrix {
        let (s, c) = x.shape();
        let h = p.w1.cols();
        let proj = |w: &Matrix| {
            Matrix::from_fn(s, h, |t, j| {
                gelu_scalar((0..c).map(|i| x.get(t, i) * w.get(i, j)).sum())
            })
        };
        let u = proj(&p.w1);
        let v = proj(&p.w2);
        let gate = Matrix::from_fn(s, h, |t, j| {
            let bias = p.gate_bias.as_ref().map_or(0.0, |g| g.get(0, t));
            (0..s)
                .map(|r| p.spatial.get(t, r) * v.get(r, j))
                .sum::<f64>()
                + bias
        });
        Matrix::from_fn(s, c, |t, i| {
            (0..h)
                .map(|j| u.get(t, j) * gate.get(t, j) * p.out.get(j, i))
                .sum()
        })
    }

    #[test]
    fn matches_nested_loop_reference() {
        let p = random_params(5, 3, 4, 7);
        let x = Matrix::from_fn(5, 3, |t, i| ((t * 3 + i) as f64 * 0.71).sin());
        let got = gmlp_block(&x, &p).unwrap();
        assert!(got.max_abs_diff(&loop_reference(&x, &p)) < 1e-12);
    }

    #[test]
    fn zero_spatial_with_unit_gate_is_ungated() {
        let mut p = random_params(4, 3, 5, 8);
        p.spatial = Matrix::zeros(4, 4);
        p.gate_bias = Some(Matrix::filled(1, 4, 1.0));
        let x = Matrix::from_fn(4, 3, |t, i| (t as f64) - 0.4 * i as f64);
        let expected = crate::numcore::gelu(&x.matmul(&p.w1).unwrap())
            .matmul(&p.out)
            .unwrap();
        assert!(gmlp_block(&x, &p).unwrap().max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn rejects_wrong_sequence_length() {
        let p = random_params(4, 3, 5, 9);
        assert!(gmlp_block(&Matrix::zeros(5, 3), &p).is_err());
    }
}
