use super::{Matrix, Tape, Var};
use crate::error::Result;

/// Central-difference step.
pub const FD_STEP: f64 = 1e-5;

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const RELATIVE_FLOOR: f64 = 1e-4;

/// Compares tape gradients of a scalar function against central differences.
///
/// `f` receives a fresh tape with `params` already recorded as leaves, in order, and must
/// return a `1×1` node. Returns the largest `|analytic − numeric| / max(|analytic|, |numeric|,
/// RELATIVE_FLOOR)` over every parameter entry.
pub fn check_gradient<F>(f: F, params: &[Matrix]) -> Result<f64>
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let eval = |ps: &[Matrix]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = ps.iter().map(|p| tape.leaf(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        Ok(tape.value(out).get(0, 0))
    };

    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = f(&mut tape, &vars)?;
    let grads = tape.backward(out)?;

    let mut worst = 0.0_f64;
    let mut work: Vec<Matrix> = params.to_vec();
    for (pi, (param, &var)) in params.iter().zip(&vars).enumerate() {
        let analytic = grads.get_or_zeros(var, param.shape());
        for e in 0..param.len() {
            let orig = param.data()[e];
            let plus = orig + FD_STEP;
            let minus = orig - FD_STEP;
            work[pi].data_mut()[e] = plus;
            let fp = eval(&work)?;
            work[pi].data_mut()[e] = minus;
            let fm = eval(&work)?;
            work[pi].data_mut()[e] = orig;
            let numeric = (fp - fm) / (plus - minus);
            let a = analytic.data()[e];
            let denom = a.abs().max(numeric.abs()).max(RELATIVE_FLOOR);
            worst = worst.max((a - numeric).abs() / denom);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numcore::ops::truncated_normal_init;

    fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
        truncated_normal_init(rows, cols, seed).scale(50.0)
    }

    #[test]
    fn sum_has_unit_gradient() {
        let w = random(3, 3, 1);
        let err = check_gradient(|t, v| Ok(t.sum(v[0])), &[w]).unwrap();
        assert!(err < 1e-10, "{err}");
    }

    #[test]
    fn quadratic_form() {
        // f(x, A) = sum(x ⊙ (x·A)) = xᵀ A x for a row vector x
        let x = random(1, 4, 2);
        let a = random(4, 4, 3);
        let f = |t: &mut Tape, v: &[Var]| {
            let xa = t.matmul(v[0], v[1])?;
            let q = t.hadamard(v[0], xa)?;
            Ok(t.sum(q))
        };
        let err = check_gradient(f, &[x.clone(), a.clone()]).unwrap();
        assert!(err < 1e-7, "{err}");

        // closed form: ∂/∂x = x(A + Aᵀ), ∂/∂A = xᵀx
        let mut tape = Tape::new();
        let xv = tape.leaf(x.clone());
        let av = tape.leaf(a.clone());
        let out = f(&mut tape, &[xv, av]).unwrap();
        let g = tape.backward(out).unwrap();
        let expected_x = x.matmul(&a.add(&a.transpose()).unwrap()).unwrap();
        assert!(g.get(xv).unwrap().max_abs_diff(&expected_x) < 1e-15);
        let expected_a = x.matmul_tn(&x).unwrap();
        assert!(g.get(av).unwrap().max_abs_diff(&expected_a) < 1e-15);
    }

    fn check(name: &str, f: impl Fn(&mut Tape, &[Var]) -> Result<Var>, params: &[Matrix]) {
        let err = check_gradient(f, params).unwrap();
        assert!(err < 1e-5, "{name}: {err}");
    }

    #[test]
    fn every_primitive_passes() {
        let a = random(3, 4, 10);
        let b = random(4, 2, 11);
        let c = random(3, 4, 12);
        let row = random(1, 4, 13);
        let w = random(5, 4, 14);

        check(
            "matmul",
            |t, v| {
                let m = t.matmul(v[0], v[1])?;
                Ok(t.sum(m))
            },
            &[a.clone(), b.clone()],
        );
        check(
            "matmul_nt",
            |t, v| {
                let m = t.matmul_nt(v[0], v[1])?;
                let g = t.gelu(m);
                Ok(t.sum(g))
            },
            &[a.clone(), w.clone()],
        );
        check(
            "add+hadamard",
            |t, v| {
                let s = t.add(v[0], v[1])?;
                let h = t.hadamard(s, v[1])?;
                Ok(t.sum(h))
            },
            &[a.clone(), c.clone()],
        );
        check(
            "add_row/mul_row",
            |t, v| {
                let s = t.add_row(v[0], v[1])?;
                let m = t.mul_row(s, v[1])?;
                let h = t.hadamard(m, m)?;
                Ok(t.sum(h))
            },
            &[a.clone(), row.clone()],
        );
        check(
            "scale/mask",
            |t, v| {
                let s = t.scale(v[0], -1.5);
                let mask = Matrix::from_fn(3, 4, |i, j| ((i + j) % 2) as f64 * 1.25);
                let m = t.mask_mul(s, mask)?;
                let h = t.hadamard(m, v[0])?;
                Ok(t.sum(h))
            },
            &[a.clone()],
        );
        check(
            "gelu",
            |t, v| {
                let g = t.gelu(v[0]);
                let h = t.hadamard(g, v[0])?;
                Ok(t.sum(h))
            },
            &[a.clone()],
        );
        check(
            "layernorm",
            |t, v| {
                let n = t.layernorm(v[0], v[1], v[2])?;
                let h = t.hadamard(n, v[3])?;
                Ok(t.sum(h))
            },
            &[a.clone(), row.clone(), random(1, 4, 20), c.clone()],
        );
        check(
            "l2",
            |t, v| {
                let n = t.l2_normalize_rows(v[0]);
                let h = t.hadamard(n, v[1])?;
                Ok(t.sum(h))
            },
            &[a.clone(), c.clone()],
        );
        check(
            "transpose_blocks",
            |t, v| {
                let x = t.transpose_blocks(v[0], 3)?;
                let m = t.matmul(x, v[1])?;
                let g = t.gelu(m);
                Ok(t.sum(g))
            },
            &[random(6, 2, 30), random(2, 3, 31)],
        );
        check(
            "gather",
            |t, v| {
                let g = t.gather_rows(v[0], &[4, 1, 1, 0])?;
                let h = t.hadamard(g, g)?;
                Ok(t.sum(h))
            },
            &[w.clone()],
        );
        check(
            "cross_entropy",
            |t, v| {
                let l = t.matmul(v[0], v[1])?;
                t.cross_entropy(l, &[0, 2, 2], &[1, 0, 1])
            },
            &[a.clone(), b.clone()],
        );
    }
}
