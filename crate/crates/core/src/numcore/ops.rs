//! Stateless numeric primitives shared by the forward tape and the reference paths.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::Matrix;
use crate::error::{Error, Result};

/// Variance floor inside the layer-norm square root.
pub const LAYERNORM_EPS: f64 = 1e-12;

/// Standard deviation of the truncated-normal initialiser; truncation is at ±2σ.
pub const INIT_STD: f64 = 0.01;
pub const INIT_BOUND: f64 = 2.0 * INIT_STD;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
#[inline]
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + libm::erf(x * std::f64::consts::FRAC_1_SQRT_2))
}

#[inline]
pub fn normal_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Exact GELU, `x·Φ(x)`.
#[inline]
pub fn gelu_scalar(x: f64) -> f64 {
    x * normal_cdf(x)
}

#[inline]
pub fn gelu_grad_scalar(x: f64) -> f64 {
    normal_cdf(x) + x * normal_pdf(x)
}

pub fn gelu(x: &Matrix) -> Matrix {
    x.map(gelu_scalar)
}

/// Per-row statistics produced by [`layernorm_rows`], reused by the backward pass.
#[derive(Debug, Clone)]
pub struct LayerNormCache {
    pub normalized: Matrix,
    pub inv_std: Vec<f64>,
}

/// Normalises every row to zero mean / unit population variance, then applies `gamma`, `beta`.
pub fn layernorm(x: &Matrix, gamma: &Matrix, beta: &Matrix, eps: f64) -> Result<Matrix> {
    Ok(layernorm_rows(x, gamma, beta, eps)?.0)
}

pub(crate) fn layernorm_rows(
    x: &Matrix,
    gamma: &Matrix,
    beta: &Matrix,
    eps: f64,
) -> Result<(Matrix, LayerNormCache)> {
    let width = x.cols();
    for (p, name) in [(gamma, "layernorm gamma"), (beta, "layernorm beta")] {
        if p.shape() != (1, width) {
            return Err(Error::shape(
                name,
                format!("1x{width}"),
                format!("{}x{}", p.rows(), p.cols()),
            ));
        }
    }
    let mut normalized = x.clone();
    let mut inv_std = Vec::with_capacity(x.rows());
    for r in 0..x.rows() {
        let row = normalized.row_mut(r);
        let mean = row.iter().sum::<f64>() / width as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / width as f64;
        let inv = 1.0 / (var + eps).sqrt();
        for v in row.iter_mut() {
            *v = (*v - mean) * inv;
        }
        inv_std.push(inv);
    }
    let out = normalized.mul_row(gamma)?.add_row(beta)?;
    Ok((
        out,
        LayerNormCache {
            normalized,
            inv_std,
        },
    ))
}

/// Rows scaled to unit Euclidean norm; all-zero rows pass through unchanged.
pub fn l2_normalize_rows(x: &Matrix) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    out
}

/// Numerically stable softmax of a vector.
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_sum_exp(x: &[f64]) -> f64 {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Draws from N(0, 0.01²) with rejection outside [-0.02, 0.02].
pub fn truncated_normal_init(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    truncated_normal_with(rows, cols, &mut rng)
}

pub fn truncated_normal_with<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    let normal = Normal::new(0.0, INIT_STD).expect("valid normal");
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = loop {
            let s: f64 = normal.sample(rng);
            if s.abs() < INIT_BOUND {
                break s;
            }
        };
    }
    m
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must lie in [0, 1), got {rate}"
        )));
    }
    Ok(())
}

/// Inverted-dropout mask: zeros with probability `rate`, `1/(1-rate)` otherwise.
pub fn dropout_mask<R: Rng + ?Sized>(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut R,
) -> Result<Matrix> {
    check_rate(rate)?;
    let keep = 1.0 / (1.0 - rate);
    let mut m = Matrix::zeros(rows, cols);
    for v in m.data_mut() {
        *v = if rng.random::<f64>() < rate {
            0.0
        } else {
            keep
        };
    }
    Ok(m)
}

/// Inverted dropout. Identity outside training or at rate 0.
pub fn dropout(x: &Matrix, rate: f64, training: bool, seed: u64) -> Result<Matrix> {
    check_rate(rate)?;
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mask = dropout_mask(x.rows(), x.cols(), rate, &mut rng)?;
    x.hadamard(&mask)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layernorm_constant_row_is_zero() {
        let x = Matrix::from_rows(&[[2.0, 2.0, 2.0]]).unwrap();
        let y = layernorm(
            &x,
            &Matrix::filled(1, 3, 1.0),
            &Matrix::zeros(1, 3),
            LAYERNORM_EPS,
        )
        .unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layernorm_two_values() {
        let x = Matrix::from_rows(&[[1.0, 3.0]]).unwrap();
        let y = layernorm(
            &x,
            &Matrix::filled(1, 2, 1.0),
            &Matrix::zeros(1, 2),
            LAYERNORM_EPS,
        )
        .unwrap();
        assert!((y.get(0, 0) + 1.0).abs() < 1e-11);
        assert!((y.get(0, 1) - 1.0).abs() < 1e-11);
    }

    #[test]
    fn layernorm_random_row_statistics() {
        let x = truncated_normal_init(1, 37, 11).scale(50.0);
        let y = layernorm(
            &x,
            &Matrix::filled(1, 37, 1.0),
            &Matrix::zeros(1, 37),
            LAYERNORM_EPS,
        )
        .unwrap();
        let mean = y.sum() / 37.0;
        let var = y.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 37.0;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-6);
    }

    #[test]
    fn layernorm_rejects_bad_gamma() {
        let x = Matrix::zeros(2, 3);
        assert!(layernorm(
            &x,
            &Matrix::zeros(1, 2),
            &Matrix::zeros(1, 3),
            LAYERNORM_EPS
        )
        .is_err());
    }

    #[test]
    fn gelu_fixed_points() {
        assert_eq!(gelu_scalar(0.0), 0.0);
        assert!((gelu_scalar(10.0) - 10.0).abs() < 1e-6);
    }

    #[test]
    fn gelu_one_matches_quadrature() {
        // Φ(1) = 1/2 + ∫_0^1 φ(t) dt by composite Simpson.
        let n = 2000;
        let h = 1.0 / n as f64;
        let mut acc = normal_pdf(0.0) + normal_pdf(1.0);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * normal_pdf(i as f64 * h);
        }
        let phi1 = 0.5 + acc * h / 3.0;
        assert!((gelu_scalar(1.0) - phi1).abs() < 1e-12);
    }

    #[test]
    fn softmax_cases() {
        let s = softmax(&[0.0, 0.0, 0.0]);
        assert!(s.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        let s = softmax(&[1000.0, 0.0]);
        assert_eq!(s[0], 1.0);
        assert!(s[1] >= 0.0 && s[1] < 1e-300);
        let s = softmax(&[1.0, 2.0]);
        let e = std::f64::consts::E;
        assert!((s[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((s[1] - e / (1.0 + e)).abs() < 1e-15);
    }

    #[test]
    fn truncated_normal_bounds_and_determinism() {
        let a = truncated_normal_init(100, 100, 3);
        let b = truncated_normal_init(100, 100, 3);
        assert_eq!(a, b);
        assert!(a.data().iter().all(|v| v.abs() < INIT_BOUND));
    }

    #[test]
    fn truncated_normal_mean_near_zero() {
        let m = truncated_normal_init(1, 100_000, 17);
        let n = m.len() as f64;
        let mean = m.sum() / n;
        let var = m.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let stderr = (var / n).sqrt();
        assert!(mean.abs() < 3.0 * stderr, "mean {mean} stderr {stderr}");
    }

    #[test]
    fn dropout_modes() {
        let x = truncated_normal_init(10, 10, 1);
        assert_eq!(dropout(&x, 0.0, true, 5).unwrap(), x);
        assert_eq!(dropout(&x, 0.7, false, 5).unwrap(), x);
        assert!(dropout(&x, 1.0, true, 5).is_err());
    }

    #[test]
    fn dropout_rate_statistics() {
        let x = Matrix::filled(100, 1000, 1.0);
        let y = dropout(&x, 0.2, true, 99).unwrap();
        let zeros = y.data().iter().filter(|&&v| v == 0.0).count() as f64 / y.len() as f64;
        assert!((0.19..=0.21).contains(&zeros), "{zeros}");
        assert!(y
            .data()
            .iter()
            .all(|&v| v == 0.0 || (v - 1.25).abs() < 1e-15));
    }
}
