use crate::error::{Error, Result};
use crate::numcore::Matrix;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adam moment estimates for a fixed list of parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(shapes: &[(usize, usize)]) -> Self {
        AdamState {
            m: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            v: shapes.iter().map(|&(r, c)| Matrix::zeros(r, c)).collect(),
            step: 0,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn first_moments(&self) -> &[Matrix] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Matrix] {
        &self.v
    }
}

/// One bias-corrected Adam update with decoupled weight decay.
///
/// Each parameter first shrinks by `lr · weight_decay · p`, then takes the Adam step.
pub fn adam_step(
    params: &mut [&mut Matrix],
    grads: &[Matrix],
    state: &mut AdamState,
    lr: f64,
    weight_decay: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} parameters", state.m.len()),
            format!("{} params / {} grads", params.len(), grads.len()),
        ));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        if p.shape() != g.shape() || p.shape() != m.shape() {
            return Err(Error::shape(
                "adam_step",
                format!("{:?}", m.shape()),
                format!("{:?} / {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - state.beta1.powi(t);
    let c2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (i, p) in params.iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, x) in p.data_mut().iter_mut().enumerate() {
            *x -= lr * weight_decay * *x;
            m[j] = b1 * m[j] + (1.0 - b1) * g[j];
            v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *x -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// `lr_max · ½(1 + cos(π·epoch/total_epochs))`, no warmup.
pub fn cosine_lr(epoch: usize, total_epochs: usize, lr_max: f64) -> f64 {
    lr_max * 0.5 * (1.0 + (std::f64::consts::PI * epoch as f64 / total_epochs as f64).cos())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (Matrix, Matrix) {
        let p = Matrix::from_fn(3, 4, |i, j| (i as f64 - 1.0) * 0.5 + j as f64 * 0.1);
        let g = Matrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64 - 5.5) * 0.37);
        (p, g)
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        let (mut p, _) = setup();
        let orig = p.clone();
        let mut st = AdamState::new(&[p.shape()]);
        adam_step(&mut [&mut p], &[Matrix::zeros(3, 4)], &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, orig);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn first_step_is_signed_lr() {
        let (mut p, g) = setup();
        let orig = p.clone();
        let mut st = AdamState::new(&[p.shape()]);
        let lr = 0.01;
        adam_step(&mut [&mut p], &[g.clone()], &mut st, lr, 0.0).unwrap();
        for k in 0..p.len() {
            let gk = g.data()[k];
            let expected = -lr * gk / (gk.abs() + ADAM_EPS);
            let delta = p.data()[k] - orig.data()[k];
            assert!((delta - expected).abs() < 1e-15);
            assert!((delta + lr * gk.signum()).abs() < lr * 1e-6);
        }
    }

    #[test]
    fn weight_decay_alone_shrinks() {
        let (mut p, _) = setup();
        let orig = p.clone();
        let mut st = AdamState::new(&[p.shape()]);
        adam_step(&mut [&mut p], &[Matrix::zeros(3, 4)], &mut st, 0.1, 0.01).unwrap();
        assert!(p.max_abs_diff(&orig.scale(1.0 - 0.1 * 0.01)) < 1e-15);
    }

    #[test]
    fn first_update_scales_with_lr() {
        let (p0, g) = setup();
        let delta = |lr: f64| {
            let mut p = p0.clone();
            let mut st = AdamState::new(&[p.shape()]);
            adam_step(&mut [&mut p], &[g.clone()], &mut st, lr, 0.0).unwrap();
            p.sub(&p0).unwrap()
        };
        let (a, b) = (delta(0.25), delta(0.5));
        assert!(b.max_abs_diff(&a.scale(2.0)) < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let (mut p, _) = setup();
        let mut st = AdamState::new(&[p.shape()]);
        assert!(adam_step(&mut [&mut p], &[Matrix::zeros(4, 3)], &mut st, 0.1, 0.0).is_err());
        assert!(adam_step(&mut [&mut p], &[], &mut st, 0.1, 0.0).is_err());
    }

    #[test]
    fn cosine_schedule() {
        assert_eq!(cosine_lr(0, 10, 0.3), 0.3);
        assert!((cosine_lr(5, 10, 0.3) - 0.15).abs() < 1e-15);
        let t = 200;
        let direct = 1e-3 * 0.5 * (1.0 + (std::f64::consts::PI * 199.0 / 200.0).cos());
        assert_eq!(cosine_lr(t - 1, t, 1e-3), direct);
        assert!(cosine_lr(t - 1, t, 1e-3) > 0.0);
    }
}
