use super::Tensor;
use crate::error::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step_count: u64,
}

impl AdamState {
    pub fn new<'a>(params: impl IntoIterator<Item = &'a Tensor>) -> Self {
        let m: Vec<Tensor> = params.into_iter().map(|p| Tensor::zeros(p.shape())).collect();
        AdamState {
            v: m.clone(),
            m,
            step_count: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn reset(&mut self) {
        self.m.iter_mut().chain(self.v.iter_mut()).for_each(|t| t.fill(0.0));
        self.step_count = 0;
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(params: &mut [&mut Tensor], grads: &[&Tensor], state: &mut AdamState, lr: f64) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::InvalidParameter(format!(
            "adam: {} params, {} grads, {} moment slots",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    for ((p, g), m) in params.iter().zip(grads).zip(&state.m) {
        g.ensure_shape(p.shape())?;
        m.ensure_shape(p.shape())?;
    }
    state.step_count += 1;
    let t = state.step_count as i32;
    let bc1 = 1.0 - ADAM_BETA1.powi(t);
    let bc2 = 1.0 - ADAM_BETA2.powi(t);
    for (((p, g), m), v) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        let pd = p.data_mut();
        for (((pv, gv), mv), vv) in pd.iter_mut().zip(g.data()).zip(m.data_mut()).zip(v.data_mut()) {
            *mv = ADAM_BETA1 * *mv + (1.0 - ADAM_BETA1) * gv;
            *vv = ADAM_BETA2 * *vv + (1.0 - ADAM_BETA2) * gv * gv;
            let mhat = *mv / bc1;
            let vhat = *vv / bc2;
            *pv -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
    Ok(())
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [&mut Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g.sum_squares()).sum::<f64>().sqrt();
    if norm.is_finite() && norm > max_norm && max_norm > 0.0 {
        let s = max_norm / norm;
        grads.iter_mut().for_each(|g| g.scale(s));
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params() {
        let mut p = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap();
        let orig = p.clone();
        let g = Tensor::zeros(&[3]);
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[&g], &mut st, 1e-3).unwrap();
        assert_eq!(p, orig);
        assert_eq!(st.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let lr = 1e-4;
        let mut p = Tensor::from_vec(&[3], vec![0.0, 0.0, 0.0]).unwrap();
        let g = Tensor::from_vec(&[3], vec![0.5, -3.0, 1e-2]).unwrap();
        let mut st = AdamState::new([&p]);
        adam_step(&mut [&mut p], &[&g], &mut st, lr).unwrap();
        for (pv, gv) in p.data().iter().zip(g.data()) {
            assert!((pv + lr * gv.signum()).abs() < 1e-3 * lr);
        }
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut p = Tensor::from_vec(&[1], vec![3.0]).unwrap();
        let g = Tensor::from_vec(&[1], vec![0.7]).unwrap();
        let mut st = AdamState::new([&p]);
        let mut last = p.data()[0];
        for _ in 0..1000 {
            adam_step(&mut [&mut p], &[&g], &mut st, 1e-3).unwrap();
            assert!(p.data()[0] < last);
            last = p.data()[0];
        }
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut p = Tensor::zeros(&[3]);
        let g = Tensor::zeros(&[4]);
        let mut st = AdamState::new([&p]);
        assert!(adam_step(&mut [&mut p], &[&g], &mut st, 1e-3).is_err());
    }

    #[test]
    fn clipping_caps_norm() {
        let mut a = Tensor::from_vec(&[2], vec![3.0, 4.0]).unwrap();
        let n = clip_global_norm(&mut [&mut a], 1.0);
        assert_eq!(n, 5.0);
        assert!((a.sum_squares().sqrt() - 1.0).abs() < 1e-12);
        let n2 = clip_global_norm(&mut [&mut a], f64::INFINITY);
        assert!((n2 - 1.0).abs() < 1e-12);
    }
}
