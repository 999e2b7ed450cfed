use serde::{Deserialize, Serialize};

use crate::autodiff::tensor::Tensor;
use crate::error::{Error, Result};

/// Bias-corrected Adam optimizer state.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamState {
    pub fn new(params: &[Tensor], lr: f64) -> Self {
        AdamState {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
        }
    }

    pub fn first_moment(&self, i: usize) -> &Tensor {
        &self.m[i]
    }

    pub fn second_moment(&self, i: usize) -> &Tensor {
        &self.v[i]
    }
}

/// Applies one Adam update to `params` in place.
pub fn adam_step(params: &mut [Tensor], grads: &[Tensor], state: &mut AdamState) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::shape(
            "adam_step",
            format!(
                "{} params, {} grads, {} moments",
                params.len(),
                grads.len(),
                state.m.len()
            ),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() || p.shape() != state.m[i].shape() {
            return Err(Error::shape(
                "adam_step",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    state.t += 1;
    let t = state.t as i32;
    let bc1 = 1.0 - state.beta1.powi(t);
    let bc2 = 1.0 - state.beta2.powi(t);
    let (b1, b2, lr, eps) = (state.beta1, state.beta2, state.lr, state.eps);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let (pm, mm, vm) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (((pv, &gv), mv), vv) in pm.iter_mut().zip(g.data()).zip(mm).zip(vm) {
            *mv = b1 * *mv + (1.0 - b1) * gv;
            *vv = b2 * *vv + (1.0 - b2) * gv * gv;
            let m_hat = *mv / bc1;
            let v_hat = *vv / bc2;
            *pv -= lr * m_hat / (v_hat.sqrt() + eps);
        }
    }
    Ok(())
}

/// Rescales `grads` so their global L2 norm is at most `max_norm`. Returns the
/// norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|v| *v *= s);
        }
    }
    norm
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_is_identity() {
        let mut params = vec![Tensor::vector(vec![1.0, -2.0, 3.5])];
        let before = params.clone();
        let mut st = AdamState::new(&params, 0.001);
        adam_step(&mut params, &[Tensor::zeros(&[3])], &mut st).unwrap();
        assert_eq!(params, before);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn first_step_hand_values() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&params, 0.001);
        adam_step(&mut params, &[Tensor::scalar(1.0)], &mut st).unwrap();
        assert!((st.first_moment(0).item() - 0.1).abs() < 1e-15);
        assert!((st.second_moment(0).item() - 0.001).abs() < 1e-15);
        // m̂ = v̂ = 1, so the step is lr / (1 + eps).
        let expected = 1.0 - 0.001 / (1.0 + 1e-8);
        assert!((params[0].item() - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_gradient_decreases_monotonically() {
        let mut params = vec![Tensor::scalar(1.0)];
        let mut st = AdamState::new(&params, 0.001);
        let mut last = 1.0;
        for _ in 0..2 {
            adam_step(&mut params, &[Tensor::scalar(1.0)], &mut st).unwrap();
            assert!(params[0].item() < last);
            last = params[0].item();
        }
        assert_eq!(st.t, 2);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let mut params = vec![Tensor::zeros(&[2])];
        let mut st = AdamState::new(&params, 0.001);
        assert!(adam_step(&mut params, &[Tensor::zeros(&[3])], &mut st).is_err());
        assert_eq!(st.t, 0);
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![Tensor::vector(vec![3.0, 4.0]), Tensor::vector(vec![12.0])];
        let before = clip_global_norm(&mut g, 5.0);
        assert!((before - 13.0).abs() < 1e-12);
        let after: f64 = g.iter().map(Tensor::norm_sq).sum::<f64>().sqrt();
        assert!((after - 5.0).abs() < 1e-12);
    }
}
