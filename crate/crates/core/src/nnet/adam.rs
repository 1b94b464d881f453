use crate::error::{Error, Result};
use crate::real::Real;

pub const DEFAULT_LR: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub step: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> AdamState<T> {
    pub fn new(n: usize, lr: f64) -> Self {
        AdamState {
            m: vec![T::zero(); n],
            v: vec![T::zero(); n],
            step: 0,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update in place.
pub fn adam_step<T: Real>(params: &mut [T], grads: &[T], state: &mut AdamState<T>) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::Shape(format!(
            "adam: {} params, {} grads, {} moments",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.step += 1;
    let (b1, b2) = (T::lit(state.beta1), T::lit(state.beta2));
    let c1 = T::lit(1.0 - state.beta1.powi(state.step as i32));
    let c2 = T::lit(1.0 - state.beta2.powi(state.step as i32));
    let (lr, eps) = (T::lit(state.lr), T::lit(state.eps));
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = b1 * state.m[i] + (T::one() - b1) * g;
        state.v[i] = b2 * state.v[i] + (T::one() - b2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_grad_is_noop() {
        let mut p = vec![1.0f64, -2.0, 3.5];
        let mut s = AdamState::new(3, 1e-3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut p = vec![0.5f64];
        let mut s = AdamState::new(1, 1e-4);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr / (1 + ε)
        assert!((p[0] - 0.5 + 1e-4 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn descends_quadratic() {
        let mut w = vec![1.0f64];
        let mut s = AdamState::new(1, 0.1);
        let f0 = w[0] * w[0];
        for _ in 0..2 {
            let g = [2.0 * w[0]];
            adam_step(&mut w, &g, &mut s).unwrap();
        }
        assert!(w[0] * w[0] < f0);
    }

    #[test]
    fn shape_mismatch() {
        let mut s = AdamState::<f64>::new(2, 1e-3);
        assert!(adam_step(&mut [0.0; 2], &[0.0; 3], &mut s).is_err());
    }
}
