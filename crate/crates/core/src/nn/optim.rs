use alloc::vec;
use alloc::vec::Vec;

use super::tensor::Scalar;

/// Adam state: step count plus first/second moment accumulators, one buffer
/// per parameter buffer.
#[derive(Debug, Clone)]
pub struct OptimizerState<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    pub step: u64,
    first: Vec<Vec<T>>,
    second: Vec<Vec<T>>,
}

impl<T: Scalar> OptimizerState<T> {
    /// Defaults: `beta1 = 0.9`, `beta2 = 0.999`, `epsilon = 1e-8`.
    pub fn new(lr: T, param_sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: T::from_f64(0.9),
            beta2: T::from_f64(0.999),
            epsilon: T::from_f64(1e-8),
            step: 0,
            first: param_sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
            second: param_sizes.iter().map(|&n| vec![T::ZERO; n]).collect(),
        }
    }
}

/// One Adam update with bias correction. `params[i]` and `grads[i]` must have
/// the lengths the state was built with.
pub fn adam_step<T: Scalar>(params: &mut [&mut [T]], grads: &[&[T]], state: &mut OptimizerState<T>) {
    assert_eq!(params.len(), state.first.len(), "parameter buffer count");
    assert_eq!(grads.len(), params.len(), "gradient buffer count");
    state.step += 1;
    let t = state.step as i32;
    let bc1 = T::ONE - state.beta1.powf(T::from_f64(f64::from(t)));
    let bc2 = T::ONE - state.beta2.powf(T::from_f64(f64::from(t)));
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads)
        .zip(state.first.iter_mut().zip(state.second.iter_mut()))
    {
        assert_eq!(p.len(), m.len(), "parameter buffer length");
        assert_eq!(g.len(), m.len(), "gradient buffer length");
        for i in 0..p.len() {
            m[i] = state.beta1 * m[i] + (T::ONE - state.beta1) * g[i];
            v[i] = state.beta2 * v[i] + (T::ONE - state.beta2) * g[i] * g[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            p[i] = p[i] - state.lr * m_hat / (v_hat.sqrt() + state.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut w = [1.5f64, -0.25, 3.0];
        let g = [0.0f64; 3];
        let mut state = OptimizerState::new(0.01, &[3]);
        adam_step(&mut [&mut w], &[&g], &mut state);
        assert_eq!(w, [1.5, -0.25, 3.0]);
    }

    #[test]
    fn first_step_magnitude_is_about_lr() {
        // With bias correction the first update is lr * g/(|g| + eps') per
        // element, i.e. about lr * sign(g).
        let mut w = [0.0f64, 0.0, 0.0];
        let g = [0.3f64, -2.0, 1e-3];
        let mut state = OptimizerState::new(0.01, &[3]);
        adam_step(&mut [&mut w], &[&g], &mut state);
        for (i, (&wi, &gi)) in w.iter().zip(&g).enumerate() {
            let expected = -0.01 * gi.signum();
            let rel = (wi - expected).abs() / expected.abs();
            assert!(rel < 0.1, "param {i}: {wi} vs {expected}");
        }
    }

    #[test]
    fn converges_on_quadratic() {
        // Minimize (w - 3)^2 from w = 0 with lr 0.1.
        let mut w = [0.0f64];
        let mut state = OptimizerState::new(0.1, &[1]);
        for _ in 0..200 {
            let g = [2.0 * (w[0] - 3.0)];
            adam_step(&mut [&mut w], &[&g], &mut state);
        }
        assert!((w[0] - 3.0).abs() < 0.1, "w = {}", w[0]);
    }
}
