//! Adam optimizer over a list of parameter tensors.

use crate::scalar::{cast, Scalar};

/// Adam with bias correction. One instance owns the moment state for a fixed
/// set of parameter tensors and must see them in the same order every step.
#[derive(Debug, Clone)]
pub struct Adam<T: Scalar> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: u32,
}

impl<T: Scalar> Adam<T> {
    pub fn new(learning_rate: T, beta1: T, beta2: T, epsilon: T, tensor_sizes: &[usize]) -> Self {
        Adam {
            learning_rate,
            beta1,
            beta2,
            epsilon,
            m: tensor_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            v: tensor_sizes.iter().map(|&n| vec![T::zero(); n]).collect(),
            step: 0,
        }
    }

    /// Standard constants: betas 0.9/0.999, epsilon 1e-8.
    pub fn with_defaults(learning_rate: T, tensor_sizes: &[usize]) -> Self {
        Adam::new(
            learning_rate,
            cast(0.9),
            cast(0.999),
            cast(1e-8),
            tensor_sizes,
        )
    }

    /// Apply one update. `params[i]` and `grads[i]` must match the sizes the
    /// optimizer was built with.
    pub fn step(&mut self, params: &mut [&mut [T]], grads: &[&[T]]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.step += 1;
        let t = self.step as i32;
        let bc1 = T::one() - self.beta1.powi(t);
        let bc2 = T::one() - self.beta2.powi(t);
        for (ti, param) in params.iter_mut().enumerate() {
            let g = grads[ti];
            let m = &mut self.m[ti];
            let v = &mut self.v[ti];
            assert_eq!(param.len(), m.len());
            assert_eq!(g.len(), m.len());
            for i in 0..param.len() {
                m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                param[i] = param[i] - self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let mut p = vec![1.0, -2.0, 0.5];
        let g = vec![0.3, 0.1, -0.7];
        let mut adam = Adam::with_defaults(0.0_f64, &[3]);
        adam.step(&mut [&mut p], &[&g]);
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_learning_rate_in_sign_direction() {
        // With bias correction the very first step is lr * g/(|g| + eps').
        let mut p = vec![0.0_f64];
        let g = vec![4.0];
        let mut adam = Adam::with_defaults(0.01, &[1]);
        adam.step(&mut [&mut p], &[&g]);
        assert!((p[0] + 0.01).abs() < 1e-6);
    }

    #[test]
    fn converges_on_quadratic() {
        // minimize (x - 3)^2
        let mut p = vec![0.0_f64];
        let mut adam = Adam::with_defaults(0.1, &[1]);
        for _ in 0..2000 {
            let g = vec![2.0 * (p[0] - 3.0)];
            adam.step(&mut [&mut p], &[&g]);
        }
        assert!((p[0] - 3.0).abs() < 1e-3);
    }
}
