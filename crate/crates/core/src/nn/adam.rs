use super::params::{Grads, ParamStore};
use super::tensor::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

/// Bias-corrected Adam over flat buffers.
#[derive(Debug, Clone)]
pub struct Adam<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// Update every trainable entry of `store` with the matching gradient.
    pub fn step_store(&mut self, store: &mut ParamStore<T>, grads: &Grads<T>) {
        self.begin();
        for (i, (entry, g)) in store
            .entries_mut()
            .iter_mut()
            .zip(grads.buffers())
            .enumerate()
        {
            if entry.trainable {
                self.update(i, &mut entry.data, g);
            }
        }
    }

    /// Update a single flat parameter vector.
    pub fn step_vec(&mut self, params: &mut [T], grad: &[T]) {
        self.begin();
        self.update(0, params, grad);
    }

    fn begin(&mut self) {
        self.step += 1;
    }

    fn update(&mut self, slot: usize, params: &mut [T], grad: &[T]) {
        assert_eq!(params.len(), grad.len());
        while self.m.len() <= slot {
            self.m.push(Vec::new());
            self.v.push(Vec::new());
        }
        if self.m[slot].len() != params.len() {
            self.m[slot] = vec![T::zero(); params.len()];
            self.v[slot] = vec![T::zero(); params.len()];
        }
        let c = self.config;
        let (b1, b2) = (T::lit(c.beta1), T::lit(c.beta2));
        let t = self.step as i32;
        let bc1 = T::one() - T::lit(c.beta1.powi(t));
        let bc2 = T::one() - T::lit(c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        let (m, v) = (&mut self.m[slot], &mut self.v[slot]);
        for j in 0..params.len() {
            let g = grad[j];
            m[j] = b1 * m[j] + (T::one() - b1) * g;
            v[j] = b2 * v[j] + (T::one() - b2) * g * g;
            let mhat = m[j] / bc1;
            let vhat = v[j] / bc2;
            params[j] = params[j] - lr * mhat / (vhat.sqrt() + eps);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_with_empty_history_leaves_params_unchanged() {
        let mut adam = Adam::<f64>::new(AdamConfig {
            lr: 0.1,
            beta1: 0.5,
            beta2: 0.5,
            eps: 1e-8,
        });
        let mut p = vec![0.3, -1.25];
        for _ in 0..5 {
            adam.step_vec(&mut p, &[0.0, 0.0]);
        }
        assert_eq!(p, vec![0.3, -1.25]);
    }

    #[test]
    fn first_step_moves_by_learning_rate_against_the_gradient_sign() {
        let mut adam = Adam::<f64>::new(AdamConfig {
            lr: 0.05,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-8,
        });
        let mut p = vec![0.0, 0.0];
        adam.step_vec(&mut p, &[2.0, -3.0]);
        assert!((p[0] + 0.05).abs() < 1e-9);
        assert!((p[1] - 0.05).abs() < 1e-9);
    }
}
