//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

/// First/second moment accumulators, one pair per parameter.
#[derive(Clone, Debug)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, config: AdamConfig) -> Self {
        let zeros: Vec<Tensor<T>> = params.ids().map(|id| Tensor::zeros(params.get(id).shape())).collect();
        AdamState { config, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self, index: usize) -> &Tensor<T> {
        &self.m[index]
    }

    pub fn second_moment(&self, index: usize) -> &Tensor<T> {
        &self.v[index]
    }

    /// One update. `grads[i]` of `None` is treated as a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::DimensionMismatch {
                context: "adam parameter count",
                expected: params.len(),
                found: grads.len(),
            });
        }
        for (id, g) in params.ids().zip(grads) {
            if let Some(g) = g {
                if g.shape() != params.get(id).shape() {
                    return Err(Error::ShapeMismatch {
                        context: "adam gradient",
                        left: params.get(id).shape().to_vec(),
                        right: g.shape().to_vec(),
                    });
                }
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as f64;
        let (b1, b2) = (T::from_f64_lossy(c.beta1), T::from_f64_lossy(c.beta2));
        let bc1 = T::from_f64_lossy(1.0 - c.beta1.powf(t));
        let bc2 = T::from_f64_lossy(1.0 - c.beta2.powf(t));
        let lr = T::from_f64_lossy(c.lr);
        let eps = T::from_f64_lossy(c.epsilon);
        let one = T::one();
        let ids: Vec<_> = params.ids().collect();
        for (i, (&id, g)) in ids.iter().zip(grads).enumerate() {
            let Some(g) = g else { continue };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let p = params.get_mut(id).data_mut();
            for j in 0..p.len() {
                let gj = g.data()[j];
                m[j] = b1 * m[j] + (one - b1) * gj;
                v[j] = b2 * v[j] + (one - b2) * gj * gj;
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                p[j] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store(values: Vec<f64>) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        s.add("p", Tensor::vector(values));
        s
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let g = vec![0.5, -2.0, 1e-3, -7.0];
        let mut params = store(vec![0.0; 4]);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step(&mut params, &[Some(Tensor::vector(g.clone()))]).unwrap();
        for (p, gj) in params.get(params.find("p").unwrap()).data().iter().zip(&g) {
            // at t = 1, m_hat = g and v_hat = g^2, so the step is lr * |g| / (|g| + eps)
            let expected = -0.001 * gj.signum() * gj.abs() / (gj.abs() + 1e-8);
            assert!((p - expected).abs() < 1e-15);
            assert!((p.abs() - 0.001).abs() < 1e-6);
        }
    }

    #[test]
    fn zero_gradient_only_advances_the_counter() {
        let mut params = store(vec![1.0, -1.0]);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        adam.step(&mut params, &[Some(Tensor::vector(vec![0.0, 0.0]))]).unwrap();
        assert_eq!(params.get(params.find("p").unwrap()).data(), &[1.0, -1.0]);
        assert_eq!(adam.first_moment(0).data(), &[0.0, 0.0]);
        assert_eq!(adam.second_moment(0).data(), &[0.0, 0.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        let (lr, b1, b2, eps) = (0.001f64, 0.9f64, 0.999f64, 1e-8f64);
        let grads = [[0.3, -1.2], [0.1, 0.4]];
        let mut params = store(vec![0.2, -0.4]);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        for g in &grads {
            adam.step(&mut params, &[Some(Tensor::vector(g.to_vec()))]).unwrap();
        }
        // independent scalar reference
        let mut reference = [0.2f64, -0.4];
        for (k, p) in reference.iter_mut().enumerate() {
            let (mut m, mut v) = (0.0f64, 0.0f64);
            for (t, g) in grads.iter().enumerate() {
                let t = (t + 1) as i32;
                m = b1 * m + (1.0 - b1) * g[k];
                v = b2 * v + (1.0 - b2) * g[k] * g[k];
                *p -= lr * (m / (1.0 - b1.powi(t))) / ((v / (1.0 - b2.powi(t))).sqrt() + eps);
            }
        }
        let got = params.get(params.find("p").unwrap()).data();
        for (a, b) in got.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut params = store(vec![0.0; 3]);
        let mut adam = AdamState::new(&params, AdamConfig::default());
        let err = adam.step(&mut params, &[Some(Tensor::vector(vec![1.0; 2]))]).unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
        assert_eq!(adam.step_count(), 0);
    }
}
