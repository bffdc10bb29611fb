use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam moments and step counter for one flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, n_params: usize) -> Self {
        Self {
            config,
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.m
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.v
    }

    /// One bias-corrected Adam update.
    ///
    /// An all-zero gradient still advances the counter and decays the moments
    /// but leaves the parameters untouched.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(format!(
                "adam state holds {} parameters, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::numeric("non-finite gradient passed to adam"));
        }
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        self.step += 1;
        let all_zero = grads.iter().all(|&g| g == 0.0);
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
            self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
            if !all_zero {
                let m_hat = self.m[i] / bc1;
                let v_hat = self.v[i] / bc2;
                params[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    /// Tensor-set form of [`AdamState::step`]; tensors are taken in order as
    /// one concatenated parameter vector.
    pub fn step_tensors(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("parameter and gradient sets differ in size"));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.shape() != g.shape() {
                return Err(Error::shape(format!(
                    "gradient shape {:?} does not match parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
        }
        let mut flat: Vec<f64> = params
            .iter()
            .flat_map(|p| p.values().iter().copied())
            .collect();
        let flat_g: Vec<f64> = grads
            .iter()
            .flat_map(|g| g.values().iter().copied())
            .collect();
        self.step(&mut flat, &flat_g)?;
        let mut off = 0;
        for p in params.iter_mut() {
            let n = p.len();
            p.values_mut().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_is_identity_and_counts_step() {
        let mut st = AdamState::new(AdamConfig::default(), 3);
        let mut p = vec![1.0, -2.0, 3.0];
        st.step(&mut p, &[0.5, 0.5, 0.5]).unwrap();
        let before = p.clone();
        st.step(&mut p, &[0.0; 3]).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.steps(), 2);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut st = AdamState::new(AdamConfig::default(), 1);
        let mut p = vec![1.0];
        st.step(&mut p, &[2.0]).unwrap();
        assert!((p[0] - 0.999).abs() < 1e-6);
        let mut st = AdamState::new(AdamConfig::default(), 1);
        let mut q = vec![1.0];
        st.step(&mut q, &[-2.0]).unwrap();
        assert!((q[0] - 1.001).abs() < 1e-6);
    }

    #[test]
    fn deterministic_and_shape_checked() {
        let mut a = AdamState::new(AdamConfig::default(), 2);
        let mut b = a.clone();
        let (mut pa, mut pb) = (vec![0.3, 0.4], vec![0.3, 0.4]);
        a.step(&mut pa, &[0.1, -0.7]).unwrap();
        b.step(&mut pb, &[0.1, -0.7]).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(a, b);
        assert!(a.step(&mut pa, &[0.1]).is_err());
        assert!(a.step(&mut pa, &[f64::NAN, 0.0]).is_err());
    }

    #[test]
    fn tensor_set_step_checks_shapes() {
        let mut st = AdamState::new(AdamConfig::default(), 3);
        let mut params = vec![Tensor::vector(vec![1.0, 2.0]), Tensor::vector(vec![3.0])];
        let grads = vec![Tensor::vector(vec![1.0, 1.0]), Tensor::vector(vec![-1.0])];
        st.step_tensors(&mut params, &grads).unwrap();
        assert!((params[1].values()[0] - 3.001).abs() < 1e-6);
        let bad = vec![Tensor::vector(vec![1.0]), Tensor::vector(vec![1.0, 1.0])];
        assert!(st.step_tensors(&mut params, &bad).is_err());
    }

    proptest! {
        #[test]
        fn zero_gradient_identity_for_any_state(
            warm in prop::collection::vec(-5.0f64..5.0, 4),
            p0 in prop::collection::vec(-5.0f64..5.0, 4),
        ) {
            let mut st = AdamState::new(AdamConfig::default(), 4);
            let mut scratch = vec![0.0; 4];
            st.step(&mut scratch, &warm).unwrap();
            let mut p = p0.clone();
            st.step(&mut p, &[0.0; 4]).unwrap();
            prop_assert_eq!(p, p0);
            prop_assert!(st.second_moment().iter().all(|&v| v >= 0.0));
        }
    }
}
