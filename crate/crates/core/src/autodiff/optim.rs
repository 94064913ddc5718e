use alloc::format;
use alloc::vec::Vec;

use super::params::ParamSet;
use super::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum OptimizerKind {
    Adam { beta1: f64, beta2: f64, eps: f64 },
    Sgd,
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Per-parameter optimiser state for one [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    pub lr: f64,
    steps: u64,
    moments: Vec<(Tensor, Tensor)>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer {
            kind,
            lr,
            steps: 0,
            moments: Vec::new(),
        }
    }

    pub fn adam(lr: f64) -> Self {
        Self::new(OptimizerKind::default(), lr)
    }

    pub fn sgd(lr: f64) -> Self {
        Self::new(OptimizerKind::Sgd, lr)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the current gradients. Gradients are left
    /// untouched; the caller zeroes them.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for p in params.iter() {
            if !p.grad.is_finite() {
                return Err(Error::non_finite(format!("gradient of {}", p.name)));
            }
        }
        self.steps += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in params.iter_mut() {
                    for (v, g) in p.value.data_mut().iter_mut().zip(p.grad.data()) {
                        *v -= self.lr * g;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                if self.moments.is_empty() {
                    self.moments = params
                        .iter()
                        .map(|p| (Tensor::zeros(p.value.shape()), Tensor::zeros(p.value.shape())))
                        .collect();
                }
                if self.moments.len() != params.len() {
                    return Err(Error::invalid("optimizer state belongs to another parameter set"));
                }
                let t = self.steps as i32;
                let c1 = 1.0 - libm::pow(beta1, t as f64);
                let c2 = 1.0 - libm::pow(beta2, t as f64);
                for (p, (m, v)) in params.iter_mut().zip(self.moments.iter_mut()) {
                    let values = p.value.data_mut();
                    let grads = p.grad.data();
                    let (m, v) = (m.data_mut(), v.data_mut());
                    for i in 0..values.len() {
                        let g = grads[i];
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                        let m_hat = m[i] / c1;
                        let v_hat = v[i] / c2;
                        values[i] -= self.lr * m_hat / (libm::sqrt(v_hat) + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn scalar_set(v: f64, g: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.insert("p", Tensor::scalar(v)).unwrap();
        ps.get_mut("p").unwrap().grad = Tensor::scalar(g);
        ps
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut ps = scalar_set(0.7, 0.0);
        let mut opt = Optimizer::adam(1e-3);
        opt.step(&mut ps).unwrap();
        assert_eq!(ps.value(0).data(), &[0.7]);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn first_adam_step_moves_by_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut ps = scalar_set(0.0, 1.0);
        Optimizer::adam(1e-3).step(&mut ps).unwrap();
        let expected = -1e-3 * 1.0 / (1.0 + 1e-8);
        assert!((ps.value(0).data()[0] - expected).abs() < 1e-15);
        assert_eq!(ps.get("p").unwrap().grad.data(), &[1.0]);
    }

    #[test]
    fn repeated_steps_move_against_gradient() {
        let mut ps = scalar_set(0.0, -2.0);
        let mut opt = Optimizer::adam(1e-2);
        let mut prev = 0.0;
        for _ in 0..2 {
            opt.step(&mut ps).unwrap();
            let now = ps.value(0).data()[0];
            assert!(now > prev);
            prev = now;
        }
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut ps = scalar_set(0.0, f64::NAN);
        let err = Optimizer::sgd(0.1).step(&mut ps).unwrap_err();
        assert!(format!("{err}").contains("gradient of p"));
    }

    #[test]
    fn sgd_step() {
        let mut ps = ParamSet::new();
        ps.insert("w", Tensor::vector(vec![1.0, 2.0])).unwrap();
        ps.get_mut("w").unwrap().grad = Tensor::vector(vec![1.0, -1.0]);
        Optimizer::sgd(0.5).step(&mut ps).unwrap();
        assert_eq!(ps.value(0).data(), &[0.5, 2.5]);
    }
}
