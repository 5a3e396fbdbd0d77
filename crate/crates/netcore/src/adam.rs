use serde::{Deserialize, Serialize};

use crate::error::{NetError, Result};
use crate::param::Param;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamConfig {
    pub fn with_lr(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.learning_rate > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0
            && self.epsilon > 0.0;
        if ok {
            Ok(())
        } else {
            Err(NetError::InvalidOptimizer(format!("{self:?}")))
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Adam moments for one parameter set. Moments are allocated on the first
/// step and their shapes are checked on every later one.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            step_count: 0,
            first_moment: Vec::new(),
            second_moment: Vec::new(),
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// Applies one bias-corrected update using each parameter's `grad`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [&mut Param]) -> Result<()> {
        for p in params.iter() {
            if p.grad.iter().any(|g| !g.is_finite()) {
                return Err(NetError::NonFiniteGradient {
                    param: p.name.clone(),
                });
            }
        }
        if self.first_moment.is_empty() {
            self.first_moment = params.iter().map(|p| vec![0.0; p.len()]).collect();
            self.second_moment = self.first_moment.clone();
        } else if self.first_moment.len() != params.len()
            || self
                .first_moment
                .iter()
                .zip(params.iter())
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(NetError::OptimizerMismatch(format!(
                "state tracks {} tensors, got {}",
                self.first_moment.len(),
                params.len()
            )));
        }

        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.values.len() {
                let g = p.grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p.values[i] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(w: f64, g: f64) -> Param {
        let mut p = Param::zeros("w", vec![1]);
        p.values[0] = w;
        p.grad[0] = g;
        p
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = scalar(0.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(&mut [&mut p]).unwrap();
        assert!((p.values[0] + 0.001).abs() < 1e-8);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = scalar(0.25, 0.0);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        for _ in 0..5 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.values[0], 0.25);
    }

    /// Independent scalar Adam written straight from the update equations.
    fn reference_adam(mut w: f64, steps: usize, lr: f64) -> Vec<f64> {
        let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
        let (mut m, mut v) = (0.0, 0.0);
        let mut out = Vec::new();
        for t in 1..=steps {
            let g = 2.0 * w;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t as i32));
            let vh = v / (1.0 - b2.powi(t as i32));
            w -= lr * mh / (vh.sqrt() + eps);
            out.push(w);
        }
        out
    }

    #[test]
    fn quadratic_trajectory_matches_reference() {
        let expected = reference_adam(1.0, 3, 1e-3);
        let mut p = scalar(1.0, 0.0);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        for &e in &expected {
            p.grad[0] = 2.0 * p.values[0];
            adam.step(&mut [&mut p]).unwrap();
            assert!((p.values[0] - e).abs() < 1e-15, "{} vs {}", p.values[0], e);
        }
        // Each early step moves by roughly lr because m_hat/sqrt(v_hat) ~ 1.
        assert!((expected[2] - 0.997).abs() < 1e-5);
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut p = scalar(1.0, f64::NAN);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        assert!(matches!(
            adam.step(&mut [&mut p]),
            Err(NetError::NonFiniteGradient { .. })
        ));
        assert_eq!(p.values[0], 1.0);
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(Adam::new(AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        })
        .is_err());
        assert!(Adam::new(AdamConfig::with_lr(0.0)).is_err());
    }

    #[test]
    fn mismatched_parameter_set_rejected() {
        let mut a = scalar(1.0, 1.0);
        let mut b = scalar(1.0, 1.0);
        let mut adam = Adam::new(AdamConfig::default()).unwrap();
        adam.step(&mut [&mut a]).unwrap();
        assert!(adam.step(&mut [&mut a, &mut b]).is_err());
    }
}
