use serde::{Deserialize, Serialize};

use super::tape::Parameter;
use crate::error::{Error, Result};

/// Adam optimizer hyperparameters. Moments live on each [`Parameter`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for Adam {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl Adam {
    pub fn new(lr: f64, betas: (f64, f64), eps: f64) -> Result<Self> {
        let adam = Self {
            lr,
            beta1: betas.0,
            beta2: betas.1,
            eps,
        };
        adam.validate()?;
        Ok(adam)
    }

    pub fn with_lr(lr: f64) -> Result<Self> {
        Self::new(lr, (0.9, 0.999), 1e-8)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config(format!(
                "betas must lie in [0, 1), got ({}, {})",
                self.beta1, self.beta2
            )));
        }
        if self.eps <= 0.0 {
            return Err(Error::Config("eps must be positive".into()));
        }
        Ok(())
    }

    /// One bias-corrected Adam update. Gradients are left in place; callers zero them.
    pub fn step(&self, params: &mut [&mut Parameter]) -> Result<()> {
        self.validate()?;
        for p in params.iter_mut() {
            p.grad.ensure_finite("gradient")?;
            p.step += 1;
            let t = p.step as i32;
            let bc1 = 1.0 - self.beta1.powi(t);
            let bc2 = 1.0 - self.beta2.powi(t);
            let Parameter {
                value,
                grad,
                first_moment,
                second_moment,
                ..
            } = &mut **p;
            for (((v, g), m), s) in value
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(first_moment.data_mut())
                .zip(second_moment.data_mut())
            {
                *m = self.beta1 * *m + (1.0 - self.beta1) * g;
                *s = self.beta2 * *s + (1.0 - self.beta2) * g * g;
                let m_hat = *m / bc1;
                let s_hat = *s / bc2;
                *v -= self.lr * m_hat / (s_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::Matrix;

    #[test]
    fn zero_gradient_leaves_values() {
        let mut p = Parameter::new(Matrix::from_rows(&[[1.5, -2.0]]).unwrap());
        let adam = Adam::default();
        for _ in 0..5 {
            adam.step(&mut [&mut p]).unwrap();
        }
        assert_eq!(p.value.data(), &[1.5, -2.0]);
        assert_eq!(p.step_count(), 5);
    }

    #[test]
    fn first_step_by_hand() {
        // m = 0.1, s = 0.001, m̂ = 1, ŝ = 1  →  v = 1 − 0.1·1/(1 + 1e-8)
        let mut p = Parameter::new(Matrix::scalar(1.0));
        p.grad = Matrix::scalar(1.0);
        Adam::new(0.1, (0.9, 0.999), 1e-8)
            .unwrap()
            .step(&mut [&mut p])
            .unwrap();
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.value.get(0, 0) - expected).abs() < 1e-15);
        assert!((p.value.get(0, 0) - 0.9).abs() < 1e-6);
        assert_eq!(p.grad.get(0, 0), 1.0);
    }

    #[test]
    fn identical_inputs_identical_updates() {
        let mut a = Parameter::new(Matrix::from_rows(&[[0.3, 0.7]]).unwrap());
        let mut b = Parameter::new(Matrix::from_rows(&[[0.3, 0.7]]).unwrap());
        a.grad = Matrix::from_rows(&[[0.1, -0.4]]).unwrap();
        b.grad = a.grad.clone();
        Adam::default().step(&mut [&mut a, &mut b]).unwrap();
        assert_eq!(a.value, b.value);
    }

    #[test]
    fn non_positive_lr_is_config_error() {
        assert!(matches!(Adam::with_lr(0.0), Err(Error::Config(_))));
        let bad = Adam {
            lr: -1.0,
            ..Adam::default()
        };
        let mut p = Parameter::new(Matrix::scalar(1.0));
        assert!(matches!(bad.step(&mut [&mut p]), Err(Error::Config(_))));
    }
}
