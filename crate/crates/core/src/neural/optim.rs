//! AdamW with decoupled weight decay, and a linear warmup/decay schedule.

use serde::{Deserialize, Serialize};

use super::{ParamStore, Scalar};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 4e-6,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

/// Moment buffers and step counter, one entry per parameter in store order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub config: AdamWConfig,
    pub step: u64,
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new<S: Scalar>(config: AdamWConfig, params: &ParamStore<S>) -> Self {
        let zeros: Vec<Vec<f64>> = params
            .iter()
            .map(|(_, p)| vec![0.0; p.value.len()])
            .collect();
        Self {
            config,
            step: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
        }
    }

    /// One AdamW update at learning rate `lr`, reading gradients from
    /// `params`. Gradients are left in place; the caller zeroes them.
    pub fn step<S: Scalar>(&mut self, params: &mut ParamStore<S>, lr: f64) -> Result<()> {
        if self.first_moment.len() != params.len() {
            return Err(Error::contract(format!(
                "optimizer tracks {} parameters, store holds {}",
                self.first_moment.len(),
                params.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let AdamWConfig {
            beta1,
            beta2,
            eps,
            weight_decay,
            ..
        } = self.config;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for ((p, m), v) in params
            .iter_mut()
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            if m.len() != p.value.len() {
                return Err(Error::contract(format!(
                    "moment buffer for {} has wrong size",
                    p.name
                )));
            }
            let grad = p.grad.data().to_vec();
            for (((w, g), mi), vi) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(grad)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                let g = g.f64();
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                let mut x = w.f64();
                x -= lr * weight_decay * x;
                x -= lr * m_hat / (v_hat.sqrt() + eps);
                *w = S::of(x);
            }
        }
        Ok(())
    }
}

/// Linear warmup from 0 to `peak_lr`, then linear decay to 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub warmup_steps: u64,
    pub total_steps: u64,
    pub peak_lr: f64,
}

impl LrSchedule {
    pub fn new(warmup_steps: u64, total_steps: u64, peak_lr: f64) -> Result<Self> {
        if warmup_steps > total_steps {
            return Err(Error::config(format!(
                "warmup_steps {warmup_steps} exceeds total_steps {total_steps}"
            )));
        }
        if peak_lr < 0.0 {
            return Err(Error::config("peak learning rate must be non-negative"));
        }
        Ok(Self {
            warmup_steps,
            total_steps,
            peak_lr,
        })
    }

    /// Learning rate at `step`; zero at and beyond `total_steps`.
    pub fn lr_at(&self, step: u64) -> f64 {
        if step >= self.total_steps {
            return 0.0;
        }
        if step < self.warmup_steps {
            return self.peak_lr * step as f64 / self.warmup_steps as f64;
        }
        let remaining = (self.total_steps - step) as f64;
        let span = (self.total_steps - self.warmup_steps) as f64;
        self.peak_lr * remaining / span
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;

    fn one_param(value: f64, grad: f64) -> ParamStore<f64> {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::scalar(value));
        s.get_mut(id).grad = Tensor::scalar(grad);
        s
    }

    #[test]
    fn first_step_moves_by_about_lr() {
        // m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps).
        let mut store = one_param(1.0, 0.5);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(cfg, &store);
        opt.step(&mut store, 0.1).unwrap();
        let w = store.value(crate::neural::ParamId(0)).item();
        let want = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((w - want).abs() < 1e-12, "{w}");
        assert!((w - 0.9).abs() < 1e-6);
        assert_eq!(opt.step, 1);
    }

    #[test]
    fn zero_gradient_without_decay_is_a_no_op() {
        let mut store = one_param(1.0, 0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(cfg, &store);
        for _ in 0..3 {
            opt.step(&mut store, 0.1).unwrap();
        }
        assert_eq!(store.value(crate::neural::ParamId(0)).item(), 1.0);
    }

    #[test]
    fn decoupled_decay_alone() {
        let mut store = one_param(1.0, 0.0);
        let cfg = AdamWConfig {
            weight_decay: 0.1,
            ..Default::default()
        };
        let mut opt = OptimizerState::new(cfg, &store);
        opt.step(&mut store, 0.1).unwrap();
        let w = store.value(crate::neural::ParamId(0)).item();
        assert!((w - 0.99).abs() < 1e-12);
    }

    #[test]
    fn schedule_spot_values() {
        let s = LrSchedule::new(100, 1000, 4e-6).unwrap();
        assert!((s.lr_at(50) - 2e-6).abs() < 1e-18);
        assert_eq!(s.lr_at(100), 4e-6);
        assert_eq!(s.lr_at(1000), 0.0);
        assert_eq!(s.lr_at(5000), 0.0);
        assert_eq!(s.lr_at(0), 0.0);
        assert!((s.lr_at(550) - 2e-6).abs() < 1e-18);
    }

    #[test]
    fn schedule_rejects_long_warmup() {
        assert!(LrSchedule::new(11, 10, 1.0).is_err());
    }

    #[test]
    fn zero_warmup_starts_at_peak() {
        let s = LrSchedule::new(0, 10, 1.0).unwrap();
        assert_eq!(s.lr_at(0), 1.0);
        assert!((s.lr_at(5) - 0.5).abs() < 1e-15);
    }
}
