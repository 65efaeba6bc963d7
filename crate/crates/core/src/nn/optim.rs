use super::{NetError, ParamSet};
use crate::scalar::Scalar;
use serde::{Deserialize, Serialize};

/// Linear warm-up to `peak_lr`, then multiplication by `decay_factor` every
/// `decay_interval` iterations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleConfig {
    pub peak_lr: f64,
    pub warmup_iters: u64,
    pub decay_factor: f64,
    pub decay_interval: u64,
}

impl Default for ScheduleConfig {
    fn default() -> Self {
        Self {
            peak_lr: 1e-3,
            warmup_iters: 250,
            decay_factor: 0.9,
            decay_interval: 1000,
        }
    }
}

impl ScheduleConfig {
    /// Learning rate of 1-based iteration `i`.
    pub fn lr(&self, i: u64) -> f64 {
        if self.warmup_iters > 0 && i <= self.warmup_iters {
            return self.peak_lr * i as f64 / self.warmup_iters as f64;
        }
        if self.decay_interval == 0 {
            return self.peak_lr;
        }
        let steps = (i - self.warmup_iters.min(i)) / self.decay_interval;
        self.peak_lr * self.decay_factor.powi(steps.min(i32::MAX as u64) as i32)
    }

    pub fn validate(&self) -> Result<(), NetError> {
        if !(self.peak_lr >= 0.0 && self.peak_lr.is_finite()) || !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(NetError::Config(format!(
                "schedule needs peak_lr >= 0 and decay_factor in (0, 1], got {} / {}",
                self.peak_lr, self.decay_factor
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// L2 penalty added to the gradient.
    pub weight_decay: f64,
    pub schedule: ScheduleConfig,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-6,
            schedule: ScheduleConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    /// Number of updates applied so far.
    pub step: u64,
    pub m: ParamSet<T>,
    pub v: ParamSet<T>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(config: AdamConfig, params: &ParamSet<T>) -> Self {
        Self {
            config,
            step: 0,
            m: params.zeros_like(),
            v: params.zeros_like(),
        }
    }

    /// Learning rate the next call to [`Self::update`] will use.
    pub fn next_lr(&self) -> f64 {
        self.config.schedule.lr(self.step + 1)
    }

    /// One Adam update of `params` from `grads`; returns the learning rate used.
    pub fn update(&mut self, params: &mut ParamSet<T>, grads: &ParamSet<T>) -> Result<f64, NetError> {
        if params.names() != grads.names() || params.names() != self.m.names() {
            return Err(NetError::Shape("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let c = self.config;
        let lr = c.schedule.lr(self.step);
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let bc1 = T::of(1.0 - c.beta1.powi(self.step.min(i32::MAX as u64) as i32));
        let bc2 = T::of(1.0 - c.beta2.powi(self.step.min(i32::MAX as u64) as i32));
        let (lr_t, eps, wd) = (T::of(lr), T::of(c.eps), T::of(c.weight_decay));
        for (((p, g), m), v) in params
            .values_mut()
            .iter_mut()
            .zip(grads.values())
            .zip(self.m.values_mut())
            .zip(self.v.values_mut())
        {
            ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
                let g = g + wd * *p;
                *m = b1 * *m + (T::one() - b1) * g;
                *v = b2 * *v + (T::one() - b2) * g * g;
                let mhat = *m / bc1;
                let vhat = *v / bc2;
                *p -= lr_t * mhat / (vhat.sqrt() + eps);
            });
        }
        Ok(lr)
    }
}
