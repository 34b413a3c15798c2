use serde::{Deserialize, Serialize};

use super::TrainError;

/// Peak learning rate.
pub const DEFAULT_LR_MAX: f64 = 6e-4;
pub const DEFAULT_WARMUP: usize = 200;

/// Linear warmup to `lr_max`, then half a cosine down to `lr_min` at
/// `total_steps`, constant afterwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub lr_max: f64,
    pub lr_min: f64,
    pub warmup_steps: usize,
    pub total_steps: usize,
}

impl LrSchedule {
    /// Schedule with `lr_min = lr_max / 10`.
    pub fn new(lr_max: f64, warmup_steps: usize, total_steps: usize) -> Result<Self, TrainError> {
        let s = LrSchedule {
            lr_max,
            lr_min: lr_max / 10.0,
            warmup_steps,
            total_steps,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        if !(0 < self.warmup_steps && self.warmup_steps < self.total_steps) {
            return Err(TrainError::Config(format!(
                "need 0 < warmup_steps ({}) < total_steps ({})",
                self.warmup_steps, self.total_steps
            )));
        }
        if !(self.lr_min >= 0.0 && self.lr_min <= self.lr_max && self.lr_max.is_finite()) {
            return Err(TrainError::Config(format!(
                "need 0 <= lr_min ({}) <= lr_max ({})",
                self.lr_min, self.lr_max
            )));
        }
        Ok(())
    }

    pub fn lr_at(&self, step: usize) -> f64 {
        if step < self.warmup_steps {
            return self.lr_max * (step + 1) as f64 / self.warmup_steps as f64;
        }
        // Endpoints are returned as-is so they hold exactly.
        if step == self.warmup_steps {
            return self.lr_max;
        }
        if step >= self.total_steps {
            return self.lr_min;
        }
        let progress = (step - self.warmup_steps) as f64 / (self.total_steps - self.warmup_steps) as f64;
        self.lr_min + 0.5 * (self.lr_max - self.lr_min) * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule::new(DEFAULT_LR_MAX, DEFAULT_WARMUP, 2000).expect("valid defaults")
    }
}
