//! Plateau-based learning-rate decay.
//!
//! The learning rate is multiplied by `decay_factor` (default ×0.1) each
//! time the validation metric fails to improve by more than `min_delta`
//! for `patience` consecutive epochs, and never drops below `floor_lr`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub decay_factor: f64,
    pub floor_lr: f64,
    /// Epochs without improvement before a decay.
    pub patience: usize,
    /// Minimum metric improvement that resets the patience counter.
    pub min_delta: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        Self {
            initial_lr: 1e-4,
            decay_factor: 0.1,
            floor_lr: 1e-7,
            patience: 10,
            min_delta: 1e-4,
        }
    }
}

impl LrSchedule {
    pub fn validate(&self) -> Result<()> {
        if self.initial_lr < 0.0 {
            return Err(Error::Config("initial_lr must be non-negative".into()));
        }
        if !(0.0 < self.decay_factor && self.decay_factor < 1.0) {
            return Err(Error::Config(format!(
                "decay_factor must be in (0, 1), got {}",
                self.decay_factor
            )));
        }
        if self.floor_lr > self.initial_lr {
            return Err(Error::Config(format!(
                "floor_lr {} exceeds initial_lr {}",
                self.floor_lr, self.initial_lr
            )));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stateful plateau detector over a higher-is-better validation metric.
#[derive(Clone, Debug)]
pub struct PlateauTracker {
    schedule: LrSchedule,
    lr: f64,
    best: f64,
    stale_epochs: usize,
}

impl PlateauTracker {
    pub fn new(schedule: LrSchedule) -> Result<Self> {
        schedule.validate()?;
        Ok(Self {
            schedule,
            lr: schedule.initial_lr,
            best: f64::NEG_INFINITY,
            stale_epochs: 0,
        })
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    /// Feeds one epoch's validation metric; returns the learning rate to
    /// use from now on. The patience counter resets on decay.
    pub fn observe(&mut self, metric: f64) -> f64 {
        if metric > self.best + self.schedule.min_delta {
            self.best = metric;
            self.stale_epochs = 0;
        } else {
            self.stale_epochs += 1;
            if self.stale_epochs >= self.schedule.patience {
                self.lr = (self.lr * self.schedule.decay_factor).max(self.schedule.floor_lr);
                self.stale_epochs = 0;
            }
        }
        self.lr
    }
}
