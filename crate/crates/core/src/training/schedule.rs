use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Constant learning rate followed by a linear ramp to `final_lr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial_lr: f64,
    pub constant_steps: usize,
    pub decay_steps: usize,
    #[serde(default)]
    pub final_lr: f64,
}

impl LrSchedule {
    pub fn new(initial_lr: f64, constant_steps: usize, decay_steps: usize) -> Self {
        Self {
            initial_lr,
            constant_steps,
            decay_steps,
            final_lr: 0.0,
        }
    }

    pub fn total_steps(&self) -> usize {
        self.constant_steps + self.decay_steps
    }

    /// Same shape compressed to `total` steps; the constant part is rounded
    /// and the decay takes the remainder.
    pub fn scaled(&self, total: usize) -> Self {
        let full = self.total_steps().max(1);
        let constant = ((self.constant_steps as f64 * total as f64) / full as f64).round() as usize;
        let constant = constant.min(total);
        Self {
            constant_steps: constant,
            decay_steps: total - constant,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_lr.is_finite()
            && self.final_lr.is_finite()
            && self.final_lr >= 0.0
            && self.initial_lr >= self.final_lr;
        if !ok {
            return Err(Error::Config(format!(
                "schedule needs finite 0 <= final_lr <= initial_lr, got {} -> {}",
                self.initial_lr, self.final_lr
            )));
        }
        Ok(())
    }
}

/// Learning rate at `step`.
pub fn lr_at(s: &LrSchedule, step: usize) -> f64 {
    if step < s.constant_steps {
        return s.initial_lr;
    }
    let k = step - s.constant_steps;
    if k >= s.decay_steps {
        return s.final_lr;
    }
    let t = k as f64 / s.decay_steps as f64;
    s.initial_lr + (s.final_lr - s.initial_lr) * t
}

/// Full-scale schedules kept for reference and for scaling to micro runs.
pub const FULL_SCHEDULES: [(&str, LrSchedule); 6] = [
    ("translation-scannet", sched(2e-4, 120_000, 175_000, 0.0)),
    ("translation-interiornet", sched(2e-4, 114_000, 206_000, 0.0)),
    ("guidance", sched(2e-3, 150_000, 150_000, 0.0)),
    ("enhancement-crop", sched(1e-3, 20_000, 60_000, 4e-4)),
    ("enhancement-full", sched(2e-4, 10_000, 20_000, 0.0)),
    ("sr-finetune", sched(2e-4, 5_000, 25_000, 0.0)),
];

const fn sched(initial_lr: f64, constant_steps: usize, decay_steps: usize, final_lr: f64) -> LrSchedule {
    LrSchedule {
        initial_lr,
        constant_steps,
        decay_steps,
        final_lr,
    }
}

pub fn full_schedule(name: &str) -> Result<LrSchedule> {
    FULL_SCHEDULES
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, s)| *s)
        .ok_or_else(|| Error::Config(format!("unknown schedule {name:?}")))
}
