//! Training procedure: guidance pre-training, unpaired translation,
//! enhancement on pseudo-examples, super-resolution fine-tuning and
//! inference.

mod data;
mod phases;
mod pipeline;
mod schedule;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use data::{
    depth_tensor, downsample_rgb, draw_batch, rgb_tensor, tensor_depth, upsample_depth_tensor, Augment, Batch, Sample,
};
pub use phases::{
    attach_guidance, finetune_sr, guidance_map, infer, train_enhancement, train_guidance, train_translation,
    EnhancementReport, SrPair, TranslationReport, ENHANCEMENT_COLUMNS, TRANSLATION_COLUMNS,
};
pub use pipeline::{evaluate, run_pipeline, sr_sets, unpaired_sets, PipelineArtifacts, PipelineConfig, PipelineMetrics};
pub use schedule::{lr_at, full_schedule, LrSchedule, FULL_SCHEDULES};

use crate::datagen::DEFAULT_APPLY_PROB;
use crate::{Error, Result};

pub const PHASE_SCHEMA: u32 = 1;

/// Settings of one training phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConfig {
    pub schema_version: u32,
    pub iterations: usize,
    pub batch_size: usize,
    #[serde(default)]
    pub augment: Augment,
    pub schedule: LrSchedule,
    /// Loss-weight preset name.
    pub preset: String,
    /// Generator updates per discriminator update.
    #[serde(default = "one")]
    pub ratio: usize,
    pub seed: u64,
    #[serde(default = "ten")]
    pub log_every: usize,
    /// Per-sample probability of rectangular hole augmentation.
    #[serde(default = "hole_prob")]
    pub hole_prob: f64,
}

fn one() -> usize {
    1
}

fn ten() -> usize {
    10
}

fn hole_prob() -> f64 {
    DEFAULT_APPLY_PROB
}

impl PhaseConfig {
    /// Constant-then-linear schedule over `iterations` with the given
    /// proportions, no augmentation and ratio 1.
    pub fn micro(iterations: usize, batch_size: usize, shape: LrSchedule, preset: &str, seed: u64) -> Self {
        Self {
            schema_version: PHASE_SCHEMA,
            iterations,
            batch_size,
            augment: Augment::default(),
            schedule: shape.scaled(iterations),
            preset: preset.to_string(),
            ratio: 1,
            seed,
            log_every: 10,
            hole_prob: DEFAULT_APPLY_PROB,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != PHASE_SCHEMA {
            return Err(Error::Config(format!("phase schema {} unsupported", self.schema_version)));
        }
        if self.batch_size == 0 || self.ratio == 0 || self.log_every == 0 {
            return Err(Error::Config("batch_size, ratio and log_every must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.hole_prob) {
            return Err(Error::Config(format!("hole_prob {} outside [0, 1]", self.hole_prob)));
        }
        self.schedule.validate()
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Loss components averaged over each logging window.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLog {
    pub columns: Vec<String>,
    /// `(last step of the window, lr at that step, component means)`.
    pub rows: Vec<(usize, f64, Vec<f64>)>,
    every: usize,
    acc: Vec<f64>,
    pending: usize,
}

impl TrainLog {
    pub fn new(columns: &[&str], every: usize) -> Self {
        Self {
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
            every: every.max(1),
            acc: vec![0.0; columns.len()],
            pending: 0,
        }
    }

    /// Records one iteration, failing on the first non-finite component.
    pub fn record(&mut self, step: usize, lr: f64, values: &[f64]) -> Result<()> {
        debug_assert_eq!(values.len(), self.columns.len());
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                component: self.columns[i].clone(),
                iteration: step,
            });
        }
        for (a, v) in self.acc.iter_mut().zip(values) {
            *a += v;
        }
        self.pending += 1;
        if self.pending == self.every {
            self.flush(step, lr);
        }
        Ok(())
    }

    fn flush(&mut self, step: usize, lr: f64) {
        let n = self.pending as f64;
        self.rows.push((step, lr, self.acc.iter().map(|a| a / n).collect()));
        self.acc.iter_mut().for_each(|a| *a = 0.0);
        self.pending = 0;
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.2[i]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut s = format!("step,lr,{}\n", self.columns.join(","));
        for (step, lr, v) in &self.rows {
            let vals: Vec<String> = v.iter().map(|x| x.to_string()).collect();
            s.push_str(&format!("{step},{lr},{}\n", vals.join(",")));
        }
        s
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}
