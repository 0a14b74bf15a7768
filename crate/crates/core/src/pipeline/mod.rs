//! Training orchestration: teacher training on dense clean sensors, student
//! initialization and distillation on sparse noisy sensors, and evaluation
//! with ablation masking.

mod dataset;
mod eval;
mod schedule;
mod train;

pub use dataset::{
    build_window_set, simulate_sequence_streams, windows_from_streams, DatasetConfig,
    SequenceStreams, TrainingWindow, WindowSet,
};
pub use eval::{evaluate, evaluate_ground_truth, EvalMode};
pub use schedule::lambda_at_epoch;
pub use train::{
    init_student_from_teacher, train_student, train_teacher, TrainOutcome, TrainRecord,
};

use crate::error::{Error, Result};
use crate::synth::SiteId;
use serde::{Deserialize, Serialize};

/// Training hyperparameters. Defaults are desk-scale; `paper_scale` restores
/// the full-size schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Window length in frames.
    pub window: usize,
    pub batch_size: usize,
    pub epochs: usize,
    pub lr_teacher: f64,
    /// Student IMU encoder learning rate.
    pub lr_student_encoder: f64,
    /// Learning rate for all other student parameters.
    pub lr_student_rest: f64,
    pub lambda_motion: f64,
    pub lambda_output: f64,
    pub lambda_feat: f64,
    /// Multiplicative decay applied to the distillation lambdas.
    pub lambda_decay: f64,
    /// Epochs between decay steps.
    pub lambda_decay_every: usize,
    /// Recurrent hidden size per direction.
    pub hidden_size: usize,
    /// Visual adapter width per view.
    pub visual_adapter_dim: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            window: 50,
            batch_size: 32,
            epochs: 50,
            lr_teacher: 1e-3,
            lr_student_encoder: 1e-3,
            lr_student_rest: 1e-4,
            lambda_motion: 1.0,
            lambda_output: 0.5,
            lambda_feat: 0.5,
            lambda_decay: 0.8,
            lambda_decay_every: 10,
            hidden_size: 128,
            visual_adapter_dim: 64,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// The full-scale schedule: batch 256, 500 epochs.
    pub fn paper_scale() -> TrainConfig {
        TrainConfig {
            batch_size: 256,
            epochs: 500,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.window < 1 {
            return Err(Error::Config("window must be >= 1".to_string()));
        }
        for (name, lr) in [
            ("lr_teacher", self.lr_teacher),
            ("lr_student_encoder", self.lr_student_encoder),
            ("lr_student_rest", self.lr_student_rest),
        ] {
            if !(lr > 0.0) {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        for (name, l) in [
            ("lambda_motion", self.lambda_motion),
            ("lambda_output", self.lambda_output),
            ("lambda_feat", self.lambda_feat),
            ("lambda_decay", self.lambda_decay),
        ] {
            if !(l >= 0.0) {
                return Err(Error::Config(format!("{name} must be >= 0")));
            }
        }
        if self.batch_size < 1 || self.epochs < 1 || self.lambda_decay_every < 1 {
            return Err(Error::Config(
                "batch_size, epochs, lambda_decay_every must be >= 1".to_string(),
            ));
        }
        Ok(())
    }
}

/// Which sites feed the teacher (dense) and the student (sparse).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorSelection {
    pub teacher: Vec<SiteId>,
    pub student: Vec<SiteId>,
}

impl Default for SensorSelection {
    fn default() -> Self {
        SensorSelection {
            teacher: SiteId::ALL.to_vec(),
            student: vec![SiteId::Head, SiteId::RightWrist, SiteId::RightHip],
        }
    }
}

impl SensorSelection {
    pub fn validate(&self) -> Result<()> {
        if self.teacher.len() != 5 {
            return Err(Error::Config(
                "teacher selection must list all 5 sites".to_string(),
            ));
        }
        if self.student.len() != 3 {
            return Err(Error::Config(
                "student selection must list 3 sites".to_string(),
            ));
        }
        let region = |s: &SiteId| match s {
            SiteId::Head => 0,
            SiteId::LeftWrist | SiteId::RightWrist => 1,
            SiteId::LeftHip | SiteId::RightHip => 2,
        };
        let mut regions: Vec<i32> = self.student.iter().map(region).collect();
        regions.sort_unstable();
        if regions != vec![0, 1, 2] {
            return Err(Error::Config(
                "student selection must be head, one wrist, one hip".to_string(),
            ));
        }
        if self.student.iter().any(|s| !self.teacher.contains(s)) {
            return Err(Error::Config(
                "student sites must be a subset of teacher sites".to_string(),
            ));
        }
        Ok(())
    }
}
