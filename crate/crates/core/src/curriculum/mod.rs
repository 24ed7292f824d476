//! Staged coarse-to-fine training: train on a coarse level, keep the top-K
//! epoch checkpoints, fine-tune one path per checkpoint on the fine level,
//! then select or combine the path winners.

mod settings;
mod split;
mod tracker;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::combine::CombineError;
use crate::data::Samples;
use crate::hierarchy::HierarchyError;
use crate::metrics::MetricsError;
use crate::network::NetworkError;

pub use crate::network::Checkpoint;
pub use settings::{
    render_paths, render_settings, run_setting, CurriculumRun, PathSummary, Setting, SettingOutcome,
    SettingReport,
};
pub use split::stratified_split;
pub use tracker::TopKTracker;
pub use trainer::{
    branch_finetune, finetune_path, log_to_csv, path_seed, path_start, train_level, EpochRecord,
    LevelRun, PathRun,
};

#[derive(Debug, Error)]
pub enum CurriculumError {
    #[error("the {0} split is empty")]
    EmptySplit(&'static str),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("class {0} has fewer than 2 samples and cannot be split")]
    ClassTooSmall(usize),
    #[error("no checkpoints to branch from")]
    EmptyTracker,
    #[error("invalid curriculum config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Hierarchy(#[from] HierarchyError),
    #[error(transparent)]
    Combine(#[from] CombineError),
}

/// Training and validation samples, labelled with fine class indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Samples,
    pub validation: Samples,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurriculumConfig {
    /// Number of coarse checkpoints kept and branched.
    pub top_k: usize,
    pub epochs_per_level: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub smoothing: f64,
    pub seed: u64,
    /// Hidden widths of the encoder.
    pub hidden: Vec<usize>,
    pub adagrad_epsilon: f64,
    /// Hierarchy level used as the coarse task; defaults to the coarsest
    /// level with more than one cluster.
    pub coarse_level: Option<usize>,
    /// Hierarchy level used as the fine task; defaults to the leaves.
    pub fine_level: Option<usize>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            top_k: 5,
            epochs_per_level: 20,
            learning_rate: 1e-3,
            batch_size: 32,
            smoothing: 0.1,
            seed: 0,
            hidden: vec![128, 64],
            adagrad_epsilon: 1e-10,
            coarse_level: None,
            fine_level: None,
        }
    }
}

impl CurriculumConfig {
    /// The larger-scale schedule: 100 epochs per level, lr 1e-4, batch 16.
    pub fn reference_setup() -> Self {
        Self {
            epochs_per_level: 100,
            learning_rate: 1e-4,
            batch_size: 16,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), CurriculumError> {
        let bad = |m: &str| Err(CurriculumError::InvalidConfig(m.to_string()));
        if self.top_k == 0 {
            return bad("top_k must be at least 1");
        }
        if self.epochs_per_level == 0 {
            return bad("epochs_per_level must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.smoothing) {
            return bad("smoothing must lie in [0, 1)");
        }
        if self.adagrad_epsilon.is_nan() || self.adagrad_epsilon <= 0.0 {
            return bad("adagrad_epsilon must be positive");
        }
        if self.hidden.contains(&0) {
            return bad("hidden widths must be positive");
        }
        Ok(())
    }
}
