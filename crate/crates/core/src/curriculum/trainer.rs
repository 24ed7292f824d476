use ndarray::Axis;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{CurriculumConfig, CurriculumError, Splits, TopKTracker};
use crate::data::Samples;
use crate::metrics;
use crate::network::{
    self, adagrad_step, argmax_rows, smoothed_ce_loss, Checkpoint, ModelParams, OptimizerState,
};
use crate::rng;

/// One row of a training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: u32,
    pub split: String,
    pub loss: f64,
    pub macro_f1: f64,
}

/// Renders records as `epoch,split,loss,macro_f1` CSV.
pub fn log_to_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,split,loss,macro_f1\n");
    for r in log {
        out.push_str(&format!("{},{},{:.6},{:.6}\n", r.epoch, r.split, r.loss, r.macro_f1));
    }
    out
}

/// Result of training one curriculum level.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelRun {
    pub tracker: TopKTracker,
    pub log: Vec<EpochRecord>,
}

/// Best checkpoint of one fine-tuning path plus its log.
#[derive(Debug, Clone, PartialEq)]
pub struct PathRun {
    pub best: Checkpoint,
    pub log: Vec<EpochRecord>,
}

fn map_labels(samples: &Samples, level_map: &[usize]) -> Result<Vec<usize>, CurriculumError> {
    samples
        .labels
        .iter()
        .map(|&y| {
            level_map.get(y).copied().ok_or_else(|| {
                CurriculumError::ShapeMismatch(format!(
                    "label {y} not covered by a level map of {} classes",
                    level_map.len()
                ))
            })
        })
        .collect()
}

fn check_shapes(
    model: &ModelParams,
    splits: &Splits,
    level_map: &[usize],
) -> Result<usize, CurriculumError> {
    if splits.train.is_empty() {
        return Err(CurriculumError::EmptySplit("train"));
    }
    if splits.validation.is_empty() {
        return Err(CurriculumError::EmptySplit("validation"));
    }
    let k = level_map.iter().max().map_or(0, |&m| m + 1);
    if k != model.k_out() {
        return Err(CurriculumError::ShapeMismatch(format!(
            "level map has {k} targets, model predicts {}",
            model.k_out()
        )));
    }
    for s in [&splits.train, &splits.validation] {
        if s.features.ncols() != model.input_dim() {
            return Err(CurriculumError::ShapeMismatch(format!(
                "samples have {} features, model expects {}",
                s.features.ncols(),
                model.input_dim()
            )));
        }
    }
    Ok(k)
}

/// Trains `model` for `config.epochs_per_level` epochs and feeds every
/// epoch-end checkpoint to a tracker of the given capacity.
fn train_epochs(
    mut model: ModelParams,
    splits: &Splits,
    level_map: &[usize],
    level: u32,
    config: &CurriculumConfig,
    shuffle_seed: u64,
    capacity: usize,
) -> Result<LevelRun, CurriculumError> {
    config.validate()?;
    let k = check_shapes(&model, splits, level_map)?;
    let train_y = map_labels(&splits.train, level_map)?;
    let val_y = map_labels(&splits.validation, level_map)?;
    let mut state = OptimizerState::new(&model, config.learning_rate, config.adagrad_epsilon);
    let mut tracker = TopKTracker::new(capacity);
    let mut log = Vec::with_capacity(2 * config.epochs_per_level);
    let n = splits.train.len();

    for epoch in 1..=config.epochs_per_level as u32 {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(shuffle_seed, "shuffle", u64::from(epoch)));
        let mut loss_sum = 0.0;
        let mut seen_pred = Vec::with_capacity(n);
        let mut seen_true = Vec::with_capacity(n);
        for chunk in order.chunks(config.batch_size) {
            let xb = splits.train.features.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| train_y[i]).collect();
            let mut preds = Vec::new();
            let (loss, grad) = network::loss_and_gradient(&model, &xb, |z| {
                preds = argmax_rows(z);
                smoothed_ce_loss(z, &yb, config.smoothing)
            })?;
            adagrad_step(&mut model, &grad, &mut state)?;
            if !model.is_finite() {
                return Err(network::NetworkError::NonFinite(format!(
                    "parameters diverged at level {level}, epoch {epoch}"
                ))
                .into());
            }
            loss_sum += loss * chunk.len() as f64;
            seen_pred.extend(preds);
            seen_true.extend(yb);
        }
        log.push(EpochRecord {
            epoch,
            split: "train".into(),
            loss: loss_sum / n as f64,
            macro_f1: metrics::macro_f1(&seen_pred, &seen_true, k)?,
        });

        // Score the snapshot exactly as it will be stored.
        let mut snapshot = Checkpoint::capture(&model, level, epoch, 0.0);
        let logits = network::forward(&snapshot.params, &splits.validation.features)?;
        let (val_loss, _) = smoothed_ce_loss(&logits, &val_y, config.smoothing);
        snapshot.val_f1 = metrics::macro_f1(&argmax_rows(&logits), &val_y, k)?;
        log.push(EpochRecord {
            epoch,
            split: "validation".into(),
            loss: val_loss,
            macro_f1: snapshot.val_f1,
        });
        tracker.offer(snapshot);
    }
    Ok(LevelRun { tracker, log })
}

/// Trains one curriculum level and returns the top-`config.top_k` tracker.
/// Checkpoints are tagged with `level`.
pub fn train_level(
    model: ModelParams,
    splits: &Splits,
    level_map: &[usize],
    level: u32,
    config: &CurriculumConfig,
) -> Result<LevelRun, CurriculumError> {
    let seed = rng::derive_seed(config.seed, "level", u64::from(level));
    train_epochs(model, splits, level_map, level, config, seed, config.top_k)
}

/// Seed owned by fine-tuning path `path`.
pub fn path_seed(config: &CurriculumConfig, path: usize) -> u64 {
    rng::derive_seed(config.seed, "path", path as u64)
}

/// The parent's encoder with a freshly initialised predictor for `k_fine`
/// outputs, as used at the start of path `path`.
pub fn path_start(
    parent: &Checkpoint,
    k_fine: usize,
    config: &CurriculumConfig,
    path: usize,
) -> Result<ModelParams, CurriculumError> {
    let seed = rng::derive_seed(path_seed(config, path), "predictor", 0);
    Ok(network::reinit_predictor(&parent.params, k_fine, seed)?)
}

/// Fine-tunes one path from `parent`.
pub fn finetune_path(
    parent: &Checkpoint,
    path: usize,
    splits: &Splits,
    fine_level_map: &[usize],
    level: u32,
    config: &CurriculumConfig,
) -> Result<PathRun, CurriculumError> {
    let k_fine = fine_level_map.iter().max().map_or(0, |&m| m + 1);
    let start = path_start(parent, k_fine, config, path)?;
    let seed = path_seed(config, path);
    let run = train_epochs(start, splits, fine_level_map, level, config, seed, 1)?;
    let best = run
        .tracker
        .into_entries()
        .into_iter()
        .next()
        .expect("at least one epoch ran")
        .with_lineage(path as u32);
    Ok(PathRun { best, log: run.log })
}

/// One fine-tuning path per tracked checkpoint, run concurrently; output
/// order follows tracker order.
pub fn branch_finetune(
    tracker: &TopKTracker,
    splits: &Splits,
    fine_level_map: &[usize],
    level: u32,
    config: &CurriculumConfig,
) -> Result<Vec<PathRun>, CurriculumError> {
    branch_paths(tracker.entries(), splits, fine_level_map, level, config)
}

pub(crate) fn branch_paths(
    parents: &[Checkpoint],
    splits: &Splits,
    fine_level_map: &[usize],
    level: u32,
    config: &CurriculumConfig,
) -> Result<Vec<PathRun>, CurriculumError> {
    if parents.is_empty() {
        return Err(CurriculumError::EmptyTracker);
    }
    parents
        .par_iter()
        .enumerate()
        .map(|(i, parent)| finetune_path(parent, i, splits, fine_level_map, level, config))
        .collect()
}
