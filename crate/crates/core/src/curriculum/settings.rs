use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{
    trainer::branch_paths, train_level, CurriculumConfig, CurriculumError, LevelRun, PathRun, Splits,
};
use crate::combine::{
    combinatorial_search, greedy_soup, CombinationResult, CombineConfig, CombineMethod, IngredientPool,
    SearchOutcome,
};
use crate::data::Samples;
use crate::hierarchy::ClassHierarchy;
use crate::metrics::{self, EvalReport};
use crate::network::{self, ModelParams};
use crate::rng;

/// A: fine-tune only the best coarse checkpoint. B: branch every tracked
/// checkpoint and keep the best path. C: branch and search combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Setting {
    A,
    B,
    C,
}

impl Setting {
    pub const ALL: [Setting; 3] = [Setting::A, Setting::B, Setting::C];
}

impl std::fmt::Display for Setting {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

/// One row of the per-path table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathSummary {
    pub path: usize,
    pub l1_epoch: u32,
    pub l1_val_f1: f64,
    pub l2_epoch: u32,
    pub l2_val_f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SettingReport {
    pub setting: Setting,
    /// Coarse-level validation F1 of the chosen lineage; absent for
    /// combinations.
    pub l1_val_f1: Option<f64>,
    pub l2_val_f1: f64,
    /// The chosen path(s) and, for combinations, how they were combined.
    pub selection: CombinationResult,
    pub test: EvalReport,
}

/// Everything a setting produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SettingOutcome {
    pub report: SettingReport,
    pub search: Option<SearchOutcome>,
    pub greedy: Option<CombinationResult>,
}

/// A coarse level plus its fine-tuning paths; all three settings are read off
/// one run.
#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumRun {
    pub coarse_level: usize,
    pub fine_level: usize,
    pub coarse_map: Vec<usize>,
    pub fine_map: Vec<usize>,
    pub level1: LevelRun,
    pub paths: Vec<PathRun>,
}

fn num_targets(map: &[usize]) -> usize {
    map.iter().max().map_or(0, |&m| m + 1)
}

/// The level pair requested by `config`, or the hierarchy default.
pub(crate) fn level_pair(
    hierarchy: &ClassHierarchy,
    config: &CurriculumConfig,
) -> Result<(usize, usize), CurriculumError> {
    let (dc, df) = hierarchy.default_level_pair()?;
    let (coarse, fine) = (config.coarse_level.unwrap_or(dc), config.fine_level.unwrap_or(df));
    if coarse >= fine {
        return Err(CurriculumError::InvalidConfig(format!(
            "coarse level {coarse} must come before fine level {fine}"
        )));
    }
    hierarchy.clusters_at_level(fine)?;
    Ok((coarse, fine))
}

impl CurriculumRun {
    /// Trains the coarse level and fine-tunes the first `max_paths` tracked
    /// checkpoints (all of them when `None`).
    pub fn execute(
        splits: &Splits,
        hierarchy: &ClassHierarchy,
        config: &CurriculumConfig,
        max_paths: Option<usize>,
    ) -> Result<Self, CurriculumError> {
        config.validate()?;
        let (coarse_level, fine_level) = level_pair(hierarchy, config)?;
        let coarse_map = hierarchy.coarse_label_map(coarse_level)?;
        let fine_map = hierarchy.coarse_label_map(fine_level)?;
        let mut arch = vec![splits.train.features.ncols()];
        arch.extend(&config.hidden);
        arch.push(num_targets(&coarse_map));
        let model = ModelParams::init(&arch, rng::derive_seed(config.seed, "init", 1))?;
        let level1 = train_level(model, splits, &coarse_map, 1, config)?;
        let parents = level1.tracker.entries();
        let take = max_paths.unwrap_or(parents.len()).min(parents.len());
        let paths = branch_paths(&parents[..take], splits, &fine_map, 2, config)?;
        Ok(Self {
            coarse_level,
            fine_level,
            coarse_map,
            fine_map,
            level1,
            paths,
        })
    }

    pub fn path_summaries(&self) -> Vec<PathSummary> {
        self.paths
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let parent = &self.level1.tracker.entries()[i];
                PathSummary {
                    path: i,
                    l1_epoch: parent.epoch,
                    l1_val_f1: parent.val_f1,
                    l2_epoch: p.best.epoch,
                    l2_val_f1: p.best.val_f1,
                }
            })
            .collect()
    }

    /// Index of the best path: highest fine F1, lower index on ties.
    pub fn best_path(&self) -> usize {
        let mut best = 0;
        for (i, p) in self.paths.iter().enumerate() {
            if p.best.val_f1 > self.paths[best].best.val_f1 {
                best = i;
            }
        }
        best
    }

    /// Whether the best fine checkpoint descends from the best coarse one.
    pub fn best_l2_from_best_l1(&self) -> bool {
        self.best_path() == 0
    }

    pub fn pool(&self) -> Result<IngredientPool, CurriculumError> {
        Ok(IngredientPool::new(
            self.paths.iter().map(|p| p.best.clone()).collect(),
        )?)
    }

    fn fine_samples(&self, s: &Samples) -> Samples {
        s.relabeled(&self.fine_map, num_targets(&self.fine_map))
    }

    fn test_report(&self, params: &ModelParams, test: &Samples) -> Result<EvalReport, CurriculumError> {
        let t = self.fine_samples(test);
        let preds = network::predict(params, &t.features)?;
        Ok(metrics::evaluate(&preds, &t.labels, t.num_classes)?)
    }

    /// Reads one setting off the run and scores its selection on `test`.
    pub fn outcome(
        &self,
        setting: Setting,
        splits: &Splits,
        test: &Samples,
        combine: &CombineConfig,
    ) -> Result<SettingOutcome, CurriculumError> {
        let parents = self.level1.tracker.entries();
        let single = |path: usize| -> Result<SettingOutcome, CurriculumError> {
            let best = &self.paths[path].best;
            Ok(SettingOutcome {
                report: SettingReport {
                    setting,
                    l1_val_f1: Some(parents[path].val_f1),
                    l2_val_f1: best.val_f1,
                    selection: CombinationResult {
                        subset: vec![path],
                        method: CombineMethod::Ensemble,
                        val_f1: best.val_f1,
                    },
                    test: self.test_report(&best.params, test)?,
                },
                search: None,
                greedy: None,
            })
        };
        match setting {
            Setting::A => single(0),
            Setting::B => single(self.best_path()),
            Setting::C => {
                let pool = self.pool()?;
                let val = self.fine_samples(&splits.validation);
                let search =
                    combinatorial_search(&pool, &val, &combine.methods, combine.size_range(pool.len()))?;
                let greedy = greedy_soup(&pool, &val, combine.greedy_allow_repeats)?;
                let t = self.fine_samples(test);
                let preds = search.winner.predict(&pool, &t.features)?;
                let report = SettingReport {
                    setting,
                    l1_val_f1: None,
                    l2_val_f1: search.winner.val_f1,
                    selection: search.winner.clone(),
                    test: metrics::evaluate(&preds, &t.labels, t.num_classes)?,
                };
                Ok(SettingOutcome {
                    report,
                    search: Some(search),
                    greedy: Some(greedy),
                })
            }
        }
    }
}

/// Runs the curriculum and reports one setting. Setting A trains a single
/// path; B and C branch every tracked checkpoint.
pub fn run_setting(
    setting: Setting,
    splits: &Splits,
    test: &Samples,
    hierarchy: &ClassHierarchy,
    config: &CurriculumConfig,
    combine: &CombineConfig,
) -> Result<SettingReport, CurriculumError> {
    let max_paths = (setting == Setting::A).then_some(1);
    let run = CurriculumRun::execute(splits, hierarchy, config, max_paths)?;
    Ok(run.outcome(setting, splits, test, combine)?.report)
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

/// Per-path table: coarse score of each branch point and the best fine score
/// reached from it.
pub fn render_paths(rows: &[PathSummary]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} | {:>8} | {:>12} | {:>8} | {:>16}",
        "Path", "L1 epoch", "Score at L1", "L2 epoch", "Max score at L2"
    );
    let _ = writeln!(out, "{}", "-".repeat(62));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} | {:>8} | {:>12.4} | {:>8} | {:>16.4}",
            r.path + 1,
            r.l1_epoch,
            100.0 * r.l1_val_f1,
            r.l2_epoch,
            100.0 * r.l2_val_f1
        );
    }
    out
}

/// Setting comparison: L1 Val, L2 Val, Recall, Precision, F1.
pub fn render_settings(rows: &[SettingReport]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<9} | {:>6} | {:>6} | {:>8} | {:>9} | {:>8}",
        "Setting", "L1 Val", "L2 Val", "Recall", "Precision", "F1-score"
    );
    let _ = writeln!(out, "{}", "-".repeat(61));
    for r in rows {
        let _ = writeln!(
            out,
            "{:<9} | {:>6} | {:>6} | {:>8} | {:>9} | {:>8}",
            r.setting.to_string(),
            r.l1_val_f1.map_or_else(|| "N/A".to_string(), pct),
            pct(r.l2_val_f1),
            pct(r.test.macro_recall),
            pct(r.test.macro_precision),
            pct(r.test.macro_f1)
        );
    }
    out
}
