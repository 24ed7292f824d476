use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::PipelineError;
use crate::combine::CombineConfig;
use crate::curriculum::CurriculumConfig;
use crate::data::{GeneratorConfig, SampleCounts};
use crate::hierarchy::ClusterMethod;
use crate::rng;

/// How the class-distance matrix for clustering is obtained from the
/// baseline model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HierarchyMethod {
    /// Cosine distance between predictor weight columns.
    Weights,
    /// Distance from the symmetrised soft confusion on the validation split.
    Confusion,
}

impl HierarchyMethod {
    pub fn name(self) -> &'static str {
        match self {
            HierarchyMethod::Weights => "weights",
            HierarchyMethod::Confusion => "confusion",
        }
    }
}

impl std::fmt::Display for HierarchyMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DataConfig {
    pub train: GeneratorConfig,
    pub test: GeneratorConfig,
    /// Share of each training class held out for validation.
    pub validation_fraction: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            train: GeneratorConfig::default(),
            test: GeneratorConfig {
                counts: SampleCounts::PerClass(76),
                ..GeneratorConfig::default()
            },
            validation_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HierarchyConfig {
    /// Hierarchies to build; the pipeline runs the curriculum once per entry.
    pub methods: Vec<HierarchyMethod>,
    pub cluster: ClusterMethod,
}

impl Default for HierarchyConfig {
    fn default() -> Self {
        Self {
            methods: vec![HierarchyMethod::Weights, HierarchyMethod::Confusion],
            cluster: ClusterMethod::Affinity,
        }
    }
}

/// Everything a run needs. Sub-seeds are always derived from `seed`; the
/// snapshot written to the run directory shows the derived values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data: DataConfig,
    pub curriculum: CurriculumConfig,
    pub combine: CombineConfig,
    pub hierarchy: HierarchyConfig,
    /// Use the long schedule (100 epochs, lr 1e-4, batch 16) and search
    /// subsets of size 2 and up only.
    pub reference_setup: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            output_dir: PathBuf::from("runs/default"),
            data: DataConfig::default(),
            curriculum: CurriculumConfig::default(),
            combine: CombineConfig::default(),
            hierarchy: HierarchyConfig::default(),
            reference_setup: false,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes") + "\n"
    }

    pub fn split_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "split", 0)
    }

    pub fn baseline_seed(&self) -> u64 {
        rng::derive_seed(self.seed, "baseline", 0)
    }

    /// Applies seed derivation and the reference-setup switch, then validates.
    pub fn resolved(&self) -> Result<Self, PipelineError> {
        let mut c = self.clone();
        c.data.train.seed = rng::derive_seed(c.seed, "data-train", 0);
        c.data.test.seed = rng::derive_seed(c.seed, "data-test", 0);
        c.curriculum.seed = rng::derive_seed(c.seed, "curriculum", 0);
        if c.reference_setup {
            let p = CurriculumConfig::reference_setup();
            c.curriculum.epochs_per_level = p.epochs_per_level;
            c.curriculum.learning_rate = p.learning_rate;
            c.curriculum.batch_size = p.batch_size;
            c.combine.include_singletons = false;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        for g in [&self.data.train, &self.data.test] {
            g.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        }
        if (self.data.train.height, self.data.train.width) != (self.data.test.height, self.data.test.width) {
            return bad("train and test rasters must have the same size".into());
        }
        if !(self.data.validation_fraction > 0.0 && self.data.validation_fraction < 1.0) {
            return bad(format!(
                "validation_fraction {} outside (0, 1)",
                self.data.validation_fraction
            ));
        }
        self.curriculum
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.hierarchy.methods.is_empty() {
            return bad("at least one hierarchy method is required".into());
        }
        if self.combine.max_size == Some(0) {
            return bad("combine.max_size must be at least 1".into());
        }
        if !self.combine.include_singletons && self.curriculum.top_k < 2 {
            return bad("searching without singletons needs top_k of at least 2".into());
        }
        Ok(())
    }
}
