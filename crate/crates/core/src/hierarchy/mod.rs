//! Coarse-to-fine class hierarchies.
//!
//! A hierarchy is built by affinity clustering over a class distance matrix,
//! where the distances come either from the predictor columns of a trained
//! classifier ([`cosine_distance_matrix`]) or from its soft confusion matrix
//! ([`soft_confusion`] followed by [`confusion_to_distance`]). The result is
//! cut into one partition of the classes per level, coarsest first.

mod affinity;
mod distance;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use affinity::{affinity_cluster, agglomerative_cluster, cluster_with, ClusterMethod};
pub use distance::{
    confusion_to_distance, cosine_distance_matrix, soft_confusion, soft_confusion_from_probs,
    DistanceMatrix, SoftConfusion,
};

#[derive(Debug, Error)]
pub enum HierarchyError {
    #[error("predictor column {0} has zero norm; cosine distance is undefined")]
    ZeroColumn(usize),
    #[error("symmetric confusion has no off-diagonal mass; classes are perfectly separated")]
    NoConfusion,
    #[error("level {level} out of range ({levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },
    #[error("invalid distance matrix: {0}")]
    InvalidDistance(String),
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),
    #[error("no level is strictly coarser than the singleton level")]
    NoCoarseLevel,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },
    #[error(transparent)]
    Network(#[from] crate::network::NetworkError),
    #[error("hierarchy file: {0}")]
    Io(#[from] std::io::Error),
    #[error("hierarchy file: {0}")]
    Json(#[from] serde_json::Error),
}

/// One link accepted while building the hierarchy: clusters `left` and
/// `right` end up in cluster `merged` after round `round`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub merged: usize,
    pub round: usize,
}

/// A partition of the class indices.
pub type Partition = Vec<Vec<usize>>;

/// Merge tree plus clusters-per-level, coarsest level first and the singleton
/// level last.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassHierarchy {
    num_classes: usize,
    merges: Vec<Merge>,
    levels: Vec<Partition>,
}

fn canonical(mut partition: Partition) -> Partition {
    for cluster in &mut partition {
        cluster.sort_unstable();
    }
    partition.sort_by_key(|c| c.first().copied().unwrap_or(usize::MAX));
    partition
}

impl ClassHierarchy {
    /// Validates the level structure: every level is a partition of
    /// `0..num_classes`, each refines its predecessor and the last one is all
    /// singletons.
    pub fn new(
        num_classes: usize,
        merges: Vec<Merge>,
        levels: Vec<Partition>,
    ) -> Result<Self, HierarchyError> {
        let invalid = |m: String| Err(HierarchyError::InvalidHierarchy(m));
        if num_classes == 0 {
            return invalid("no classes".into());
        }
        let levels: Vec<Partition> = levels.into_iter().map(canonical).collect();
        let Some(last) = levels.last() else {
            return invalid("no levels".into());
        };
        if last.len() != num_classes {
            return invalid("final level is not all singletons".into());
        }
        let mut previous_owner: Option<Vec<usize>> = None;
        for (l, level) in levels.iter().enumerate() {
            let mut owner = vec![usize::MAX; num_classes];
            for (ci, cluster) in level.iter().enumerate() {
                if cluster.is_empty() {
                    return invalid(format!("level {l} has an empty cluster"));
                }
                for &class in cluster {
                    if class >= num_classes {
                        return invalid(format!("level {l} names class {class}"));
                    }
                    if owner[class] != usize::MAX {
                        return invalid(format!("class {class} appears twice in level {l}"));
                    }
                    owner[class] = ci;
                }
            }
            if let Some(missing) = owner.iter().position(|&o| o == usize::MAX) {
                return invalid(format!("class {missing} missing from level {l}"));
            }
            if let Some(prev) = &previous_owner {
                for cluster in level {
                    if cluster.iter().any(|&c| prev[c] != prev[cluster[0]]) {
                        return invalid(format!("level {l} does not refine level {}", l - 1));
                    }
                }
            }
            previous_owner = Some(owner);
        }
        Ok(Self {
            num_classes,
            merges,
            levels,
        })
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn levels(&self) -> &[Partition] {
        &self.levels
    }

    /// Clusters at `level`, sorted by their smallest class index, members
    /// ascending.
    pub fn clusters_at_level(&self, level: usize) -> Result<&Partition, HierarchyError> {
        self.levels.get(level).ok_or(HierarchyError::LevelOutOfRange {
            level,
            levels: self.levels.len(),
        })
    }

    /// Class index → cluster index at `level`.
    pub fn coarse_label_map(&self, level: usize) -> Result<Vec<usize>, HierarchyError> {
        let clusters = self.clusters_at_level(level)?;
        let mut map = vec![0; self.num_classes];
        for (ci, cluster) in clusters.iter().enumerate() {
            for &class in cluster {
                map[class] = ci;
            }
        }
        Ok(map)
    }

    /// The default (coarse, fine) level pair: the level with the fewest
    /// clusters above one, and the singleton level.
    pub fn default_level_pair(&self) -> Result<(usize, usize), HierarchyError> {
        let fine = self.levels.len() - 1;
        self.levels
            .iter()
            .enumerate()
            .filter(|(_, p)| p.len() > 1 && p.len() < self.num_classes)
            .min_by_key(|(_, p)| p.len())
            .map(|(l, _)| (l, fine))
            .ok_or(HierarchyError::NoCoarseLevel)
    }

    /// Multi-line text rendering of the partitions, one line per level.
    pub fn render(&self, class_names: &[String]) -> String {
        let name = |c: usize| {
            class_names
                .get(c)
                .cloned()
                .unwrap_or_else(|| c.to_string())
        };
        let mut out = String::new();
        for (l, level) in self.levels.iter().enumerate() {
            let clusters: Vec<String> = level
                .iter()
                .map(|c| format!("{{{}}}", c.iter().map(|&i| name(i)).collect::<Vec<_>>().join(", ")))
                .collect();
            out.push_str(&format!(
                "level {l} ({} clusters): {}\n",
                level.len(),
                clusters.join(" ")
            ));
        }
        out
    }
}

/// JSON form of a hierarchy.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyFile {
    pub num_classes: usize,
    pub class_names: Vec<String>,
    pub levels: Vec<Partition>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub merges: Vec<Merge>,
}

impl HierarchyFile {
    pub fn new(h: &ClassHierarchy, class_names: &[String]) -> Self {
        Self {
            num_classes: h.num_classes,
            class_names: class_names.to_vec(),
            levels: h.levels.clone(),
            merges: h.merges.clone(),
        }
    }

    pub fn into_hierarchy(self) -> Result<(ClassHierarchy, Vec<String>), HierarchyError> {
        if !self.class_names.is_empty() && self.class_names.len() != self.num_classes {
            return Err(HierarchyError::InvalidHierarchy(format!(
                "{} class names for {} classes",
                self.class_names.len(),
                self.num_classes
            )));
        }
        let h = ClassHierarchy::new(self.num_classes, self.merges, self.levels)?;
        Ok((h, self.class_names))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("hierarchy serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), HierarchyError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, HierarchyError> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}
