//! Run orchestration: data generation, the clustering baseline, hierarchy
//! construction, the curriculum, combination search and reports, all inside
//! one run directory. Stages are keyed by a hash of their inputs so a rerun
//! in the same directory skips work that is already on disk.

mod commands;
mod config;
mod report;
mod workspace;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::combine::CombineError;
use crate::curriculum::CurriculumError;
use crate::data::DataError;
use crate::hierarchy::HierarchyError;
use crate::metrics::MetricsError;
use crate::network::NetworkError;

pub use commands::{
    cmd_cluster, cmd_combine, cmd_evaluate, cmd_generate_data, cmd_pipeline, cmd_report,
    cmd_train_curriculum, ClusterOutput, CombineCommand, CombineOutput, DataSummary,
};
pub use config::{DataConfig, HierarchyConfig, HierarchyMethod, RunConfig};
pub use report::{BaselineReport, MethodReport, Summary};
pub use workspace::{BaselineStage, DataStage, Workspace};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("missing input: {0}")]
    MissingInput(String),
    #[error("{0}; the confusion method needs a baseline that makes mistakes on the validation split, try --method weights or a harder dataset")]
    NoConfusion(HierarchyError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Hierarchy(HierarchyError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Combine(#[from] CombineError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("malformed run file {path}: {message}")]
    Malformed { path: PathBuf, message: String },
}

impl From<HierarchyError> for PipelineError {
    fn from(e: HierarchyError) -> Self {
        match e {
            HierarchyError::NoConfusion => PipelineError::NoConfusion(e),
            e => PipelineError::Hierarchy(e),
        }
    }
}

/// Broad failure classes, each with its own process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Numeric,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Data => 3,
            ErrorKind::Numeric => 4,
        }
    }
}

fn network_kind(e: &NetworkError) -> ErrorKind {
    match e {
        NetworkError::NonFinite(_) => ErrorKind::Numeric,
        NetworkError::ShapeMismatch(_) | NetworkError::InvalidArch(_) => ErrorKind::Config,
        _ => ErrorKind::Data,
    }
}

fn hierarchy_kind(e: &HierarchyError) -> ErrorKind {
    match e {
        HierarchyError::ZeroColumn(_)
        | HierarchyError::NoConfusion
        | HierarchyError::InvalidDistance(_) => ErrorKind::Numeric,
        HierarchyError::LevelOutOfRange { .. } | HierarchyError::NoCoarseLevel => ErrorKind::Config,
        HierarchyError::Network(n) => network_kind(n),
        _ => ErrorKind::Data,
    }
}

fn combine_kind(e: &CombineError) -> ErrorKind {
    match e {
        CombineError::PoolTooLarge(_) | CombineError::InvalidSizeRange { .. } => ErrorKind::Config,
        CombineError::Network(n) => network_kind(n),
        _ => ErrorKind::Data,
    }
}

impl PipelineError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            PipelineError::Config(_) => ErrorKind::Config,
            PipelineError::Io { .. }
            | PipelineError::MissingInput(_)
            | PipelineError::Data(_)
            | PipelineError::Malformed { .. } => ErrorKind::Data,
            PipelineError::NoConfusion(_) | PipelineError::Metrics(_) => ErrorKind::Numeric,
            PipelineError::Network(e) => network_kind(e),
            PipelineError::Hierarchy(e) => hierarchy_kind(e),
            PipelineError::Combine(e) => combine_kind(e),
            PipelineError::Curriculum(e) => match e {
                CurriculumError::InvalidConfig(_) | CurriculumError::ShapeMismatch(_) => ErrorKind::Config,
                CurriculumError::Network(n) => network_kind(n),
                CurriculumError::Hierarchy(h) => hierarchy_kind(h),
                CurriculumError::Combine(c) => combine_kind(c),
                CurriculumError::Metrics(_) => ErrorKind::Numeric,
                _ => ErrorKind::Data,
            },
        }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind().exit_code()
    }
}
