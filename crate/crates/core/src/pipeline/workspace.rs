use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{HierarchyMethod, PipelineError, RunConfig};
use crate::curriculum::{
    log_to_csv, stratified_split, train_level, Checkpoint, CurriculumConfig, CurriculumRun, LevelRun,
    PathRun, Splits, TopKTracker,
};
use crate::data::{generate, Dataset, Samples};
use crate::hierarchy::{
    cluster_with, confusion_to_distance, cosine_distance_matrix, soft_confusion, ClassHierarchy,
    HierarchyFile,
};
use crate::network::ModelParams;
use crate::rng;

const STAGES_FILE: &str = "stages.json";

/// Content hash over a list of stage inputs.
fn stage_hash(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string(v).expect("stage inputs serialize")
}

/// Generated (or reloaded) datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct DataStage {
    pub train: Dataset,
    pub test: Dataset,
    pub hash: String,
}

/// Train/validation split and test samples of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineStage {
    pub splits: Splits,
    pub test: Samples,
    pub class_names: Vec<String>,
    /// Best epoch of the all-class baseline.
    pub checkpoint: Checkpoint,
    pub hash: String,
}

/// A run directory plus the resolved config that owns it.
#[derive(Debug)]
pub struct Workspace {
    pub config: RunConfig,
    pub dir: PathBuf,
    stages: BTreeMap<String, String>,
    verbose: bool,
}

impl Workspace {
    /// Resolves `config`, creates its output directory and writes the config
    /// snapshot before anything else runs.
    pub fn create(config: &RunConfig, verbose: bool) -> Result<Self, PipelineError> {
        let config = config.resolved()?;
        let dir = config.output_dir.clone();
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        let ws = Self {
            stages: Self::read_stages(&dir)?,
            dir,
            config,
            verbose,
        };
        ws.write("config.json", ws.config.to_json().as_bytes())?;
        Ok(ws)
    }

    fn read_stages(dir: &Path) -> Result<BTreeMap<String, String>, PipelineError> {
        let path = dir.join(STAGES_FILE);
        match std::fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text).map_err(|e| PipelineError::Malformed {
                path,
                message: e.to_string(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(BTreeMap::new()),
            Err(e) => Err(PipelineError::io(&path, e)),
        }
    }

    pub(crate) fn note(&self, msg: &str) {
        if self.verbose {
            eprintln!("{msg}");
        }
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    pub(crate) fn write(&self, rel: &str, bytes: &[u8]) -> Result<(), PipelineError> {
        let path = self.path(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| PipelineError::io(parent, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| PipelineError::io(&path, e))
    }

    pub(crate) fn read_string(&self, rel: &str) -> Result<String, PipelineError> {
        let path = self.path(rel);
        std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))
    }

    fn completed(&self, stage: &str, hash: &str, files: &[String]) -> bool {
        self.stages.get(stage).is_some_and(|h| h == hash)
            && files.iter().all(|f| self.path(f).is_file())
    }

    fn mark(&mut self, stage: &str, hash: &str) -> Result<(), PipelineError> {
        self.stages.insert(stage.to_string(), hash.to_string());
        let text = serde_json::to_string_pretty(&self.stages).expect("stage map serializes") + "\n";
        self.write(STAGES_FILE, text.as_bytes())
    }

    fn data_config_hash(&self) -> String {
        stage_hash(&["data", &json(&self.config.data.train), &json(&self.config.data.test)])
    }

    fn data_stage(train: Dataset, test: Dataset) -> DataStage {
        let hash = stage_hash(&[
            "data-content",
            &hex_digest(&train.to_bytes()),
            &hex_digest(&test.to_bytes()),
        ]);
        DataStage { train, test, hash }
    }

    /// Generates the datasets, or reloads them when this configuration has
    /// already produced them here.
    pub fn data(&mut self) -> Result<DataStage, PipelineError> {
        let hash = self.data_config_hash();
        let files = ["data/train.c2fd".to_string(), "data/test.c2fd".to_string()];
        if self.completed("data", &hash, &files) {
            self.note("data: reusing existing datasets");
            return Ok(Self::data_stage(
                Dataset::load(&self.path(&files[0]))?,
                Dataset::load(&self.path(&files[1]))?,
            ));
        }
        self.note("data: generating");
        let train = generate(&self.config.data.train)?;
        let test = generate(&self.config.data.test)?;
        let dir = self.path("data");
        std::fs::create_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
        train.save(&self.path(&files[0]))?;
        test.save(&self.path(&files[1]))?;
        train.write_manifest(&self.path("data/train-manifest.csv"))?;
        test.write_manifest(&self.path("data/test-manifest.csv"))?;
        self.mark("data", &hash)?;
        Ok(Self::data_stage(train, test))
    }

    /// Loads datasets that an earlier command wrote; fails if they are absent.
    pub fn existing_data(&mut self) -> Result<DataStage, PipelineError> {
        let (train, test) = (self.path("data/train.c2fd"), self.path("data/test.c2fd"));
        if !train.is_file() || !test.is_file() {
            return Err(PipelineError::MissingInput(format!(
                "no datasets in {}; run generate-data first",
                self.dir.join("data").display()
            )));
        }
        Ok(Self::data_stage(Dataset::load(&train)?, Dataset::load(&test)?))
    }

    fn split(&self, data: &DataStage) -> Result<(Splits, Samples), PipelineError> {
        let (train, val) =
            stratified_split(&data.train, self.config.data.validation_fraction, self.config.split_seed())?;
        Ok((
            Splits {
                train: train.samples(),
                validation: val.samples(),
            },
            data.test.samples(),
        ))
    }

    fn baseline_config(&self) -> CurriculumConfig {
        CurriculumConfig {
            seed: self.config.baseline_seed(),
            top_k: 1,
            ..self.config.curriculum.clone()
        }
    }

    /// Trains the all-class baseline used for clustering, with the same
    /// hyperparameters as the curriculum levels.
    pub fn baseline(&mut self, data: &DataStage) -> Result<BaselineStage, PipelineError> {
        let (splits, test) = self.split(data)?;
        let cfg = self.baseline_config();
        let hash = stage_hash(&[
            "baseline",
            &data.hash,
            &json(&self.config.data.validation_fraction),
            &json(&self.config.split_seed()),
            &json(&cfg),
        ]);
        let file = "baseline/model.c2fm".to_string();
        let checkpoint = if self.completed("baseline", &hash, std::slice::from_ref(&file)) {
            self.note("baseline: reusing existing model");
            Checkpoint::load(&self.path(&file))?
        } else {
            self.note("baseline: training");
            let k = data.train.num_classes();
            let mut arch = vec![data.train.raster_len()];
            arch.extend(&cfg.hidden);
            arch.push(k);
            let model = ModelParams::init(&arch, rng::derive_seed(cfg.seed, "init", 0))?;
            let identity: Vec<usize> = (0..k).collect();
            let run = train_level(model, &splits, &identity, 0, &cfg)?;
            let best = run.tracker.best().expect("at least one epoch").clone();
            self.write("baseline/metrics.csv", log_to_csv(&run.log).as_bytes())?;
            self.write(&file, &best.to_bytes())?;
            self.mark("baseline", &hash)?;
            best
        };
        Ok(BaselineStage {
            splits,
            test,
            class_names: data.train.class_names.clone(),
            checkpoint,
            hash,
        })
    }

    pub fn hierarchy_file(method: HierarchyMethod) -> String {
        format!("hierarchy-{}.json", method.name())
    }

    /// Builds the class hierarchy from the baseline by `method`.
    pub fn hierarchy(
        &mut self,
        method: HierarchyMethod,
        baseline: &BaselineStage,
    ) -> Result<ClassHierarchy, PipelineError> {
        let stage = format!("hierarchy-{method}");
        let hash = stage_hash(&[&stage, &baseline.hash, &json(&self.config.hierarchy.cluster)]);
        let file = Self::hierarchy_file(method);
        if self.completed(&stage, &hash, std::slice::from_ref(&file)) {
            self.note(&format!("hierarchy ({method}): reusing"));
            return self.load_hierarchy(method);
        }
        self.note(&format!("hierarchy ({method}): clustering"));
        let distance = match method {
            HierarchyMethod::Weights => cosine_distance_matrix(&baseline.checkpoint.params.predictor.weight)?,
            HierarchyMethod::Confusion => confusion_to_distance(&soft_confusion(
                &baseline.checkpoint.params,
                &baseline.splits.validation,
            )?)?,
        };
        let h = cluster_with(self.config.hierarchy.cluster, &distance);
        HierarchyFile::new(&h, &baseline.class_names).save(&self.path(&file))?;
        self.mark(&stage, &hash)?;
        Ok(h)
    }

    pub fn load_hierarchy(&self, method: HierarchyMethod) -> Result<ClassHierarchy, PipelineError> {
        let path = self.path(&Self::hierarchy_file(method));
        if !path.is_file() {
            return Err(PipelineError::MissingInput(format!(
                "{} not found; run cluster --method {method} first",
                path.display()
            )));
        }
        Ok(HierarchyFile::load(&path)?.into_hierarchy()?.0)
    }

    /// Splits and test samples without training anything.
    pub fn samples(&self, data: &DataStage) -> Result<(Splits, Samples), PipelineError> {
        self.split(data)
    }

    fn curriculum_hash(&self, method: HierarchyMethod, data: &DataStage) -> Result<String, PipelineError> {
        let hierarchy_text = self.read_string(&Self::hierarchy_file(method))?;
        Ok(stage_hash(&[
            &format!("curriculum-{method}"),
            &data.hash,
            &hierarchy_text,
            &json(&self.config.data.validation_fraction),
            &json(&self.config.split_seed()),
            &json(&self.config.curriculum),
        ]))
    }

    fn curriculum_files(method: HierarchyMethod, paths: usize, ranks: usize) -> Vec<String> {
        let mut files: Vec<String> = (1..=ranks)
            .map(|r| format!("{method}/level1/rank-{r}.c2fm"))
            .collect();
        files.extend((1..=paths).map(|p| format!("{method}/level2/path-{p}.c2fm")));
        files
    }

    /// Runs the curriculum on the hierarchy file for `method`, or reloads
    /// its checkpoints. `max_paths` limits branching (Setting A needs one).
    pub fn curriculum(
        &mut self,
        method: HierarchyMethod,
        data: &DataStage,
        splits: &Splits,
        max_paths: Option<usize>,
    ) -> Result<CurriculumRun, PipelineError> {
        let hierarchy = self.load_hierarchy(method)?;
        let hash = self.curriculum_hash(method, data)?;
        let stage = format!("curriculum-{method}");
        let wanted = max_paths.unwrap_or(self.config.curriculum.top_k);
        if let Some(run) = self.reload_curriculum(method, &stage, &hash, &hierarchy, wanted)? {
            self.note(&format!("curriculum ({method}): reusing {} paths", run.paths.len()));
            return Ok(run);
        }
        self.note(&format!("curriculum ({method}): training"));
        let run = CurriculumRun::execute(splits, &hierarchy, &self.config.curriculum, max_paths)?;
        for level in ["level1", "level2"] {
            let dir = self.path(&format!("{method}/{level}"));
            if dir.is_dir() {
                std::fs::remove_dir_all(&dir).map_err(|e| PipelineError::io(&dir, e))?;
            }
        }
        self.write(&format!("{method}/level1/metrics.csv"), log_to_csv(&run.level1.log).as_bytes())?;
        for (r, c) in run.level1.tracker.entries().iter().enumerate() {
            self.write(&format!("{method}/level1/rank-{}.c2fm", r + 1), &c.to_bytes())?;
        }
        for (p, path) in run.paths.iter().enumerate() {
            self.write(&format!("{method}/level2/path-{}.c2fm", p + 1), &path.best.to_bytes())?;
            self.write(&format!("{method}/level2/path-{}.csv", p + 1), log_to_csv(&path.log).as_bytes())?;
        }
        let meta = serde_json::json!({
            "ranks": run.level1.tracker.len(),
            "paths": run.paths.len(),
            "coarse_level": run.coarse_level,
            "fine_level": run.fine_level,
        });
        self.write(&format!("{method}/curriculum.json"), (meta.to_string() + "\n").as_bytes())?;
        self.mark(&stage, &hash)?;
        Ok(run)
    }

    fn reload_curriculum(
        &self,
        method: HierarchyMethod,
        stage: &str,
        hash: &str,
        hierarchy: &ClassHierarchy,
        wanted: usize,
    ) -> Result<Option<CurriculumRun>, PipelineError> {
        let meta_file = format!("{method}/curriculum.json");
        if !self.completed(stage, hash, std::slice::from_ref(&meta_file)) {
            return Ok(None);
        }
        let meta: serde_json::Value = serde_json::from_str(&self.read_string(&meta_file)?).map_err(|e| {
            PipelineError::Malformed {
                path: self.path(&meta_file),
                message: e.to_string(),
            }
        })?;
        let field = |k: &str| meta.get(k).and_then(|v| v.as_u64()).map(|v| v as usize);
        let (Some(ranks), Some(paths), Some(coarse_level), Some(fine_level)) =
            (field("ranks"), field("paths"), field("coarse_level"), field("fine_level"))
        else {
            return Ok(None);
        };
        let wanted = wanted.min(ranks);
        if paths < wanted || !Self::curriculum_files(method, paths, ranks).iter().all(|f| self.path(f).is_file()) {
            return Ok(None);
        }
        let mut tracker = TopKTracker::new(self.config.curriculum.top_k);
        for r in 1..=ranks {
            tracker.offer(Checkpoint::load(&self.path(&format!("{method}/level1/rank-{r}.c2fm")))?);
        }
        let paths = (1..=wanted)
            .map(|p| {
                Ok(PathRun {
                    best: Checkpoint::load(&self.path(&format!("{method}/level2/path-{p}.c2fm")))?,
                    log: Vec::new(),
                })
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        Ok(Some(CurriculumRun {
            coarse_level,
            fine_level,
            coarse_map: hierarchy.coarse_label_map(coarse_level)?,
            fine_map: hierarchy.coarse_label_map(fine_level)?,
            level1: LevelRun {
                tracker,
                log: Vec::new(),
            },
            paths,
        }))
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
