//! `c2f`: coarse-to-fine curriculum runs from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use c2f_core::curriculum::Setting;
use c2f_core::data::SampleCounts;
use c2f_core::hierarchy::ClusterMethod;
use c2f_core::pipeline::{self, CombineCommand, HierarchyMethod, PipelineError, RunConfig};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "c2f", version, about = "Hierarchical coarse-to-fine curriculum training")]
struct Cli {
    #[command(flatten)]
    overrides: Overrides,
    /// Suppress progress messages on stderr.
    #[arg(long, short, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

/// Flags take precedence over the config file, which takes precedence over
/// built-in defaults.
#[derive(Args, Debug, Default)]
struct Overrides {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Run directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Master seed; every other seed is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Coarse checkpoints kept and branched.
    #[arg(long, global = true)]
    top_k: Option<usize>,
    #[arg(long, global = true)]
    lr: Option<f64>,
    #[arg(long, global = true)]
    batch_size: Option<usize>,
    #[arg(long, global = true)]
    samples_per_class: Option<usize>,
    #[arg(long, global = true)]
    test_samples_per_class: Option<usize>,
    #[arg(long, global = true)]
    noise: Option<f64>,
    #[arg(long, global = true)]
    jitter: Option<f64>,
    /// Long schedule and search over subsets of size 2 and up.
    #[arg(long, global = true)]
    reference_setup: bool,
    /// Leave singletons out of the combination search.
    #[arg(long, global = true)]
    no_singletons: bool,
    #[arg(long, global = true, value_enum)]
    cluster_algorithm: Option<ClusterArg>,
    /// Hierarchy methods run by `pipeline`, comma separated.
    #[arg(long, global = true, value_enum, value_delimiter = ',')]
    hierarchies: Option<Vec<HierarchyArg>>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the synthetic train and test sets.
    GenerateData,
    /// Train the baseline and build a class hierarchy.
    Cluster {
        #[arg(long, value_enum, default_value = "weights")]
        method: HierarchyArg,
    },
    /// Run the staged curriculum and report one setting.
    TrainCurriculum {
        #[arg(long, value_enum, ignore_case = true)]
        setting: SettingArg,
        #[arg(long, value_enum, default_value = "weights")]
        hierarchy: HierarchyArg,
    },
    /// Combine the final checkpoints of a curriculum run.
    Combine {
        #[arg(long, value_enum, default_value = "search")]
        method: CombineArg,
        #[arg(long, value_enum, default_value = "weights")]
        hierarchy: HierarchyArg,
    },
    /// Score Settings A, B and C on the test split.
    Evaluate {
        #[arg(long, value_enum, default_value = "weights")]
        hierarchy: HierarchyArg,
    },
    /// Every stage, end to end.
    Pipeline,
    /// Print the text summary of a finished run.
    Report {
        /// Run directory (defaults to --out or the config's output_dir).
        dir: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum HierarchyArg {
    Weights,
    Confusion,
}

impl From<HierarchyArg> for HierarchyMethod {
    fn from(a: HierarchyArg) -> Self {
        match a {
            HierarchyArg::Weights => HierarchyMethod::Weights,
            HierarchyArg::Confusion => HierarchyMethod::Confusion,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum ClusterArg {
    Affinity,
    Agglomerative,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SettingArg {
    A,
    B,
    C,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum CombineArg {
    Soup,
    Ensemble,
    GreedySoup,
    Search,
}

impl Overrides {
    fn apply(&self) -> Result<RunConfig, PipelineError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.out {
            c.output_dir = v.clone();
        }
        if let Some(v) = self.seed {
            c.seed = v;
        }
        if let Some(v) = self.epochs {
            c.curriculum.epochs_per_level = v;
        }
        if let Some(v) = self.top_k {
            c.curriculum.top_k = v;
        }
        if let Some(v) = self.lr {
            c.curriculum.learning_rate = v;
        }
        if let Some(v) = self.batch_size {
            c.curriculum.batch_size = v;
        }
        if let Some(v) = self.samples_per_class {
            c.data.train.counts = SampleCounts::PerClass(v);
        }
        if let Some(v) = self.test_samples_per_class {
            c.data.test.counts = SampleCounts::PerClass(v);
        }
        if let Some(v) = self.noise {
            c.data.train.noise = v;
            c.data.test.noise = v;
        }
        if let Some(v) = self.jitter {
            c.data.train.jitter = v;
            c.data.test.jitter = v;
        }
        if self.reference_setup {
            c.reference_setup = true;
        }
        if self.no_singletons {
            c.combine.include_singletons = false;
        }
        if let Some(v) = self.cluster_algorithm {
            c.hierarchy.cluster = match v {
                ClusterArg::Affinity => ClusterMethod::Affinity,
                ClusterArg::Agglomerative => ClusterMethod::Agglomerative,
            };
        }
        if let Some(v) = &self.hierarchies {
            c.hierarchy.methods = v.iter().map(|&m| m.into()).collect();
        }
        Ok(c)
    }
}

fn configure_threads() -> Result<(), PipelineError> {
    let Ok(raw) = std::env::var("C2F_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| PipelineError::Config(format!("C2F_THREADS must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))
}

fn run(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    let config = cli.overrides.apply()?;
    let verbose = !cli.quiet;
    match cli.command {
        Command::GenerateData => {
            let s = pipeline::cmd_generate_data(&config, verbose)?;
            print!("{}", s.render());
            println!("datasets written to {}", s.dir.display());
        }
        Command::Cluster { method } => {
            let out = pipeline::cmd_cluster(&config, method.into(), verbose)?;
            println!("baseline validation macro-F1: {:.2}%", 100.0 * out.baseline_val_f1);
            print!("{}", out.rendered);
            println!("hierarchy written to {}", out.file.display());
        }
        Command::TrainCurriculum { setting, hierarchy } => {
            let setting = match setting {
                SettingArg::A => Setting::A,
                SettingArg::B => Setting::B,
                SettingArg::C => Setting::C,
            };
            let report = pipeline::cmd_train_curriculum(&config, hierarchy.into(), setting, verbose)?;
            print!("{}", c2f_core::curriculum::render_settings(std::slice::from_ref(&report)));
        }
        Command::Combine { method, hierarchy } => {
            let which = match method {
                CombineArg::Soup => CombineCommand::Soup,
                CombineArg::Ensemble => CombineCommand::Ensemble,
                CombineArg::GreedySoup => CombineCommand::GreedySoup,
                CombineArg::Search => CombineCommand::Search,
            };
            let out = pipeline::cmd_combine(&config, hierarchy.into(), which, verbose)?;
            print!("{}", out.rendered);
            println!("test macro-F1: {:.2}%", 100.0 * out.test.macro_f1);
        }
        Command::Evaluate { hierarchy } => {
            let report = pipeline::cmd_evaluate(&config, hierarchy.into(), verbose)?;
            print!("{}", report.render());
        }
        Command::Pipeline => {
            let summary = pipeline::cmd_pipeline(&config, verbose)?;
            print!("{}", summary.render());
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| config.output_dir.clone());
            let text = pipeline::cmd_report(&dir).with_context(|| format!("reading {}", dir.display()))?;
            print!("{text}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<PipelineError>()
                .map_or(2, |p| p.exit_code());
            ExitCode::from(code as u8)
        }
    }
}
