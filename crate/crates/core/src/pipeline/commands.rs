use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::{
    BaselineReport, BaselineStage, DataStage, HierarchyMethod, MethodReport, PipelineError, RunConfig,
    Summary, Workspace,
};
use crate::combine::{
    combinatorial_search, ensemble_predict, greedy_soup, soup, CombinationResult, CombineMethod,
    IngredientPool, SearchOutcome,
};
use crate::curriculum::{Checkpoint, Setting, SettingReport, Splits};
use crate::data::Samples;
use crate::hierarchy::HierarchyFile;
use crate::metrics;
use crate::network::{self, argmax_rows};

fn pretty<T: Serialize>(v: &T) -> Vec<u8> {
    (serde_json::to_string_pretty(v).expect("report serializes") + "\n").into_bytes()
}

/// Per-class sample counts of the generated datasets.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DataSummary {
    pub class_names: Vec<String>,
    pub train_counts: Vec<usize>,
    pub test_counts: Vec<usize>,
    pub dir: PathBuf,
}

impl DataSummary {
    pub fn render(&self) -> String {
        let width = self.class_names.iter().map(|n| n.len()).max().unwrap_or(5).max(5);
        let mut out = format!("{:<width$} | {:>6} | {:>6}\n", "Class", "Train", "Test");
        for ((n, tr), te) in self.class_names.iter().zip(&self.train_counts).zip(&self.test_counts) {
            let _ = writeln!(out, "{n:<width$} | {tr:>6} | {te:>6}");
        }
        let _ = writeln!(
            out,
            "{:<width$} | {:>6} | {:>6}",
            "Total",
            self.train_counts.iter().sum::<usize>(),
            self.test_counts.iter().sum::<usize>()
        );
        out
    }
}

pub fn cmd_generate_data(config: &RunConfig, verbose: bool) -> Result<DataSummary, PipelineError> {
    let mut ws = Workspace::create(config, verbose)?;
    let data = ws.data()?;
    Ok(DataSummary {
        class_names: data.train.class_names.clone(),
        train_counts: data.train.class_counts(),
        test_counts: data.test.class_counts(),
        dir: ws.path("data"),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterOutput {
    pub method: HierarchyMethod,
    pub file: PathBuf,
    pub baseline_val_f1: f64,
    pub rendered: String,
}

fn baseline_report(ws: &Workspace, baseline: &BaselineStage) -> Result<BaselineReport, PipelineError> {
    let preds = network::predict(&baseline.checkpoint.params, &baseline.test.features)?;
    let report = BaselineReport {
        epoch: baseline.checkpoint.epoch,
        val_f1: baseline.checkpoint.val_f1,
        test: metrics::evaluate(&preds, &baseline.test.labels, baseline.test.num_classes)?,
    };
    ws.write("baseline/report.json", &pretty(&report))?;
    Ok(report)
}

/// Trains (or reuses) the baseline on existing datasets and builds the
/// hierarchy for `method`.
pub fn cmd_cluster(
    config: &RunConfig,
    method: HierarchyMethod,
    verbose: bool,
) -> Result<ClusterOutput, PipelineError> {
    let mut ws = Workspace::create(config, verbose)?;
    let data = ws.existing_data()?;
    let baseline = ws.baseline(&data)?;
    baseline_report(&ws, &baseline)?;
    let h = ws.hierarchy(method, &baseline)?;
    Ok(ClusterOutput {
        method,
        file: ws.path(&Workspace::hierarchy_file(method)),
        baseline_val_f1: baseline.checkpoint.val_f1,
        rendered: h.render(&baseline.class_names),
    })
}

fn write_setting(
    ws: &Workspace,
    method: HierarchyMethod,
    report: &SettingReport,
) -> Result<(), PipelineError> {
    let stem = format!("{method}/setting-{}", report.setting);
    ws.write(&format!("{stem}.json"), &pretty(report))?;
    let text = crate::curriculum::render_settings(std::slice::from_ref(report));
    ws.write(&format!("{stem}.txt"), text.as_bytes())
}

fn write_search(
    ws: &Workspace,
    method: HierarchyMethod,
    search: &SearchOutcome,
    test: Option<&SettingReport>,
) -> Result<(), PipelineError> {
    ws.write(&format!("{method}/search.csv"), search.to_csv().as_bytes())?;
    let winner = serde_json::json!({
        "winner": search.winner,
        "method_tie": search.method_tie,
        "test": test.map(|r| &r.test),
    });
    ws.write(&format!("{method}/winner.json"), &pretty(&winner))
}

/// Runs the curriculum for one setting on existing data and hierarchy.
pub fn cmd_train_curriculum(
    config: &RunConfig,
    method: HierarchyMethod,
    setting: Setting,
    verbose: bool,
) -> Result<SettingReport, PipelineError> {
    let mut ws = Workspace::create(config, verbose)?;
    let data = ws.existing_data()?;
    ws.load_hierarchy(method)?;
    let (splits, test) = ws.samples(&data)?;
    let max_paths = (setting == Setting::A).then_some(1);
    let run = ws.curriculum(method, &data, &splits, max_paths)?;
    let outcome = run.outcome(setting, &splits, &test, &ws.config.combine)?;
    write_setting(&ws, method, &outcome.report)?;
    if let Some(search) = &outcome.search {
        write_search(&ws, method, search, Some(&outcome.report))?;
    }
    Ok(outcome.report)
}

/// What `cmd_combine` computes over the final checkpoints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CombineCommand {
    Soup,
    Ensemble,
    GreedySoup,
    Search,
}

impl CombineCommand {
    pub fn name(self) -> &'static str {
        match self {
            CombineCommand::Soup => "soup",
            CombineCommand::Ensemble => "ensemble",
            CombineCommand::GreedySoup => "greedy-soup",
            CombineCommand::Search => "search",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CombineOutput {
    pub winner: CombinationResult,
    pub table_csv: String,
    pub rendered: String,
    pub test: metrics::EvalReport,
}

fn final_checkpoints(ws: &Workspace, method: HierarchyMethod) -> Result<Vec<Checkpoint>, PipelineError> {
    let mut out = Vec::new();
    loop {
        let path = ws.path(&format!("{method}/level2/path-{}.c2fm", out.len() + 1));
        if !path.is_file() {
            break;
        }
        out.push(Checkpoint::load(&path)?);
    }
    if out.is_empty() {
        return Err(PipelineError::MissingInput(format!(
            "no final checkpoints under {}; run train-curriculum first",
            ws.path(&format!("{method}/level2")).display()
        )));
    }
    Ok(out)
}

fn fine_samples(ws: &Workspace, method: HierarchyMethod, s: &Samples) -> Result<Samples, PipelineError> {
    let h = ws.load_hierarchy(method)?;
    let fine = ws.config.curriculum.fine_level.unwrap_or(h.num_levels() - 1);
    let map = h.coarse_label_map(fine)?;
    let k = map.iter().max().map_or(0, |&m| m + 1);
    Ok(s.relabeled(&map, k))
}

/// Combines the final checkpoints of a curriculum run.
pub fn cmd_combine(
    config: &RunConfig,
    method: HierarchyMethod,
    which: CombineCommand,
    verbose: bool,
) -> Result<CombineOutput, PipelineError> {
    let mut ws = Workspace::create(config, verbose)?;
    let pool = IngredientPool::new(final_checkpoints(&ws, method)?)?;
    let data = ws.existing_data()?;
    let (splits, test) = ws.samples(&data)?;
    let val = fine_samples(&ws, method, &splits.validation)?;
    let test = fine_samples(&ws, method, &test)?;
    let all: Vec<usize> = (0..pool.len()).collect();
    let score = |logits: &crate::DenseMatrix| -> Result<f64, PipelineError> {
        Ok(metrics::macro_f1(&argmax_rows(logits), &val.labels, val.num_classes)?)
    };
    let (winner, table_csv, rendered) = match which {
        CombineCommand::Search => {
            let s = combinatorial_search(&pool, &val, &ws.config.combine.methods, ws.config.combine.size_range(pool.len()))?;
            (s.winner.clone(), s.to_csv(), s.render(None))
        }
        CombineCommand::GreedySoup => {
            let g = greedy_soup(&pool, &val, ws.config.combine.greedy_allow_repeats)?;
            let rendered = format!("greedy soup [{}]: {:.2}\n", g.subset_label(), 100.0 * g.val_f1);
            (g, String::new(), rendered)
        }
        CombineCommand::Soup | CombineCommand::Ensemble => {
            let (logits, m) = if which == CombineCommand::Soup {
                (network::forward(&soup(&pool, &all)?, &val.features)?, CombineMethod::Soup)
            } else {
                (ensemble_predict(&pool, &all, &val.features)?, CombineMethod::Ensemble)
            };
            let r = CombinationResult { subset: all.clone(), method: m, val_f1: score(&logits)? };
            let rendered = format!("{} of all {} paths: {:.2}\n", m, pool.len(), 100.0 * r.val_f1);
            (r, String::new(), rendered)
        }
    };
    let table_csv = if table_csv.is_empty() {
        format!(
            "method,size,subset,val_macro_f1\n{},{},{},{:.6}\n",
            winner.method,
            winner.subset.len(),
            winner.subset_label(),
            winner.val_f1
        )
    } else {
        table_csv
    };
    let preds = winner.predict(&pool, &test.features)?;
    let test_report = metrics::evaluate(&preds, &test.labels, test.num_classes)?;
    let stem = format!("{method}/combine-{}", which.name());
    ws.write(&format!("{stem}.csv"), table_csv.as_bytes())?;
    ws.write(
        &format!("{stem}.json"),
        &pretty(&serde_json::json!({ "winner": winner, "test": test_report })),
    )?;
    Ok(CombineOutput {
        winner,
        table_csv,
        rendered,
        test: test_report,
    })
}

fn evaluate_method(
    ws: &mut Workspace,
    method: HierarchyMethod,
    data: &DataStage,
    splits: &Splits,
    test: &Samples,
) -> Result<MethodReport, PipelineError> {
    let hierarchy = ws.load_hierarchy(method)?;
    let names = HierarchyFile::load(&ws.path(&Workspace::hierarchy_file(method)))?.class_names;
    let run = ws.curriculum(method, data, splits, None)?;
    let mut settings = Vec::new();
    let mut search = None;
    let mut greedy = None;
    for s in Setting::ALL {
        let o = run.outcome(s, splits, test, &ws.config.combine)?;
        write_setting(ws, method, &o.report)?;
        if let (Some(sr), Some(g)) = (o.search, o.greedy) {
            write_search(ws, method, &sr, Some(&o.report))?;
            search = Some(sr);
            greedy = Some(g);
        }
        settings.push(o.report);
    }
    let report = MethodReport {
        method,
        class_names: names,
        levels: hierarchy.levels().to_vec(),
        coarse_level: run.coarse_level,
        fine_level: run.fine_level,
        paths: run.path_summaries(),
        best_l2_from_best_l1: run.best_l2_from_best_l1(),
        settings,
        search: search.expect("setting C searches"),
        greedy: greedy.expect("setting C runs the greedy soup"),
    };
    ws.write(&format!("{method}/report.json"), &pretty(&report))?;
    ws.write(&format!("{method}/report.txt"), report.render().as_bytes())?;
    Ok(report)
}

/// Scores Settings A, B and C for one hierarchy on the test split.
pub fn cmd_evaluate(
    config: &RunConfig,
    method: HierarchyMethod,
    verbose: bool,
) -> Result<MethodReport, PipelineError> {
    let mut ws = Workspace::create(config, verbose)?;
    let data = ws.existing_data()?;
    let (splits, test) = ws.samples(&data)?;
    evaluate_method(&mut ws, method, &data, &splits, &test)
}

/// Every stage end to end, for each configured hierarchy method.
pub fn cmd_pipeline(config: &RunConfig, verbose: bool) -> Result<Summary, PipelineError> {
    let mut ws = Workspace::create(config, verbose)?;
    let data = ws.data()?;
    let baseline = ws.baseline(&data)?;
    let baseline_summary = baseline_report(&ws, &baseline)?;
    let mut methods = Vec::new();
    for method in ws.config.hierarchy.methods.clone() {
        ws.hierarchy(method, &baseline)?;
        methods.push(evaluate_method(&mut ws, method, &data, &baseline.splits, &baseline.test)?);
    }
    let summary = Summary {
        baseline: baseline_summary,
        methods,
    };
    ws.write("summary.json", &pretty(&summary))?;
    ws.write("summary.txt", summary.render().as_bytes())?;
    Ok(summary)
}

/// Re-renders the text summary of a finished run from its JSON files.
pub fn cmd_report(dir: &Path) -> Result<String, PipelineError> {
    let path = dir.join("summary.json");
    if path.is_file() {
        let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
        let summary: Summary = serde_json::from_str(&text).map_err(|e| PipelineError::Malformed {
            path: path.clone(),
            message: e.to_string(),
        })?;
        return Ok(summary.render());
    }
    let mut out = String::new();
    for method in [HierarchyMethod::Weights, HierarchyMethod::Confusion] {
        let path = dir.join(format!("{method}/report.json"));
        if path.is_file() {
            let text = std::fs::read_to_string(&path).map_err(|e| PipelineError::io(&path, e))?;
            let report: MethodReport = serde_json::from_str(&text).map_err(|e| PipelineError::Malformed {
                path: path.clone(),
                message: e.to_string(),
            })?;
            out.push_str(&report.render());
        }
    }
    if out.is_empty() {
        return Err(PipelineError::MissingInput(format!(
            "no reports in {}; run pipeline or evaluate first",
            dir.display()
        )));
    }
    Ok(out)
}
