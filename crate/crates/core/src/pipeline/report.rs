use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::HierarchyMethod;
use crate::combine::{CombinationResult, SearchOutcome};
use crate::curriculum::{render_paths, render_settings, PathSummary, Setting, SettingReport};
use crate::hierarchy::Partition;
use crate::metrics::{render_table, EvalReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub epoch: u32,
    pub val_f1: f64,
    pub test: EvalReport,
}

/// Everything measured for one hierarchy method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: HierarchyMethod,
    pub class_names: Vec<String>,
    pub levels: Vec<Partition>,
    pub coarse_level: usize,
    pub fine_level: usize,
    pub paths: Vec<PathSummary>,
    /// Whether the best fine checkpoint came from the best coarse one.
    pub best_l2_from_best_l1: bool,
    pub settings: Vec<SettingReport>,
    pub search: SearchOutcome,
    pub greedy: CombinationResult,
}

impl MethodReport {
    pub fn setting(&self, s: Setting) -> Option<&SettingReport> {
        self.settings.iter().find(|r| r.setting == s)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "== hierarchy: {} ==", self.method);
        for (l, level) in self.levels.iter().enumerate() {
            let clusters: Vec<String> = level
                .iter()
                .map(|c| {
                    let names: Vec<&str> = c.iter().map(|&i| self.class_names[i].as_str()).collect();
                    format!("{{{}}}", names.join(", "))
                })
                .collect();
            let mark = if l == self.coarse_level {
                " <- coarse task"
            } else if l == self.fine_level {
                " <- fine task"
            } else {
                ""
            };
            let _ = writeln!(out, "level {l} ({} clusters){mark}: {}", level.len(), clusters.join(" "));
        }
        let _ = writeln!(out, "\nCheckpoint paths (validation macro-F1, %)");
        out.push_str(&render_paths(&self.paths));
        let _ = writeln!(
            out,
            "best level-2 checkpoint descends from the best level-1 checkpoint: {}",
            if self.best_l2_from_best_l1 { "yes" } else { "no" }
        );
        let _ = writeln!(out, "\nSettings (validation and test, %)");
        out.push_str(&render_settings(&self.settings));
        let _ = writeln!(out, "\nCombination search (best validation macro-F1 per size, %)");
        out.push_str(&self.search.render(Some(&self.greedy)));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub baseline: BaselineReport,
    pub methods: Vec<MethodReport>,
}

impl Summary {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "Baseline: validation macro-F1 {:.2}% (epoch {})",
            100.0 * self.baseline.val_f1,
            self.baseline.epoch
        );
        let mut rows: Vec<(String, &EvalReport)> = vec![("Baseline".to_string(), &self.baseline.test)];
        for m in &self.methods {
            for s in &m.settings {
                rows.push((format!("{} / Setting {}", m.method, s.setting), &s.test));
            }
        }
        let borrowed: Vec<(&str, &EvalReport)> = rows.iter().map(|(n, r)| (n.as_str(), *r)).collect();
        let _ = writeln!(out, "\nTest split (macro, %)");
        out.push_str(&render_table(&borrowed));
        for m in &self.methods {
            out.push('\n');
            out.push_str(&m.render());
        }
        out
    }
}
