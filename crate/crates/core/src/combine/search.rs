use std::cmp::Ordering;
use std::fmt::Write as _;
use std::ops::RangeInclusive;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{mean_logits, score, soup, CombinationResult, CombineError, CombineMethod, IngredientPool};
use crate::data::Samples;
use crate::network;

/// Largest pool the exhaustive search accepts.
pub const MAX_SEARCH_POOL: usize = 12;

/// Winner plus every scored combination, ordered by subset size, then method,
/// then subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub winner: CombinationResult,
    pub table: Vec<CombinationResult>,
    /// Another method reached exactly the winner's score.
    pub method_tie: bool,
}

fn method_rank(m: CombineMethod) -> u8 {
    match m {
        CombineMethod::Ensemble => 0,
        CombineMethod::Soup => 1,
        CombineMethod::GreedySoup => 2,
    }
}

/// Total order used to pick a winner: higher F1, then fewer members, then
/// ensemble before soup, then lexicographic indices.
fn preference(a: &CombinationResult, b: &CombinationResult) -> Ordering {
    b.val_f1
        .total_cmp(&a.val_f1)
        .then(a.subset.len().cmp(&b.subset.len()))
        .then(method_rank(a.method).cmp(&method_rank(b.method)))
        .then(a.subset.cmp(&b.subset))
}

fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut current = Vec::with_capacity(k);
    fn rec(start: usize, n: usize, k: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == k {
            out.push(current.clone());
            return;
        }
        for i in start..n {
            if n - i < k - current.len() {
                break;
            }
            current.push(i);
            rec(i + 1, n, k, current, out);
            current.pop();
        }
    }
    rec(0, n, k, &mut current, &mut out);
    out
}

/// Scores every subset whose size lies in `sizes` with every method in
/// `methods` on the validation set.
pub fn combinatorial_search(
    pool: &IngredientPool,
    validation: &Samples,
    methods: &[CombineMethod],
    sizes: RangeInclusive<usize>,
) -> Result<SearchOutcome, CombineError> {
    let n = pool.len();
    if n > MAX_SEARCH_POOL {
        return Err(CombineError::PoolTooLarge(n));
    }
    let (min, max) = (*sizes.start(), *sizes.end());
    if min == 0 || min > max || max > n {
        return Err(CombineError::InvalidSizeRange { min, max, len: n });
    }
    let mut methods: Vec<CombineMethod> = methods
        .iter()
        .copied()
        .filter(|&m| m != CombineMethod::GreedySoup)
        .collect();
    methods.sort_by_key(|&m| method_rank(m));
    methods.dedup();
    if methods.is_empty() {
        methods.push(CombineMethod::Ensemble);
    }

    let member_logits = pool
        .ingredients()
        .par_iter()
        .map(|c| network::forward(&c.params, &validation.features))
        .collect::<Result<Vec<_>, _>>()?;

    let mut jobs = Vec::new();
    for size in min..=max {
        let subsets = combinations(n, size);
        for &method in &methods {
            for s in &subsets {
                jobs.push((method, s.clone()));
            }
        }
    }
    let table = jobs
        .into_par_iter()
        .map(|(method, subset)| {
            let logits = match method {
                CombineMethod::Ensemble => {
                    let members: Vec<_> = subset.iter().map(|&i| &member_logits[i]).collect();
                    mean_logits(&members).expect("nonempty subset")
                }
                _ if subset.len() == 1 => member_logits[subset[0]].clone(),
                _ => network::forward(&soup(pool, &subset)?, &validation.features)?,
            };
            Ok(CombinationResult {
                val_f1: score(&logits, validation)?,
                subset,
                method,
            })
        })
        .collect::<Result<Vec<_>, CombineError>>()?;

    let winner = table
        .iter()
        .min_by(|a, b| preference(a, b))
        .expect("at least one job")
        .clone();
    let method_tie = table
        .iter()
        .any(|r| r.method != winner.method && r.val_f1 == winner.val_f1);
    Ok(SearchOutcome {
        winner,
        table,
        method_tie,
    })
}

/// Iterative greedy soup: start from the best single ingredient and keep any
/// addition that strictly raises validation macro-F1, until a full pass adds
/// nothing (or the pass guard of 4·n trips).
pub fn greedy_soup(
    pool: &IngredientPool,
    validation: &Samples,
    allow_repeats: bool,
) -> Result<CombinationResult, CombineError> {
    let n = pool.len();
    let singles = pool
        .ingredients()
        .par_iter()
        .map(|c| score(&network::forward(&c.params, &validation.features)?, validation))
        .collect::<Result<Vec<_>, CombineError>>()?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| singles[b].total_cmp(&singles[a]).then(a.cmp(&b)));

    let mut subset = vec![order[0]];
    let mut best = singles[order[0]];
    for _ in 0..4 * n {
        let mut added = false;
        for &i in &order {
            if !allow_repeats && subset.contains(&i) {
                continue;
            }
            let mut candidate = subset.clone();
            candidate.push(i);
            let f1 = score(
                &network::forward(&soup(pool, &candidate)?, &validation.features)?,
                validation,
            )?;
            if f1 > best {
                best = f1;
                subset = candidate;
                added = true;
            }
        }
        if !added {
            break;
        }
    }
    Ok(CombinationResult {
        subset,
        method: CombineMethod::GreedySoup,
        val_f1: best,
    })
}

impl SearchOutcome {
    /// `method,size,subset,val_macro_f1` rows in table order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("method,size,subset,val_macro_f1\n");
        for r in &self.table {
            let _ = writeln!(out, "{},{},{},{:.6}", r.method, r.subset.len(), r.subset_label(), r.val_f1);
        }
        out
    }

    /// Best score per subset size and method, as percentages, with an
    /// optional greedy-soup row.
    pub fn render(&self, greedy: Option<&CombinationResult>) -> String {
        let best = |size: usize, m: CombineMethod| {
            self.table
                .iter()
                .filter(|r| r.subset.len() == size && r.method == m)
                .map(|r| r.val_f1)
                .max_by(f64::total_cmp)
        };
        let cell = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let mut sizes: Vec<usize> = self.table.iter().map(|r| r.subset.len()).collect();
        sizes.dedup();
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} | {:>10} | {:>8}", "Combination", "Ensembling", "Souping");
        let _ = writeln!(out, "{}", "-".repeat(40));
        for size in sizes {
            let _ = writeln!(
                out,
                "{:<16} | {:>10} | {:>8}",
                format!("{size}-model"),
                cell(best(size, CombineMethod::Ensemble)),
                cell(best(size, CombineMethod::Soup)),
            );
        }
        if let Some(g) = greedy {
            let _ = writeln!(out, "{:<16} | {:>10} | {:>8}", "Iterative greedy", "-", cell(Some(g.val_f1)));
        }
        let _ = writeln!(
            out,
            "winner: {} [{}] {:.2}{}",
            self.winner.method,
            self.winner.subset_label(),
            100.0 * self.winner.val_f1,
            if self.method_tie { " (tied across methods)" } else { "" }
        );
        out
    }
}
