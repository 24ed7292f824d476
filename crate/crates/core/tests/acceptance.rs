//! Acceptance checks, one line of output per criterion.
//!
//! Runs without the libtest harness so the PASS/FAIL lines show up in plain
//! `cargo test` output. Any failure makes the process exit nonzero.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use c2f_core::combine::{
    combinatorial_search, ensemble_predict, greedy_soup, soup, CombineMethod, IngredientPool,
};
use c2f_core::curriculum::{Checkpoint, Setting};
use c2f_core::data::{generate, Dataset, DataError, GeneratorConfig, SampleCounts, Samples};
use c2f_core::hierarchy::{affinity_cluster, ClassHierarchy, DistanceMatrix, HierarchyFile, Partition};
use c2f_core::metrics::{evaluate, macro_f1};
use c2f_core::network::{
    argmax_rows, coarse_cluster_loss, forward, loss_and_gradient, predict, smoothed_ce_loss, Layer,
    ModelParams, NetworkError,
};
use c2f_core::pipeline::{cmd_pipeline, RunConfig, Summary};
use c2f_core::DenseMatrix;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Pinned tolerances and budgets.
const FD_STEP: f64 = 1e-5;
const FD_MAX_REL_ERR: f64 = 1e-4;
/// Denominator floor for the relative error, so that entries whose true
/// gradient is zero are judged on absolute error instead.
const FD_REL_FLOOR: f64 = 1e-6;
const FD_NETWORKS: usize = 24;
const FD_BUDGET: Duration = Duration::from_secs(30);
const REDUCTION_TOL: f64 = 1e-12;
const REDUCTION_BATCHES: usize = 100;
const RANDOM_MATRICES: usize = 200;
const SEARCH_F1_TOL: f64 = 1e-12;
const SOUP_IDENTITY_TOL: f64 = 1e-15;
const GREEDY_POOLS: usize = 60;
const PIPELINE_BUDGET: Duration = Duration::from_secs(600);
const BASELINE_FLOOR: f64 = 0.85;
const METRIC_VECTORS: usize = 1_000;

type Check = Result<String, String>;
type LossFn<'a> = Box<dyn Fn(&DenseMatrix) -> (f64, DenseMatrix) + 'a>;
type Criterion = Box<dyn FnOnce() -> Check>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
}

fn random_model(dims: &[usize], rng: &mut ChaCha8Rng) -> ModelParams {
    let mut m = ModelParams::init(dims, rng.random()).unwrap();
    // Nonzero biases so every parameter is exercised.
    for layer in m.encoder.iter_mut().chain(std::iter::once(&mut m.predictor)) {
        layer.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
    }
    m
}

fn random_map(k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let clusters = rng.random_range(1..=k);
    let mut map: Vec<usize> = (0..k).map(|c| c % clusters).collect();
    for i in (1..k).rev() {
        map.swap(i, rng.random_range(0..=i));
    }
    map
}

// 1
fn gradient_check() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for net in 0..FD_NETWORKS {
        let depth = rng.random_range(0..3);
        let mut dims = vec![rng.random_range(2..7)];
        for _ in 0..depth {
            dims.push(rng.random_range(2..7));
        }
        let k = rng.random_range(2..6);
        dims.push(k);
        let model = random_model(&dims, &mut rng);
        let b = rng.random_range(1..6);
        let batch = random_matrix(b, dims[0], &mut rng);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        let map = random_map(k, &mut rng);

        let losses: [LossFn; 2] = [
            Box::new(|z| smoothed_ce_loss(z, &labels, 0.1)),
            Box::new(|z| coarse_cluster_loss(z, &labels, &map)),
        ];
        for loss in &losses {
            let (_, grads) = loss_and_gradient(&model, &batch, |z| loss(z)).unwrap();
            let analytic: Vec<f64> = grads.tensors().into_iter().flatten().copied().collect();
            let eval = |m: &ModelParams| loss(&forward(m, &batch).unwrap()).0;
            let mut p = 0;
            for t in 0..model.tensors().len() {
                for e in 0..model.tensors()[t].len() {
                    let mut plus = model.clone();
                    plus.tensors_mut()[t][e] += FD_STEP;
                    let mut minus = model.clone();
                    minus.tensors_mut()[t][e] -= FD_STEP;
                    let numeric = (eval(&plus) - eval(&minus)) / (2.0 * FD_STEP);
                    let a = analytic[p];
                    let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_REL_FLOOR);
                    if rel > worst {
                        worst = rel;
                    }
                    ensure(rel < FD_MAX_REL_ERR, || {
                        format!("network {net} dims {dims:?}: parameter {p} analytic {a} numeric {numeric}")
                    })?;
                    p += 1;
                    checked += 1;
                }
            }
        }
    }
    let elapsed = start.elapsed();
    ensure(elapsed < FD_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{FD_NETWORKS} networks, {checked} partials, max rel err {worst:.2e}, {:.2}s",
        elapsed.as_secs_f64()
    ))
}

// 2
fn singleton_reduction() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for i in 0..REDUCTION_BATCHES {
        let k = rng.random_range(2..16);
        let b = rng.random_range(1..33);
        let logits = random_matrix(b, k, &mut rng) * rng.random_range(0.5..20.0);
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
        let identity: Vec<usize> = (0..k).collect();
        let (cl, cg) = coarse_cluster_loss(&logits, &labels, &identity);
        let (ce, eg) = smoothed_ce_loss(&logits, &labels, 0.0);
        let diff = cg
            .iter()
            .zip(eg.iter())
            .map(|(a, b)| (a - b).abs())
            .fold((cl - ce).abs(), f64::max);
        worst = worst.max(diff);
        ensure(diff <= REDUCTION_TOL, || format!("batch {i}: difference {diff:e}"))?;
    }
    Ok(format!("{REDUCTION_BATCHES} batches, max |diff| {worst:.1e} (loss and gradient)"))
}

// 3
fn as_sets(p: &Partition) -> BTreeSet<BTreeSet<usize>> {
    p.iter().map(|c| c.iter().copied().collect()).collect()
}

fn clustering_oracle() -> Check {
    let two = affinity_cluster(&DistanceMatrix::new(ndarray::array![[0.0, 0.3], [0.3, 0.0]]).unwrap());
    ensure(two.levels() == [vec![vec![0, 1]], vec![vec![0], vec![1]]], || {
        format!("2-class fixture gave {:?}", two.levels())
    })?;
    // Two tight pairs far apart: the first round joins each pair, the second
    // joins the pairs.
    let four = affinity_cluster(
        &DistanceMatrix::new(ndarray::array![
            [0.0, 0.1, 0.9, 0.9],
            [0.1, 0.0, 0.9, 0.9],
            [0.9, 0.9, 0.0, 0.1],
            [0.9, 0.9, 0.1, 0.0],
        ])
        .unwrap(),
    );
    let expected: Vec<Partition> = vec![
        vec![vec![0, 1, 2, 3]],
        vec![vec![0, 1], vec![2, 3]],
        vec![vec![0], vec![1], vec![2], vec![3]],
    ];
    ensure(four.levels() == expected.as_slice(), || {
        format!("4-class fixture gave {:?}", four.levels())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for trial in 0..RANDOM_MATRICES {
        let k = rng.random_range(2..16);
        let mut d = Array2::zeros((k, k));
        for i in 0..k {
            for j in i + 1..k {
                let v = rng.random_range(0.0..2.0);
                d[[i, j]] = v;
                d[[j, i]] = v;
            }
        }
        let h = affinity_cluster(&DistanceMatrix::new(d.clone()).unwrap());
        let levels = h.levels();
        ensure(levels[0].len() == 1 && levels.last().unwrap().len() == k, || {
            format!("trial {trial}: root or leaves wrong")
        })?;
        for l in 0..levels.len() - 1 {
            ensure(levels[l].len() < levels[l + 1].len(), || {
                format!("trial {trial}: level {l} not strictly coarser")
            })?;
            // Each finer cluster sits inside exactly one coarser cluster.
            for fine in &levels[l + 1] {
                let parents = levels[l].iter().filter(|c| fine.iter().all(|x| c.contains(x))).count();
                ensure(parents == 1, || format!("trial {trial}: level {} does not refine level {l}", l + 1))?;
            }
        }
        ensure(affinity_cluster(&DistanceMatrix::new(d.clone()).unwrap()) == h, || {
            format!("trial {trial}: nondeterministic")
        })?;

        let mut perm: Vec<usize> = (0..k).collect();
        for i in (1..k).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let mut pd = Array2::zeros((k, k));
        for i in 0..k {
            for j in 0..k {
                pd[[perm[i], perm[j]]] = d[[i, j]];
            }
        }
        let hp = affinity_cluster(&DistanceMatrix::new(pd).unwrap());
        ensure(hp.num_levels() == h.num_levels(), || format!("trial {trial}: level count changed"))?;
        for (l, (level, permuted)) in levels.iter().zip(hp.levels()).enumerate() {
            let mapped: Partition = level.iter().map(|c| c.iter().map(|&x| perm[x]).collect()).collect();
            ensure(as_sets(&mapped) == as_sets(permuted), || {
                format!("trial {trial}: not permutation equivariant at level {l}")
            })?;
        }
    }
    Ok(format!("fixtures exact; {RANDOM_MATRICES} random matrices refine and are equivariant"))
}

// 4
/// Three small ReLU networks with hand-fixed weights on six validation
/// points; all weights are small multiples of 1/4.
fn search_fixture() -> (Vec<ModelParams>, Samples) {
    let w = |m: usize, i: usize, j: usize, salt: usize| {
        let v = (i * 7 + j * 3 + m * 5 + salt * 11) % 9;
        (v as f64 - 4.0) / 4.0
    };
    let models = (0..3)
        .map(|m| {
            let enc = Layer {
                weight: Array2::from_shape_fn((4, 5), |(i, j)| w(m, i, j, 0)),
                bias: Array1::from_shape_fn(5, |j| w(m, 0, j, 1) / 2.0),
            };
            let pred = Layer {
                weight: Array2::from_shape_fn((5, 3), |(i, j)| w(m, i, j, 2)),
                bias: Array1::from_shape_fn(3, |j| w(m, j, 0, 3) / 4.0),
            };
            ModelParams::new(vec![enc], pred).unwrap()
        })
        .collect();
    let features = ndarray::array![
        [1.0, 0.0, 0.5, 0.0],
        [0.0, 1.0, 0.0, 0.5],
        [0.5, 0.5, 1.0, 0.0],
        [0.0, 0.0, 0.5, 1.0],
        [1.0, 1.0, 0.0, 0.0],
        [0.0, 0.5, 1.0, 1.0],
    ];
    let val = Samples {
        features,
        labels: vec![0, 0, 1, 1, 2, 2],
        num_classes: 3,
    };
    (models, val)
}

/// Forward pass with explicit loops.
fn oracle_logits(m: &ModelParams, x: &DenseMatrix) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|r| {
            let mut h: Vec<f64> = x.row(r).to_vec();
            for (li, layer) in m.layers().enumerate() {
                let mut out = vec![0.0; layer.outputs()];
                for (j, o) in out.iter_mut().enumerate() {
                    let mut s = layer.bias[j];
                    for (i, hi) in h.iter().enumerate() {
                        s += hi * layer.weight[[i, j]];
                    }
                    *o = if li < m.encoder.len() { s.max(0.0) } else { s };
                }
                h = out;
            }
            h
        })
        .collect()
}

/// Argmax with lower index on ties, plus the gap to the runner-up.
fn oracle_argmax(row: &[f64]) -> (usize, f64) {
    let mut best = 0;
    for (c, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = c;
        }
    }
    let gap = row
        .iter()
        .enumerate()
        .filter(|&(c, _)| c != best)
        .map(|(_, &v)| row[best] - v)
        .fold(f64::INFINITY, f64::min);
    (best, gap)
}

/// Macro-F1 from per-class true/false positive and false negative tallies.
fn oracle_macro_f1(pred: &[usize], labels: &[usize], k: usize) -> f64 {
    let mut total = 0.0;
    for c in 0..k {
        let tp = pred.iter().zip(labels).filter(|&(&p, &y)| p == c && y == c).count() as f64;
        let fp = pred.iter().zip(labels).filter(|&(&p, &y)| p == c && y != c).count() as f64;
        let fnn = pred.iter().zip(labels).filter(|&(&p, &y)| p != c && y == c).count() as f64;
        if tp > 0.0 {
            total += 2.0 * tp / (2.0 * tp + fp + fnn);
        }
    }
    total / k as f64
}

fn search_oracle() -> Check {
    let (models, val) = search_fixture();
    let pool = IngredientPool::new(models.iter().map(|m| Checkpoint::capture(m, 2, 1, 0.0)).collect()).unwrap();
    let k = val.num_classes;
    let mut min_gap = f64::INFINITY;
    // (size, method rank, subset, method, f1)
    let mut rows: Vec<(usize, u8, Vec<usize>, CombineMethod, f64)> = Vec::new();
    for mask in 1u32..8 {
        let subset: Vec<usize> = (0..3).filter(|i| mask & (1 << i) != 0).collect();
        let n = subset.len() as f64;
        let member: Vec<Vec<Vec<f64>>> = subset.iter().map(|&i| oracle_logits(&models[i], &val.features)).collect();
        // Ensemble: argmax of the summed logits, which orders like the mean.
        let summed: Vec<Vec<f64>> = (0..val.len())
            .map(|r| (0..k).map(|c| member.iter().map(|l| l[r][c]).sum()).collect())
            .collect();
        let mut pred = Vec::new();
        for row in &summed {
            let (p, gap) = oracle_argmax(row);
            min_gap = min_gap.min(gap / n);
            pred.push(p);
        }
        rows.push((subset.len(), 0, subset.clone(), CombineMethod::Ensemble, oracle_macro_f1(&pred, &val.labels, k)));
        // Soup: parameter sum over n, then the loop forward pass.
        let mut avg = models[subset[0]].zeros_like();
        let mut flat: Vec<Vec<f64>> = models[subset[0]].tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        for &i in &subset {
            for (f, t) in flat.iter_mut().zip(models[i].tensors()) {
                for (a, &b) in f.iter_mut().zip(t) {
                    *a += b;
                }
            }
        }
        for (dst, src) in avg.tensors_mut().into_iter().zip(&flat) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d = s / n;
            }
        }
        let mut pred = Vec::new();
        for row in oracle_logits(&avg, &val.features) {
            let (p, gap) = oracle_argmax(&row);
            min_gap = min_gap.min(gap);
            pred.push(p);
        }
        rows.push((subset.len(), 1, subset, CombineMethod::Soup, oracle_macro_f1(&pred, &val.labels, k)));
    }
    // Guard the fixture itself: rounding must not be able to flip an argmax.
    ensure(min_gap > 1e-6, || format!("fixture has a near tie (gap {min_gap:e})"))?;
    rows.sort_by(|a, b| (a.0, a.1, &a.2).cmp(&(b.0, b.1, &b.2)));
    let best = rows.iter().map(|r| r.4).fold(f64::NEG_INFINITY, f64::max);
    let oracle_winner = rows.iter().find(|r| r.4 == best).unwrap();

    let outcome = combinatorial_search(&pool, &val, &[CombineMethod::Ensemble, CombineMethod::Soup], 1..=3)
        .map_err(|e| e.to_string())?;
    ensure(outcome.table.len() == rows.len(), || {
        format!("table has {} rows, oracle {}", outcome.table.len(), rows.len())
    })?;
    for (got, want) in outcome.table.iter().zip(&rows) {
        ensure(
            got.method == want.3 && got.subset == want.2 && (got.val_f1 - want.4).abs() <= SEARCH_F1_TOL,
            || format!("row {} {:?} {} differs from oracle {} {:?} {}", got.method, got.subset, got.val_f1, want.3, want.2, want.4),
        )?;
    }
    let w = &outcome.winner;
    ensure(w.method == oracle_winner.3 && w.subset == oracle_winner.2, || {
        format!("winner {} {:?}, oracle {} {:?}", w.method, w.subset, oracle_winner.3, oracle_winner.2)
    })?;
    let distinct: BTreeSet<u64> = rows.iter().map(|r| r.4.to_bits()).collect();
    Ok(format!(
        "14 rows match, {} distinct scores, winner {} [{}] at {:.4}",
        distinct.len(),
        w.method,
        w.subset_label(),
        w.val_f1
    ))
}

// 5
fn soup_identities() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let theta = random_model(&[6, 5, 4], &mut rng);
        let pool = IngredientPool::new(vec![Checkpoint::capture(&theta, 2, 1, 0.0); 2]).unwrap();
        let theta = &pool.ingredients()[0].params;
        for subset in [[0usize, 0], [0, 1]] {
            let s = soup(&pool, &subset).map_err(|e| e.to_string())?;
            for (a, b) in s.tensors().into_iter().flatten().zip(theta.tensors().into_iter().flatten()) {
                worst = worst.max((a - b).abs());
            }
        }
        let batch = random_matrix(9, 6, &mut rng);
        let ens = ensemble_predict(&pool, &[1], &batch).map_err(|e| e.to_string())?;
        ensure(argmax_rows(&ens) == predict(theta, &batch).unwrap(), || {
            "singleton ensemble predictions differ from the member".into()
        })?;
        ensure(ens == forward(theta, &batch).unwrap(), || "singleton ensemble logits differ".into())?;
    }
    ensure(worst <= SOUP_IDENTITY_TOL, || format!("soup of a model with itself drifts by {worst:e}"))?;

    let mut margin = f64::INFINITY;
    for p in 0..GREEDY_POOLS {
        let k = rng.random_range(2..5);
        let d = rng.random_range(2..6);
        let size = rng.random_range(1..6);
        let base = random_model(&[d, 4, k], &mut rng);
        let members: Vec<Checkpoint> = (0..size)
            .map(|_| {
                // Perturbations of one model, as fine-tuned siblings would be.
                let mut m = base.clone();
                for t in m.tensors_mut() {
                    for v in t.iter_mut() {
                        *v += rng.random_range(-0.4..0.4);
                    }
                }
                Checkpoint::capture(&m, 2, 1, 0.0)
            })
            .collect();
        let n = rng.random_range(8..30);
        let val = Samples {
            features: random_matrix(n, d, &mut rng),
            labels: (0..n).map(|_| rng.random_range(0..k)).collect(),
            num_classes: k,
        };
        let best_single = members
            .iter()
            .map(|c| macro_f1(&predict(&c.params, &val.features).unwrap(), &val.labels, k).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        let pool = IngredientPool::new(members).unwrap();
        let greedy = greedy_soup(&pool, &val, rng.random()).map_err(|e| e.to_string())?;
        margin = margin.min(greedy.val_f1 - best_single);
        ensure(greedy.val_f1 >= best_single, || {
            format!("pool {p}: greedy {} below best single {best_single}", greedy.val_f1)
        })?;
    }
    Ok(format!(
        "soup(θ,θ) max drift {worst:e}; singleton ensembles exact; greedy ≥ best single on {GREEDY_POOLS} pools (min margin {margin:+.4})"
    ))
}

// 6, 7, 10 share these runs.
struct PipelineRun {
    dir: PathBuf,
    summary: Summary,
    elapsed: Duration,
}

fn run_pipeline(dir: &Path) -> Result<PipelineRun, String> {
    let config = RunConfig {
        output_dir: dir.to_path_buf(),
        ..RunConfig::default()
    };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
    let start = Instant::now();
    let summary = pool.install(|| cmd_pipeline(&config, false)).map_err(|e| e.to_string())?;
    Ok(PipelineRun {
        dir: dir.to_path_buf(),
        summary,
        elapsed: start.elapsed(),
    })
}

fn end_to_end(run: &PipelineRun) -> Check {
    let s = &run.summary;
    ensure(run.elapsed < PIPELINE_BUDGET, || format!("took {:?}", run.elapsed))?;
    ensure(s.baseline.val_f1 >= BASELINE_FLOOR, || {
        format!("baseline validation F1 {:.4}", s.baseline.val_f1)
    })?;
    let mut parts = vec![format!("baseline {:.4}", s.baseline.val_f1)];
    for m in &s.methods {
        let get = |x: Setting| m.setting(x).map(|r| r.l2_val_f1).ok_or_else(|| format!("{}: setting {x} missing", m.method));
        let (a, b, c) = (get(Setting::A)?, get(Setting::B)?, get(Setting::C)?);
        let best_ingredient = m.paths.iter().map(|p| p.l2_val_f1).fold(f64::NEG_INFINITY, f64::max);
        ensure(b >= best_ingredient, || format!("{}: B {b} below an ingredient {best_ingredient}", m.method))?;
        ensure(c >= b, || format!("{}: C {c} below B {b}", m.method))?;
        ensure(a <= b, || format!("{}: A {a} above B {b}", m.method))?;
        parts.push(format!("{} A {a:.4} <= B {b:.4} <= C {c:.4}", m.method));
    }
    parts.push(format!("{:.1}s on one thread", run.elapsed.as_secs_f64()));
    Ok(parts.join("; "))
}

fn files(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(dir).unwrap().to_path_buf();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

fn determinism(first: &PipelineRun, second: &PipelineRun) -> Check {
    let a = files(&first.dir);
    let b = files(&second.dir);
    ensure(a.keys().eq(b.keys()), || "runs wrote different file sets".into())?;
    // config.json records the output directory, the one intended difference.
    let mut compared = 0;
    let mut checkpoints = 0;
    for (path, bytes) in &a {
        if path == Path::new("config.json") {
            continue;
        }
        ensure(&b[path] == bytes, || format!("{} differs", path.display()))?;
        compared += 1;
        if path.extension().is_some_and(|e| e == "c2fm") {
            checkpoints += 1;
        }
    }
    ensure(checkpoints > 0 && a.contains_key(Path::new("summary.json")), || {
        "expected reports and checkpoints in the run".into()
    })?;
    Ok(format!("{compared} files byte-identical, {checkpoints} of them checkpoints"))
}

fn both_hierarchies(run: &PipelineRun) -> Check {
    let mut loaded: Vec<(String, ClassHierarchy)> = Vec::new();
    for name in ["weights", "confusion"] {
        let file = HierarchyFile::load(&run.dir.join(format!("hierarchy-{name}.json"))).map_err(|e| e.to_string())?;
        let (h, classes) = file.into_hierarchy().map_err(|e| e.to_string())?;
        ensure(h.num_classes() == 15 && classes.len() == 15, || format!("{name}: {} leaves", h.num_classes()))?;
        ensure(h.levels()[0].len() == 1 && h.levels().last().unwrap().len() == 15, || {
            format!("{name}: root or leaf level malformed")
        })?;
        let leaves: BTreeSet<usize> = h.levels().last().unwrap().iter().flatten().copied().collect();
        ensure(leaves == (0..15).collect(), || format!("{name}: leaves are not the 15 classes"))?;
        loaded.push((name.to_string(), h));
    }
    ensure(run.summary.methods.len() == 2, || "summary lacks a method".into())?;
    for m in &run.summary.methods {
        ensure(m.settings.len() == 3, || format!("{}: {} settings reported", m.method, m.settings.len()))?;
    }
    let differ = loaded[0].1 != loaded[1].1;
    Ok(format!(
        "weights {} levels, confusion {} levels, hierarchies {}",
        loaded[0].1.num_levels(),
        loaded[1].1.num_levels(),
        if differ { "differ" } else { "coincide" }
    ))
}

// 8
fn serialization() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for i in 0..10 {
        let m = random_model(&[7, 5, 3, 4], &mut rng);
        let c = Checkpoint::capture(&m, i % 3, i, rng.random()).with_lineage(i);
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).map_err(|e| e.to_string())?;
        ensure(back == c && back.to_bytes() == bytes, || "checkpoint round trip not exact".into())?;
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let c = Checkpoint::capture(&random_model(&[4, 3], &mut rng), 0, 2, 0.5);
    let path = dir.path().join("m.c2fm");
    c.save(&path).map_err(|e| e.to_string())?;
    ensure(Checkpoint::load(&path).map_err(|e| e.to_string())? == c, || "checkpoint file round trip".into())?;

    let bytes = c.to_bytes();
    let mut bad = bytes.clone();
    bad[0] ^= 0xff;
    ensure(matches!(Checkpoint::from_bytes(&bad), Err(NetworkError::BadMagic)), || "checkpoint magic".into())?;
    let mut bad = bytes.clone();
    bad[4] = 7;
    ensure(
        matches!(Checkpoint::from_bytes(&bad), Err(NetworkError::VersionUnsupported(7))),
        || "checkpoint version".into(),
    )?;
    for cut in [0, 3, 9, bytes.len() / 2, bytes.len() - 1] {
        ensure(matches!(Checkpoint::from_bytes(&bytes[..cut]), Err(NetworkError::TruncatedFile)), || {
            format!("checkpoint truncated at {cut}")
        })?;
    }

    let d = generate(&GeneratorConfig {
        seed: 3,
        counts: SampleCounts::PerClass(3),
        ..GeneratorConfig::default()
    })
    .map_err(|e| e.to_string())?;
    let bytes = d.to_bytes();
    let back = Dataset::from_bytes(&bytes).map_err(|e| e.to_string())?;
    ensure(back == d && back.to_bytes() == bytes, || "dataset round trip not exact".into())?;
    let path = dir.path().join("d.c2fd");
    d.save(&path).map_err(|e| e.to_string())?;
    ensure(Dataset::load(&path).map_err(|e| e.to_string())? == d, || "dataset file round trip".into())?;
    let mut bad = bytes.clone();
    bad[2] = b'?';
    ensure(matches!(Dataset::from_bytes(&bad), Err(DataError::BadMagic)), || "dataset magic".into())?;
    let mut bad = bytes.clone();
    bad[4] = 9;
    ensure(matches!(Dataset::from_bytes(&bad), Err(DataError::VersionUnsupported(9))), || {
        "dataset version".into()
    })?;
    for cut in [2, 12, bytes.len() / 2, bytes.len() - 1] {
        ensure(matches!(Dataset::from_bytes(&bytes[..cut]), Err(DataError::TruncatedFile)), || {
            format!("dataset truncated at {cut}")
        })?;
    }
    let mut bad = bytes.clone();
    let last = bad.len() - 2;
    bad[last..].copy_from_slice(&40u16.to_le_bytes());
    ensure(
        matches!(Dataset::from_bytes(&bad), Err(DataError::LabelOutOfRange { label: 40, .. })),
        || "dataset label range".into(),
    )?;
    Ok("checkpoints and datasets round-trip bit-exactly; magic, version, truncation and label errors raised".into())
}

// 9
fn metrics_oracle() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    for v in 0..METRIC_VECTORS {
        let k = rng.random_range(1..12);
        let n = rng.random_range(0..60);
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
        let r = evaluate(&pred, &labels, k).map_err(|e| e.to_string())?;
        let (mut sp, mut sr, mut sf) = (0.0, 0.0, 0.0);
        for c in 0..k {
            let mut tp = 0u64;
            let mut fp = 0u64;
            let mut fnn = 0u64;
            for (&p, &y) in pred.iter().zip(&labels) {
                match (p == c, y == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fnn += 1,
                    _ => {}
                }
            }
            let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let p = div(tp, tp + fp);
            let rc = div(tp, tp + fnn);
            let f = if p + rc == 0.0 { 0.0 } else { 2.0 * p * rc / (p + rc) };
            let got = r.per_class[c];
            ensure(got.precision == p && got.recall == rc && got.f1 == f, || {
                format!("vector {v} class {c}: {got:?} vs ({p}, {rc}, {f})")
            })?;
            ensure(r.confusion[c][c] == tp, || format!("vector {v}: confusion diagonal"))?;
            sp += p;
            sr += rc;
            sf += f;
        }
        let kf = k as f64;
        ensure(
            r.macro_precision == sp / kf && r.macro_recall == sr / kf && r.macro_f1 == sf / kf,
            || format!("vector {v}: macro averages differ"),
        )?;
    }
    // Half of each class right, the other half sent to the other class.
    let f1 = macro_f1(&[0, 1, 1, 0], &[0, 0, 1, 1], 2).map_err(|e| e.to_string())?;
    ensure(f1 == 0.5, || format!("balanced half fixture gave {f1}"))?;
    let f1 = macro_f1(&[0, 0, 0, 0], &[0, 0, 1, 1], 2).map_err(|e| e.to_string())?;
    ensure((f1 - 1.0 / 3.0).abs() < 1e-15, || format!("half-and-half fixture gave {f1}"))?;
    Ok(format!("{METRIC_VECTORS} random vectors exact; half-and-half fixture = 1/3"))
}

fn main() {
    let criteria: Vec<(&str, Criterion)> = vec![
        ("gradient correctness", Box::new(gradient_check)),
        ("singleton clusters reduce to cross-entropy", Box::new(singleton_reduction)),
        ("clustering oracle", Box::new(clustering_oracle)),
        ("combination search vs brute force", Box::new(search_oracle)),
        ("soup and ensemble identities", Box::new(soup_identities)),
    ];
    let mut results: Vec<(usize, &str, Check)> = Vec::new();
    let guarded = |f: Criterion| {
        catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()))
    };
    for (i, (name, f)) in criteria.into_iter().enumerate() {
        results.push((i + 1, name, guarded(f)));
    }

    let tmp = tempfile::tempdir().expect("temp dir");
    let first = catch_unwind(|| run_pipeline(&tmp.path().join("first")))
        .unwrap_or_else(|_| Err("pipeline panicked".into()));
    let second = catch_unwind(|| run_pipeline(&tmp.path().join("second")))
        .unwrap_or_else(|_| Err("pipeline panicked".into()));
    let with_first = |f: &dyn Fn(&PipelineRun) -> Check| match &first {
        Ok(run) => catch_unwind(AssertUnwindSafe(|| f(run))).unwrap_or_else(|_| Err("panicked".into())),
        Err(e) => Err(format!("pipeline failed: {e}")),
    };
    results.push((6, "end-to-end run", with_first(&end_to_end)));
    results.push((
        7,
        "determinism",
        match (&first, &second) {
            (Ok(a), Ok(b)) => determinism(a, b),
            (Err(e), _) | (_, Err(e)) => Err(format!("pipeline failed: {e}")),
        },
    ));
    results.push((8, "serialization", guarded(Box::new(serialization))));
    results.push((9, "metrics oracle", guarded(Box::new(metrics_oracle))));
    results.push((10, "both hierarchy methods", with_first(&both_hierarchies)));

    results.sort_by_key(|r| r.0);
    let mut failed = 0;
    for (i, name, result) in &results {
        match result {
            Ok(detail) => println!("criterion {i:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {i:>2} FAIL  {name}: {why}");
            }
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
