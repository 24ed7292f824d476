//! Model combination: weight soups, greedy soups, logit-averaging ensembles
//! and an exhaustive subset search scored by validation macro-F1.

mod search;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Samples;
use crate::metrics::{self, MetricsError};
use crate::network::{self, argmax_rows, Checkpoint, ModelParams, NetworkError};
use crate::DenseMatrix;

pub use search::{combinatorial_search, greedy_soup, SearchOutcome, MAX_SEARCH_POOL};

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("ingredient {index} has architecture {found:?}, expected {expected:?}")]
    ArchMismatch {
        index: usize,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("the ingredient pool is empty")]
    EmptyPool,
    #[error("a combination needs at least one ingredient")]
    EmptySubset,
    #[error("ingredient index {index} out of range for a pool of {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("exhaustive search over {0} ingredients exceeds the limit of {MAX_SEARCH_POOL}")]
    PoolTooLarge(usize),
    #[error("invalid subset size range {min}..={max} for a pool of {len}")]
    InvalidSizeRange { min: usize, max: usize, len: usize },
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CombineMethod {
    Ensemble,
    Soup,
    GreedySoup,
}

impl CombineMethod {
    pub fn name(self) -> &'static str {
        match self {
            CombineMethod::Ensemble => "ensemble",
            CombineMethod::Soup => "soup",
            CombineMethod::GreedySoup => "greedy-soup",
        }
    }
}

impl std::fmt::Display for CombineMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A scored combination. `subset` is a multiset of ingredient indices:
/// repeats only occur in greedy soups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationResult {
    pub subset: Vec<usize>,
    pub method: CombineMethod,
    pub val_f1: f64,
}

impl CombinationResult {
    /// Class predictions of this combination on `features`.
    pub fn predict(
        &self,
        pool: &IngredientPool,
        features: &DenseMatrix,
    ) -> Result<Vec<usize>, CombineError> {
        let logits = match self.method {
            CombineMethod::Ensemble => ensemble_predict(pool, &self.subset, features)?,
            CombineMethod::Soup | CombineMethod::GreedySoup => {
                network::forward(&soup(pool, &self.subset)?, features)?
            }
        };
        Ok(argmax_rows(&logits))
    }

    pub fn subset_label(&self) -> String {
        let parts: Vec<String> = self.subset.iter().map(|i| i.to_string()).collect();
        parts.join(" ")
    }
}

/// Search settings used by the curriculum's combination setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CombineConfig {
    /// Methods tried by the exhaustive search.
    pub methods: Vec<CombineMethod>,
    /// Search subsets of size 1 as well; turning this off searches 2..=K.
    pub include_singletons: bool,
    /// Largest subset size searched; `None` means the whole pool.
    pub max_size: Option<usize>,
    pub greedy_allow_repeats: bool,
}

impl Default for CombineConfig {
    fn default() -> Self {
        Self {
            methods: vec![CombineMethod::Ensemble, CombineMethod::Soup],
            include_singletons: true,
            max_size: None,
            greedy_allow_repeats: true,
        }
    }
}

impl CombineConfig {
    pub fn size_range(&self, pool_len: usize) -> std::ops::RangeInclusive<usize> {
        let min = if self.include_singletons { 1 } else { 2 };
        let max = self.max_size.unwrap_or(pool_len).min(pool_len);
        min..=max
    }
}

/// Checkpoints that share one architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct IngredientPool {
    ingredients: Vec<Checkpoint>,
}

impl IngredientPool {
    pub fn new(ingredients: Vec<Checkpoint>) -> Result<Self, CombineError> {
        let first = ingredients.first().ok_or(CombineError::EmptyPool)?;
        let expected = first.params.arch();
        for (index, c) in ingredients.iter().enumerate().skip(1) {
            let found = c.params.arch();
            if found != expected {
                return Err(CombineError::ArchMismatch {
                    index,
                    expected,
                    found,
                });
            }
        }
        Ok(Self { ingredients })
    }

    pub fn len(&self) -> usize {
        self.ingredients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ingredients.is_empty()
    }

    pub fn ingredients(&self) -> &[Checkpoint] {
        &self.ingredients
    }

    fn member(&self, index: usize) -> Result<&ModelParams, CombineError> {
        self.ingredients
            .get(index)
            .map(|c| &c.params)
            .ok_or(CombineError::IndexOutOfRange {
                index,
                len: self.len(),
            })
    }
}

/// Entrywise mean of the subset's parameters, repeats weighted by
/// multiplicity. A running mean keeps repeated identical members exact.
pub fn soup(pool: &IngredientPool, subset: &[usize]) -> Result<ModelParams, CombineError> {
    let (&first, rest) = subset.split_first().ok_or(CombineError::EmptySubset)?;
    let mut acc = pool.member(first)?.clone();
    for (n, &index) in rest.iter().enumerate() {
        let count = (n + 2) as f64;
        let member = pool.member(index)?;
        for (a, m) in acc.tensors_mut().into_iter().zip(member.tensors()) {
            for (x, &y) in a.iter_mut().zip(m) {
                *x += (y - *x) / count;
            }
        }
    }
    Ok(acc)
}

/// Mean of the subset members' logits on `batch`.
pub fn ensemble_predict(
    pool: &IngredientPool,
    subset: &[usize],
    batch: &DenseMatrix,
) -> Result<DenseMatrix, CombineError> {
    let logits = subset
        .iter()
        .map(|&i| Ok(network::forward(pool.member(i)?, batch)?))
        .collect::<Result<Vec<_>, CombineError>>()?;
    mean_logits(&logits.iter().collect::<Vec<_>>()).ok_or(CombineError::EmptySubset)
}

/// Running mean over logit matrices of equal shape.
pub(crate) fn mean_logits(members: &[&DenseMatrix]) -> Option<DenseMatrix> {
    let (first, rest) = members.split_first()?;
    let mut acc = (*first).clone();
    for (n, m) in rest.iter().enumerate() {
        let count = (n + 2) as f64;
        ndarray::Zip::from(&mut acc)
            .and(*m)
            .for_each(|x, &y| *x += (y - *x) / count);
    }
    Some(acc)
}

pub(crate) fn score(logits: &DenseMatrix, val: &Samples) -> Result<f64, CombineError> {
    Ok(metrics::macro_f1(&argmax_rows(logits), &val.labels, val.num_classes)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::Layer;
    use ndarray::{array, Array1, Array2};
    use proptest::prelude::*;

    fn ckpt(params: ModelParams) -> Checkpoint {
        Checkpoint {
            params,
            level: 2,
            epoch: 1,
            val_f1: 0.0,
            lineage: None,
        }
    }

    fn linear(w: DenseMatrix, b: Array1<f64>) -> ModelParams {
        ModelParams::new(vec![], Layer { weight: w, bias: b }).unwrap()
    }

    fn random_pool(n: usize, seed: u64) -> IngredientPool {
        IngredientPool::new(
            (0..n)
                .map(|i| ckpt(ModelParams::init(&[5, 4, 3], seed * 100 + i as u64).unwrap()))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn soup_of_identical_models_is_identity() {
        let pool = random_pool(1, 7);
        let theta = &pool.ingredients()[0].params;
        for reps in 1..6 {
            let s = soup(&pool, &vec![0; reps]).unwrap();
            for (a, b) in s.tensors().iter().zip(theta.tensors()) {
                for (x, y) in a.iter().zip(b) {
                    assert!((x - y).abs() <= 1e-15);
                }
            }
        }
    }

    #[test]
    fn soup_of_one_and_three_is_two() {
        let one = linear(array![[1.0, 1.0]], array![1.0, 1.0]);
        let three = linear(array![[3.0, 3.0]], array![3.0, 3.0]);
        let pool = IngredientPool::new(vec![ckpt(one), ckpt(three)]).unwrap();
        let s = soup(&pool, &[0, 1]).unwrap();
        assert_eq!(s.predictor.weight, array![[2.0, 2.0]]);
        assert_eq!(s.predictor.bias, array![2.0, 2.0]);
    }

    #[test]
    fn weighted_multiset_soup() {
        let pool = random_pool(2, 3);
        let (a, b) = (&pool.ingredients()[0].params, &pool.ingredients()[1].params);
        let s = soup(&pool, &[0, 1, 0]).unwrap();
        for ((ts, ta), tb) in s.tensors().iter().zip(a.tensors()).zip(b.tensors()) {
            for ((x, y), z) in ts.iter().zip(ta).zip(tb) {
                assert!((x - (2.0 * y + z) / 3.0).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn ensemble_tie_goes_to_lower_class() {
        let x = array![[1.0]];
        let a = linear(array![[2.0, 0.0]], array![0.0, 0.0]);
        let b = linear(array![[0.0, 2.0]], array![0.0, 0.0]);
        let pool = IngredientPool::new(vec![ckpt(a), ckpt(b)]).unwrap();
        let logits = ensemble_predict(&pool, &[0, 1], &x).unwrap();
        assert_eq!(logits, array![[1.0, 1.0]]);
        assert_eq!(argmax_rows(&logits), vec![0]);
    }

    #[test]
    fn ensemble_matches_accumulation_oracle() {
        let pool = random_pool(3, 11);
        let x = Array2::from_shape_fn((20, 5), |(i, j)| ((i * 7 + j * 3) % 11) as f64 / 5.0 - 1.0);
        let got = ensemble_predict(&pool, &[0, 1, 2], &x).unwrap();
        // straight-line oracle: sum member logits computed by explicit loops, divide by 3
        let mut want = Array2::<f64>::zeros((20, 3));
        for c in pool.ingredients() {
            let p = &c.params;
            for r in 0..20 {
                let mut h: Vec<f64> = x.row(r).to_vec();
                for layer in &p.encoder {
                    h = (0..layer.outputs())
                        .map(|o| {
                            let z: f64 = (0..layer.inputs()).map(|i| h[i] * layer.weight[[i, o]]).sum();
                            (z + layer.bias[o]).max(0.0)
                        })
                        .collect();
                }
                for o in 0..3 {
                    let z: f64 = (0..h.len()).map(|i| h[i] * p.predictor.weight[[i, o]]).sum();
                    want[[r, o]] += z + p.predictor.bias[o];
                }
            }
        }
        want /= 3.0;
        for (g, w) in got.iter().zip(want.iter()) {
            assert!((g - w).abs() < 1e-12);
        }
    }

    #[test]
    fn mismatched_pool_and_bad_subsets() {
        let a = ckpt(ModelParams::init(&[5, 3], 0).unwrap());
        let b = ckpt(ModelParams::init(&[5, 4], 0).unwrap());
        assert!(matches!(
            IngredientPool::new(vec![a.clone(), b]),
            Err(CombineError::ArchMismatch { index: 1, .. })
        ));
        assert!(matches!(IngredientPool::new(vec![]), Err(CombineError::EmptyPool)));
        let pool = IngredientPool::new(vec![a]).unwrap();
        assert!(matches!(soup(&pool, &[]), Err(CombineError::EmptySubset)));
        assert!(matches!(
            soup(&pool, &[0, 1]),
            Err(CombineError::IndexOutOfRange { index: 1, len: 1 })
        ));
    }

    proptest! {
        #[test]
        fn soup_is_permutation_invariant_and_linear(seed in 0u64..1000) {
            let pool = random_pool(2, seed);
            let ab = soup(&pool, &[0, 1]).unwrap();
            let ba = soup(&pool, &[1, 0]).unwrap();
            let (a, b) = (&pool.ingredients()[0].params, &pool.ingredients()[1].params);
            for (((x, y), ta), tb) in ab.tensors().iter().zip(ba.tensors()).zip(a.tensors()).zip(b.tensors()) {
                for (((u, v), p), q) in x.iter().zip(y.iter()).zip(ta).zip(tb) {
                    prop_assert!((u - (p + q) / 2.0).abs() <= 1e-15);
                    prop_assert!((u - v).abs() <= 1e-15);
                }
            }
        }

        #[test]
        fn identical_members_ensemble_exactly(seed in 0u64..1000, reps in 1usize..6) {
            let pool = random_pool(1, seed);
            let x = Array2::from_shape_fn((4, 5), |(i, j)| (i as f64 - j as f64) * 0.37);
            let single = network::forward(&pool.ingredients()[0].params, &x).unwrap();
            prop_assert_eq!(ensemble_predict(&pool, &vec![0; reps], &x).unwrap(), single);
        }
    }
}
