//! Coarse-to-fine curriculum learning for classification.
//!
//! The crate is organised around the stages of the method:
//!
//! * [`hierarchy`] derives a class hierarchy from a trained classifier, either
//!   from the cosine geometry of its predictor columns or from its soft
//!   confusion matrix, using Borůvka-style affinity clustering.
//! * [`network`] is a small feedforward classifier with hand-derived
//!   gradients, label-smoothing cross-entropy, the coarse cluster likelihood
//!   and Adagrad.
//! * [`curriculum`] trains the coarse task, keeps the top-K checkpoints and
//!   branches one fine-tuning path per checkpoint.
//! * [`combine`] searches soups, ensembles and greedy soups over the final
//!   checkpoints.
//! * [`metrics`] provides the macro-F1 used for every selection decision.
//! * [`data`] renders a synthetic 15-class chart dataset and stores it.
//! * [`pipeline`] wires everything into reproducible run directories.

pub mod combine;
pub mod curriculum;
pub mod data;
pub mod hierarchy;
pub mod metrics;
pub mod network;
pub mod pipeline;
pub mod rng;

/// Row-major 2-D array of `f64`; carrier for weights, distances, confusion
/// mass and logits.
pub type DenseMatrix = ndarray::Array2<f64>;
