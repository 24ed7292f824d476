//! Feedforward classifier with hand-derived gradients.
//!
//! The model is an encoder stack of affine layers, each followed by a ReLU,
//! and a linear predictor whose `E×K` weight matrix holds one column per
//! output class. Batches are row-major `B×D` matrices.

mod checkpoint;
mod loss;
mod optim;

use ndarray::{Array1, Array2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::DenseMatrix;

pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{argmax_rows, coarse_cluster_loss, smoothed_ce_loss, softmax_rows, LossConfig};
pub use optim::{adagrad_step, OptimizerState};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("architecture needs at least an input and an output dimension of 2+, got {0:?}")]
    InvalidArch(Vec<usize>),
    #[error("non-finite value encountered: {0}")]
    NonFinite(String),
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checkpoint format version {0} is not supported")]
    VersionUnsupported(u32),
    #[error("checkpoint file is truncated")]
    TruncatedFile,
    #[error("checkpoint file has {0} trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
}

/// An affine layer `x ↦ x·W + b` with `W` of shape `in×out`.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub weight: DenseMatrix,
    pub bias: Array1<f64>,
}

impl Layer {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Array2::zeros((inputs, outputs)),
            bias: Array1::zeros(outputs),
        }
    }

    fn uniform(inputs: usize, outputs: usize, bound: f64, rng: &mut ChaCha8Rng) -> Self {
        let weight = Array2::from_shape_simple_fn((inputs, outputs), || {
            rng.random_range(-bound..bound)
        });
        Self {
            weight,
            bias: Array1::zeros(outputs),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.nrows()
    }

    pub fn outputs(&self) -> usize {
        self.weight.ncols()
    }
}

/// Encoder layers (ReLU after each) plus the predictor.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Vec<Layer>,
    pub predictor: Layer,
}

impl ModelParams {
    /// Checks that adjacent layer dimensions agree and the predictor has at
    /// least two outputs.
    pub fn new(encoder: Vec<Layer>, predictor: Layer) -> Result<Self, NetworkError> {
        let m = Self { encoder, predictor };
        let layers: Vec<&Layer> = m.layers().collect();
        for l in &layers {
            if l.bias.len() != l.outputs() {
                return Err(NetworkError::ShapeMismatch("bias length".into()));
            }
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(NetworkError::ShapeMismatch(format!(
                    "layer emits {} features but next layer takes {}",
                    pair[0].outputs(),
                    pair[1].inputs()
                )));
            }
        }
        if m.k_out() < 2 || m.input_dim() == 0 {
            return Err(NetworkError::InvalidArch(m.arch()));
        }
        Ok(m)
    }

    /// Random initialization for the layer dimensions `dims`
    /// (`[input, hidden.., embedding, k_out]`): He-uniform encoder layers,
    /// Glorot-uniform predictor, zero biases.
    pub fn init(dims: &[usize], seed: u64) -> Result<Self, NetworkError> {
        if dims.len() < 2 || dims.contains(&0) || dims[dims.len() - 1] < 2 {
            return Err(NetworkError::InvalidArch(dims.to_vec()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = dims.len();
        let encoder = dims[..n - 1]
            .windows(2)
            .map(|w| Layer::uniform(w[0], w[1], (6.0 / w[0] as f64).sqrt(), &mut rng))
            .collect();
        let (e, k) = (dims[n - 2], dims[n - 1]);
        let predictor = Layer::uniform(e, k, glorot_bound(e, k), &mut rng);
        Self::new(encoder, predictor)
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            encoder: self
                .encoder
                .iter()
                .map(|l| Layer::zeros(l.inputs(), l.outputs()))
                .collect(),
            predictor: Layer::zeros(self.predictor.inputs(), self.predictor.outputs()),
        }
    }

    pub fn layers(&self) -> impl Iterator<Item = &Layer> {
        self.encoder.iter().chain(std::iter::once(&self.predictor))
    }

    /// Layer dimensions `[input, encoder outputs.., k_out]`.
    pub fn arch(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers().map(Layer::outputs))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.encoder
            .first()
            .unwrap_or(&self.predictor)
            .inputs()
    }

    pub fn embedding_dim(&self) -> usize {
        self.predictor.inputs()
    }

    pub fn k_out(&self) -> usize {
        self.predictor.outputs()
    }

    /// Parameter tensors in declaration order: for each encoder layer its
    /// weight then bias, then the predictor weight and bias.
    pub fn tensors(&self) -> Vec<&[f64]> {
        self.layers()
            .flat_map(|l| {
                [
                    l.weight.as_slice().expect("standard layout"),
                    l.bias.as_slice().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        self.encoder
            .iter_mut()
            .chain(std::iter::once(&mut self.predictor))
            .flat_map(|l| {
                [
                    l.weight.as_slice_mut().expect("standard layout"),
                    l.bias.as_slice_mut().expect("standard layout"),
                ]
            })
            .collect()
    }

    pub fn num_parameters(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Copy with every parameter rounded to the nearest `f32`, the precision
    /// checkpoints are stored at.
    pub fn rounded_to_f32(&self) -> Self {
        let mut out = self.clone();
        for t in out.tensors_mut() {
            for v in t.iter_mut() {
                *v = f64::from(*v as f32);
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

fn glorot_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

/// Replaces the predictor with a fresh Glorot-uniform `E×new_k_out` layer and
/// zero bias; encoder parameters are untouched.
pub fn reinit_predictor(
    m: &ModelParams,
    new_k_out: usize,
    seed: u64,
) -> Result<ModelParams, NetworkError> {
    if new_k_out < 2 {
        let mut arch = m.arch();
        *arch.last_mut().expect("nonempty arch") = new_k_out;
        return Err(NetworkError::InvalidArch(arch));
    }
    let e = m.embedding_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let predictor = Layer::uniform(e, new_k_out, glorot_bound(e, new_k_out), &mut rng);
    ModelParams::new(m.encoder.clone(), predictor)
}

/// Post-activation values of every encoder layer, input first.
struct Trace {
    activations: Vec<DenseMatrix>,
    logits: DenseMatrix,
}

fn affine(x: &DenseMatrix, layer: &Layer) -> DenseMatrix {
    let mut z = x.dot(&layer.weight);
    z += &layer.bias;
    z
}

fn check_input(m: &ModelParams, batch: &DenseMatrix) -> Result<(), NetworkError> {
    if batch.ncols() != m.input_dim() {
        return Err(NetworkError::ShapeMismatch(format!(
            "batch has {} features, model expects {}",
            batch.ncols(),
            m.input_dim()
        )));
    }
    Ok(())
}

fn trace(m: &ModelParams, batch: &DenseMatrix) -> Result<Trace, NetworkError> {
    check_input(m, batch)?;
    let mut activations = Vec::with_capacity(m.encoder.len() + 1);
    activations.push(batch.to_owned());
    for layer in &m.encoder {
        let mut z = affine(activations.last().expect("input present"), layer);
        z.mapv_inplace(|v| v.max(0.0));
        activations.push(z);
    }
    let logits = affine(activations.last().expect("input present"), &m.predictor);
    Ok(Trace {
        activations,
        logits,
    })
}

/// Logits (`B×K_out`) for a batch of `B×D` features.
pub fn forward(m: &ModelParams, batch: &DenseMatrix) -> Result<DenseMatrix, NetworkError> {
    check_input(m, batch)?;
    let mut h = batch.to_owned();
    for layer in &m.encoder {
        h = affine(&h, layer);
        h.mapv_inplace(|v| v.max(0.0));
    }
    Ok(affine(&h, &m.predictor))
}

fn backward_trace(m: &ModelParams, t: &Trace, grad_logits: &DenseMatrix) -> ModelParams {
    let mut grads = m.zeros_like();
    let top = t.activations.last().expect("input present");
    grads.predictor.weight = top.t().dot(grad_logits);
    grads.predictor.bias = grad_logits.sum_axis(Axis(0));
    let mut upstream = grad_logits.dot(&m.predictor.weight.t());
    for l in (0..m.encoder.len()).rev() {
        // ReLU passes gradient where its output is positive.
        ndarray::Zip::from(&mut upstream)
            .and(&t.activations[l + 1])
            .for_each(|g, &a| {
                if a <= 0.0 {
                    *g = 0.0;
                }
            });
        grads.encoder[l].weight = t.activations[l].t().dot(&upstream);
        grads.encoder[l].bias = upstream.sum_axis(Axis(0));
        if l > 0 {
            upstream = upstream.dot(&m.encoder[l].weight.t());
        }
    }
    grads
}

/// Gradient of a loss with respect to every parameter, given the gradient
/// of that loss with respect to the logits of `batch`.
pub fn backward(
    m: &ModelParams,
    batch: &DenseMatrix,
    grad_logits: &DenseMatrix,
) -> Result<ModelParams, NetworkError> {
    if grad_logits.dim() != (batch.nrows(), m.k_out()) {
        return Err(NetworkError::ShapeMismatch(format!(
            "grad_logits {:?} for batch of {} and {} outputs",
            grad_logits.dim(),
            batch.nrows(),
            m.k_out()
        )));
    }
    let t = trace(m, batch)?;
    Ok(backward_trace(m, &t, grad_logits))
}

/// Forward pass, loss and gradient in one go. `loss_fn` maps logits to
/// `(loss, d loss / d logits)`.
pub fn loss_and_gradient<F>(
    m: &ModelParams,
    batch: &DenseMatrix,
    loss_fn: F,
) -> Result<(f64, ModelParams), NetworkError>
where
    F: FnOnce(&DenseMatrix) -> (f64, DenseMatrix),
{
    let t = trace(m, batch)?;
    let (loss, grad_logits) = loss_fn(&t.logits);
    if !loss.is_finite() {
        return Err(NetworkError::NonFinite(format!("loss = {loss}")));
    }
    Ok((loss, backward_trace(m, &t, &grad_logits)))
}

/// Predicted class per row, ties toward the lower index.
pub fn predict(m: &ModelParams, batch: &DenseMatrix) -> Result<Vec<usize>, NetworkError> {
    forward(m, batch).map(|logits| argmax_rows(&logits))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
        Array2::from_shape_simple_fn((rows, cols), || rng.random_range(-1.0..1.0))
    }

    #[test]
    fn zero_model_gives_zero_logits() {
        let m = ModelParams::new(vec![Layer::zeros(4, 3)], Layer::zeros(3, 2)).unwrap();
        let x = Array2::from_elem((5, 4), 0.7);
        assert!(forward(&m, &x).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identity_network_passes_input_through() {
        let enc = Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let pred = Layer {
            weight: Array2::eye(3),
            bias: Array1::zeros(3),
        };
        let m = ModelParams::new(vec![enc], pred).unwrap();
        let x = array![[0.1, 0.5, 1.0], [0.0, 0.25, 0.75]];
        assert_eq!(forward(&m, &x).unwrap(), x);
    }

    #[test]
    fn forward_matches_loop_oracle() {
        let m = ModelParams::init(&[5, 4, 3, 3], 11).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(6, 5, &mut rng);
        let got = forward(&m, &x).unwrap();
        for b in 0..6 {
            let mut h: Vec<f64> = x.row(b).to_vec();
            for (li, layer) in m.layers().enumerate() {
                let mut next = vec![0.0; layer.outputs()];
                for (o, slot) in next.iter_mut().enumerate() {
                    let mut acc = layer.bias[o];
                    for (i, hv) in h.iter().enumerate() {
                        acc += hv * layer.weight[[i, o]];
                    }
                    *slot = if li < m.encoder.len() { acc.max(0.0) } else { acc };
                }
                h = next;
            }
            for (c, v) in h.iter().enumerate() {
                assert!((got[[b, c]] - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn shape_errors() {
        let m = ModelParams::init(&[4, 3, 2], 0).unwrap();
        let x = Array2::zeros((2, 5));
        assert!(matches!(forward(&m, &x), Err(NetworkError::ShapeMismatch(_))));
        let x = Array2::zeros((2, 4));
        let g = Array2::zeros((3, 2));
        assert!(matches!(backward(&m, &x, &g), Err(NetworkError::ShapeMismatch(_))));
        assert!(ModelParams::new(vec![Layer::zeros(4, 3)], Layer::zeros(2, 2)).is_err());
        assert!(ModelParams::init(&[4, 1], 0).is_err());
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let m = ModelParams::init(&[4, 3, 2], 5).unwrap();
        let x = Array2::from_elem((3, 4), 0.3);
        let g = backward(&m, &x, &Array2::zeros((3, 2))).unwrap();
        assert!(g.tensors().iter().all(|t| t.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn single_linear_layer_closed_form() {
        let m = ModelParams::init(&[4, 3], 9).unwrap();
        assert!(m.encoder.is_empty());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_matrix(5, 4, &mut rng);
        // Per-sample logit gradients; the batch mean scales them by 1/B.
        let per_sample = random_matrix(5, 3, &mut rng);
        let g = backward(&m, &x, &(&per_sample / 5.0)).unwrap();
        let expected = x.t().dot(&per_sample) / 5.0;
        for (a, b) in g.predictor.weight.iter().zip(expected.iter()) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn reinit_keeps_encoder_and_is_seeded() {
        let m = ModelParams::init(&[6, 5, 4, 2], 1).unwrap();
        let a = reinit_predictor(&m, 7, 42).unwrap();
        let b = reinit_predictor(&m, 7, 42).unwrap();
        let c = reinit_predictor(&m, 7, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.predictor, c.predictor);
        assert_eq!(a.encoder, m.encoder);
        assert_eq!(a.arch(), vec![6, 5, 4, 7]);
        assert!(a.predictor.bias.iter().all(|&v| v == 0.0));
        let bound = glorot_bound(4, 7);
        assert!(a.predictor.weight.iter().all(|v| v.abs() <= bound));
        assert!(reinit_predictor(&m, 1, 0).is_err());
    }

    #[test]
    fn rounding_is_idempotent() {
        let m = ModelParams::init(&[3, 2, 2], 4).unwrap();
        let r = m.rounded_to_f32();
        assert_eq!(r.rounded_to_f32(), r);
        assert_eq!(m.num_parameters(), 3 * 2 + 2 + 2 * 2 + 2);
    }
}
