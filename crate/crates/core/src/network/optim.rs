use super::{ModelParams, NetworkError};

/// Adagrad accumulators plus step settings.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub accumulators: ModelParams,
    pub learning_rate: f64,
    pub epsilon: f64,
}

impl OptimizerState {
    /// Zero accumulators shaped like `m`.
    pub fn new(m: &ModelParams, learning_rate: f64, epsilon: f64) -> Self {
        Self {
            accumulators: m.zeros_like(),
            learning_rate,
            epsilon,
        }
    }
}

/// One Adagrad update: `acc += g²`, `θ -= lr·g / (√acc + ε)`.
pub fn adagrad_step(
    m: &mut ModelParams,
    grad: &ModelParams,
    state: &mut OptimizerState,
) -> Result<(), NetworkError> {
    if m.arch() != grad.arch() || m.arch() != state.accumulators.arch() {
        return Err(NetworkError::ShapeMismatch(format!(
            "parameters {:?}, gradient {:?}, accumulators {:?}",
            m.arch(),
            grad.arch(),
            state.accumulators.arch()
        )));
    }
    let (lr, eps) = (state.learning_rate, state.epsilon);
    for ((theta, acc), g) in m
        .tensors_mut()
        .into_iter()
        .zip(state.accumulators.tensors_mut())
        .zip(grad.tensors())
    {
        for ((t, a), &g) in theta.iter_mut().zip(acc.iter_mut()).zip(g) {
            *a += g * g;
            *t -= lr * g / (a.sqrt() + eps);
        }
    }
    Ok(())
}
