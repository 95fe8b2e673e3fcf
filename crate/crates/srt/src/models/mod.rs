//! Differentiable models exposing the three per-batch quantities the ratio
//! estimators consume: batch loss, batch gradient, and the exact mean of
//! per-sample gradient squared norms (computed without materializing any
//! per-sample gradient).

mod checkpoint;
mod logistic;
mod mlp;
mod quadratic;

pub use checkpoint::{read_parameters, write_parameters};
pub use mlp::{per_sample_sq_norm_mlp, MlpLayout};

use crate::datasets::LabeledDataset;
use crate::numerics::{DenseVector, NumericsError, SeededRng};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parameter vector has length {got}, model requires {expected}")]
    ParameterLength { expected: usize, got: usize },
    #[error("batch index {index} out of range for {num_samples} samples")]
    BatchIndex { index: usize, num_samples: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("model expects input dimension {expected}, dataset has {got}")]
    InputDim { expected: usize, got: usize },
    #[error("model has {expected} outputs, dataset has {got} classes")]
    OutputDim { expected: usize, got: usize },
    #[error("invalid model spec: {0}")]
    Spec(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    LogisticRegression,
    Mlp,
}

/// Architecture plus loss configuration of a trainable model.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Hidden layer widths; MLP only, must be non-empty there.
    pub hidden_dims: Vec<usize>,
    /// Coefficient of the ½λ‖weights‖² penalty added to every per-sample
    /// loss (biases excluded), preserving F_S = mean f_i.
    pub l2_penalty: f64,
}

impl ModelSpec {
    pub fn logistic(input_dim: usize) -> Self {
        Self {
            kind: ModelKind::LogisticRegression,
            input_dim,
            output_dim: 1,
            hidden_dims: Vec::new(),
            l2_penalty: 0.0,
        }
    }

    pub fn mlp(input_dim: usize, hidden_dims: Vec<usize>, output_dim: usize) -> Self {
        Self {
            kind: ModelKind::Mlp,
            input_dim,
            output_dim,
            hidden_dims,
            l2_penalty: 0.0,
        }
    }

    pub fn with_l2_penalty(mut self, l2_penalty: f64) -> Self {
        self.l2_penalty = l2_penalty;
        self
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.input_dim == 0 || self.output_dim == 0 {
            return Err(ModelError::Spec("dimensions must be positive".into()));
        }
        if self.l2_penalty < 0.0 {
            return Err(ModelError::Spec("l2_penalty must be nonnegative".into()));
        }
        match self.kind {
            ModelKind::LogisticRegression => {
                if self.output_dim != 1 {
                    return Err(ModelError::Spec(
                        "logistic regression has output_dim 1".into(),
                    ));
                }
                if !self.hidden_dims.is_empty() {
                    return Err(ModelError::Spec(
                        "logistic regression has no hidden layers".into(),
                    ));
                }
            }
            ModelKind::Mlp => {
                if self.hidden_dims.is_empty() {
                    return Err(ModelError::Spec("mlp needs at least one hidden layer".into()));
                }
                if self.hidden_dims.iter().any(|&h| h == 0) {
                    return Err(ModelError::Spec("hidden widths must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Total flat parameter count, biases included.
    pub fn parameter_count(&self) -> usize {
        match self.kind {
            ModelKind::LogisticRegression => self.input_dim + 1,
            ModelKind::Mlp => MlpLayout::from_spec(self).parameter_count(),
        }
    }
}

/// Per-iteration quantities of one mini-batch evaluation.
///
/// `mean_per_sample_sq_norm` is the exact mean of `‖∇f_i‖²` over the batch;
/// by Jensen it dominates `‖gradient‖²` up to float slack.
#[derive(Debug, Clone)]
pub struct BatchEvaluation {
    pub loss: f64,
    pub gradient: DenseVector,
    pub mean_per_sample_sq_norm: f64,
    pub batch_size: usize,
}

/// A stochastic objective `F_S` that can be evaluated on index batches.
///
/// `evaluate_loss` must share the loss code path of `evaluate_batch` so the
/// two agree bit-for-bit at identical `(w, batch)`.
pub trait Objective {
    /// Length of the flat parameter vector.
    fn dim(&self) -> usize;

    /// Number of samples the batch indices range over.
    fn num_samples(&self) -> usize;

    /// Deterministic starting point; models with random initialization draw
    /// from the supplied generator.
    fn initial_point(&self, rng: &mut SeededRng) -> DenseVector;

    /// Batch loss, batch gradient, and exact mean per-sample `‖∇f_i‖²`.
    fn evaluate_batch(&self, w: &DenseVector, batch: &[usize]) -> Result<BatchEvaluation, ModelError>;

    /// Forward pass only; same loss definition as `evaluate_batch`.
    fn evaluate_loss(&self, w: &DenseVector, batch: &[usize]) -> Result<f64, ModelError>;

    /// Loss over the entire dataset.
    fn full_loss(&self, w: &DenseVector) -> Result<f64, ModelError> {
        let all: Vec<usize> = (0..self.num_samples()).collect();
        self.evaluate_loss(w, &all)
    }
}

/// A model spec bound to a dataset, forming a trainable objective.
pub struct ModelProblem<'a> {
    spec: ModelSpec,
    data: &'a LabeledDataset,
}

impl<'a> ModelProblem<'a> {
    pub fn new(spec: ModelSpec, data: &'a LabeledDataset) -> Result<Self, ModelError> {
        spec.validate()?;
        if spec.input_dim != data.feature_dim() {
            return Err(ModelError::InputDim {
                expected: spec.input_dim,
                got: data.feature_dim(),
            });
        }
        match spec.kind {
            ModelKind::LogisticRegression => {
                if data.num_classes() != 2 {
                    return Err(ModelError::OutputDim {
                        expected: 2,
                        got: data.num_classes(),
                    });
                }
            }
            ModelKind::Mlp => {
                if spec.output_dim != data.num_classes() {
                    return Err(ModelError::OutputDim {
                        expected: spec.output_dim,
                        got: data.num_classes(),
                    });
                }
            }
        }
        Ok(Self { spec, data })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn data(&self) -> &LabeledDataset {
        self.data
    }
}

impl Objective for ModelProblem<'_> {
    fn dim(&self) -> usize {
        self.spec.parameter_count()
    }

    fn num_samples(&self) -> usize {
        self.data.num_samples()
    }

    fn initial_point(&self, rng: &mut SeededRng) -> DenseVector {
        match self.spec.kind {
            ModelKind::LogisticRegression => DenseVector::zeros(self.dim()),
            ModelKind::Mlp => MlpLayout::from_spec(&self.spec).he_uniform_init(rng),
        }
    }

    fn evaluate_batch(&self, w: &DenseVector, batch: &[usize]) -> Result<BatchEvaluation, ModelError> {
        check_batch(batch, self.data.num_samples())?;
        check_len(w, self.dim())?;
        match self.spec.kind {
            ModelKind::LogisticRegression => logistic::evaluate_batch(&self.spec, w, self.data, batch),
            ModelKind::Mlp => mlp::evaluate_batch(&self.spec, w, self.data, batch),
        }
    }

    fn evaluate_loss(&self, w: &DenseVector, batch: &[usize]) -> Result<f64, ModelError> {
        check_batch(batch, self.data.num_samples())?;
        check_len(w, self.dim())?;
        match self.spec.kind {
            ModelKind::LogisticRegression => logistic::evaluate_loss(&self.spec, w, self.data, batch),
            ModelKind::Mlp => mlp::evaluate_loss(&self.spec, w, self.data, batch),
        }
    }
}

pub(crate) fn check_batch(batch: &[usize], num_samples: usize) -> Result<(), ModelError> {
    if batch.is_empty() {
        return Err(ModelError::EmptyBatch);
    }
    for &index in batch {
        if index >= num_samples {
            return Err(ModelError::BatchIndex { index, num_samples });
        }
    }
    Ok(())
}

pub(crate) fn check_len(w: &DenseVector, expected: usize) -> Result<(), ModelError> {
    if w.len() != expected {
        return Err(ModelError::ParameterLength {
            expected,
            got: w.len(),
        });
    }
    Ok(())
}
