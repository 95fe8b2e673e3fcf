//! Binary logistic regression with a bias term.
//!
//! Parameters are `[weights; bias]` of length d+1. The loss uses the
//! overflow-safe form `softplus(-z) + (1-y)·z`, so large gisette margins
//! never hit a raw `exp`. Per-sample gradient squared norms are computed
//! directly as `g_i²·(‖x_i‖²+1)` (with λ-cross terms when a penalty is set),
//! never by materializing the d+1 per-sample gradient.

use super::{BatchEvaluation, ModelError, ModelSpec};
use crate::datasets::LabeledDataset;
use crate::numerics::DenseVector;

/// `ln(1 + e^t)` without overflow on either tail.
pub(crate) fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}

/// σ(z), branch on sign to avoid overflow.
pub(crate) fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Per-sample data loss: `softplus(-z) + (1-y)·z` equals the cross-entropy
/// `-y·ln σ(z) - (1-y)·ln(1-σ(z))`.
fn sample_loss(z: f64, y: usize) -> f64 {
    softplus(-z) + (1 - y) as f64 * z
}

/// ½‖weights‖² (bias excluded), the per-sample penalty for coefficient λ=1.
fn half_weight_sq_norm(w: &DenseVector, d: usize) -> f64 {
    0.5 * crate::numerics::dot_slices(&w.as_slice()[..d], &w.as_slice()[..d])
}

pub(super) fn evaluate_loss(
    spec: &ModelSpec,
    w: &DenseVector,
    data: &LabeledDataset,
    batch: &[usize],
) -> Result<f64, ModelError> {
    let d = spec.input_dim;
    let bias = w[d];
    let mut loss_acc = 0.0;
    for &i in batch {
        let z = data.features().dot_row(i, &w.as_slice()[..d]) + bias;
        loss_acc += sample_loss(z, data.label(i));
    }
    let mut loss = loss_acc / batch.len() as f64;
    if spec.l2_penalty != 0.0 {
        loss += spec.l2_penalty * half_weight_sq_norm(w, d);
    }
    Ok(loss)
}

pub(super) fn evaluate_batch(
    spec: &ModelSpec,
    w: &DenseVector,
    data: &LabeledDataset,
    batch: &[usize],
) -> Result<BatchEvaluation, ModelError> {
    let d = spec.input_dim;
    let m = batch.len() as f64;
    let lambda = spec.l2_penalty;
    let bias = w[d];
    let weights = &w.as_slice()[..d];

    let mut loss_acc = 0.0;
    let mut grad = vec![0.0; d + 1];
    let mut msn_acc = 0.0;
    for &i in batch {
        let z = data.features().dot_row(i, weights) + bias;
        loss_acc += sample_loss(z, data.label(i));
        // dloss/dz
        let g = sigmoid(z) - data.label(i) as f64;
        data.features().add_row_scaled(i, g, &mut grad[..d]);
        grad[d] += g;
        let x_sq = data.features().row_squared_norm(i);
        let mut term = g * g * (x_sq + 1.0);
        if lambda != 0.0 {
            // ‖g·[x;1] + λ·[w;0]‖² expands with x·w = z - bias.
            let xw = z - bias;
            term += 2.0 * lambda * g * xw
                + lambda * lambda * crate::numerics::dot_slices(weights, weights);
        }
        msn_acc += term;
    }

    let mut loss = loss_acc / m;
    for v in grad.iter_mut() {
        *v /= m;
    }
    let mut mean_per_sample_sq_norm = msn_acc / m;
    if lambda != 0.0 {
        loss += lambda * half_weight_sq_norm(w, d);
        for (gv, wv) in grad[..d].iter_mut().zip(weights.iter()) {
            *gv += lambda * wv;
        }
    }
    let gradient = DenseVector::from_values(grad);
    if batch.len() == 1 {
        // Single-element mean: force bitwise agreement with ‖gradient‖².
        mean_per_sample_sq_norm = gradient.squared_norm();
    }
    Ok(BatchEvaluation {
        loss,
        gradient,
        mean_per_sample_sq_norm,
        batch_size: batch.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelProblem, Objective};
    use crate::numerics::DenseMatrix;

    fn one_sample_dataset() -> LabeledDataset {
        let features = DenseMatrix::new(vec![1.0, 0.0], 1, 2).unwrap();
        LabeledDataset::new(features, vec![1], 2).unwrap()
    }

    #[test]
    fn zero_weights_give_ln2_loss_and_half_gradient() {
        let data = one_sample_dataset();
        let problem = ModelProblem::new(ModelSpec::logistic(2), &data).unwrap();
        let w = DenseVector::zeros(3);
        let eval = problem.evaluate_batch(&w, &[0]).unwrap();
        assert!((eval.loss - 2.0f64.ln()).abs() < 1e-15);
        // σ(0) - 1 = -0.5 against x = (1, 0) and the bias slot.
        assert_eq!(eval.gradient.as_slice(), &[-0.5, 0.0, -0.5]);
    }

    #[test]
    fn single_sample_mean_norm_equals_gradient_norm_bitwise() {
        let data = one_sample_dataset();
        let problem = ModelProblem::new(ModelSpec::logistic(2), &data).unwrap();
        let w = DenseVector::new(vec![0.3, -0.7, 0.1]).unwrap();
        let eval = problem.evaluate_batch(&w, &[0]).unwrap();
        assert_eq!(eval.mean_per_sample_sq_norm, eval.gradient.squared_norm());
    }

    #[test]
    fn loss_field_matches_evaluate_loss_bitwise() {
        let features = DenseMatrix::new(vec![1.0, 2.0, -0.5, 0.25, 3.0, -1.0], 3, 2).unwrap();
        let data = LabeledDataset::new(features, vec![1, 0, 1], 2).unwrap();
        let spec = ModelSpec::logistic(2).with_l2_penalty(0.01);
        let problem = ModelProblem::new(spec, &data).unwrap();
        let w = DenseVector::new(vec![0.4, -0.2, 0.05]).unwrap();
        let batch = [2, 0, 1];
        let eval = problem.evaluate_batch(&w, &batch).unwrap();
        let loss = problem.evaluate_loss(&w, &batch).unwrap();
        assert_eq!(eval.loss, loss);
    }

    #[test]
    fn large_margins_do_not_overflow() {
        let features = DenseMatrix::new(vec![1e4, -1e4], 2, 1).unwrap();
        let data = LabeledDataset::new(features, vec![1, 0], 2).unwrap();
        let problem = ModelProblem::new(ModelSpec::logistic(1), &data).unwrap();
        let w = DenseVector::new(vec![100.0, 0.0]).unwrap();
        let eval = problem.evaluate_batch(&w, &[0, 1]).unwrap();
        assert!(eval.loss.is_finite());
        assert!(eval.gradient.all_finite());
        // both samples are classified correctly with huge margin
        assert!(eval.loss < 1e-12);
    }

    #[test]
    fn jensen_holds_on_mixed_batch() {
        let features =
            DenseMatrix::new(vec![1.0, 0.5, -0.25, 2.0, 0.0, -1.5, 0.75, 1.25], 4, 2).unwrap();
        let data = LabeledDataset::new(features, vec![0, 1, 1, 0], 2).unwrap();
        let problem = ModelProblem::new(ModelSpec::logistic(2), &data).unwrap();
        let w = DenseVector::new(vec![0.9, -0.4, 0.2]).unwrap();
        let eval = problem.evaluate_batch(&w, &[0, 1, 2, 3]).unwrap();
        let slack = 1e-9 * eval.mean_per_sample_sq_norm.max(1.0);
        assert!(eval.mean_per_sample_sq_norm >= eval.gradient.squared_norm() - slack);
    }
}
