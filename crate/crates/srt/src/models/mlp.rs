//! Feed-forward network: ReLU hidden layers, softmax cross-entropy output,
//! He-uniform initialization. Gradients come from a hand-rolled backward
//! pass; per-sample gradient squared norms use the factorization
//! `‖δ·xᵀ‖²_F = ‖δ‖²·‖x‖²` per linear layer, so no per-sample gradient is
//! ever materialized.

use super::{BatchEvaluation, ModelError, ModelSpec};
use crate::datasets::LabeledDataset;
use crate::numerics::{dot_slices, DenseVector, SeededRng};

/// Flat parameter layout of an MLP: `[W_0, b_0, W_1, b_1, ...]` with each
/// `W_ℓ` row-major `(out × in)`.
#[derive(Debug, Clone)]
pub struct MlpLayout {
    dims: Vec<usize>,
}

impl MlpLayout {
    pub fn from_spec(spec: &ModelSpec) -> Self {
        let mut dims = Vec::with_capacity(spec.hidden_dims.len() + 2);
        dims.push(spec.input_dim);
        dims.extend_from_slice(&spec.hidden_dims);
        dims.push(spec.output_dim);
        Self { dims }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn num_layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn parameter_count(&self) -> usize {
        (0..self.num_layers())
            .map(|l| self.dims[l + 1] * (self.dims[l] + 1))
            .sum()
    }

    fn layer_offset(&self, layer: usize) -> usize {
        (0..layer)
            .map(|l| self.dims[l + 1] * (self.dims[l] + 1))
            .sum()
    }

    pub fn weights<'a>(&self, params: &'a [f64], layer: usize) -> &'a [f64] {
        let off = self.layer_offset(layer);
        &params[off..off + self.dims[layer + 1] * self.dims[layer]]
    }

    pub fn biases<'a>(&self, params: &'a [f64], layer: usize) -> &'a [f64] {
        let off = self.layer_offset(layer) + self.dims[layer + 1] * self.dims[layer];
        &params[off..off + self.dims[layer + 1]]
    }

    fn weights_mut<'a>(&self, params: &'a mut [f64], layer: usize) -> &'a mut [f64] {
        let off = self.layer_offset(layer);
        &mut params[off..off + self.dims[layer + 1] * self.dims[layer]]
    }

    fn biases_mut<'a>(&self, params: &'a mut [f64], layer: usize) -> &'a mut [f64] {
        let off = self.layer_offset(layer) + self.dims[layer + 1] * self.dims[layer];
        &mut params[off..off + self.dims[layer + 1]]
    }

    /// He-uniform weights `U(±√(6/fan_in))`, zero biases.
    pub fn he_uniform_init(&self, rng: &mut SeededRng) -> DenseVector {
        let mut params = vec![0.0; self.parameter_count()];
        for layer in 0..self.num_layers() {
            let bound = (6.0 / self.dims[layer] as f64).sqrt();
            for w in self.weights_mut(&mut params, layer) {
                *w = rng.uniform_in(-bound, bound);
            }
        }
        DenseVector::from_values(params)
    }
}

/// One sample's forward trace: layer inputs, pre-activations, and loss.
struct ForwardTrace {
    /// `inputs[ℓ]` is the input fed to layer ℓ (so `inputs[0]` is the data).
    inputs: Vec<DenseVector>,
    /// `pre_acts[ℓ] = W_ℓ·inputs[ℓ] + b_ℓ`.
    pre_acts: Vec<DenseVector>,
    loss: f64,
}

fn forward_sample(
    layout: &MlpLayout,
    params: &[f64],
    data: &LabeledDataset,
    sample: usize,
) -> ForwardTrace {
    let num_layers = layout.num_layers();
    let mut inputs = Vec::with_capacity(num_layers);
    let mut pre_acts = Vec::with_capacity(num_layers);

    let mut x = vec![0.0; layout.dims[0]];
    data.features().copy_row_into(sample, &mut x);
    for layer in 0..num_layers {
        let out_dim = layout.dims[layer + 1];
        let weights = layout.weights(params, layer);
        let biases = layout.biases(params, layer);
        let in_dim = layout.dims[layer];
        let mut z = vec![0.0; out_dim];
        for (r, zr) in z.iter_mut().enumerate() {
            *zr = dot_slices(&weights[r * in_dim..(r + 1) * in_dim], &x) + biases[r];
        }
        inputs.push(DenseVector::from_values(x.clone()));
        pre_acts.push(DenseVector::from_values(z.clone()));
        if layer + 1 < num_layers {
            for v in z.iter_mut() {
                if *v < 0.0 {
                    *v = 0.0;
                }
            }
        }
        x = z;
    }

    // Softmax cross-entropy on the logits (last pre-activation).
    let logits = &x;
    let label = data.label(sample);
    let zmax = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for &z in logits.iter() {
        sum += (z - zmax).exp();
    }
    let loss = zmax + sum.ln() - logits[label];

    ForwardTrace {
        inputs,
        pre_acts,
        loss,
    }
}

/// Backward pass: per-layer deltas `∂loss_i/∂z_ℓ` for one sample.
fn backward_sample(layout: &MlpLayout, params: &[f64], trace: &ForwardTrace, label: usize) -> Vec<DenseVector> {
    let num_layers = layout.num_layers();
    let mut deltas: Vec<DenseVector> = Vec::with_capacity(num_layers);

    // softmax - onehot at the output
    let logits = trace.pre_acts[num_layers - 1].as_slice();
    let zmax = logits.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
    let mut sum = 0.0;
    for &z in logits {
        sum += (z - zmax).exp();
    }
    let mut delta: Vec<f64> = logits.iter().map(|&z| (z - zmax).exp() / sum).collect();
    delta[label] -= 1.0;
    deltas.push(DenseVector::from_values(delta));

    for layer in (0..num_layers - 1).rev() {
        let upstream = deltas.last().unwrap();
        let weights = layout.weights(params, layer + 1);
        let in_dim = layout.dims[layer + 1];
        let out_dim = layout.dims[layer + 2];
        let z = trace.pre_acts[layer].as_slice();
        let mut delta = vec![0.0; in_dim];
        for (j, dj) in delta.iter_mut().enumerate() {
            if z[j] > 0.0 {
                let mut acc = 0.0;
                for r in 0..out_dim {
                    acc += weights[r * in_dim + j] * upstream[r];
                }
                *dj = acc;
            }
        }
        deltas.push(DenseVector::from_values(delta));
    }
    deltas.reverse();
    deltas
}

/// Batch mean of per-sample gradient squared norms from layer activations
/// and deltas alone: per layer, weight part `‖δ‖²·‖x‖²` plus bias part
/// `‖δ‖²`, summed over layers and averaged over samples.
pub fn per_sample_sq_norm_mlp(
    layer_inputs: &[Vec<DenseVector>],
    layer_deltas: &[Vec<DenseVector>],
) -> Result<f64, ModelError> {
    if layer_inputs.len() != layer_deltas.len() {
        return Err(ModelError::Shape(format!(
            "{} input layers vs {} delta layers",
            layer_inputs.len(),
            layer_deltas.len()
        )));
    }
    if layer_inputs.is_empty() {
        return Err(ModelError::Shape("no layers".into()));
    }
    let samples = layer_inputs[0].len();
    if samples == 0 {
        return Err(ModelError::EmptyBatch);
    }
    for (layer, (xs, ds)) in layer_inputs.iter().zip(layer_deltas.iter()).enumerate() {
        if xs.len() != samples || ds.len() != samples {
            return Err(ModelError::Shape(format!(
                "layer {layer} holds {} inputs and {} deltas, expected {samples}",
                xs.len(),
                ds.len()
            )));
        }
    }
    let mut acc = 0.0;
    for i in 0..samples {
        let mut total = 0.0;
        for (xs, ds) in layer_inputs.iter().zip(layer_deltas.iter()) {
            let delta_sq = ds[i].squared_norm();
            total += delta_sq * (xs[i].squared_norm() + 1.0);
        }
        acc += total;
    }
    Ok(acc / samples as f64)
}

fn weight_sq_norm_total(layout: &MlpLayout, params: &[f64]) -> f64 {
    let mut acc = 0.0;
    for layer in 0..layout.num_layers() {
        let w = layout.weights(params, layer);
        acc += dot_slices(w, w);
    }
    acc
}

pub(super) fn evaluate_loss(
    spec: &ModelSpec,
    w: &DenseVector,
    data: &LabeledDataset,
    batch: &[usize],
) -> Result<f64, ModelError> {
    let layout = MlpLayout::from_spec(spec);
    let params = w.as_slice();
    let mut loss_acc = 0.0;
    for &i in batch {
        loss_acc += forward_sample(&layout, params, data, i).loss;
    }
    let mut loss = loss_acc / batch.len() as f64;
    if spec.l2_penalty != 0.0 {
        loss += spec.l2_penalty * 0.5 * weight_sq_norm_total(&layout, params);
    }
    Ok(loss)
}

pub(super) fn evaluate_batch(
    spec: &ModelSpec,
    w: &DenseVector,
    data: &LabeledDataset,
    batch: &[usize],
) -> Result<BatchEvaluation, ModelError> {
    let layout = MlpLayout::from_spec(spec);
    let params = w.as_slice();
    let num_layers = layout.num_layers();
    let m = batch.len() as f64;
    let lambda = spec.l2_penalty;

    let mut layer_inputs: Vec<Vec<DenseVector>> = vec![Vec::with_capacity(batch.len()); num_layers];
    let mut layer_deltas: Vec<Vec<DenseVector>> = vec![Vec::with_capacity(batch.len()); num_layers];
    let mut layer_preacts: Vec<Vec<DenseVector>> = vec![Vec::with_capacity(batch.len()); num_layers];

    let mut loss_acc = 0.0;
    for &i in batch {
        let trace = forward_sample(&layout, params, data, i);
        loss_acc += trace.loss;
        let deltas = backward_sample(&layout, params, &trace, data.label(i));
        for layer in 0..num_layers {
            layer_inputs[layer].push(trace.inputs[layer].clone());
            layer_preacts[layer].push(trace.pre_acts[layer].clone());
        }
        for (layer, delta) in deltas.into_iter().enumerate() {
            layer_deltas[layer].push(delta);
        }
    }

    // Batch-mean gradient, accumulated layer by layer in batch order.
    let mut grad = vec![0.0; layout.parameter_count()];
    for layer in 0..num_layers {
        let in_dim = layout.dims[layer];
        let out_dim = layout.dims[layer + 1];
        for s in 0..batch.len() {
            let x = layer_inputs[layer][s].as_slice();
            let delta = layer_deltas[layer][s].as_slice();
            let gw = layout.weights_mut(&mut grad, layer);
            for r in 0..out_dim {
                let dr = delta[r];
                if dr != 0.0 {
                    let row = &mut gw[r * in_dim..(r + 1) * in_dim];
                    for (g, xv) in row.iter_mut().zip(x.iter()) {
                        *g += dr * xv;
                    }
                }
            }
            let gb = layout.biases_mut(&mut grad, layer);
            for (g, d) in gb.iter_mut().zip(delta.iter()) {
                *g += d;
            }
        }
    }
    for g in grad.iter_mut() {
        *g /= m;
    }

    let mut mean_per_sample_sq_norm = per_sample_sq_norm_mlp(&layer_inputs, &layer_deltas)?;
    let mut loss = loss_acc / m;

    if lambda != 0.0 {
        loss += lambda * 0.5 * weight_sq_norm_total(&layout, params);
        // Penalty cross-terms: ‖g_i + λ·weights‖² adds
        // 2λ·Σ_ℓ δᵀ(z - b) + λ²·Σ_ℓ ‖W_ℓ‖²_F per sample.
        let wsq = weight_sq_norm_total(&layout, params);
        let mut cross_acc = 0.0;
        for s in 0..batch.len() {
            let mut cross = 0.0;
            for layer in 0..num_layers {
                let delta = layer_deltas[layer][s].as_slice();
                let z = layer_preacts[layer][s].as_slice();
                let b = layout.biases(params, layer);
                for r in 0..delta.len() {
                    cross += delta[r] * (z[r] - b[r]);
                }
            }
            cross_acc += 2.0 * lambda * cross + lambda * lambda * wsq;
        }
        mean_per_sample_sq_norm += cross_acc / m;
        for layer in 0..num_layers {
            let w_layer = layout.weights(params, layer);
            let gw = layout.weights_mut(&mut grad, layer);
            for (g, wv) in gw.iter_mut().zip(w_layer.iter()) {
                *g += lambda * wv;
            }
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

/// Smallest |pre-activation| over all hidden (ReLU) units in the batch.
/// Finite-difference tests reject points where this is below their
/// perturbation scale, since the kink breaks the central-difference model.
pub fn min_relu_preactivation(
    spec: &ModelSpec,
    w: &DenseVector,
    data: &LabeledDataset,
    batch: &[usize],
) -> Result<f64, ModelError> {
    let layout = MlpLayout::from_spec(spec);
    let mut best = f64::INFINITY;
    for &i in batch {
        let trace = forward_sample(&layout, w.as_slice(), data, i);
        for layer in 0..layout.num_layers() - 1 {
            for &z in trace.pre_acts[layer].iter() {
                best = best.min(z.abs());
            }
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelProblem, Objective};
    use crate::numerics::DenseMatrix;

    fn small_dataset(n: usize, d: usize, classes: usize, seed: u64) -> LabeledDataset {
        let mut rng = SeededRng::new(seed);
        let values: Vec<f64> = (0..n * d).map(|_| rng.gaussian(1.0)).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        LabeledDataset::new(DenseMatrix::new(values, n, d).unwrap(), labels, classes).unwrap()
    }

    #[test]
    fn per_sample_norm_single_layer_example() {
        // x = (1,1), δ = (2): weights contribute 4·2 = 8, bias 4, total 12.
        let inputs = vec![vec![DenseVector::new(vec![1.0, 1.0]).unwrap()]];
        let deltas = vec![vec![DenseVector::new(vec![2.0]).unwrap()]];
        assert_eq!(per_sample_sq_norm_mlp(&inputs, &deltas).unwrap(), 12.0);
    }

    #[test]
    fn per_sample_norm_zero_delta_contributes_nothing() {
        let inputs = vec![vec![DenseVector::new(vec![3.0, -1.0]).unwrap()]];
        let deltas = vec![vec![DenseVector::new(vec![0.0, 0.0]).unwrap()]];
        assert_eq!(per_sample_sq_norm_mlp(&inputs, &deltas).unwrap(), 0.0);
    }

    #[test]
    fn per_sample_norm_shape_mismatch_errors() {
        let inputs = vec![vec![DenseVector::new(vec![1.0]).unwrap()]];
        let deltas: Vec<Vec<DenseVector>> = vec![vec![]];
        assert!(per_sample_sq_norm_mlp(&inputs, &deltas).is_err());
        assert!(per_sample_sq_norm_mlp(&inputs, &[]).is_err());
    }

    #[test]
    fn trick_matches_naive_per_sample_backprop() {
        // Naive oracle: one backward pass per sample, materializing each
        // per-sample gradient via single-sample batches.
        let mut rng = SeededRng::new(401);
        for trial in 0..100 {
            let d = 2 + (trial % 5);
            let classes = 2 + (trial % 3);
            let width = 3 + (trial % 6);
            let n = 3 + (trial % 13);
            let data = small_dataset(n, d, classes, 500 + trial as u64);
            let layers = match trial % 3 {
                0 => vec![width],
                1 => vec![width, width / 2 + 1],
                _ => vec![width, width, width / 2 + 1],
            };
            let spec = ModelSpec::mlp(d, layers, classes);
            let problem = ModelProblem::new(spec, &data).unwrap();
            let w = problem.initial_point(&mut rng);
            let batch: Vec<usize> = (0..n).collect();
            let fast = problem.evaluate_batch(&w, &batch).unwrap().mean_per_sample_sq_norm;
            let mut naive = 0.0;
            for &i in &batch {
                let g = problem.evaluate_batch(&w, &[i]).unwrap().gradient;
                naive += g.squared_norm();
            }
            naive /= batch.len() as f64;
            let rel = (fast - naive).abs() / naive.abs().max(1e-300);
            assert!(rel <= 1e-10, "trial {trial}: fast={fast} naive={naive} rel={rel}");
        }
    }

    #[test]
    fn loss_matches_evaluate_loss_bitwise() {
        let data = small_dataset(6, 4, 3, 77);
        let spec = ModelSpec::mlp(4, vec![5], 3).with_l2_penalty(0.02);
        let problem = ModelProblem::new(spec, &data).unwrap();
        let mut rng = SeededRng::new(78);
        let w = problem.initial_point(&mut rng);
        let batch = [4, 0, 2];
        assert_eq!(
            problem.evaluate_batch(&w, &batch).unwrap().loss,
            problem.evaluate_loss(&w, &batch).unwrap()
        );
    }

    #[test]
    fn single_sample_mean_norm_equals_gradient_norm_bitwise() {
        let data = small_dataset(3, 3, 2, 79);
        let spec = ModelSpec::mlp(3, vec![4], 2);
        let problem = ModelProblem::new(spec, &data).unwrap();
        let mut rng = SeededRng::new(80);
        let w = problem.initial_point(&mut rng);
        let eval = problem.evaluate_batch(&w, &[1]).unwrap();
        assert_eq!(eval.mean_per_sample_sq_norm, eval.gradient.squared_norm());
    }

    #[test]
    fn he_init_is_seed_deterministic_and_bounded() {
        let spec = ModelSpec::mlp(10, vec![8, 6], 4);
        let layout = MlpLayout::from_spec(&spec);
        let a = layout.he_uniform_init(&mut SeededRng::new(3));
        let b = layout.he_uniform_init(&mut SeededRng::new(3));
        assert_eq!(a.as_slice(), b.as_slice());
        let bound = (6.0f64 / 10.0).sqrt();
        for &v in layout.weights(a.as_slice(), 0) {
            assert!(v.abs() <= bound);
        }
        assert!(layout.biases(a.as_slice(), 0).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn batch_loss_decomposes_into_single_sample_losses() {
        let data = small_dataset(8, 3, 2, 81);
        let spec = ModelSpec::mlp(3, vec![4], 2);
        let problem = ModelProblem::new(spec, &data).unwrap();
        let mut rng = SeededRng::new(82);
        let w = problem.initial_point(&mut rng);
        let batch: Vec<usize> = (0..8).collect();
        let batch_loss = problem.evaluate_loss(&w, &batch).unwrap();
        let mut acc = 0.0;
        for &i in &batch {
            acc += problem.evaluate_loss(&w, &[i]).unwrap();
        }
        let mean = acc / 8.0;
        let tol = 4.0 * 8.0 * f64::EPSILON * batch_loss.abs().max(1.0);
        assert!((batch_loss - mean).abs() <= tol);
    }
}
