//! Objective implementation for the synthetic quadratic fixtures:
//! `f_i(w) = ½(1+e_i)·qᵀAq + b_iᵀq` with `q = w - w*`.
//!
//! `A·q` and `qᵀAq` are shared across the batch, so a batch evaluation costs
//! one matrix-vector product plus O(d) per sample.

use super::{check_batch, check_len, BatchEvaluation, ModelError, Objective};
use crate::datasets::SyntheticQuadratic;
use crate::numerics::{DenseVector, SeededRng};

impl SyntheticQuadratic {
    fn displacement(&self, w: &DenseVector) -> Vec<f64> {
        w.iter()
            .zip(self.minimizer().iter())
            .map(|(wi, mi)| wi - mi)
            .collect()
    }
}

impl Objective for SyntheticQuadratic {
    fn dim(&self) -> usize {
        SyntheticQuadratic::dim(self)
    }

    fn num_samples(&self) -> usize {
        SyntheticQuadratic::num_samples(self)
    }

    /// Minimizer plus an all-ones offset: deterministic, away from the
    /// optimum, independent of the run seed.
    fn initial_point(&self, _rng: &mut SeededRng) -> DenseVector {
        let values = self.minimizer().iter().map(|m| m + 1.0).collect();
        DenseVector::from_values(values)
    }

    fn evaluate_batch(&self, w: &DenseVector, batch: &[usize]) -> Result<BatchEvaluation, ModelError> {
        check_batch(batch, self.num_samples())?;
        check_len(w, Objective::dim(self))?;
        let d = Objective::dim(self);
        let m = batch.len() as f64;
        let q = self.displacement(w);
        let aq = self.hessian_times(&q);
        let qaq = crate::numerics::dot_slices(&q, aq.as_slice());

        let mut loss_acc = 0.0;
        let mut grad = vec![0.0; d];
        let mut msn_acc = 0.0;
        for &i in batch {
            let e = self.scales()[i];
            let b = &self.offsets()[i];
            loss_acc += 0.5 * (1.0 + e) * qaq + crate::numerics::dot_slices(b.as_slice(), &q);
            let mut sample_sq = 0.0;
            for j in 0..d {
                let gj = (1.0 + e) * aq[j] + b[j];
                grad[j] += gj;
                sample_sq += gj * gj;
            }
            msn_acc += sample_sq;
        }
        for g in grad.iter_mut() {
            *g /= m;
        }
        let gradient = DenseVector::from_values(grad);
        let mean_per_sample_sq_norm = if batch.len() == 1 {
            gradient.squared_norm()
        } else {
            msn_acc / m
        };
        Ok(BatchEvaluation {
            loss: loss_acc / m,
            gradient,
            mean_per_sample_sq_norm,
            batch_size: batch.len(),
        })
    }

    fn evaluate_loss(&self, w: &DenseVector, batch: &[usize]) -> Result<f64, ModelError> {
        check_batch(batch, self.num_samples())?;
        check_len(w, Objective::dim(self))?;
        let q = self.displacement(w);
        let aq = self.hessian_times(&q);
        let qaq = crate::numerics::dot_slices(&q, aq.as_slice());
        let mut loss_acc = 0.0;
        for &i in batch {
            let e = self.scales()[i];
            let b = &self.offsets()[i];
            loss_acc += 0.5 * (1.0 + e) * qaq + crate::numerics::dot_slices(b.as_slice(), &q);
        }
        Ok(loss_acc / batch.len() as f64)
    }
}
