//! Dense vector/matrix arithmetic, seeded random generation, and running
//! statistics shared by every other module.
//!
//! All reductions use a fixed left-to-right summation order so that repeated
//! runs with the same seed produce bit-identical telemetry.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("vector length mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("vector must be non-empty")]
    Empty,
    #[error("non-finite entry {value} at index {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("matrix shape {rows}x{cols} does not match {len} stored values")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
}

/// Flat dense vector of 64-bit floats.
///
/// Construction through [`DenseVector::new`] rejects empty and non-finite
/// input; arithmetic on already-constructed vectors does not re-validate, so
/// a diverging training run is detected at the loss check rather than by a
/// panic deep inside an update.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
}

impl DenseVector {
    /// Validating constructor for data entering from outside the crate
    /// (parsers, config files, checkpoints).
    pub fn new(values: Vec<f64>) -> Result<Self, NumericsError> {
        if values.is_empty() {
            return Err(NumericsError::Empty);
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(NumericsError::NonFinite { index, value });
            }
        }
        Ok(Self { values })
    }

    /// Internal constructor for values produced by this crate's own
    /// arithmetic.
    pub fn from_values(values: Vec<f64>) -> Self {
        debug_assert!(!values.is_empty());
        Self { values }
    }

    pub fn zeros(n: usize) -> Self {
        assert!(n > 0, "DenseVector must be non-empty");
        Self {
            values: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length > 0 by construction
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn iter(&self) -> std::slice::Iter<'_, f64> {
        self.values.iter()
    }

    /// Inner product with fixed left-to-right accumulation.
    pub fn dot(&self, other: &DenseVector) -> Result<f64, NumericsError> {
        if self.len() != other.len() {
            return Err(NumericsError::DimensionMismatch {
                left: self.len(),
                right: other.len(),
            });
        }
        Ok(dot_slices(&self.values, &other.values))
    }

    /// `‖self‖²`, always nonnegative.
    pub fn squared_norm(&self) -> f64 {
        dot_slices(&self.values, &self.values)
    }

    pub fn scaled(&self, factor: f64) -> DenseVector {
        DenseVector::from_values(self.values.iter().map(|v| factor * v).collect())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;

    fn index(&self, index: usize) -> &f64 {
        &self.values[index]
    }
}

pub(crate) fn dot_slices(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x * y;
    }
    acc
}

pub(crate) fn sum_slice(values: &[f64]) -> f64 {
    let mut acc = 0.0;
    for v in values {
        acc += v;
    }
    acc
}

/// Returns `y + alpha·x` without modifying the inputs.
pub fn axpy(alpha: f64, x: &DenseVector, y: &DenseVector) -> Result<DenseVector, NumericsError> {
    if x.len() != y.len() {
        return Err(NumericsError::DimensionMismatch {
            left: x.len(),
            right: y.len(),
        });
    }
    let values = x
        .iter()
        .zip(y.iter())
        .map(|(xi, yi)| yi + alpha * xi)
        .collect();
    Ok(DenseVector::from_values(values))
}

/// Row-major dense matrix of 64-bit floats.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    values: Vec<f64>,
    rows: usize,
    cols: usize,
}

impl DenseMatrix {
    pub fn new(values: Vec<f64>, rows: usize, cols: usize) -> Result<Self, NumericsError> {
        if rows == 0 || cols == 0 || rows * cols != values.len() {
            return Err(NumericsError::ShapeMismatch {
                rows,
                cols,
                len: values.len(),
            });
        }
        for (index, &value) in values.iter().enumerate() {
            if !value.is_finite() {
                return Err(NumericsError::NonFinite { index, value });
            }
        }
        Ok(Self { values, rows, cols })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0);
        Self {
            values: vec![0.0; rows * cols],
            rows,
            cols,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: f64) {
        self.values[r * self.cols + c] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

/// Deterministic seeded generator: identical seeds produce identical streams.
///
/// Backed by the ChaCha8 counter-based stream cipher, so the stream depends
/// only on the 64-bit seed, never on platform or thread scheduling. Instances
/// are single-owner; clone one if two consumers need independent positions in
/// the same stream.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

impl SeededRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// A generator with an unrelated stream, for splitting one run seed into
    /// independent per-purpose streams (initialization, batching, ...).
    pub fn derive(&self, salt: u64) -> SeededRng {
        SeededRng::new(self.seed ^ salt.wrapping_mul(0x9e37_79b9_7f4a_7c15))
    }

    pub fn next_u64(&mut self) -> u64 {
        self.inner.random()
    }

    /// Uniform draw from `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        self.inner.random()
    }

    pub fn uniform_in(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }

    /// Uniform index in `0..n`.
    pub fn index(&mut self, n: usize) -> usize {
        self.inner.random_range(0..n)
    }

    /// Standard normal draw scaled by `sigma`.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        if sigma == 0.0 {
            return 0.0;
        }
        let z: f64 = StandardNormal.sample(&mut self.inner);
        sigma * z
    }

    /// Fisher-Yates shuffle driven by this generator.
    pub fn shuffle<T>(&mut self, slice: &mut [T]) {
        for i in (1..slice.len()).rev() {
            let j = self.inner.random_range(0..=i);
            slice.swap(i, j);
        }
    }
}

/// `n` independent draws from `N(0, sigma²)`; `sigma = 0` yields zeros.
pub fn gaussian_vector(rng: &mut SeededRng, n: usize, sigma: f64) -> DenseVector {
    assert!(n > 0, "gaussian_vector requires n > 0");
    assert!(sigma >= 0.0, "sigma must be nonnegative");
    DenseVector::from_values((0..n).map(|_| rng.gaussian(sigma)).collect())
}

/// Incremental mean over a stream of values.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunningMean {
    count: u64,
    mean: f64,
}

impl RunningMean {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        self.count += 1;
        self.mean += (value - self.mean) / self.count as f64;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Mean of the values pushed so far; 0 when empty.
    pub fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.mean
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn dot_orthogonal_is_zero() {
        let a = DenseVector::new(vec![1.0, 0.0]).unwrap();
        let b = DenseVector::new(vec![0.0, 1.0]).unwrap();
        assert_eq!(a.dot(&b).unwrap(), 0.0);
    }

    #[test]
    fn dot_hand_arithmetic() {
        let a = DenseVector::new(vec![1.0, 2.0]).unwrap();
        let b = DenseVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(a.dot(&b).unwrap(), 11.0);
    }

    #[test]
    fn dot_with_self_is_squared_norm() {
        let x = DenseVector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(x.dot(&x).unwrap(), 25.0);
        assert_eq!(x.squared_norm(), 25.0);
    }

    #[test]
    fn dot_length_mismatch_errors() {
        let a = DenseVector::new(vec![1.0]).unwrap();
        let b = DenseVector::new(vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            a.dot(&b),
            Err(NumericsError::DimensionMismatch { left: 1, right: 2 })
        ));
    }

    #[test]
    fn squared_norm_examples() {
        assert_eq!(
            DenseVector::new(vec![0.0, 0.0, 0.0]).unwrap().squared_norm(),
            0.0
        );
        assert_eq!(
            DenseVector::new(vec![1.0, 1.0, 1.0, 1.0])
                .unwrap()
                .squared_norm(),
            4.0
        );
    }

    #[test]
    fn construction_rejects_bad_input() {
        assert!(matches!(DenseVector::new(vec![]), Err(NumericsError::Empty)));
        assert!(matches!(
            DenseVector::new(vec![1.0, f64::NAN]),
            Err(NumericsError::NonFinite { index: 1, .. })
        ));
        assert!(matches!(
            DenseVector::new(vec![f64::INFINITY]),
            Err(NumericsError::NonFinite { index: 0, .. })
        ));
    }

    #[test]
    fn axpy_examples() {
        let x = DenseVector::new(vec![1.0, 1.0]).unwrap();
        let y = DenseVector::new(vec![2.0, 3.0]).unwrap();
        assert_eq!(axpy(0.0, &x, &y).unwrap(), y);
        let z = DenseVector::new(vec![0.0, 0.0]).unwrap();
        assert_eq!(
            axpy(1.0, &x, &z).unwrap(),
            DenseVector::new(vec![1.0, 1.0]).unwrap()
        );
        let x2 = DenseVector::new(vec![2.0, 4.0]).unwrap();
        let y2 = DenseVector::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(
            axpy(-0.5, &x2, &y2).unwrap(),
            DenseVector::new(vec![0.0, -1.0]).unwrap()
        );
    }

    #[test]
    fn axpy_length_mismatch_errors() {
        let x = DenseVector::new(vec![1.0]).unwrap();
        let y = DenseVector::new(vec![1.0, 2.0]).unwrap();
        assert!(axpy(1.0, &x, &y).is_err());
    }

    #[test]
    fn matrix_shape_checked() {
        assert!(DenseMatrix::new(vec![1.0, 2.0, 3.0], 2, 2).is_err());
        let m = DenseMatrix::new(vec![1.0, 2.0, 3.0, 4.0], 2, 2).unwrap();
        assert_eq!(m.row(1), &[3.0, 4.0]);
        assert_eq!(m.get(0, 1), 2.0);
    }

    #[test]
    fn rng_equal_seeds_equal_streams() {
        let mut a = SeededRng::new(0xfeed);
        let mut b = SeededRng::new(0xfeed);
        for _ in 0..100_000 {
            assert_eq!(a.next_u64(), b.next_u64());
        }
    }

    #[test]
    fn rng_different_seeds_differ() {
        let mut a = SeededRng::new(1);
        let mut b = SeededRng::new(2);
        let same = (0..64).filter(|_| a.next_u64() == b.next_u64()).count();
        assert_eq!(same, 0);
    }

    #[test]
    fn gaussian_vector_sigma_zero_is_zero() {
        let mut rng = SeededRng::new(7);
        let v = gaussian_vector(&mut rng, 16, 0.0);
        assert!(v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn gaussian_vector_moments() {
        // CLT bound: |mean| < 3/sqrt(1e6) ≈ 0.003, padded to 0.005.
        let mut rng = SeededRng::new(42);
        let n = 1_000_000;
        let v = gaussian_vector(&mut rng, n, 1.0);
        let mean = sum_slice(v.as_slice()) / n as f64;
        assert!(mean.abs() < 0.005, "sample mean {mean}");

        let mut rng = SeededRng::new(43);
        let v = gaussian_vector(&mut rng, n, 2.0);
        let mean = sum_slice(v.as_slice()) / n as f64;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n as f64;
        assert!((var - 4.0).abs() < 0.02, "sample variance {var}");
    }

    #[test]
    fn running_mean_matches_arithmetic_mean() {
        let values: Vec<f64> = (0..1000).map(|i| (i as f64).sin() * 10.0 + 3.0).collect();
        let mut rm = RunningMean::new();
        for (k, &v) in values.iter().enumerate() {
            rm.push(v);
            let exact = sum_slice(&values[..=k]) / (k + 1) as f64;
            // 4 ulp per insertion
            let tol = 4.0 * (k + 1) as f64 * f64::EPSILON * exact.abs().max(1.0);
            assert!(
                (rm.mean() - exact).abs() <= tol,
                "k={k} running={} exact={exact}",
                rm.mean()
            );
        }
    }

    #[test]
    fn running_mean_empty_is_zero() {
        assert_eq!(RunningMean::new().mean(), 0.0);
    }

    proptest! {
        #[test]
        fn dot_is_symmetric(a in proptest::collection::vec(-1e6f64..1e6, 1..32)) {
            let b: Vec<f64> = a.iter().rev().map(|x| x * 0.37 + 1.0).collect();
            let va = DenseVector::new(a).unwrap();
            let vb = DenseVector::new(b).unwrap();
            prop_assert_eq!(va.dot(&vb).unwrap(), vb.dot(&va).unwrap());
        }

        #[test]
        fn squared_norm_nonnegative(a in proptest::collection::vec(-1e8f64..1e8, 1..32)) {
            let v = DenseVector::new(a).unwrap();
            prop_assert!(v.squared_norm() >= 0.0);
        }

        #[test]
        fn axpy_roundtrip(
            alpha in -100.0f64..100.0,
            x in proptest::collection::vec(-100.0f64..100.0, 1..16),
        ) {
            let y: Vec<f64> = x.iter().map(|v| v * 1.7 - 0.3).collect();
            let vx = DenseVector::new(x).unwrap();
            let vy = DenseVector::new(y).unwrap();
            let forward = axpy(-alpha, &vx, &vy).unwrap();
            let back = axpy(alpha, &vx, &forward).unwrap();
            for (orig, round) in vy.iter().zip(back.iter()) {
                // 2 ulp per entry
                let tol = 2.0 * f64::EPSILON * orig.abs().max(alpha.abs() * 100.0).max(1.0);
                prop_assert!((orig - round).abs() <= tol, "{orig} vs {round}");
            }
        }
    }
}
