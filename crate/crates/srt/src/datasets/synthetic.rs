//! Synthetic problems with analytically known constants.
//!
//! The quadratic family is built so that every derived quantity used by the
//! verification suite is exact by construction:
//!
//! * per-sample objective `f_i(w) = ½(1+e_i)·qᵀAq + b_iᵀq` with `q = w - w*`,
//! * `Σ b_i = 0` and `Σ e_i = 0`, hence the full objective is
//!   `F(w) = ½qᵀAq` with minimizer `w*` and `F* = 0`,
//! * additive noise (`e ≡ 0`) gives population constants
//!   `M = mean ‖b_i‖²`, `M_V = 0`,
//! * multiplicative noise (`b ≡ 0`) gives `M_V = mean e_i²`, `M = 0`.

use super::DatasetError;
use crate::numerics::{gaussian_vector, DenseMatrix, DenseVector, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Additive,
    Multiplicative,
    Noiseless,
}

/// A strongly convex quadratic sum with diagonal Hessian and per-sample
/// additive offsets `b_i` or multiplicative scales `e_i`.
#[derive(Debug, Clone)]
pub struct SyntheticQuadratic {
    hessian: DenseMatrix,
    per_sample_offsets: Vec<DenseVector>,
    per_sample_scales: Vec<f64>,
    minimizer: DenseVector,
    mu: f64,
    lipschitz: f64,
}

impl SyntheticQuadratic {
    /// Assemble a problem from explicit parts, validating the centering
    /// invariants the population constants rely on.
    pub fn new(
        hessian: DenseMatrix,
        per_sample_offsets: Vec<DenseVector>,
        per_sample_scales: Vec<f64>,
        minimizer: DenseVector,
        mu: f64,
        lipschitz: f64,
    ) -> Result<Self, DatasetError> {
        let d = hessian.rows();
        let n = per_sample_offsets.len();
        if hessian.cols() != d {
            return Err(DatasetError::Parameter("hessian must be square".into()));
        }
        if n < 2 || per_sample_scales.len() != n {
            return Err(DatasetError::Parameter(
                "need at least 2 samples with matching offset/scale counts".into(),
            ));
        }
        if minimizer.len() != d || per_sample_offsets.iter().any(|b| b.len() != d) {
            return Err(DatasetError::Parameter(
                "offset/minimizer dimensions must match the hessian".into(),
            ));
        }
        if !(mu > 0.0 && mu <= lipschitz) {
            return Err(DatasetError::Parameter(format!(
                "need 0 < mu <= L, got mu={mu} L={lipschitz}"
            )));
        }
        for j in 0..d {
            let col_sum: f64 = per_sample_offsets.iter().map(|b| b[j]).sum();
            if col_sum.abs() > 1e-12 {
                return Err(DatasetError::Parameter(format!(
                    "per-sample offsets do not sum to zero in coordinate {j}: {col_sum}"
                )));
            }
        }
        let scale_sum: f64 = per_sample_scales.iter().sum();
        if scale_sum.abs() > 1e-12 {
            return Err(DatasetError::Parameter(format!(
                "per-sample scales do not sum to zero: {scale_sum}"
            )));
        }
        if is_diagonal(&hessian) {
            for j in 0..d {
                let lambda = hessian.get(j, j);
                if lambda < mu - 1e-12 || lambda > lipschitz + 1e-12 {
                    return Err(DatasetError::Parameter(format!(
                        "hessian eigenvalue {lambda} outside [{mu}, {lipschitz}]"
                    )));
                }
            }
        }
        Ok(Self {
            hessian,
            per_sample_offsets,
            per_sample_scales,
            minimizer,
            mu,
            lipschitz,
        })
    }

    pub fn dim(&self) -> usize {
        self.hessian.rows()
    }

    pub fn num_samples(&self) -> usize {
        self.per_sample_scales.len()
    }

    pub fn hessian(&self) -> &DenseMatrix {
        &self.hessian
    }

    pub fn minimizer(&self) -> &DenseVector {
        &self.minimizer
    }

    pub fn offsets(&self) -> &[DenseVector] {
        &self.per_sample_offsets
    }

    pub fn scales(&self) -> &[f64] {
        &self.per_sample_scales
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    /// Population constant `M = mean ‖b_i‖²` of the gradient-noise bound.
    pub fn population_m(&self) -> f64 {
        let n = self.num_samples() as f64;
        let mut acc = 0.0;
        for b in &self.per_sample_offsets {
            acc += b.squared_norm();
        }
        acc / n
    }

    /// Population constant `M_V = mean e_i²` of the relative-noise bound.
    pub fn population_m_v(&self) -> f64 {
        let n = self.num_samples() as f64;
        let mut acc = 0.0;
        for e in &self.per_sample_scales {
            acc += e * e;
        }
        acc / n
    }

    /// `A·q` for a displacement `q = w - w*`.
    pub fn hessian_times(&self, q: &[f64]) -> DenseVector {
        let d = self.dim();
        let mut out = vec![0.0; d];
        for (r, slot) in out.iter_mut().enumerate() {
            *slot = crate::numerics::dot_slices(self.hessian.row(r), q);
        }
        DenseVector::from_values(out)
    }

    /// True objective value `F(w) - F* = ½ qᵀAq`.
    pub fn true_gap(&self, w: &DenseVector) -> f64 {
        let q: Vec<f64> = w
            .iter()
            .zip(self.minimizer.iter())
            .map(|(wi, mi)| wi - mi)
            .collect();
        let aq = self.hessian_times(&q);
        0.5 * crate::numerics::dot_slices(&q, aq.as_slice())
    }
}

fn is_diagonal(m: &DenseMatrix) -> bool {
    for r in 0..m.rows() {
        for c in 0..m.cols() {
            if r != c && m.get(r, c) != 0.0 {
                return false;
            }
        }
    }
    true
}

fn diagonal_matrix(entries: &[f64]) -> DenseMatrix {
    let d = entries.len();
    let mut m = DenseMatrix::zeros(d, d);
    for (j, &v) in entries.iter().enumerate() {
        m.set(j, j, v);
    }
    m
}

/// Eigenvalues linearly spaced over `[mu, l]` so the extreme values are
/// attained exactly.
fn linspace(mu: f64, l: f64, d: usize) -> Vec<f64> {
    if d == 1 {
        return vec![mu];
    }
    (0..d)
        .map(|j| mu + (l - mu) * j as f64 / (d - 1) as f64)
        .collect()
}

/// Subtract the mean twice; the second pass removes the first pass's
/// rounding residual, leaving `|Σ|` at the 1e-15 level even for large n.
fn center(values: &mut [f64]) {
    for _ in 0..2 {
        let mean = crate::numerics::sum_slice(values) / values.len() as f64;
        for v in values.iter_mut() {
            *v -= mean;
        }
    }
}

/// Generate a synthetic quadratic with diagonal Hessian spectrum `[mu, l]`.
///
/// `noise_level` is the standard deviation of the raw per-sample noise
/// before centering: offsets `b_i ~ N(0, noise_level²)` per coordinate for
/// the additive kind, scales `e_i ~ N(0, noise_level²)` for the
/// multiplicative kind.
pub fn make_synthetic(
    kind: SyntheticKind,
    n: usize,
    d: usize,
    mu: f64,
    l: f64,
    noise_level: f64,
    rng: &mut SeededRng,
) -> Result<SyntheticQuadratic, DatasetError> {
    if n < 2 {
        return Err(DatasetError::Parameter("need n >= 2 samples".into()));
    }
    if d == 0 {
        return Err(DatasetError::Parameter("need d >= 1".into()));
    }
    if !(mu > 0.0 && mu <= l) {
        return Err(DatasetError::Parameter(format!(
            "need 0 < mu <= L, got mu={mu} L={l}"
        )));
    }
    if d == 1 && mu != l {
        return Err(DatasetError::Parameter(
            "d = 1 admits only mu = L; use d >= 2 for a spread spectrum".into(),
        ));
    }
    if noise_level < 0.0 {
        return Err(DatasetError::Parameter("noise_level must be >= 0".into()));
    }

    let hessian = diagonal_matrix(&linspace(mu, l, d));
    let mut offsets: Vec<DenseVector> = vec![DenseVector::zeros(d); n];
    let mut scales = vec![0.0; n];
    match kind {
        SyntheticKind::Additive => {
            let mut raw: Vec<DenseVector> = (0..n)
                .map(|_| gaussian_vector(rng, d, noise_level))
                .collect();
            for j in 0..d {
                let mut column: Vec<f64> = raw.iter().map(|b| b[j]).collect();
                center(&mut column);
                for (b, v) in raw.iter_mut().zip(column) {
                    b.as_mut_slice()[j] = v;
                }
            }
            offsets = raw;
        }
        SyntheticKind::Multiplicative => {
            for s in scales.iter_mut() {
                *s = rng.gaussian(noise_level);
            }
            center(&mut scales);
        }
        SyntheticKind::Noiseless => {}
    }

    SyntheticQuadratic::new(
        hessian,
        offsets,
        scales,
        DenseVector::zeros(d),
        mu,
        l,
    )
}

/// Random binary logistic-regression dataset: features `N(0,1)`, a hidden
/// weight vector `N(0, weight_scale²)`, labels drawn `Bernoulli(σ(x·w))`.
/// Label noise keeps the problem non-separable, so gradients stay bounded
/// away from zero at the optimum.
pub fn make_logistic(
    n: usize,
    d: usize,
    weight_scale: f64,
    rng: &mut SeededRng,
) -> Result<super::LabeledDataset, DatasetError> {
    if n < 2 || d == 0 {
        return Err(DatasetError::Parameter(
            "need n >= 2 samples and d >= 1 features".into(),
        ));
    }
    let hidden = gaussian_vector(rng, d, weight_scale);
    let mut values = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x = gaussian_vector(rng, d, 1.0);
        let z = x.dot(&hidden).expect("dims match");
        let p = 1.0 / (1.0 + (-z).exp());
        labels.push(usize::from(rng.next_f64() < p));
        values.extend_from_slice(x.as_slice());
    }
    let features = DenseMatrix::new(values, n, d)?;
    super::LabeledDataset::new(features, labels, 2)
}
