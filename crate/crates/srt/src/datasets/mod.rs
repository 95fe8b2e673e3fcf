//! Dataset ingestion (LIBSVM text, IDX binary, both optionally gzipped),
//! synthetic problems with analytically known constants, and mini-batch
//! index generation.

mod batches;
mod idx;
mod libsvm;
mod synthetic;

pub use batches::{epoch_batches, sample_batch, BatchIndexSet};
pub use idx::{load_idx_dataset, parse_idx, IdxContent};
pub use libsvm::{parse_libsvm, write_libsvm};
pub use synthetic::{make_logistic, make_synthetic, SyntheticKind, SyntheticQuadratic};

use crate::numerics::{DenseMatrix, NumericsError};
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("line {line}: {source}")]
    Libsvm {
        line: usize,
        source: libsvm::LibsvmLineError,
    },
    #[error("idx format error: {0}")]
    Idx(#[from] idx::IdxError),
    #[error("invalid parameters: {0}")]
    Parameter(String),
    #[error("label {label} out of range for {num_classes} classes")]
    LabelRange { label: usize, num_classes: usize },
    #[error("{path}: {source}")]
    File {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Feature matrix storage. The 32-bit variant halves the footprint of large
/// dense datasets; values are widened to f64 at every access.
#[derive(Debug, Clone)]
pub enum FeatureStorage {
    F64(DenseMatrix),
    F32 {
        values: Vec<f32>,
        rows: usize,
        cols: usize,
    },
}

impl FeatureStorage {
    pub fn rows(&self) -> usize {
        match self {
            FeatureStorage::F64(m) => m.rows(),
            FeatureStorage::F32 { rows, .. } => *rows,
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            FeatureStorage::F64(m) => m.cols(),
            FeatureStorage::F32 { cols, .. } => *cols,
        }
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        match self {
            FeatureStorage::F64(m) => m.get(r, c),
            FeatureStorage::F32 { values, cols, .. } => values[r * cols + c] as f64,
        }
    }

    /// `Σ_j x[r,j]·w[j]` with fixed left-to-right order.
    pub fn dot_row(&self, r: usize, w: &[f64]) -> f64 {
        match self {
            FeatureStorage::F64(m) => crate::numerics::dot_slices(m.row(r), w),
            FeatureStorage::F32 { values, cols, .. } => {
                let row = &values[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for (x, wi) in row.iter().zip(w.iter()) {
                    acc += *x as f64 * wi;
                }
                acc
            }
        }
    }

    pub fn row_squared_norm(&self, r: usize) -> f64 {
        match self {
            FeatureStorage::F64(m) => crate::numerics::dot_slices(m.row(r), m.row(r)),
            FeatureStorage::F32 { values, cols, .. } => {
                let row = &values[r * cols..(r + 1) * cols];
                let mut acc = 0.0;
                for x in row {
                    let v = *x as f64;
                    acc += v * v;
                }
                acc
            }
        }
    }

    /// `acc += scale · x[r,·]`
    pub fn add_row_scaled(&self, r: usize, scale: f64, acc: &mut [f64]) {
        match self {
            FeatureStorage::F64(m) => {
                for (a, x) in acc.iter_mut().zip(m.row(r).iter()) {
                    *a += scale * x;
                }
            }
            FeatureStorage::F32 { values, cols, .. } => {
                let row = &values[r * cols..(r + 1) * cols];
                for (a, x) in acc.iter_mut().zip(row.iter()) {
                    *a += scale * *x as f64;
                }
            }
        }
    }

    pub fn copy_row_into(&self, r: usize, buf: &mut [f64]) {
        match self {
            FeatureStorage::F64(m) => buf.copy_from_slice(m.row(r)),
            FeatureStorage::F32 { values, cols, .. } => {
                let row = &values[r * cols..(r + 1) * cols];
                for (b, x) in buf.iter_mut().zip(row.iter()) {
                    *b = *x as f64;
                }
            }
        }
    }
}

/// Immutable labeled dataset: an n×d feature matrix and one class label per
/// row. Safe for concurrent reads once constructed.
#[derive(Debug, Clone)]
pub struct LabeledDataset {
    features: FeatureStorage,
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabeledDataset {
    pub fn new(
        features: DenseMatrix,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DatasetError> {
        Self::from_storage(FeatureStorage::F64(features), labels, num_classes)
    }

    pub fn from_storage(
        features: FeatureStorage,
        labels: Vec<usize>,
        num_classes: usize,
    ) -> Result<Self, DatasetError> {
        if labels.is_empty() {
            return Err(DatasetError::Parameter("dataset has no samples".into()));
        }
        if features.rows() != labels.len() {
            return Err(DatasetError::Parameter(format!(
                "feature rows {} != label count {}",
                features.rows(),
                labels.len()
            )));
        }
        if num_classes < 2 {
            return Err(DatasetError::Parameter(
                "num_classes must be at least 2".into(),
            ));
        }
        for &label in &labels {
            if label >= num_classes {
                return Err(DatasetError::LabelRange { label, num_classes });
            }
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.labels.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn features(&self) -> &FeatureStorage {
        &self.features
    }

    /// Convert feature storage to 32-bit floats (halves memory for gisette).
    pub fn compact_to_f32(self) -> Self {
        let (rows, cols) = (self.features.rows(), self.features.cols());
        let values = match self.features {
            FeatureStorage::F32 { values, .. } => values,
            FeatureStorage::F64(m) => m.values().iter().map(|&v| v as f32).collect(),
        };
        Self {
            features: FeatureStorage::F32 { values, rows, cols },
            labels: self.labels,
            num_classes: self.num_classes,
        }
    }

    /// Min-max normalization per feature column to [0,1]; constant columns
    /// become 0.
    pub fn min_max_normalize(&mut self) {
        let (rows, cols) = (self.features.rows(), self.features.cols());
        let mut lo = vec![f64::INFINITY; cols];
        let mut hi = vec![f64::NEG_INFINITY; cols];
        for r in 0..rows {
            for c in 0..cols {
                let v = self.features.get(r, c);
                if v < lo[c] {
                    lo[c] = v;
                }
                if v > hi[c] {
                    hi[c] = v;
                }
            }
        }
        let map = |v: f64, c: usize| {
            let span = hi[c] - lo[c];
            if span > 0.0 {
                (v - lo[c]) / span
            } else {
                0.0
            }
        };
        match &mut self.features {
            FeatureStorage::F64(m) => {
                for r in 0..rows {
                    for c in 0..cols {
                        let v = map(m.get(r, c), c);
                        m.set(r, c, v);
                    }
                }
            }
            FeatureStorage::F32 { values, cols, .. } => {
                for r in 0..rows {
                    for c in 0..*cols {
                        let v = map(values[r * *cols + c] as f64, c);
                        values[r * *cols + c] = v as f32;
                    }
                }
            }
        }
    }
}

/// Open a file that may be either plain or gzip-compressed; gzip is detected
/// by the 1F 8B magic bytes, not the file name.
pub fn open_maybe_gzip(path: &Path) -> Result<Box<dyn BufRead>, DatasetError> {
    let file = File::open(path).map_err(|source| DatasetError::File {
        path: path.display().to_string(),
        source,
    })?;
    let mut reader = BufReader::new(file);
    let magic = reader.fill_buf()?;
    if magic.len() >= 2 && magic[0] == 0x1f && magic[1] == 0x8b {
        Ok(Box::new(BufReader::new(flate2::bufread::GzDecoder::new(
            reader,
        ))))
    } else {
        Ok(Box::new(reader))
    }
}

/// Read an entire possibly-gzipped file into memory.
pub fn read_maybe_gzip(path: &Path) -> Result<Vec<u8>, DatasetError> {
    let mut reader = open_maybe_gzip(path)?;
    let mut buf = Vec::new();
    reader.read_to_end(&mut buf)?;
    Ok(buf)
}
