//! LIBSVM text format: one sample per line, `<label> <idx>:<val> ...` with
//! 1-based feature indices. Binary labels accepted as {-1,+1} or {0,1} and
//! stored as {0,1}.

use super::{DatasetError, LabeledDataset};
use crate::numerics::DenseMatrix;
use std::io::{BufRead, Write};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LibsvmLineError {
    #[error("label `{0}` is not an integer")]
    BadLabel(String),
    #[error("label {0} must be -1, 0, or 1")]
    LabelRange(i64),
    #[error("token `{0}` is not an `index:value` pair")]
    BadPair(String),
    #[error("feature index `{0}` is not a positive integer")]
    BadIndex(String),
    #[error("feature value `{0}` is not a number")]
    BadValue(String),
    #[error("non-finite feature value `{0}`")]
    NonFiniteValue(String),
    #[error("feature index {index} out of range for dimension {dimension}")]
    IndexOutOfRange { index: usize, dimension: usize },
    #[error("duplicate feature index {0}")]
    DuplicateIndex(usize),
}

/// Parse LIBSVM text into a dense dataset of the given feature dimension.
///
/// Empty lines are skipped; any malformed line aborts the parse with its
/// 1-based line number.
pub fn parse_libsvm<R: BufRead>(reader: R, dimension: usize) -> Result<LabeledDataset, DatasetError> {
    if dimension == 0 {
        return Err(DatasetError::Parameter("dimension must be positive".into()));
    }
    let mut rows: Vec<f64> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut seen = vec![false; dimension + 1];
    let mut touched: Vec<usize> = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let mut tokens = line.split_whitespace();
        let Some(label_tok) = tokens.next() else {
            continue; // blank line
        };
        let fail = |source: LibsvmLineError| DatasetError::Libsvm {
            line: lineno,
            source,
        };

        let label: i64 = label_tok
            .parse()
            .map_err(|_| fail(LibsvmLineError::BadLabel(label_tok.to_string())))?;
        let label = match label {
            -1 | 0 => 0usize,
            1 => 1usize,
            other => return Err(fail(LibsvmLineError::LabelRange(other))),
        };

        let row_start = rows.len();
        rows.resize(row_start + dimension, 0.0);
        for idx in touched.drain(..) {
            seen[idx] = false;
        }
        for token in tokens {
            let (idx_str, val_str) = token
                .split_once(':')
                .ok_or_else(|| fail(LibsvmLineError::BadPair(token.to_string())))?;
            let index: usize = idx_str
                .parse()
                .ok()
                .filter(|&i| i >= 1)
                .ok_or_else(|| fail(LibsvmLineError::BadIndex(idx_str.to_string())))?;
            if index > dimension {
                return Err(fail(LibsvmLineError::IndexOutOfRange { index, dimension }));
            }
            if seen[index] {
                return Err(fail(LibsvmLineError::DuplicateIndex(index)));
            }
            seen[index] = true;
            touched.push(index);
            let value: f64 = val_str
                .parse()
                .map_err(|_| fail(LibsvmLineError::BadValue(val_str.to_string())))?;
            if !value.is_finite() {
                return Err(fail(LibsvmLineError::NonFiniteValue(val_str.to_string())));
            }
            rows[row_start + index - 1] = value;
        }
        labels.push(label);
    }

    if labels.is_empty() {
        return Err(DatasetError::Parameter(
            "libsvm input contains no samples".into(),
        ));
    }
    let n = labels.len();
    let features = DenseMatrix::new(rows, n, dimension)?;
    LabeledDataset::new(features, labels, 2)
}

/// Serialize a dataset back to LIBSVM text: labels as 0/1, features written
/// sparsely with ascending 1-based indices, zeros omitted. Values use the
/// shortest round-trip decimal form, so parse -> write -> parse is exact.
pub fn write_libsvm<W: Write>(dataset: &LabeledDataset, writer: &mut W) -> std::io::Result<()> {
    for i in 0..dataset.num_samples() {
        write!(writer, "{}", dataset.label(i))?;
        for j in 0..dataset.feature_dim() {
            let v = dataset.features().get(i, j);
            if v != 0.0 {
                write!(writer, " {}:{}", j + 1, v)?;
            }
        }
        writeln!(writer)?;
    }
    Ok(())
}
