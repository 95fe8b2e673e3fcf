//! IDX binary format (MNIST-family files): big-endian header
//! `00 00 <type> <ndims>` followed by ndims u32 dimension sizes and the raw
//! payload. Only the unsigned-byte type code 0x08 is supported.

use super::{read_maybe_gzip, DatasetError, LabeledDataset};
use crate::numerics::DenseMatrix;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IdxError {
    #[error("bad magic {found:02x?}, expected 00 00 08 <ndims>")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported element type code {0:#04x} (only 0x08 unsigned byte)")]
    UnsupportedType(u8),
    #[error("unsupported dimension count {0} (labels use 1, images use 3)")]
    UnsupportedDims(u8),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("{extra} trailing bytes after the promised {expected}-byte payload")]
    TrailingBytes { expected: usize, extra: usize },
    #[error("header truncated: expected {expected} bytes, found {actual}")]
    ShortHeader { expected: usize, actual: usize },
}

/// Decoded contents of one IDX file.
#[derive(Debug)]
pub enum IdxContent {
    /// One label byte per sample (dimension count 1).
    Labels(Vec<u8>),
    /// Images flattened to rows = images, cols = pixels, scaled to [0,1].
    Images(DenseMatrix),
}

/// Parse an entire IDX byte stream. The stream must contain exactly
/// header + payload; both truncation and trailing bytes are rejected.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxContent, DatasetError> {
    if bytes.len() < 4 {
        return Err(IdxError::ShortHeader {
            expected: 4,
            actual: bytes.len(),
        }
        .into());
    }
    let magic: [u8; 4] = bytes[..4].try_into().unwrap();
    if magic[0] != 0 || magic[1] != 0 {
        return Err(IdxError::BadMagic { found: magic }.into());
    }
    if magic[2] != 0x08 {
        return Err(IdxError::UnsupportedType(magic[2]).into());
    }
    let ndims = magic[3];
    if ndims != 1 && ndims != 3 {
        return Err(IdxError::UnsupportedDims(ndims).into());
    }
    let header_len = 4 + 4 * ndims as usize;
    if bytes.len() < header_len {
        return Err(IdxError::ShortHeader {
            expected: header_len,
            actual: bytes.len(),
        }
        .into());
    }
    let mut dims = [0usize; 3];
    for (i, dim) in dims.iter_mut().take(ndims as usize).enumerate() {
        let off = 4 + 4 * i;
        *dim = u32::from_be_bytes(bytes[off..off + 4].try_into().unwrap()) as usize;
    }
    let expected: usize = dims[..ndims as usize].iter().product();
    let payload = &bytes[header_len..];
    if payload.len() < expected {
        return Err(IdxError::Truncated {
            expected,
            actual: payload.len(),
        }
        .into());
    }
    if payload.len() > expected {
        return Err(IdxError::TrailingBytes {
            expected,
            extra: payload.len() - expected,
        }
        .into());
    }

    if ndims == 1 {
        Ok(IdxContent::Labels(payload.to_vec()))
    } else {
        let (count, rows, cols) = (dims[0], dims[1], dims[2]);
        if count == 0 || rows * cols == 0 {
            return Err(DatasetError::Parameter(
                "idx image file has zero-sized dimensions".into(),
            ));
        }
        let values: Vec<f64> = payload.iter().map(|&b| b as f64 / 255.0).collect();
        Ok(IdxContent::Images(DenseMatrix::new(
            values,
            count,
            rows * cols,
        )?))
    }
}

/// Load an images/labels IDX pair (plain or gzipped) into one dataset.
/// The class count is taken from the largest label present.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset, DatasetError> {
    let images = match parse_idx(&read_maybe_gzip(images_path)?)? {
        IdxContent::Images(m) => m,
        IdxContent::Labels(_) => {
            return Err(DatasetError::Parameter(format!(
                "{} is a label file, expected an image file",
                images_path.display()
            )))
        }
    };
    let labels = match parse_idx(&read_maybe_gzip(labels_path)?)? {
        IdxContent::Labels(l) => l,
        IdxContent::Images(_) => {
            return Err(DatasetError::Parameter(format!(
                "{} is an image file, expected a label file",
                labels_path.display()
            )))
        }
    };
    if images.rows() != labels.len() {
        return Err(DatasetError::Parameter(format!(
            "{} images but {} labels",
            images.rows(),
            labels.len()
        )));
    }
    let labels: Vec<usize> = labels.into_iter().map(|l| l as usize).collect();
    let num_classes = labels.iter().copied().max().unwrap_or(0).max(1) + 1;
    LabeledDataset::new(images, labels, num_classes.max(2))
}
