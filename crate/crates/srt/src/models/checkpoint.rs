//! Flat binary parameter checkpoints: magic `SRTW`, a version byte, the
//! length as little-endian u64, then raw little-endian f64 values.

use super::ModelError;
use crate::numerics::DenseVector;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"SRTW";
const VERSION: u8 = 1;

pub fn write_parameters(path: &Path, w: &DenseVector) -> Result<(), ModelError> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(MAGIC)?;
    out.write_all(&[VERSION])?;
    out.write_all(&(w.len() as u64).to_le_bytes())?;
    for &v in w.iter() {
        out.write_all(&v.to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_parameters(path: &Path) -> Result<DenseVector, ModelError> {
    let mut reader = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    reader.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint(format!(
            "bad magic {magic:02x?}, expected {MAGIC:02x?}"
        )));
    }
    let mut version = [0u8; 1];
    reader.read_exact(&mut version)?;
    if version[0] != VERSION {
        return Err(ModelError::Checkpoint(format!(
            "unsupported version {}",
            version[0]
        )));
    }
    let mut len_bytes = [0u8; 8];
    reader.read_exact(&mut len_bytes)?;
    let len = u64::from_le_bytes(len_bytes) as usize;
    let mut values = Vec::with_capacity(len);
    let mut buf = [0u8; 8];
    for _ in 0..len {
        reader.read_exact(&mut buf).map_err(|_| {
            ModelError::Checkpoint(format!("truncated payload, expected {len} values"))
        })?;
        values.push(f64::from_le_bytes(buf));
    }
    if reader.read(&mut buf)? != 0 {
        return Err(ModelError::Checkpoint("trailing bytes after payload".into()));
    }
    DenseVector::new(values)
        .map_err(|e| ModelError::Checkpoint(format!("invalid parameter values: {e}")))
}
