//! Tensor file format: one JSON header line followed by the raw
//! little-endian IEEE-754 doubles in row-major order.
//!
//! ```text
//! {"shape":[1,32,32],"dtype":"f64","count":1024}\n
//! <1024 × 8 bytes>
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
pub struct Header {
    pub shape: Vec<usize>,
    pub dtype: String,
    pub count: usize,
}

pub fn write_tensor<W: Write>(mut w: W, t: &Tensor) -> Result<()> {
    let header = Header {
        shape: t.shape().to_vec(),
        dtype: "f64".into(),
        count: t.numel(),
    };
    let line = serde_json::to_string(&header).map_err(|e| TensorError::Format(e.to_string()))?;
    w.write_all(line.as_bytes())?;
    w.write_all(b"\n")?;
    for v in t.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_tensor<R: BufRead>(mut r: R) -> Result<Tensor> {
    let mut line = String::new();
    r.read_line(&mut line)?;
    let header: Header = serde_json::from_str(line.trim_end())
        .map_err(|e| TensorError::Format(format!("bad header: {e}")))?;
    if header.dtype != "f64" {
        return Err(TensorError::Format(format!(
            "unsupported dtype {:?}",
            header.dtype
        )));
    }
    if header.shape.iter().product::<usize>() != header.count {
        return Err(TensorError::Format(format!(
            "count {} disagrees with shape {:?}",
            header.count, header.shape
        )));
    }
    let mut bytes = vec![0u8; header.count * 8];
    r.read_exact(&mut bytes)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(TensorError::Format("trailing bytes after payload".into()));
    }
    let data = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect();
    Tensor::new(header.shape, data)
}

pub fn to_bytes(t: &Tensor) -> Vec<u8> {
    let mut buf = Vec::with_capacity(64 + t.numel() * 8);
    write_tensor(&mut buf, t).expect("writing to memory");
    buf
}

pub fn save(path: impl AsRef<Path>, t: &Tensor) -> Result<()> {
    write_tensor(BufWriter::new(File::create(path)?), t)
}

pub fn load(path: impl AsRef<Path>) -> Result<Tensor> {
    read_tensor(BufReader::new(File::open(path)?))
}
