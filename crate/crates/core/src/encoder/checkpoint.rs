//! Binary model encoding.
//!
//! ```text
//! "GCOCO1"                      6 bytes
//! K, F′, F                      u64 LE each
//! tensor count T                u64 LE
//! T × (rank, dims…)             u64 LE
//! every tensor's data           f64 LE, registration order
//! ```
//!
//! The trainer appends its own section after the parameters.

use thiserror::Error;

use super::Model;
use crate::ndiff::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"GCOCO1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes")]
    BadMagic,
    #[error("checkpoint truncated: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        needed: usize,
        offset: usize,
        available: usize,
    },
    #[error("checkpoint layout mismatch: {0}")]
    Layout(String),
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checkpoint config: {0}")]
    Config(#[from] serde_json::Error),
    #[error("checkpoint I/O: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ModelHeader {
    pub layers: usize,
    pub hidden: usize,
    pub input_dim: usize,
}

pub(crate) fn put_u64(out: &mut Vec<u8>, v: u64) {
    out.extend_from_slice(&v.to_le_bytes());
}

pub(crate) fn put_f64(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&v.to_le_bytes());
}

/// Cursor over checkpoint bytes that fails cleanly on truncation.
pub struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let available = self.bytes.len() - self.pos;
        if n > available {
            return Err(CheckpointError::Truncated {
                needed: n,
                offset: self.pos,
                available,
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn usize(&mut self) -> Result<usize, CheckpointError> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| CheckpointError::Layout(format!("size {v} overflows")))
    }

    pub fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }

    pub fn finish(self) -> Result<(), CheckpointError> {
        match self.remaining() {
            0 => Ok(()),
            n => Err(CheckpointError::TrailingBytes(n)),
        }
    }
}

pub fn write_model(model: &Model, out: &mut Vec<u8>) {
    out.extend_from_slice(CHECKPOINT_MAGIC);
    put_u64(out, model.layers() as u64);
    put_u64(out, model.hidden() as u64);
    put_u64(out, model.input_dim() as u64);
    put_u64(out, model.params.len() as u64);
    for (_, t) in model.params.iter() {
        let shape = t.value.shape();
        put_u64(out, shape.len() as u64);
        for &d in shape {
            put_u64(out, d as u64);
        }
    }
    for (_, t) in model.params.iter() {
        for &v in t.value.data() {
            put_f64(out, v);
        }
    }
}

pub fn read_model(reader: &mut ByteReader<'_>) -> Result<(ModelHeader, Model), CheckpointError> {
    if reader.take(CHECKPOINT_MAGIC.len())? != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let header = ModelHeader {
        layers: reader.usize()?,
        hidden: reader.usize()?,
        input_dim: reader.usize()?,
    };
    if header.layers == 0 || header.hidden == 0 || header.layers > 1 << 16 || header.hidden > 1 << 20 {
        return Err(CheckpointError::Layout(format!("implausible header {header:?}")));
    }
    let mut model = Model::new(header.input_dim, header.layers, header.hidden, 0);
    let count = reader.usize()?;
    if count != model.params.len() {
        return Err(CheckpointError::Layout(format!(
            "{count} tensors stored, architecture has {}",
            model.params.len()
        )));
    }
    let mut shapes = Vec::with_capacity(count);
    for (id, t) in model.params.iter() {
        let rank = reader.usize()?;
        if rank > 8 {
            return Err(CheckpointError::Layout(format!("tensor {} has rank {rank}", id.0)));
        }
        let dims = (0..rank).map(|_| reader.usize()).collect::<Result<Vec<_>, _>>()?;
        if dims != t.value.shape() {
            return Err(CheckpointError::Layout(format!(
                "tensor {} ({}) stored as {dims:?}, expected {:?}",
                id.0,
                t.name,
                t.value.shape()
            )));
        }
        shapes.push(dims);
    }
    let ids: Vec<_> = model.params.ids().collect();
    for (id, shape) in ids.into_iter().zip(shapes) {
        let n: usize = shape.iter().product();
        let data = (0..n).map(|_| reader.f64()).collect::<Result<Vec<_>, _>>()?;
        *model.params.get_mut(id) = Tensor::new(shape, data).expect("validated shape");
    }
    Ok((header, model))
}
