//! Named-tensor checkpoint container and element-wise averaging.
//!
//! Container layout (little-endian): magic `CTNS1\0`, u32 tensor count,
//! then per tensor in sorted-name order: u16 name length + UTF-8 name,
//! u8 dtype code (0 = f32, 1 = f64), u8 rank, rank × u64 dims, raw
//! values.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const MAGIC: &[u8; 6] = b"CTNS1\0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 0,
            Dtype::F64 => 1,
        }
    }
    fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Dtype::F32),
            1 => Some(Dtype::F64),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    F64(Vec<f64>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::F64(v) => v.len(),
        }
    }
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
    pub fn dtype(&self) -> Dtype {
        match self {
            TensorData::F32(_) => Dtype::F32,
            TensorData::F64(_) => Dtype::F64,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<u64>,
    pub data: TensorData,
}

impl Tensor {
    pub fn f32(shape: Vec<u64>, values: Vec<f32>) -> Result<Self, CheckpointError> {
        Self::checked(shape, TensorData::F32(values))
    }
    pub fn f64(shape: Vec<u64>, values: Vec<f64>) -> Result<Self, CheckpointError> {
        Self::checked(shape, TensorData::F64(values))
    }
    fn checked(shape: Vec<u64>, data: TensorData) -> Result<Self, CheckpointError> {
        let expected: u64 = shape.iter().product();
        if expected != data.len() as u64 {
            return Err(CheckpointError::ShapeValueMismatch {
                expected,
                got: data.len(),
            });
        }
        Ok(Tensor { shape, data })
    }
    pub fn dtype(&self) -> Dtype {
        self.data.dtype()
    }
}

/// Tensors keyed by name; the map keeps the manifest in sorted order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CheckpointTensorSet {
    pub tensors: BTreeMap<String, Tensor>,
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("shape expects {expected} values, got {got}")]
    ShapeValueMismatch { expected: u64, got: usize },
    #[error("need at least 2 checkpoints, got {0}")]
    TooFewCheckpoints(usize),
    #[error("manifest mismatch at tensor {0}")]
    ManifestMismatch(String),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unknown dtype code {0}")]
    UnknownDtype(u8),
    #[error("corrupt container: {0}")]
    Corrupt(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CheckpointTensorSet {
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<(), CheckpointError> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.tensors.len() as u32).to_le_bytes())?;
        for (name, tensor) in &self.tensors {
            let name_bytes = name.as_bytes();
            w.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
            w.write_all(name_bytes)?;
            w.write_all(&[tensor.dtype().code(), tensor.shape.len() as u8])?;
            for &dim in &tensor.shape {
                w.write_all(&dim.to_le_bytes())?;
            }
            match &tensor.data {
                TensorData::F32(values) => {
                    for v in values {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
                TensorData::F64(values) => {
                    for v in values {
                        w.write_all(&v.to_le_bytes())?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self, CheckpointError> {
        let mut magic = [0u8; 6];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut count_bytes = [0u8; 4];
        r.read_exact(&mut count_bytes)?;
        let count = u32::from_le_bytes(count_bytes);
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let mut len_bytes = [0u8; 2];
            r.read_exact(&mut len_bytes)?;
            let mut name_bytes = vec![0u8; u16::from_le_bytes(len_bytes) as usize];
            r.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes)
                .map_err(|_| CheckpointError::Corrupt("tensor name not UTF-8"))?;
            let mut header = [0u8; 2];
            r.read_exact(&mut header)?;
            let dtype =
                Dtype::from_code(header[0]).ok_or(CheckpointError::UnknownDtype(header[0]))?;
            let rank = header[1] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                let mut dim = [0u8; 8];
                r.read_exact(&mut dim)?;
                shape.push(u64::from_le_bytes(dim));
            }
            let n: u64 = shape.iter().product();
            let data = match dtype {
                Dtype::F32 => {
                    let mut values = Vec::with_capacity(n as usize);
                    let mut buf = [0u8; 4];
                    for _ in 0..n {
                        r.read_exact(&mut buf)?;
                        values.push(f32::from_le_bytes(buf));
                    }
                    TensorData::F32(values)
                }
                Dtype::F64 => {
                    let mut values = Vec::with_capacity(n as usize);
                    let mut buf = [0u8; 8];
                    for _ in 0..n {
                        r.read_exact(&mut buf)?;
                        values.push(f64::from_le_bytes(buf));
                    }
                    TensorData::F64(values)
                }
            };
            tensors.insert(name, Tensor { shape, data });
        }
        Ok(CheckpointTensorSet { tensors })
    }

    pub fn write_file(&self, path: &std::path::Path) -> Result<(), CheckpointError> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn read_file(path: &std::path::Path) -> Result<Self, CheckpointError> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }
}

pub const DEFAULT_AVERAGE_WINDOW: usize = 5;

/// Element-wise mean over the last `window` checkpoints, accumulated in
/// f64 and cast back to the storage dtype.
pub fn average_checkpoints(
    sets: &[CheckpointTensorSet],
    window: usize,
) -> Result<CheckpointTensorSet, CheckpointError> {
    if sets.len() < 2 {
        return Err(CheckpointError::TooFewCheckpoints(sets.len()));
    }
    let window_sets = if sets.len() > window {
        &sets[sets.len() - window..]
    } else {
        sets
    };
    let first = &window_sets[0];
    for other in &window_sets[1..] {
        for (name, tensor) in &first.tensors {
            match other.tensors.get(name) {
                Some(t) if t.shape == tensor.shape && t.dtype() == tensor.dtype() => {}
                _ => return Err(CheckpointError::ManifestMismatch(name.clone())),
            }
        }
        if let Some(extra) = other.tensors.keys().find(|k| !first.tensors.contains_key(*k)) {
            return Err(CheckpointError::ManifestMismatch(extra.clone()));
        }
    }
    let n = window_sets.len() as f64;
    let mut out = BTreeMap::new();
    for (name, tensor) in &first.tensors {
        let len = tensor.data.len();
        let mut acc = vec![0.0f64; len];
        for set in window_sets {
            match &set.tensors[name].data {
                TensorData::F32(values) => {
                    for (a, &v) in acc.iter_mut().zip(values) {
                        *a += v as f64;
                    }
                }
                TensorData::F64(values) => {
                    for (a, &v) in acc.iter_mut().zip(values) {
                        *a += v;
                    }
                }
            }
        }
        let data = match tensor.dtype() {
            Dtype::F32 => TensorData::F32(acc.into_iter().map(|a| (a / n) as f32).collect()),
            Dtype::F64 => TensorData::F64(acc.into_iter().map(|a| a / n).collect()),
        };
        out.insert(
            name.clone(),
            Tensor {
                shape: tensor.shape.clone(),
                data,
            },
        );
    }
    Ok(CheckpointTensorSet { tensors: out })
}
