//! `SRTN` binary tensor files.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! b"SRTN" | u32 version = 1 | u8 dtype (0 = f32, 1 = f64) | u8 ndim
//!         | ndim × u64 dims | row-major payload
//! ```

use std::fs;
use std::path::Path;

use super::FeatureMap;
use crate::{Error, Result};

pub const MAGIC: [u8; 4] = *b"SRTN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

impl DType {
    fn width(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
    pub dtype: DType,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(Error::shape(format!("{dims:?} ({n} values)"), data.len()));
        }
        Ok(Self {
            dims,
            data,
            dtype: DType::F64,
        })
    }

    pub fn with_dtype(mut self, dtype: DType) -> Self {
        self.dtype = dtype;
        self
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(10 + 8 * self.dims.len() + self.data.len() * 8);
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.push(self.dtype as u8);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        match self.dtype {
            DType::F32 => self
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&(v as f32).to_le_bytes())),
            DType::F64 => self
                .data
                .iter()
                .for_each(|&v| out.extend_from_slice(&v.to_le_bytes())),
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let take = |at: usize, n: usize| -> Result<&[u8]> {
            bytes
                .get(at..at + n)
                .ok_or_else(|| Error::Format(format!("truncated at byte {at}")))
        };
        if take(0, 4)? != MAGIC {
            return Err(Error::Format("missing SRTN magic".into()));
        }
        let version = u32::from_le_bytes(take(4, 4)?.try_into().unwrap());
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let dtype = match take(8, 1)?[0] {
            0 => DType::F32,
            1 => DType::F64,
            other => return Err(Error::Format(format!("unknown dtype code {other}"))),
        };
        let ndim = take(9, 1)?[0] as usize;
        let mut dims = Vec::with_capacity(ndim);
        for k in 0..ndim {
            let d = u64::from_le_bytes(take(10 + 8 * k, 8)?.try_into().unwrap());
            dims.push(usize::try_from(d).map_err(|_| Error::Format("dimension overflow".into()))?);
        }
        let count = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| Error::Format("element count overflow".into()))?;
        let start = 10 + 8 * ndim;
        let payload = take(start, count * dtype.width())?;
        if bytes.len() != start + payload.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after payload",
                bytes.len() - start - payload.len()
            )));
        }
        let data = match dtype {
            DType::F32 => payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
                .collect(),
            DType::F64 => payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        };
        Ok(Self { dims, data, dtype })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Interprets a `[C, H, W]` or `[H, W]` tensor as a feature map.
    pub fn to_feature_map(&self) -> Result<FeatureMap> {
        match self.dims[..] {
            [h, w] => FeatureMap::new(1, h, w, self.data.clone()),
            [c, h, w] => FeatureMap::new(c, h, w, self.data.clone()),
            _ => Err(Error::Format(format!(
                "expected a 2-D or 3-D tensor, got dims {:?}",
                self.dims
            ))),
        }
    }
}

impl From<&FeatureMap> for Tensor {
    fn from(f: &FeatureMap) -> Self {
        Tensor {
            dims: vec![f.channels(), f.height(), f.width()],
            data: f.data().to_vec(),
            dtype: DType::F64,
        }
    }
}
