//! Checkpoints and their binary container.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! "C2FM" | version u32 | n_dims u32 | dims u32 × n_dims
//! | level u32 | epoch u32 | val_f1 f64 | lineage u32 (u32::MAX = none)
//! | parameter tensors as f32, declaration order
//! ```

use std::path::Path;

use ndarray::{Array1, Array2};

use super::{Layer, ModelParams, NetworkError};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"C2FM";
pub const CHECKPOINT_VERSION: u32 = 1;
const NO_LINEAGE: u32 = u32::MAX;

/// Model parameters captured at an epoch boundary.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub level: u32,
    pub epoch: u32,
    pub val_f1: f64,
    /// Index of the coarse checkpoint this one descends from.
    pub lineage: Option<u32>,
}

impl Checkpoint {
    /// Snapshots `params` at file precision, so a checkpoint in memory is
    /// identical to the same checkpoint after a save/load cycle.
    pub fn capture(params: &ModelParams, level: u32, epoch: u32, val_f1: f64) -> Self {
        Self {
            params: params.rounded_to_f32(),
            level,
            epoch,
            val_f1,
            lineage: None,
        }
    }

    pub fn with_lineage(mut self, lineage: u32) -> Self {
        self.lineage = Some(lineage);
        self
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let arch = self.params.arch();
        let mut out = Vec::with_capacity(40 + 4 * (arch.len() + self.params.num_parameters()));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(arch.len() as u32).to_le_bytes());
        for d in arch {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        out.extend_from_slice(&self.level.to_le_bytes());
        out.extend_from_slice(&self.epoch.to_le_bytes());
        out.extend_from_slice(&self.val_f1.to_le_bytes());
        out.extend_from_slice(&self.lineage.unwrap_or(NO_LINEAGE).to_le_bytes());
        for t in self.params.tensors() {
            for &v in t {
                out.extend_from_slice(&(v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, NetworkError> {
        let mut r = Reader { bytes, pos: 0 };
        if bytes.len() < 4 {
            return Err(NetworkError::TruncatedFile);
        }
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(NetworkError::BadMagic);
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(NetworkError::VersionUnsupported(version));
        }
        let n_dims = r.u32()? as usize;
        // each dim is 4 bytes; reject absurd counts before allocating
        if n_dims > bytes.len() / 4 {
            return Err(NetworkError::TruncatedFile);
        }
        let dims = (0..n_dims)
            .map(|_| r.u32().map(|d| d as usize))
            .collect::<Result<Vec<_>, _>>()?;
        if dims.len() < 2 || dims.contains(&0) {
            return Err(NetworkError::InvalidArch(dims));
        }
        let level = r.u32()?;
        let epoch = r.u32()?;
        let val_f1 = f64::from_le_bytes(r.take(8)?.try_into().expect("8 bytes"));
        let lineage = match r.u32()? {
            NO_LINEAGE => None,
            l => Some(l),
        };
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for w in dims.windows(2) {
            let weight = r.f32s(w[0] * w[1])?;
            let bias = r.f32s(w[1])?;
            layers.push(Layer {
                weight: Array2::from_shape_vec((w[0], w[1]), weight).expect("sized read"),
                bias: Array1::from_vec(bias),
            });
        }
        if r.pos != bytes.len() {
            return Err(NetworkError::TrailingBytes(bytes.len() - r.pos));
        }
        let predictor = layers.pop().expect("at least one layer");
        Ok(Self {
            params: ModelParams::new(layers, predictor)?,
            level,
            epoch,
            val_f1,
            lineage,
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetworkError> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetworkError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NetworkError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(NetworkError::TruncatedFile)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NetworkError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32s(&mut self, n: usize) -> Result<Vec<f64>, NetworkError> {
        let raw = self.take(n.checked_mul(4).ok_or(NetworkError::TruncatedFile)?)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4 bytes"))))
            .collect())
    }
}
