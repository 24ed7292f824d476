//! Binary dataset container, little-endian:
//!
//! ```text
//! "C2FD" | version u32 | N u32 | H u16 | W u16 | K u16
//! | K × (name length u16, UTF-8 bytes)
//! | N·H·W pixels u8 | N labels u16
//! ```

use super::{DataError, Dataset};

pub const DATASET_MAGIC: &[u8; 4] = b"C2FD";
pub const DATASET_VERSION: u32 = 1;

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DataError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or(DataError::TruncatedFile)?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, DataError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, DataError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

impl Dataset {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.pixels.len() + 2 * self.labels.len());
        out.extend_from_slice(DATASET_MAGIC);
        out.extend_from_slice(&DATASET_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u16).to_le_bytes());
        out.extend_from_slice(&(self.width as u16).to_le_bytes());
        out.extend_from_slice(&(self.num_classes() as u16).to_le_bytes());
        for name in &self.class_names {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
        }
        out.extend_from_slice(&self.pixels);
        for &y in &self.labels {
            out.extend_from_slice(&(y as u16).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, DataError> {
        let mut c = Cursor { bytes, pos: 0 };
        if bytes.len() < 4 {
            return Err(DataError::TruncatedFile);
        }
        if c.take(4)? != DATASET_MAGIC {
            return Err(DataError::BadMagic);
        }
        let version = c.u32()?;
        if version != DATASET_VERSION {
            return Err(DataError::VersionUnsupported(version));
        }
        let n = c.u32()? as usize;
        let height = c.u16()? as usize;
        let width = c.u16()? as usize;
        let k = c.u16()? as usize;
        let class_names = (0..k)
            .map(|_| {
                let len = c.u16()? as usize;
                String::from_utf8(c.take(len)?.to_vec()).map_err(|_| DataError::InvalidName)
            })
            .collect::<Result<Vec<_>, _>>()?;
        let raster = height.checked_mul(width).ok_or(DataError::TruncatedFile)?;
        let pixels = c
            .take(n.checked_mul(raster).ok_or(DataError::TruncatedFile)?)?
            .to_vec();
        let raw_labels = c.take(n.checked_mul(2).ok_or(DataError::TruncatedFile)?)?;
        let labels = raw_labels
            .chunks_exact(2)
            .map(|b| {
                let y = u16::from_le_bytes([b[0], b[1]]) as usize;
                if y >= k {
                    Err(DataError::LabelOutOfRange {
                        label: y,
                        num_classes: k,
                    })
                } else {
                    Ok(y)
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        if c.pos != bytes.len() {
            return Err(DataError::TrailingBytes(bytes.len() - c.pos));
        }
        Ok(Dataset {
            height,
            width,
            class_names,
            pixels,
            labels,
        })
    }
}
