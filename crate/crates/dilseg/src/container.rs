//! The `DLS1` tensor container.
//!
//! Layout: magic `DLS1`, `u8` rank, `rank` little-endian `u32` extents,
//! then a code byte (`0x01` little-endian `f32`, `0x02` `u8`) followed by
//! the row-major payload.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use dilseg_core::metrics::LabelMap;
use dilseg_core::{Shape, Tensor};

use crate::error::{IoError, IoResult};

pub const MAGIC: &[u8; 4] = b"DLS1";
pub const CODE_F32: u8 = 0x01;
pub const CODE_U8: u8 = 0x02;

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl Payload {
    pub fn len(&self) -> usize {
        match self {
            Payload::F32(v) => v.len(),
            Payload::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Container {
    pub dims: Vec<usize>,
    pub payload: Payload,
}

impl Container {
    pub fn new(dims: Vec<usize>, payload: Payload) -> IoResult<Self> {
        if dims.is_empty() || dims.len() > u8::MAX as usize {
            return Err(IoError::Format(format!("rank {} is not supported", dims.len())));
        }
        let count = element_count(&dims)?;
        if count != payload.len() {
            return Err(IoError::Format(format!("extents {:?} need {} values, payload has {}", dims, count, payload.len())));
        }
        Ok(Container { dims, payload })
    }

    pub fn from_tensor(t: &Tensor<f32>) -> Self {
        Container { dims: t.shape().dims().to_vec(), payload: Payload::F32(t.data().to_vec()) }
    }

    pub fn from_labels(l: &LabelMap) -> Self {
        Container { dims: vec![l.height(), l.width()], payload: Payload::U8(l.codes().to_vec()) }
    }

    pub fn into_tensor(self) -> IoResult<Tensor<f32>> {
        match self.payload {
            Payload::F32(v) => Ok(Tensor::from_vec(Shape::from_dims(&self.dims)?, v)?),
            Payload::U8(_) => Err(IoError::Format("expected f32 payload, found u8".into())),
        }
    }

    /// Reads a label map stored as `(H, W)` (leading unit extents are accepted).
    pub fn into_labels(self) -> IoResult<LabelMap> {
        let codes = match self.payload {
            Payload::U8(v) => v,
            Payload::F32(_) => return Err(IoError::Format("expected u8 label payload, found f32".into())),
        };
        let n = self.dims.len();
        if n < 2 || self.dims[..n - 2].iter().any(|&d| d != 1) {
            return Err(IoError::Format(format!("label map extents {:?} are not 2-D", self.dims)));
        }
        Ok(LabelMap::new(self.dims[n - 2], self.dims[n - 1], codes)?)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.payload.len());
        self.write_to(&mut out).expect("writing to a Vec cannot fail");
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> IoResult<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[self.dims.len() as u8])?;
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| IoError::Format(format!("extent {} exceeds u32", d)))?;
            w.write_all(&d.to_le_bytes())?;
        }
        match &self.payload {
            Payload::F32(v) => {
                w.write_all(&[CODE_F32])?;
                let mut buf = Vec::with_capacity(4 * v.len());
                for x in v {
                    buf.extend_from_slice(&x.to_le_bytes());
                }
                w.write_all(&buf)?;
            }
            Payload::U8(v) => {
                w.write_all(&[CODE_U8])?;
                w.write_all(v)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> IoResult<Self> {
        let mut magic = [0u8; 4];
        read_exact(r, &mut magic, "magic")?;
        if &magic != MAGIC {
            return Err(IoError::Format(format!("bad magic {:?}, expected DLS1", magic)));
        }
        let mut b = [0u8; 1];
        read_exact(r, &mut b, "rank")?;
        let rank = b[0] as usize;
        if rank == 0 {
            return Err(IoError::Format("rank 0 container".into()));
        }
        let mut dims = Vec::with_capacity(rank);
        for _ in 0..rank {
            let mut e = [0u8; 4];
            read_exact(r, &mut e, "extent")?;
            dims.push(u32::from_le_bytes(e) as usize);
        }
        let count = element_count(&dims)?;
        read_exact(r, &mut b, "payload code")?;
        let payload = match b[0] {
            CODE_F32 => {
                let bytes = count
                    .checked_mul(4)
                    .ok_or_else(|| IoError::Format(format!("extents {:?} overflow", dims)))?;
                let mut raw = vec![0u8; bytes];
                read_exact(r, &mut raw, "f32 payload")?;
                Payload::F32(raw.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
            }
            CODE_U8 => {
                let mut raw = vec![0u8; count];
                read_exact(r, &mut raw, "u8 payload")?;
                Payload::U8(raw)
            }
            other => return Err(IoError::Format(format!("unknown payload code 0x{:02x}", other))),
        };
        Ok(Container { dims, payload })
    }

    pub fn decode(bytes: &[u8]) -> IoResult<Self> {
        let mut cursor = bytes;
        let c = Container::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(IoError::Format(format!("{} trailing bytes after container", cursor.len())));
        }
        Ok(c)
    }
}

fn element_count(dims: &[usize]) -> IoResult<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| IoError::Format(format!("extents {:?} overflow", dims)))
}

pub(crate) fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> IoResult<()> {
    r.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => IoError::Format(format!("truncated input while reading {}", what)),
        _ => IoError::Io(e),
    })
}

pub fn read_file(path: &Path) -> IoResult<Container> {
    let bytes = fs::read(path).map_err(|e| IoError::Path(path.display().to_string(), e))?;
    Container::decode(&bytes).map_err(|e| e.context(path))
}

pub fn write_file(path: &Path, c: &Container) -> IoResult<()> {
    fs::write(path, c.encode()).map_err(|e| IoError::Path(path.display().to_string(), e))
}
