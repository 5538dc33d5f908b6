//! Binary checkpoint format.
//!
//! Byte layout (all integers little-endian, all floats f64 LE):
//!
//! ```text
//! magic               18 bytes  "driftcast-ckpt-v1\n"
//! section_count       u32
//! per section:
//!   name              u16 length + UTF-8 bytes
//!   meta_count        u32
//!   per meta entry:   key u16 length + UTF-8, value u32 length + UTF-8
//!   tensor_count      u32
//!   per tensor:
//!     name            u16 length + UTF-8 bytes
//!     kind tag        u8: 0 linear, 1 bias, 2 conv_filter
//!     kind dims       u32 each: linear d_in,d_out; bias d_out;
//!                     conv d_in,d_out,d_k
//!     layer_type_id   u32
//!     ndim            u8, then ndim × u64 shape dims
//!     values          numel × f64, row-major
//! ```
//!
//! The shape block is redundant with the kind dims and is verified
//! against them on read. Sections distinguish payloads sharing one file
//! (model parameters, wiring metadata, adapter parameters).

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::nncore::{ParamKind, ParamTensor, Tensor};

pub const CKPT_MAGIC: &[u8] = b"driftcast-ckpt-v1\n";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: not a driftcast-ckpt-v1 file")]
    BadMagic,
    #[error("truncated checkpoint (needed {needed} more bytes at offset {offset})")]
    Truncated { offset: usize, needed: usize },
    #[error("unknown tensor kind tag {0}")]
    BadKindTag(u8),
    #[error("checkpoint string is not valid UTF-8")]
    BadUtf8,
    #[error("tensor {name}: stored shape disagrees with its kind")]
    ShapeKindMismatch { name: String },
}

#[derive(Debug, Clone)]
pub struct CheckpointSection {
    pub name: String,
    /// Ordered key/value pairs (dims, flags, wiring descriptors).
    pub meta: Vec<(String, String)>,
    pub tensors: Vec<ParamTensor>,
}

impl CheckpointSection {
    pub fn meta_value(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

fn push_str16(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u16).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

fn push_str32(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub fn write_checkpoint(
    path: &Path,
    sections: &[CheckpointSection],
) -> Result<(), CheckpointError> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    out.extend_from_slice(&(sections.len() as u32).to_le_bytes());
    for section in sections {
        push_str16(&mut out, &section.name);
        out.extend_from_slice(&(section.meta.len() as u32).to_le_bytes());
        for (k, v) in &section.meta {
            push_str16(&mut out, k);
            push_str32(&mut out, v);
        }
        out.extend_from_slice(&(section.tensors.len() as u32).to_le_bytes());
        for t in &section.tensors {
            push_str16(&mut out, &t.name);
            match t.kind {
                ParamKind::Linear { d_in, d_out } => {
                    out.push(0);
                    out.extend_from_slice(&(d_in as u32).to_le_bytes());
                    out.extend_from_slice(&(d_out as u32).to_le_bytes());
                }
                ParamKind::Bias { d_out } => {
                    out.push(1);
                    out.extend_from_slice(&(d_out as u32).to_le_bytes());
                }
                ParamKind::ConvFilter { d_in, d_out, d_k } => {
                    out.push(2);
                    out.extend_from_slice(&(d_in as u32).to_le_bytes());
                    out.extend_from_slice(&(d_out as u32).to_le_bytes());
                    out.extend_from_slice(&(d_k as u32).to_le_bytes());
                }
            }
            out.extend_from_slice(&(t.layer_type_id as u32).to_le_bytes());
            let shape = t.values.shape();
            out.push(shape.len() as u8);
            for d in shape {
                out.extend_from_slice(&(*d as u64).to_le_bytes());
            }
            for v in t.values.as_slice() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    fs::write(path, out)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.bytes.len(),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn str16(&mut self) -> Result<String, CheckpointError> {
        let len = self.u16()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| CheckpointError::BadUtf8)
    }

    fn str32(&mut self) -> Result<String, CheckpointError> {
        let len = self.u32()? as usize;
        String::from_utf8(self.take(len)?.to_vec()).map_err(|_| CheckpointError::BadUtf8)
    }
}

pub fn read_checkpoint(path: &Path) -> Result<Vec<CheckpointSection>, CheckpointError> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        pos: 0,
    };
    if cur.take(CKPT_MAGIC.len())? != CKPT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let n_sections = cur.u32()? as usize;
    let mut sections = Vec::with_capacity(n_sections);
    for _ in 0..n_sections {
        let name = cur.str16()?;
        let n_meta = cur.u32()? as usize;
        let mut meta = Vec::with_capacity(n_meta);
        for _ in 0..n_meta {
            let k = cur.str16()?;
            let v = cur.str32()?;
            meta.push((k, v));
        }
        let n_tensors = cur.u32()? as usize;
        let mut tensors = Vec::with_capacity(n_tensors);
        for _ in 0..n_tensors {
            let tname = cur.str16()?;
            let kind = match cur.u8()? {
                0 => ParamKind::Linear {
                    d_in: cur.u32()? as usize,
                    d_out: cur.u32()? as usize,
                },
                1 => ParamKind::Bias {
                    d_out: cur.u32()? as usize,
                },
                2 => ParamKind::ConvFilter {
                    d_in: cur.u32()? as usize,
                    d_out: cur.u32()? as usize,
                    d_k: cur.u32()? as usize,
                },
                tag => return Err(CheckpointError::BadKindTag(tag)),
            };
            let layer_type_id = cur.u32()? as usize;
            let ndim = cur.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(cur.u64()? as usize);
            }
            if shape != kind.shape() {
                return Err(CheckpointError::ShapeKindMismatch { name: tname });
            }
            let numel: usize = shape.iter().product();
            let mut data = Vec::with_capacity(numel);
            for _ in 0..numel {
                data.push(cur.f64()?);
            }
            let values = Tensor::from_vec(&shape, data).expect("shape/len agree by construction");
            let mut tensor = ParamTensor::new(tname, kind, values)
                .expect("shape checked against kind above");
            tensor.layer_type_id = layer_type_id;
            tensors.push(tensor);
        }
        sections.push(CheckpointSection {
            name,
            meta,
            tensors,
        });
    }
    Ok(sections)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut w =
            ParamTensor::init_uniform("w_out", ParamKind::Linear { d_in: 9, d_out: 4 }, &mut rng);
        w.layer_type_id = 2;
        let mut c = ParamTensor::init_uniform(
            "conv0",
            ParamKind::ConvFilter {
                d_in: 2,
                d_out: 3,
                d_k: 5,
            },
            &mut rng,
        );
        c.layer_type_id = 1;
        let b = ParamTensor::zeros("b_out", ParamKind::Bias { d_out: 4 });
        let sections = vec![
            CheckpointSection {
                name: "model".into(),
                meta: vec![
                    ("lookback".into(), "96".into()),
                    ("wiring".into(), "affine:0:1".into()),
                ],
                tensors: vec![w, b],
            },
            CheckpointSection {
                name: "adapter".into(),
                meta: vec![],
                tensors: vec![c],
            },
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_checkpoint(&path, &sections).unwrap();
        let back = read_checkpoint(&path).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[0].name, "model");
        assert_eq!(back[0].meta_value("lookback"), Some("96"));
        assert_eq!(back[1].name, "adapter");
        for (orig, read) in sections.iter().zip(&back) {
            for (a, b) in orig.tensors.iter().zip(&read.tensors) {
                assert_eq!(a.name, b.name);
                assert_eq!(a.kind, b.kind);
                assert_eq!(a.layer_type_id, b.layer_type_id);
                let bits_a: Vec<u64> = a.values.as_slice().iter().map(|v| v.to_bits()).collect();
                let bits_b: Vec<u64> = b.values.as_slice().iter().map(|v| v.to_bits()).collect();
                assert_eq!(bits_a, bits_b);
            }
        }
    }

    #[test]
    fn rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"definitely not a checkpoint").unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(CheckpointError::BadMagic)
        ));
    }

    #[test]
    fn rejects_truncation() {
        let sections = vec![CheckpointSection {
            name: "model".into(),
            meta: vec![],
            tensors: vec![ParamTensor::zeros("b", ParamKind::Bias { d_out: 8 })],
        }];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        write_checkpoint(&path, &sections).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 11);
        std::fs::write(&path, bytes).unwrap();
        assert!(matches!(
            read_checkpoint(&path),
            Err(CheckpointError::Truncated { .. })
        ));
    }
}
