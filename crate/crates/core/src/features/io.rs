//! Binary feature and model files. Integers are u32 little-endian, reals
//! are f32 little-endian.
//!
//! * `.ftr`: `"FTRV"`, version, dim, u8 kind tag, count, `count * dim` reals.
//! * PCA model: `"PCAM"`, version, out_dim, in_dim, mean (in_dim reals),
//!   projection (`out_dim x in_dim`, row-major).
//! * Codebook: `"CDBK"`, version, k, dim, centers (`k x dim`, row-major).

use std::path::Path;

use super::{Codebook, DescriptorKind, PcaModel, VideoDescriptor};
use crate::error::{Error, Result};

const FORMAT_VERSION: u32 = 1;

/// Descriptors of one kind, one per video, in manifest order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureFile {
    pub kind: DescriptorKind,
    pub dim: usize,
    pub vectors: Vec<Vec<f32>>,
}

impl FeatureFile {
    pub fn from_descriptors(descriptors: &[VideoDescriptor<f32>]) -> Result<Self> {
        let Some(first) = descriptors.first() else {
            return Err(Error::arg("no descriptors to store"));
        };
        if let Some(bad) = descriptors.iter().find(|d| d.kind != first.kind || d.dim() != first.dim()) {
            return Err(Error::arg(format!(
                "mixed descriptors: {:?}/{} vs {:?}/{}",
                first.kind,
                first.dim(),
                bad.kind,
                bad.dim()
            )));
        }
        Ok(Self {
            kind: first.kind,
            dim: first.dim(),
            vectors: descriptors.iter().map(|d| d.vector.clone()).collect(),
        })
    }

    pub fn descriptors(&self) -> Vec<VideoDescriptor<f32>> {
        self.vectors.iter().map(|v| VideoDescriptor::new(self.kind, v.clone())).collect()
    }
}

struct Writer(Vec<u8>);

impl Writer {
    fn new(magic: &[u8; 4]) -> Self {
        let mut w = Writer(magic.to_vec());
        w.u32(FORMAT_VERSION);
        w
    }

    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }

    fn reals(&mut self, v: &[f32]) {
        for x in v {
            self.0.extend_from_slice(&x.to_le_bytes());
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    context: &'a str,
}

impl<'a> Reader<'a> {
    fn open(bytes: &'a [u8], magic: &[u8; 4], context: &'a str) -> Result<Self> {
        if bytes.len() < 8 || &bytes[..4] != magic {
            return Err(Error::format(context, None, format!("missing {} header", String::from_utf8_lossy(magic))));
        }
        let mut r = Reader { bytes, pos: 4, context };
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::format(context, None, format!("unsupported version {version}")));
        }
        Ok(r)
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| Error::format(self.context, None, "truncated file"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn reals(&mut self, n: usize) -> Result<Vec<f32>> {
        let bytes = self.take(n.checked_mul(4).ok_or_else(|| Error::format(self.context, None, "size overflow"))?)?;
        Ok(bytes.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect())
    }

    fn finish(self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::format(self.context, None, "trailing bytes"));
        }
        Ok(())
    }
}

pub fn encode_features(f: &FeatureFile) -> Vec<u8> {
    let mut w = Writer::new(b"FTRV");
    w.u32(f.dim as u32);
    w.0.push(f.kind.tag());
    w.u32(f.vectors.len() as u32);
    for v in &f.vectors {
        debug_assert_eq!(v.len(), f.dim);
        w.reals(v);
    }
    w.0
}

pub fn decode_features(bytes: &[u8], context: &str) -> Result<FeatureFile> {
    let mut r = Reader::open(bytes, b"FTRV", context)?;
    let dim = r.u32()? as usize;
    let tag = r.u8()?;
    let kind = DescriptorKind::from_tag(tag).ok_or_else(|| Error::format(context, None, format!("unknown kind tag {tag}")))?;
    let count = r.u32()? as usize;
    let vectors = (0..count).map(|_| r.reals(dim)).collect::<Result<Vec<_>>>()?;
    r.finish()?;
    Ok(FeatureFile { kind, dim, vectors })
}

pub fn encode_pca(m: &PcaModel<f32>) -> Vec<u8> {
    let mut w = Writer::new(b"PCAM");
    w.u32(m.out_dim() as u32);
    w.u32(m.in_dim() as u32);
    w.reals(m.mean());
    w.reals(m.projection());
    w.0
}

pub fn decode_pca(bytes: &[u8], context: &str) -> Result<PcaModel<f32>> {
    let mut r = Reader::open(bytes, b"PCAM", context)?;
    let out_dim = r.u32()? as usize;
    let in_dim = r.u32()? as usize;
    let mean = r.reals(in_dim)?;
    let projection = r.reals(out_dim * in_dim)?;
    r.finish()?;
    PcaModel::new(mean, projection, out_dim).map_err(|e| Error::format(context, None, e.to_string()))
}

pub fn encode_codebook(cb: &Codebook<f32>) -> Vec<u8> {
    let mut w = Writer::new(b"CDBK");
    w.u32(cb.k() as u32);
    w.u32(cb.dim() as u32);
    w.reals(cb.centers());
    w.0
}

pub fn decode_codebook(bytes: &[u8], context: &str) -> Result<Codebook<f32>> {
    let mut r = Reader::open(bytes, b"CDBK", context)?;
    let k = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let centers = r.reals(k * dim)?;
    r.finish()?;
    Codebook::new(k, dim, centers).map_err(|e| Error::format(context, None, e.to_string()))
}

fn write_bytes(path: &Path, bytes: Vec<u8>) -> Result<()> {
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn write_features(f: &FeatureFile, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode_features(f))
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureFile> {
    let path = path.as_ref();
    decode_features(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_pca(m: &PcaModel<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode_pca(m))
}

pub fn read_pca(path: impl AsRef<Path>) -> Result<PcaModel<f32>> {
    let path = path.as_ref();
    decode_pca(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_codebook(cb: &Codebook<f32>, path: impl AsRef<Path>) -> Result<()> {
    write_bytes(path.as_ref(), encode_codebook(cb))
}

pub fn read_codebook(path: impl AsRef<Path>) -> Result<Codebook<f32>> {
    let path = path.as_ref();
    decode_codebook(&read_bytes(path)?, &path.display().to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feature_header_layout() {
        let f = FeatureFile {
            kind: DescriptorKind::Vlad,
            dim: 2,
            vectors: vec![vec![1.0, 0.0]],
        };
        let b = encode_features(&f);
        assert_eq!(&b[..4], b"FTRV");
        assert_eq!(&b[4..12], &[1, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(b[12], 1);
        assert_eq!(&b[13..17], &[1, 0, 0, 0]);
        assert_eq!(b.len(), 17 + 8);
        assert_eq!(decode_features(&b, "t").unwrap(), f);
        assert!(decode_features(&b[..b.len() - 1], "t").is_err());
        let mut bad = b.clone();
        bad[12] = 9;
        assert!(decode_features(&bad, "t").is_err());
    }

    #[test]
    fn model_files_reject_wrong_magic() {
        let cb = Codebook::new(1, 1, vec![0.5f32]).unwrap();
        let bytes = encode_codebook(&cb);
        assert_eq!(decode_codebook(&bytes, "t").unwrap(), cb);
        assert!(decode_pca(&bytes, "t").is_err());
    }

    #[test]
    fn mixed_descriptors_rejected() {
        let a = VideoDescriptor::new(DescriptorKind::Vlad, vec![0.0f32; 2]);
        let b = VideoDescriptor::new(DescriptorKind::Fc6Pooled, vec![0.0f32; 2]);
        assert!(FeatureFile::from_descriptors(&[a, b]).is_err());
    }
}
