//! `.dseq` binary container.
//!
//! Layout (all integers little-endian):
//! `"DSEQ"`, u32 version, u32 width, u32 height, u32 frame_count, then
//! `frame_count * width * height` f32 values, frame-major and row-major
//! within each frame.

use std::path::Path;

use super::{DepthFrame, DepthSequence};
use crate::error::{Error, Result};

pub const DSEQ_MAGIC: &[u8; 4] = b"DSEQ";
pub const DSEQ_VERSION: u32 = 1;
const HEADER_LEN: usize = 20;

pub fn encode_dseq(seq: &DepthSequence<f32>) -> Vec<u8> {
    let (w, h, n) = (seq.width(), seq.height(), seq.len());
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * w * h * n);
    out.extend_from_slice(DSEQ_MAGIC);
    for v in [DSEQ_VERSION, w as u32, h as u32, n as u32] {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for frame in seq.frames() {
        for v in frame.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

fn read_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

/// Parses a `.dseq` payload. `context` names the source in error messages.
pub fn decode_dseq(bytes: &[u8], context: &str) -> Result<DepthSequence<f32>> {
    if bytes.len() < HEADER_LEN || &bytes[..4] != DSEQ_MAGIC {
        return Err(Error::format(context, None, "missing DSEQ header"));
    }
    let version = read_u32(bytes, 4);
    if version != DSEQ_VERSION {
        return Err(Error::format(context, None, format!("unsupported version {version}")));
    }
    let w = read_u32(bytes, 8) as usize;
    let h = read_u32(bytes, 12) as usize;
    let n = read_u32(bytes, 16) as usize;
    if w == 0 || h == 0 || n == 0 {
        return Err(Error::format(context, None, format!("empty geometry {w}x{h}x{n}")));
    }
    let per_frame = w * h;
    let expected = per_frame
        .checked_mul(n)
        .and_then(|v| v.checked_mul(4))
        .and_then(|v| v.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::format(context, None, "geometry overflows"))?;
    if bytes.len() != expected {
        return Err(Error::format(
            context,
            None,
            format!("payload is {} bytes, header implies {expected}", bytes.len()),
        ));
    }
    let mut frames = Vec::with_capacity(n);
    for (i, chunk) in bytes[HEADER_LEN..].chunks_exact(4 * per_frame).enumerate() {
        let values: Vec<f32> = chunk
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::format(context, Some(i), "non-finite or negative depth value"));
        }
        frames.push(DepthFrame::from_parts_unchecked(w, h, values));
    }
    Ok(DepthSequence::from_frames_unchecked(String::new(), frames))
}

pub fn write_sequence(seq: &DepthSequence<f32>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_dseq(seq)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depth_io::read_sequence;

    fn seq(w: usize, h: usize, frames: Vec<Vec<f32>>) -> DepthSequence<f32> {
        DepthSequence::new(
            "s",
            frames.into_iter().map(|v| DepthFrame::new(w, h, v).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn zero_sequence_payload_is_zero() {
        let s = seq(2, 2, vec![vec![0.0; 4]; 3]);
        let bytes = encode_dseq(&s);
        assert_eq!(bytes.len(), 20 + 3 * 4 * 4);
        assert!(bytes[20..].iter().all(|&b| b == 0));
        let back = decode_dseq(&bytes, "mem").unwrap();
        assert_eq!(back.len(), 3);
        assert!(back.frames().iter().all(|f| f.values() == [0.0; 4]));
    }

    #[test]
    fn single_value_payload_bytes() {
        let bytes = encode_dseq(&seq(1, 1, vec![vec![2.5]]));
        assert_eq!(&bytes[..4], b"DSEQ");
        assert_eq!(&bytes[4..20], &[1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0, 1, 0, 0, 0]);
        assert_eq!(&bytes[20..], &2.5f32.to_le_bytes());
    }

    #[test]
    fn truncated_and_corrupt_inputs() {
        let mut bytes = encode_dseq(&seq(2, 1, vec![vec![1.0, 2.0], vec![3.0, 4.0]]));
        assert!(decode_dseq(&bytes[..bytes.len() - 1], "t").is_err());
        assert!(decode_dseq(b"DSEX0000000000000000", "t").is_err());
        // poison the second frame
        let at = 20 + 8;
        bytes[at..at + 4].copy_from_slice(&f32::NAN.to_le_bytes());
        match decode_dseq(&bytes, "t").unwrap_err() {
            Error::Format { frame, .. } => assert_eq!(frame, Some(1)),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn file_round_trip_takes_id_from_stem() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clip_7.dseq");
        let s = seq(3, 1, vec![vec![0.25, 1.5, 7.0]]);
        write_sequence(&s, &p).unwrap();
        let back = read_sequence(&p).unwrap();
        assert_eq!(back.video_id(), "clip_7");
        assert_eq!(back.frames(), s.frames());
    }
}
