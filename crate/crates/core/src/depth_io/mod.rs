//! Depth-sequence containers, on-disk formats, dataset manifests and the
//! synthetic sequence generator.

mod dseq;
mod manifest;
mod pgm;
mod synth;

use std::path::Path;

pub use dseq::{decode_dseq, encode_dseq, write_sequence, DSEQ_MAGIC, DSEQ_VERSION};
pub use manifest::{DatasetManifest, ManifestEntry, SplitRole};
pub use pgm::{read_pgm_dir, write_pgm_dir};
pub use synth::{synth_sequence, SynthKind, SynthSpec};

use crate::error::{Error, Result};
use crate::scalar::{cast_slice, Scalar};

/// One depth map, row-major, in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthFrame<T = f32> {
    width: usize,
    height: usize,
    values: Vec<T>,
}

impl<T: Scalar> DepthFrame<T> {
    /// Builds a frame, rejecting wrong lengths and negative or non-finite values.
    pub fn new(width: usize, height: usize, values: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::arg(format!("frame dimensions must be positive, got {width}x{height}")));
        }
        if values.len() != width * height {
            return Err(Error::arg(format!(
                "frame {width}x{height} needs {} values, got {}",
                width * height,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite() || *v < T::zero()) {
            return Err(Error::arg(format!("depth value {} at index {i} is not finite and >= 0", values[i])));
        }
        Ok(Self { width, height, values })
    }

    /// Constant-valued frame.
    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    // Callers guarantee the invariants.
    pub(crate) fn from_parts_unchecked(width: usize, height: usize, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), width * height);
        Self { width, height, values }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.values[row * self.width + col]
    }

    pub fn row(&self, row: usize) -> &[T] {
        &self.values[row * self.width..(row + 1) * self.width]
    }

    /// Multiplies every value by a nonnegative factor.
    pub fn scaled(&self, factor: T) -> Self {
        Self::from_parts_unchecked(self.width, self.height, self.values.iter().map(|&v| v * factor).collect())
    }

    pub fn cast<U: Scalar>(&self) -> DepthFrame<U> {
        DepthFrame::from_parts_unchecked(self.width, self.height, cast_slice(&self.values))
    }
}

/// Ordered frames of one video, all of the same size.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthSequence<T = f32> {
    video_id: String,
    frames: Vec<DepthFrame<T>>,
}

impl<T: Scalar> DepthSequence<T> {
    pub fn new(video_id: impl Into<String>, frames: Vec<DepthFrame<T>>) -> Result<Self> {
        let Some(first) = frames.first() else {
            return Err(Error::arg("a depth sequence needs at least one frame"));
        };
        let (w, h) = (first.width, first.height);
        if let Some(i) = frames.iter().position(|f| f.width != w || f.height != h) {
            return Err(Error::arg(format!(
                "frame {i} is {}x{}, expected {w}x{h}",
                frames[i].width, frames[i].height
            )));
        }
        Ok(Self {
            video_id: video_id.into(),
            frames,
        })
    }

    pub(crate) fn from_frames_unchecked(video_id: String, frames: Vec<DepthFrame<T>>) -> Self {
        Self { video_id, frames }
    }

    pub fn video_id(&self) -> &str {
        &self.video_id
    }

    pub fn with_video_id(mut self, id: impl Into<String>) -> Self {
        self.video_id = id.into();
        self
    }

    pub fn frames(&self) -> &[DepthFrame<T>] {
        &self.frames
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    /// Always false: a valid sequence holds at least one frame.
    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn width(&self) -> usize {
        self.frames[0].width
    }

    pub fn height(&self) -> usize {
        self.frames[0].height
    }

    /// Same frames in reverse time order.
    pub fn reversed(&self) -> Self {
        Self::from_frames_unchecked(self.video_id.clone(), self.frames.iter().rev().cloned().collect())
    }

    pub fn map_values(&self, f: impl Fn(T) -> T) -> Result<Self> {
        let frames = self
            .frames
            .iter()
            .map(|fr| DepthFrame::new(fr.width, fr.height, fr.values.iter().map(|&v| f(v)).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_frames_unchecked(self.video_id.clone(), frames))
    }

    pub fn cast<U: Scalar>(&self) -> DepthSequence<U> {
        DepthSequence::from_frames_unchecked(self.video_id.clone(), self.frames.iter().map(DepthFrame::cast).collect())
    }
}

/// Reads a `.dseq` container, or a directory of 16-bit PGM frames.
///
/// The video id is taken from the file stem (or directory name).
pub fn read_sequence(path: impl AsRef<Path>) -> Result<DepthSequence<f32>> {
    let path = path.as_ref();
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if path.is_dir() {
        return read_pgm_dir(path).map(|s| s.with_video_id(id));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_dseq(&bytes, &path.display().to_string()).map(|s| s.with_video_id(id))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frame_rejects_negative_and_nan() {
        assert!(DepthFrame::new(2, 1, vec![1.0f32, -0.5]).is_err());
        assert!(DepthFrame::new(2, 1, vec![1.0f32, f32::NAN]).is_err());
        assert!(DepthFrame::new(2, 1, vec![1.0f32]).is_err());
        assert!(DepthFrame::<f32>::new(0, 1, vec![]).is_err());
    }

    #[test]
    fn sequence_rejects_mixed_dimensions() {
        let a = DepthFrame::filled(2, 2, 1.0f32).unwrap();
        let b = DepthFrame::filled(2, 3, 1.0f32).unwrap();
        let err = DepthSequence::new("v", vec![a, b]).unwrap_err();
        assert!(err.to_string().contains("frame 1"));
        assert!(DepthSequence::<f32>::new("v", vec![]).is_err());
    }
}
