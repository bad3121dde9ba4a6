//! Depth-temporal stream inputs: absolute frame differences and modified
//! depth motion maps (MDMMs), the unthresholded per-clip sum of absolute
//! differences between consecutive depth maps.

use std::io::BufWriter;
use std::path::Path;

use crate::depth_io::{DepthFrame, DepthSequence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default clip length for MDMMs.
pub const DEFAULT_CLIP_LEN: usize = 10;

/// A run of `length_n` consecutive frames starting at `t_start`.
#[derive(Debug, Clone, Copy)]
pub struct Clip<'a, T> {
    source: &'a DepthSequence<T>,
    t_start: usize,
    length_n: usize,
}

impl<'a, T: Scalar> Clip<'a, T> {
    pub fn new(source: &'a DepthSequence<T>, t_start: usize, length_n: usize) -> Result<Self> {
        if length_n < 2 {
            return Err(Error::arg(format!("a clip needs >= 2 frames, got {length_n}")));
        }
        if t_start + length_n > source.len() {
            return Err(Error::arg(format!(
                "clip {t_start}..{} exceeds {} frames",
                t_start + length_n,
                source.len()
            )));
        }
        Ok(Self {
            source,
            t_start,
            length_n,
        })
    }

    pub fn t_start(&self) -> usize {
        self.t_start
    }

    pub fn len(&self) -> usize {
        self.length_n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn frames(&self) -> &'a [DepthFrame<T>] {
        &self.source.frames()[self.t_start..self.t_start + self.length_n]
    }
}

/// Accumulated absolute depth change over one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct Mdmm<T = f32> {
    width: usize,
    height: usize,
    energy: Vec<T>,
}

impl<T: Scalar> Mdmm<T> {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn energy(&self) -> &[T] {
        &self.energy
    }

    /// The map as a depth frame, so it can feed the frame-level stages.
    pub fn to_frame(&self) -> DepthFrame<T> {
        DepthFrame::from_parts_unchecked(self.width, self.height, self.energy.clone())
    }

    pub fn from_frame(frame: DepthFrame<T>) -> Self {
        let (width, height) = (frame.width(), frame.height());
        Self {
            width,
            height,
            energy: frame.into_values(),
        }
    }
}

/// `|b - a|` elementwise.
fn abs_diff<T: Scalar>(a: &DepthFrame<T>, b: &DepthFrame<T>) -> Vec<T> {
    a.values().iter().zip(b.values()).map(|(&x, &y)| (y - x).abs()).collect()
}

/// Baseline temporal stream: frame `t` of the output is `|seq[t+1] - seq[t]|`.
pub fn abs_diff_sequence<T: Scalar>(seq: &DepthSequence<T>) -> Result<DepthSequence<T>> {
    if seq.len() < 2 {
        return Err(Error::arg("frame differencing needs >= 2 frames"));
    }
    let frames = seq
        .frames()
        .windows(2)
        .map(|w| DepthFrame::from_parts_unchecked(seq.width(), seq.height(), abs_diff(&w[0], &w[1])))
        .collect();
    Ok(DepthSequence::from_frames_unchecked(seq.video_id().to_string(), frames))
}

/// MDMM of a clip of N frames: the sum of its N-1 consecutive absolute
/// differences, with no thresholding.
///
/// Difference terms are added in mirrored pairs (first with last, second
/// with second-to-last, ...) so the floating-point result is identical for a
/// clip and its time reversal.
pub fn mdmm<T: Scalar>(clip: &Clip<'_, T>) -> Mdmm<T> {
    let frames = clip.frames();
    let first = &frames[0];
    let (w, h) = (first.width(), first.height());
    let terms = frames.len() - 1;
    let diff = |i: usize, p: usize| (frames[i + 1].values()[p] - frames[i].values()[p]).abs();
    let energy = (0..w * h)
        .map(|p| {
            let mut acc = T::zero();
            for i in 0..terms / 2 {
                acc += diff(i, p) + diff(terms - 1 - i, p);
            }
            if terms % 2 == 1 {
                acc += diff(terms / 2, p);
            }
            acc
        })
        .collect();
    Mdmm {
        width: w,
        height: h,
        energy,
    }
}

/// Non-overlapping clips of `n` frames from frame 0; a trailing partial clip
/// is kept only if it has at least two frames.
pub fn clip_bounds(total_frames: usize, n: usize) -> Vec<(usize, usize)> {
    if n == 0 {
        return Vec::new();
    }
    (0..total_frames)
        .step_by(n)
        .map(|s| (s, n.min(total_frames - s)))
        .filter(|&(_, len)| len >= 2)
        .collect()
}

/// MDMMs for every clip of the sequence, in time order.
pub fn mdmm_tiling<T: Scalar>(seq: &DepthSequence<T>, n: usize) -> Result<Vec<Mdmm<T>>> {
    if seq.len() < 2 {
        return Err(Error::arg("MDMM tiling needs >= 2 frames"));
    }
    if n < 2 {
        return Err(Error::arg(format!("clip length must be >= 2, got {n}")));
    }
    clip_bounds(seq.len(), n)
        .into_iter()
        .map(|(s, len)| Clip::new(seq, s, len).map(|c| mdmm(&c)))
        .collect()
}

/// Min-max scales a map to 8-bit gray; a flat map is all black.
pub fn to_gray8<T: Scalar>(m: &Mdmm<T>) -> Vec<u8> {
    let (lo, hi) = m
        .energy
        .iter()
        .fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    m.energy
        .iter()
        .map(|&v| {
            if span > T::zero() {
                ((v - lo) / span * T::lit(255.0)).round().as_f64() as u8
            } else {
                0
            }
        })
        .collect()
}

/// Writes the map as an 8-bit grayscale PNG.
pub fn export_png<T: Scalar>(m: &Mdmm<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut enc = png::Encoder::new(BufWriter::new(file), m.width as u32, m.height as u32);
    enc.set_color(png::ColorType::Grayscale);
    enc.set_depth(png::BitDepth::Eight);
    let to_io = |e: png::EncodingError| Error::io(path, std::io::Error::other(e));
    let mut writer = enc.write_header().map_err(to_io)?;
    writer.write_image_data(&to_gray8(m)).map_err(to_io)?;
    writer.finish().map_err(to_io)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(w: usize, h: usize, frames: &[&[f64]]) -> DepthSequence<f64> {
        DepthSequence::new(
            "m",
            frames.iter().map(|v| DepthFrame::new(w, h, v.to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn abs_diff_examples() {
        let s = seq(1, 1, &[&[0.0], &[3.0], &[1.0]]);
        let d = abs_diff_sequence(&s).unwrap();
        let v: Vec<f64> = d.frames().iter().map(|f| f.values()[0]).collect();
        assert_eq!(v, [3.0, 2.0]);
        let flat = seq(2, 1, &[&[4.0, 1.0], &[4.0, 1.0]]);
        assert_eq!(abs_diff_sequence(&flat).unwrap().frames()[0].values(), [0.0, 0.0]);
        assert!(abs_diff_sequence(&seq(1, 1, &[&[1.0]])).is_err());
    }

    #[test]
    fn mdmm_hand_example() {
        let s = seq(
            2,
            2,
            &[&[0.0, 0.0, 0.0, 0.0], &[1.0, 0.0, 0.0, 2.0], &[1.0, 1.0, 0.0, 2.0]],
        );
        let m = mdmm(&Clip::new(&s, 0, 3).unwrap());
        assert_eq!(m.energy(), [1.0, 1.0, 0.0, 2.0]);
    }

    #[test]
    fn clip_validation() {
        let s = seq(1, 1, &[&[0.0], &[1.0], &[2.0]]);
        assert!(Clip::new(&s, 0, 1).is_err());
        assert!(Clip::new(&s, 2, 2).is_err());
        assert!(Clip::new(&s, 1, 2).is_ok());
    }

    #[test]
    fn tiling_counts() {
        assert_eq!(clip_bounds(25, 10), [(0, 10), (10, 10), (20, 5)]);
        assert_eq!(clip_bounds(10, 10), [(0, 10)]);
        assert_eq!(clip_bounds(11, 10), [(0, 10)]);
        assert_eq!(clip_bounds(12, 10), [(0, 10), (10, 2)]);
        for t in 2..60 {
            for n in 2..13 {
                let expect = t / n + usize::from(t % n >= 2);
                assert_eq!(clip_bounds(t, n).len(), expect, "T={t} n={n}");
            }
        }
        let frames: Vec<Vec<f64>> = (0..25).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = frames.iter().map(Vec::as_slice).collect();
        let tiles = mdmm_tiling(&seq(1, 1, &refs), 10).unwrap();
        let e: Vec<f64> = tiles.iter().map(|m| m.energy()[0]).collect();
        assert_eq!(e, [9.0, 9.0, 4.0]);
    }

    #[test]
    fn gray_conversion() {
        let zero = Mdmm {
            width: 2,
            height: 1,
            energy: vec![0.0f64, 0.0],
        };
        assert_eq!(to_gray8(&zero), [0, 0]);
        let two = Mdmm {
            width: 3,
            height: 1,
            energy: vec![5.0f64, 0.0, 5.0],
        };
        assert_eq!(to_gray8(&two), [255, 0, 255]);
        let ramp = Mdmm {
            width: 5,
            height: 1,
            energy: vec![0.1f32, 0.2, 0.4, 0.8, 1.6],
        };
        let g = to_gray8(&ramp);
        assert!(g.windows(2).all(|p| p[0] < p[1]));
    }

    #[test]
    fn png_file_decodes_back() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.png");
        let m = Mdmm {
            width: 2,
            height: 2,
            energy: vec![0.0f32, 5.0, 5.0, 0.0],
        };
        export_png(&m, &p).unwrap();
        let decoder = png::Decoder::new(std::io::BufReader::new(std::fs::File::open(&p).unwrap()));
        let mut reader = decoder.read_info().unwrap();
        let mut buf = vec![0; reader.output_buffer_size().unwrap()];
        let info = reader.next_frame(&mut buf).unwrap();
        assert_eq!((info.width, info.height), (2, 2));
        assert_eq!(&buf[..4], [0, 255, 255, 0]);
    }
}
