//! Pluggable per-frame feature extraction.

use super::{FeatureMap, FrameFeatures};
use crate::depth_io::DepthFrame;
use crate::error::{Error, Result};
use crate::normalize::nearest_rank_percentile;
use crate::scalar::Scalar;

/// Output geometry an extractor commits to for every frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ExtractorDims {
    pub flat: usize,
    pub map_height: usize,
    pub map_width: usize,
    pub channels: usize,
}

impl Default for ExtractorDims {
    fn default() -> Self {
        Self {
            flat: 4096,
            map_height: 7,
            map_width: 7,
            channels: 512,
        }
    }
}

/// Maps one depth frame (or motion map) to flat and spatial features.
pub trait FrameExtractor<T: Scalar>: Send + Sync {
    /// Stable identifier, used in cache keys.
    fn name(&self) -> String;
    fn dims(&self) -> ExtractorDims;
    fn extract(&self, frame: &DepthFrame<T>) -> Result<FrameFeatures<T>>;
}

/// Runs `extractor` and checks the result against its declared geometry.
pub fn extract_frame_features<T: Scalar, E: FrameExtractor<T> + ?Sized>(
    frame: &DepthFrame<T>,
    extractor: &E,
) -> Result<FrameFeatures<T>> {
    let dims = extractor.dims();
    let out = extractor.extract(frame)?;
    let map = &out.map;
    if out.flat.len() != dims.flat
        || (map.height(), map.width(), map.channels()) != (dims.map_height, dims.map_width, dims.channels)
    {
        return Err(Error::Config(format!(
            "extractor `{}` declared {:?} but produced flat {} and map {}x{}x{}",
            extractor.name(),
            dims,
            out.flat.len(),
            map.height(),
            map.width(),
            map.channels()
        )));
    }
    Ok(out)
}

/// Deterministic hand-made extractor standing in for a trained network.
///
/// * `flat`: grid averages of depth, `|d/dx|` and `|d/dy|` over 1x1, 2x2, 4x4
///   and 8x8 grids, repeated cyclically to the declared length.
/// * `map`: per cell of the `map_height x map_width` grid, four statistics
///   (mean depth, mean `|d/dx|`, mean `|d/dy|`, nearest-rank 95th
///   percentile) cycled over the channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyExtractor {
    dims: ExtractorDims,
}

const FLAT_GRIDS: [usize; 4] = [1, 2, 4, 8];
const CELL_PERCENTILE: f64 = 95.0;

impl ToyExtractor {
    pub fn new(dims: ExtractorDims) -> Result<Self> {
        if dims.flat == 0 || dims.map_height == 0 || dims.map_width == 0 || dims.channels == 0 {
            return Err(Error::Config("toy extractor dimensions must be positive".into()));
        }
        Ok(Self { dims })
    }
}

impl Default for ToyExtractor {
    fn default() -> Self {
        Self {
            dims: ExtractorDims::default(),
        }
    }
}

/// Cell `i` of `n` equal parts of `len`; empty when `len < n`.
fn span(i: usize, n: usize, len: usize) -> std::ops::Range<usize> {
    i * len / n..(i + 1) * len / n
}

struct Planes<T> {
    w: usize,
    h: usize,
    value: Vec<T>,
    dx: Vec<T>,
    dy: Vec<T>,
}

impl<T: Scalar> Planes<T> {
    // forward differences, zero on the last column / row
    fn new(frame: &DepthFrame<T>) -> Self {
        let (w, h) = (frame.width(), frame.height());
        let value = frame.values().to_vec();
        let mut dx = vec![T::zero(); w * h];
        let mut dy = vec![T::zero(); w * h];
        for r in 0..h {
            for c in 0..w {
                let p = r * w + c;
                if c + 1 < w {
                    dx[p] = (value[p + 1] - value[p]).abs();
                }
                if r + 1 < h {
                    dy[p] = (value[p + w] - value[p]).abs();
                }
            }
        }
        Self { w, h, value, dx, dy }
    }

    fn cell_values<'a>(&'a self, plane: &'a [T], rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> impl Iterator<Item = T> + 'a {
        rows.flat_map(move |r| plane[r * self.w + cols.start..r * self.w + cols.end].iter().copied())
    }

    fn cell_mean(&self, plane: &[T], rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> T {
        let n = rows.len() * cols.len();
        if n == 0 {
            return T::zero();
        }
        self.cell_values(plane, rows, cols).sum::<T>() / T::from_usize_lossy(n)
    }
}

impl<T: Scalar> FrameExtractor<T> for ToyExtractor {
    fn name(&self) -> String {
        let d = self.dims;
        format!("toy:{}:{}x{}x{}", d.flat, d.map_height, d.map_width, d.channels)
    }

    fn dims(&self) -> ExtractorDims {
        self.dims
    }

    fn extract(&self, frame: &DepthFrame<T>) -> Result<FrameFeatures<T>> {
        let planes = Planes::new(frame);
        let (w, h) = (planes.w, planes.h);

        let mut base = Vec::new();
        for g in FLAT_GRIDS {
            for plane in [&planes.value, &planes.dx, &planes.dy] {
                for i in 0..g {
                    for j in 0..g {
                        base.push(planes.cell_mean(plane, span(i, g, h), span(j, g, w)));
                    }
                }
            }
        }
        let flat = (0..self.dims.flat).map(|k| base[k % base.len()]).collect();

        let (mh, mw, ch) = (self.dims.map_height, self.dims.map_width, self.dims.channels);
        let mut data = Vec::with_capacity(mh * mw * ch);
        let mut scratch = Vec::new();
        for i in 0..mh {
            for j in 0..mw {
                let (rows, cols) = (span(i, mh, h), span(j, mw, w));
                scratch.clear();
                scratch.extend(planes.cell_values(&planes.value, rows.clone(), cols.clone()));
                let p95 = if scratch.is_empty() {
                    T::zero()
                } else {
                    nearest_rank_percentile(&scratch, CELL_PERCENTILE)?
                };
                let stats = [
                    planes.cell_mean(&planes.value, rows.clone(), cols.clone()),
                    planes.cell_mean(&planes.dx, rows.clone(), cols.clone()),
                    planes.cell_mean(&planes.dy, rows, cols),
                    p95,
                ];
                data.extend((0..ch).map(|c| stats[c % stats.len()]));
            }
        }
        Ok(FrameFeatures {
            flat,
            map: FeatureMap::new(mh, mw, ch, data)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Liar;

    impl FrameExtractor<f32> for Liar {
        fn name(&self) -> String {
            "liar".into()
        }
        fn dims(&self) -> ExtractorDims {
            ExtractorDims::default()
        }
        fn extract(&self, _: &DepthFrame<f32>) -> Result<FrameFeatures<f32>> {
            Ok(FrameFeatures {
                flat: vec![0.0; 3],
                map: FeatureMap::new(1, 1, 1, vec![0.0])?,
            })
        }
    }

    #[test]
    fn zero_frame_gives_zero_features() {
        let f = DepthFrame::filled(14, 14, 0.0f32).unwrap();
        let out = extract_frame_features(&f, &ToyExtractor::default()).unwrap();
        assert_eq!(out.flat.len(), 4096);
        assert!(out.flat.iter().all(|&v| v == 0.0));
        assert_eq!(out.map.data().len(), 7 * 7 * 512);
        assert!(out.map.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_frame_channels() {
        let f = DepthFrame::filled(21, 14, 2.5f64).unwrap();
        let out = extract_frame_features(&f, &ToyExtractor::default()).unwrap();
        for i in 0..7 {
            for j in 0..7 {
                let cell = out.map.cell(i, j);
                for (c, &v) in cell.iter().enumerate() {
                    let expect = if c % 4 == 1 || c % 4 == 2 { 0.0 } else { 2.5 };
                    assert_eq!(v, expect, "cell ({i},{j}) channel {c}");
                }
            }
        }
    }

    #[test]
    fn deterministic_and_small_frames_work() {
        let vals: Vec<f32> = (0..12).map(|i| (i * 7 % 5) as f32).collect();
        let f = DepthFrame::new(4, 3, vals).unwrap();
        let ex = ToyExtractor::default();
        let a = extract_frame_features(&f, &ex).unwrap();
        let b = extract_frame_features(&f, &ex).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_mismatch_is_config_error() {
        let f = DepthFrame::filled(4, 4, 1.0f32).unwrap();
        assert!(matches!(extract_frame_features(&f, &Liar), Err(Error::Config(_))));
    }

    #[test]
    fn horizontal_gradient_lands_in_dx_channel() {
        let vals: Vec<f64> = (0..7 * 7).map(|p| (p % 7) as f64).collect();
        let f = DepthFrame::new(7, 7, vals).unwrap();
        let ex = ToyExtractor::new(ExtractorDims {
            flat: 8,
            map_height: 7,
            map_width: 7,
            channels: 4,
        })
        .unwrap();
        let out = extract_frame_features(&f, &ex).unwrap();
        // interior cells: |dx| = 1, |dy| = 0
        assert_eq!(out.map.cell(3, 3), [3.0, 1.0, 0.0, 3.0]);
        // last column has no forward difference
        assert_eq!(out.map.cell(3, 6)[1], 0.0);
    }
}
