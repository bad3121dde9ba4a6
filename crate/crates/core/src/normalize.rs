//! Spatio-temporal depth normalization (STDN) and the per-frame max
//! normalization baseline.
//!
//! STDN tiles a sequence into consecutive non-overlapping windows of `n`
//! frames and splits every frame into horizontal bands. Within a window the
//! reference depth of a band is the nearest-rank percentile of that band over
//! all window frames; each frame's band is then scaled so its own percentile
//! matches the reference. This pins the far part of the scene to a constant
//! depth across the window.

use std::ops::Range;

use crate::depth_io::{DepthFrame, DepthSequence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StdnConfig {
    pub window_n: usize,
    pub bands: usize,
    pub percentile_p: f64,
}

impl Default for StdnConfig {
    fn default() -> Self {
        Self {
            window_n: 16,
            bands: 3,
            percentile_p: 95.0,
        }
    }
}

impl StdnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_n == 0 {
            return Err(Error::arg("STDN window must be >= 1 frame"));
        }
        if self.bands == 0 {
            return Err(Error::arg("STDN needs >= 1 band"));
        }
        if !(self.percentile_p > 0.0 && self.percentile_p <= 100.0) {
            return Err(Error::arg(format!("percentile {} outside (0, 100]", self.percentile_p)));
        }
        Ok(())
    }
}

/// Horizontal bands of a frame: contiguous row ranges covering `[0, height)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BandPartition {
    band_row_ranges: Vec<Range<usize>>,
}

impl BandPartition {
    /// Splits `height` rows into `bands` ranges whose heights differ by at
    /// most one; the first `height % bands` bands get the extra row.
    pub fn new(height: usize, bands: usize) -> Result<Self> {
        if bands == 0 || height < bands {
            return Err(Error::arg(format!("cannot split {height} rows into {bands} bands")));
        }
        let (base, extra) = (height / bands, height % bands);
        let mut start = 0;
        let band_row_ranges = (0..bands)
            .map(|b| {
                let len = base + usize::from(b < extra);
                let r = start..start + len;
                start += len;
                r
            })
            .collect();
        Ok(Self { band_row_ranges })
    }

    pub fn ranges(&self) -> &[Range<usize>] {
        &self.band_row_ranges
    }
}

/// 1-based rank `ceil(p/100 * m)`, clamped to `[1, m]`.
fn nearest_rank(p: f64, m: usize) -> usize {
    // p*m first so integral percentiles give exact products
    let rank = (p * m as f64 / 100.0).ceil() as usize;
    rank.clamp(1, m)
}

/// Nearest-rank percentile: the element of sorted `values` at 1-based rank
/// `ceil(p/100 * len)`. No interpolation, so the result is always an input
/// element.
pub fn nearest_rank_percentile<T: Scalar>(values: &[T], p: f64) -> Result<T> {
    if values.is_empty() {
        return Err(Error::arg("percentile of an empty set"));
    }
    if !(p > 0.0 && p <= 100.0) {
        return Err(Error::arg(format!("percentile {p} outside (0, 100]")));
    }
    let mut scratch = values.to_vec();
    Ok(select_rank(&mut scratch, p))
}

fn select_rank<T: Scalar>(scratch: &mut [T], p: f64) -> T {
    let k = nearest_rank(p, scratch.len()) - 1;
    let (_, v, _) = scratch.select_nth_unstable_by(k, |a, b| a.partial_cmp(b).expect("finite depth"));
    *v
}

fn band_values<T: Scalar>(frame: &DepthFrame<T>, rows: &Range<usize>, out: &mut Vec<T>) {
    let w = frame.width();
    out.extend_from_slice(&frame.values()[rows.start * w..rows.end * w]);
}

/// Per-band scale factors `d_ref / d_t` for every frame of one window.
fn window_factors<T: Scalar>(window: &[DepthFrame<T>], bands: &BandPartition, p: f64) -> Vec<Vec<T>> {
    let mut factors = vec![Vec::with_capacity(bands.ranges().len()); window.len()];
    let mut pooled = Vec::new();
    let mut single = Vec::new();
    for rows in bands.ranges() {
        pooled.clear();
        for f in window {
            band_values(f, rows, &mut pooled);
        }
        let d_ref = select_rank(&mut pooled, p);
        for (t, f) in window.iter().enumerate() {
            single.clear();
            band_values(f, rows, &mut single);
            let d_t = select_rank(&mut single, p);
            factors[t].push(if d_t > T::zero() { d_ref / d_t } else { T::one() });
        }
    }
    factors
}

/// Applies STDN, returning a new sequence of the same geometry.
pub fn stdn<T: Scalar>(seq: &DepthSequence<T>, cfg: &StdnConfig) -> Result<DepthSequence<T>> {
    cfg.validate()?;
    let bands = BandPartition::new(seq.height(), cfg.bands)?;
    let w = seq.width();
    let mut out = Vec::with_capacity(seq.len());
    for window in seq.frames().chunks(cfg.window_n) {
        let factors = window_factors(window, &bands, cfg.percentile_p);
        for (frame, fac) in window.iter().zip(&factors) {
            let mut values = frame.values().to_vec();
            for (rows, &k) in bands.ranges().iter().zip(fac) {
                for v in &mut values[rows.start * w..rows.end * w] {
                    *v *= k;
                }
            }
            out.push(DepthFrame::from_parts_unchecked(w, seq.height(), values));
        }
    }
    Ok(DepthSequence::from_frames_unchecked(seq.video_id().to_string(), out))
}

/// Scales each frame independently so its maximum is 1; all-zero frames
/// pass through unchanged.
pub fn intra_frame_normalize<T: Scalar>(seq: &DepthSequence<T>) -> DepthSequence<T> {
    let frames = seq
        .frames()
        .iter()
        .map(|f| {
            let max = f.values().iter().fold(T::zero(), |m, &v| m.max(v));
            if max > T::zero() {
                DepthFrame::from_parts_unchecked(f.width(), f.height(), f.values().iter().map(|&v| v / max).collect())
            } else {
                f.clone()
            }
        })
        .collect();
    DepthSequence::from_frames_unchecked(seq.video_id().to_string(), frames)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(w: usize, h: usize, frames: &[&[f64]]) -> DepthSequence<f64> {
        DepthSequence::new(
            "t",
            frames.iter().map(|v| DepthFrame::new(w, h, v.to_vec()).unwrap()).collect(),
        )
        .unwrap()
    }

    #[test]
    fn percentile_examples() {
        assert_eq!(nearest_rank_percentile(&[1.0, 2.0, 3.0, 4.0], 95.0).unwrap(), 4.0);
        assert_eq!(nearest_rank_percentile(&[7.0], 1.0).unwrap(), 7.0);
        assert_eq!(nearest_rank_percentile(&[7.0f32], 100.0).unwrap(), 7.0);
        assert_eq!(nearest_rank_percentile(&[4.0, 2.0, 8.0, 1.0, 2.0, 6.0, 4.0, 3.0], 95.0).unwrap(), 8.0);
        // ceil(0.5 * 4) = 2nd smallest
        assert_eq!(nearest_rank_percentile(&[4.0, 1.0, 3.0, 2.0], 50.0).unwrap(), 2.0);
        // exact integral product: 95% of 20 is rank 19, not 20
        let v: Vec<f64> = (1..=20).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&v, 95.0).unwrap(), 19.0);
        assert!(nearest_rank_percentile::<f64>(&[], 95.0).is_err());
        assert!(nearest_rank_percentile(&[1.0], 0.0).is_err());
    }

    #[test]
    fn band_partition_gives_remainder_to_top_bands() {
        let b = BandPartition::new(11, 3).unwrap();
        assert_eq!(b.ranges(), [0..4, 4..8, 8..11]);
        assert_eq!(BandPartition::new(3, 3).unwrap().ranges(), [0..1, 1..2, 2..3]);
        assert!(BandPartition::new(2, 3).is_err());
    }

    #[test]
    fn two_frame_window_example() {
        let s = seq(2, 2, &[&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.0]]);
        let cfg = StdnConfig {
            window_n: 2,
            bands: 1,
            percentile_p: 95.0,
        };
        let out = stdn(&s, &cfg).unwrap();
        assert_eq!(out.frames()[0].values(), [2.0, 4.0, 6.0, 8.0]);
        assert_eq!(out.frames()[1].values(), [2.0, 4.0, 6.0, 8.0]);
        // input untouched
        assert_eq!(s.frames()[0].values(), [1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn constant_sequence_is_fixed() {
        let s = seq(3, 3, &[&[2.5; 9], &[2.5; 9], &[2.5; 9]]);
        assert_eq!(stdn(&s, &StdnConfig::default()).unwrap(), s);
    }

    #[test]
    fn zero_band_uses_identity_and_short_height_fails() {
        // band 0 of frame 0 is all zero; band 1 is not
        let s = seq(1, 2, &[&[0.0, 1.0], &[3.0, 2.0]]);
        let cfg = StdnConfig {
            window_n: 2,
            bands: 2,
            percentile_p: 95.0,
        };
        let out = stdn(&s, &cfg).unwrap();
        assert_eq!(out.frames()[0].values(), [0.0, 2.0]);
        assert_eq!(out.frames()[1].values(), [3.0, 2.0]);
        let cfg3 = StdnConfig { bands: 3, ..cfg };
        assert!(stdn(&s, &cfg3).is_err());
    }

    #[test]
    fn trailing_window_uses_its_own_reference() {
        // window_n = 2 over three 1x1 frames: [1,2] then [5]
        let s = seq(1, 1, &[&[1.0], &[2.0], &[5.0]]);
        let cfg = StdnConfig {
            window_n: 2,
            bands: 1,
            percentile_p: 95.0,
        };
        let out = stdn(&s, &cfg).unwrap();
        let v: Vec<f64> = out.frames().iter().map(|f| f.values()[0]).collect();
        assert_eq!(v, [2.0, 2.0, 5.0]);
    }

    #[test]
    fn intra_frame_examples() {
        let s = seq(2, 1, &[&[0.5, 1.0], &[2.0, 4.0], &[0.0, 0.0]]);
        let out = intra_frame_normalize(&s);
        assert_eq!(out.frames()[0].values(), [0.5, 1.0]);
        assert_eq!(out.frames()[1].values(), [0.5, 1.0]);
        assert_eq!(out.frames()[2].values(), [0.0, 0.0]);
    }
}
