//! Seeded synthetic depth sequences for tests and benchmarks.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{DepthFrame, DepthSequence};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynthKind {
    /// `base + noise`
    Static,
    /// `base + amplitude * sin(2πt / frames) + noise`
    Oscillate,
    /// `base + amplitude * t / frames + noise`
    Ramp,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "static" => Ok(SynthKind::Static),
            "oscillate" => Ok(SynthKind::Oscillate),
            "ramp" => Ok(SynthKind::Ramp),
            _ => Err(Error::arg(format!("unknown synthetic kind `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub base_depth: f64,
    pub amplitude: f64,
    pub noise_sigma: f64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub rng_seed: u64,
}

impl SynthSpec {
    /// Temporal offset added to every pixel of frame `t`.
    pub fn offset(&self, t: usize) -> f64 {
        let phase = t as f64 / self.frames as f64;
        match self.kind {
            SynthKind::Static => 0.0,
            SynthKind::Oscillate => self.amplitude * (std::f64::consts::TAU * phase).sin(),
            SynthKind::Ramp => self.amplitude * phase,
        }
    }
}

/// Generates a sequence that is a pure function of `spec`; values are
/// clamped at zero.
pub fn synth_sequence<T: Scalar>(spec: &SynthSpec) -> Result<DepthSequence<T>> {
    if spec.frames == 0 || spec.width == 0 || spec.height == 0 {
        return Err(Error::arg("synthetic sequence needs positive frames, width and height"));
    }
    if !(spec.amplitude >= 0.0 && spec.noise_sigma >= 0.0 && spec.base_depth.is_finite()) {
        return Err(Error::arg("amplitude and noise_sigma must be >= 0"));
    }
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::arg(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
    let n = spec.width * spec.height;
    let frames = (0..spec.frames)
        .map(|t| {
            let level = spec.base_depth + spec.offset(t);
            let values = (0..n)
                .map(|_| T::lit((level + noise.sample(&mut rng)).max(0.0)))
                .collect();
            DepthFrame::from_parts_unchecked(spec.width, spec.height, values)
        })
        .collect();
    Ok(DepthSequence::from_frames_unchecked(String::new(), frames))
}
