//! Synthetic two-class benchmark where only depth dynamics separate classes.
//!
//! Each video is a far background plane with a nearer rectangular "actor".
//! Videos come in pairs sharing background depth, actor depth and
//! amplitude: the `oscillate` member moves the actor through
//! one full depth cycle, the `static` member freezes it at a random phase of
//! that same cycle. Per-frame depth statistics of the two classes therefore
//! match; only frame-to-frame change differs.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::depth_io::{
    synth_sequence, write_sequence, DatasetManifest, DepthFrame, DepthSequence, ManifestEntry, SplitRole, SynthKind,
    SynthSpec,
};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BenchSpec {
    pub videos_per_class: usize,
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub noise_sigma: f64,
    /// Background depth range.
    pub background: (f64, f64),
    /// Actor depth range.
    pub actor: (f64, f64),
    /// Oscillation amplitude range.
    pub amplitude: (f64, f64),
    pub test_fraction: f64,
}

impl BenchSpec {
    pub fn new(videos_per_class: usize, seed: u64) -> Self {
        Self {
            videos_per_class,
            seed,
            frames: 40,
            width: 56,
            height: 56,
            noise_sigma: 0.01,
            background: (5.5, 6.5),
            actor: (2.5, 3.5),
            amplitude: (0.5, 1.0),
            test_fraction: 0.2,
        }
    }
}

pub const BENCH_CLASSES: [&str; 2] = ["oscillate", "static"];
pub const BENCH_SPLIT: &str = "split1";

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// Generates the benchmark in memory as `(id, label, sequence)` triples,
/// ordered pair by pair.
pub fn bench_sequences(spec: &BenchSpec) -> Result<Vec<(String, String, DepthSequence<f32>)>> {
    if spec.videos_per_class == 0 {
        return Err(Error::arg("videos_per_class must be >= 1"));
    }
    let (w, h) = (spec.width, spec.height);
    if w < 8 || h < 8 || spec.frames < 2 {
        return Err(Error::arg("benchmark needs frames >= 2 and at least 8x8 pixels"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = Vec::with_capacity(2 * spec.videos_per_class);
    for i in 0..spec.videos_per_class {
        let background = uniform(&mut rng, spec.background);
        let actor = uniform(&mut rng, spec.actor);
        let amplitude = uniform(&mut rng, spec.amplitude);
        let frozen_phase = std::f64::consts::TAU * rng.random::<f64>();
        let (ah, aw) = (h / 2, w * 2 / 7);
        let (r0, c0) = ((h - ah) / 2, (w - aw) / 2);
        for label in BENCH_CLASSES {
            let (kind, base) = match label {
                "oscillate" => (SynthKind::Oscillate, actor),
                _ => (SynthKind::Static, actor + amplitude * frozen_phase.sin()),
            };
            let layer = |kind, base_depth, amplitude, rng_seed| SynthSpec {
                kind,
                base_depth,
                amplitude,
                noise_sigma: spec.noise_sigma,
                frames: spec.frames,
                width: w,
                height: h,
                rng_seed,
            };
            let bg: DepthSequence<f32> = synth_sequence(&layer(SynthKind::Static, background, 0.0, rng.random()))?;
            let fg: DepthSequence<f32> = synth_sequence(&layer(kind, base, amplitude, rng.random()))?;
            let frames = bg
                .frames()
                .iter()
                .zip(fg.frames())
                .map(|(b, f)| {
                    let mut v = b.values().to_vec();
                    for r in r0..r0 + ah {
                        v[r * w + c0..r * w + c0 + aw].copy_from_slice(&f.row(r)[c0..c0 + aw]);
                    }
                    DepthFrame::from_parts_unchecked(w, h, v)
                })
                .collect();
            let id = format!("{label}_{i:03}");
            out.push((id.clone(), label.to_string(), DepthSequence::from_frames_unchecked(id, frames)));
        }
    }
    Ok(out)
}

/// Writes `videos/<id>.dseq` files and `manifest.csv` under `out_dir` and
/// returns the manifest path. Each class is split train/test independently;
/// manifest rows are shuffled so any tail of the training rows mixes classes.
pub fn write_benchmark(out_dir: impl AsRef<Path>, spec: &BenchSpec) -> Result<PathBuf> {
    let out_dir = out_dir.as_ref();
    let videos = bench_sequences(spec)?;
    let dir = out_dir.join("videos");
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_5eed);
    let n = spec.videos_per_class;
    let n_test = ((n as f64 * spec.test_fraction).round() as usize).min(n - 1);
    let mut entries = Vec::with_capacity(videos.len());
    for (c, label) in BENCH_CLASSES.iter().enumerate() {
        let mut members: Vec<usize> = (0..n).collect();
        members.shuffle(&mut rng);
        for (rank, &i) in members.iter().enumerate() {
            let (id, _, seq) = &videos[2 * i + c];
            let rel = PathBuf::from("videos").join(format!("{id}.dseq"));
            write_sequence(seq, out_dir.join(&rel))?;
            let role = if rank < n_test { SplitRole::Test } else { SplitRole::Train };
            entries.push(ManifestEntry {
                video_id: id.clone(),
                path: rel,
                label: label.to_string(),
                splits: vec![role],
            });
        }
    }
    entries.shuffle(&mut rng);
    let manifest = DatasetManifest::new(out_dir, vec![BENCH_SPLIT.to_string()], entries)?;
    let path = out_dir.join("manifest.csv");
    manifest.write(&path)?;
    Ok(path)
}

/// [`write_benchmark`] with the default scene parameters.
pub fn make_benchmark(out_dir: impl AsRef<Path>, videos_per_class: usize, rng_seed: u64) -> Result<PathBuf> {
    write_benchmark(out_dir, &BenchSpec::new(videos_per_class, rng_seed))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_split() {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = BenchSpec::new(5, 3);
        spec.frames = 4;
        spec.width = 8;
        spec.height = 8;
        let path = write_benchmark(dir.path(), &spec).unwrap();
        let m = DatasetManifest::load(&path).unwrap();
        assert_eq!(m.entries().len(), 10);
        assert_eq!(m.with_role(0, SplitRole::Test).count(), 2);
        assert_eq!(m.classes(), ["oscillate", "static"]);
    }

    #[test]
    fn pairs_share_the_frozen_depth_range() {
        let mut spec = BenchSpec::new(3, 11);
        spec.noise_sigma = 0.0;
        let v = bench_sequences(&spec).unwrap();
        for pair in v.chunks(2) {
            let (osc, stat) = (&pair[0].2, &pair[1].2);
            let range = |s: &DepthSequence<f32>| {
                let vals: Vec<f32> = s.frames().iter().map(|f| *f.values().iter().min_by(|a, b| a.total_cmp(b)).unwrap()).collect();
                (vals.iter().cloned().fold(f32::INFINITY, f32::min), vals.iter().cloned().fold(0.0, f32::max))
            };
            let (olo, ohi) = range(osc);
            let (slo, shi) = range(stat);
            assert_eq!(slo, shi, "static actor must not move");
            assert!(olo < ohi);
            assert!(slo >= olo - 1e-6 && shi <= ohi + 1e-6);
        }
    }
}
