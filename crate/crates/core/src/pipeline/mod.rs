//! End-to-end orchestration: manifest in, per-split results out.
//!
//! Every video goes through normalization, motion maps and two encoding
//! streams (spatial on normalized frames, temporal on motion maps), each
//! producing a pooled flat descriptor and a VLAD descriptor. PCA, codebooks,
//! SVMs and fusion weights are fit per split on training videos only. All
//! intermediates are cached by content hash, so a rerun with unchanged
//! inputs reads everything back instead of recomputing it.

mod bench;
mod cache;
mod config;
mod encode;

pub use bench::{bench_sequences, make_benchmark, write_benchmark, BenchSpec, BENCH_CLASSES, BENCH_SPLIT};
pub use cache::{content_key, Cache};
pub use config::{FusionMode, NormalizeMode, PipelineConfig};
pub use encode::{
    fc6_descriptor, fit_reduction, fit_vocabulary, local_descriptors, make_extractor, motion_sequence,
    normalize_sequence, sample_rows, vlad_descriptor, Extractor,
};

use std::cell::RefCell;
use std::path::{Path, PathBuf};

use log::{info, warn};
use rayon::prelude::*;

use crate::classify::{
    decode_svm, encode_svm, fuse_scores, grid_search_weights, predict_proba, top1_accuracy, train_svm_with,
    write_probability_csv, FusionWeights, LinearSvmModel, ProbabilityMatrix, SplitReport, SvmParams,
};
use crate::depth_io::{decode_dseq, encode_dseq, read_sequence, DatasetManifest, DepthSequence, ManifestEntry, SplitRole};
use crate::error::{Error, Result};
use crate::features::{
    decode_codebook, decode_features, decode_pca, encode_codebook, encode_features, encode_pca, FeatureFile,
    LcdSet, VideoDescriptor,
};

/// Stream names, also used in output file names.
pub const STREAMS: [&str; 3] = ["spatial", "temporal", "two_stream"];

/// Training videos used by one fitted model.
#[derive(Debug, Clone, PartialEq)]
pub struct FitRecord {
    pub stage: String,
    pub split: String,
    pub video_ids: Vec<String>,
}

#[derive(Debug, Clone, Default)]
pub struct RunReport {
    /// `<out_dir>/<fusion mode>`, where result files were written.
    pub mode_dir: PathBuf,
    /// Artifacts computed during this run.
    pub computed: usize,
    /// Artifacts read back from the cache.
    pub cache_hits: usize,
    /// `(video_id, reason)` for videos dropped from the run.
    pub failures: Vec<(String, String)>,
    pub fits: Vec<FitRecord>,
    /// Per-stream results, in [`STREAMS`] order.
    pub results: Vec<(String, SplitReport)>,
}

impl RunReport {
    pub fn is_partial(&self) -> bool {
        !self.failures.is_empty()
    }

    pub fn result(&self, stream: &str) -> Option<&SplitReport> {
        self.results.iter().find(|(s, _)| s == stream).map(|(_, r)| r)
    }
}

/// Runs the whole pipeline on a rayon pool sized by `cfg.threads`.
pub fn run_pipeline(cfg: &PipelineConfig, manifest: &DatasetManifest) -> Result<RunReport> {
    cfg.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| Runner::new(cfg, manifest)?.run())
}

/// A descriptor with the content key it was cached under.
struct Desc {
    key: String,
    vector: Vec<f32>,
}

struct StreamInput {
    key: String,
    frames: DepthSequence<f32>,
    fc6: Desc,
}

struct Video<'m> {
    entry: &'m ManifestEntry,
    streams: [StreamInput; 2],
}

/// Classifier input: concatenated descriptors.
struct Feature {
    key: String,
    vector: Vec<f64>,
}

impl Feature {
    fn concat(parts: &[&Desc]) -> Self {
        Feature {
            key: content_key(parts.iter().map(|d| d.key.as_bytes())),
            vector: parts.iter().flat_map(|d| d.vector.iter().map(|&v| f64::from(v))).collect(),
        }
    }
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    manifest: &'a DatasetManifest,
    cache: Cache,
    ext: Extractor,
    ext_key: String,
    params: SvmParams,
    mode_dir: PathBuf,
    failures: Vec<(String, String)>,
    fits: Vec<FitRecord>,
}

fn seq_bytes(seq: &DepthSequence<f32>) -> Vec<u8> {
    encode_dseq(seq)
}

fn single_descriptor(bytes: &[u8], context: &str) -> Result<Vec<f32>> {
    let mut file = decode_features(bytes, context)?;
    match file.vectors.len() {
        1 => Ok(file.vectors.pop().expect("length checked")),
        n => Err(Error::format(context, None, format!("expected one descriptor, found {n}"))),
    }
}

fn descriptor_bytes(d: VideoDescriptor<f32>) -> Result<Vec<u8>> {
    Ok(encode_features(&FeatureFile::from_descriptors(&[d])?))
}

/// Seed for per-video sampling, independent of scheduling order.
fn key_seed(seed: u64, key: &str) -> u64 {
    let prefix = u64::from_str_radix(&key[..16], 16).expect("content keys are hex");
    seed ^ prefix
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a PipelineConfig, manifest: &'a DatasetManifest) -> Result<Self> {
        let ext = make_extractor(cfg)?;
        let d = cfg.extractor_dims;
        let ext_key = format!(
            "{}|{}x{}x{}x{}|stride {}|spp {:?}",
            ext.name(),
            d.flat,
            d.map_height,
            d.map_width,
            d.channels,
            cfg.stride,
            cfg.spp_levels
        );
        let mode_dir = cfg.out_dir.join(cfg.fusion_mode.as_str());
        std::fs::create_dir_all(&mode_dir).map_err(|e| Error::io(&mode_dir, e))?;
        Ok(Self {
            cfg,
            manifest,
            cache: Cache::new(cfg.resolved_cache_dir())?,
            ext,
            ext_key,
            params: cfg.svm_params(),
            mode_dir,
            failures: Vec::new(),
            fits: Vec::new(),
        })
    }

    fn run(mut self) -> Result<RunReport> {
        let prepared: Vec<Result<Video>> = self.manifest.entries().par_iter().map(|e| self.prepare(e)).collect();
        let mut videos = Vec::with_capacity(prepared.len());
        for (entry, r) in self.manifest.entries().iter().zip(prepared) {
            match r {
                Ok(v) => videos.push(v),
                Err(e) => self.fail(&entry.video_id, &e),
            }
        }
        self.check_failures()?;

        let splits = if self.cfg.splits.is_empty() {
            self.manifest.split_names().to_vec()
        } else {
            self.cfg.splits.clone()
        };
        let mut accuracies: Vec<Vec<(String, f64)>> = vec![Vec::new(); STREAMS.len()];
        for name in &splits {
            let s = self.manifest.split_index(name)?;
            let acc = self.run_split(name, s, &videos)?;
            for (a, v) in accuracies.iter_mut().zip(acc) {
                a.push((name.clone(), v));
            }
        }

        let mut results = Vec::new();
        for (stream, acc) in STREAMS.iter().zip(accuracies) {
            let report = SplitReport::from_accuracies(acc);
            let file = match *stream {
                "two_stream" => "results.csv".to_string(),
                s => format!("results_{s}.csv"),
            };
            write_text(&self.mode_dir.join(file), &report.to_csv())?;
            info!("{stream}: mean top-1 accuracy {:.4}", report.mean);
            results.push((stream.to_string(), report));
        }
        write_text(&self.mode_dir.join("fits.csv"), &fits_csv(&self.fits))?;

        Ok(RunReport {
            mode_dir: self.mode_dir,
            computed: self.cache.computed(),
            cache_hits: self.cache.hits(),
            failures: self.failures,
            fits: self.fits,
            results,
        })
    }

    fn fail(&mut self, video_id: &str, e: &Error) {
        warn!("video `{video_id}` aborted: {e}");
        self.failures.push((video_id.to_string(), e.to_string()));
    }

    fn check_failures(&self) -> Result<()> {
        match self.failures.first() {
            Some((id, why)) if !self.cfg.lenient => Err(Error::Data(format!(
                "{} video(s) failed, first `{id}`: {why}",
                self.failures.len()
            ))),
            _ => Ok(()),
        }
    }

    fn record_fit(&mut self, stage: String, split: &str, ids: Vec<String>) {
        info!("fit {stage} [{split}] on {} training videos: {}", ids.len(), ids.join(" "));
        self.fits.push(FitRecord {
            stage,
            split: split.to_string(),
            video_ids: ids,
        });
    }

    fn cached_seq<F>(&self, stage: &str, key: &str, id: &str, compute: F) -> Result<DepthSequence<f32>>
    where
        F: FnOnce() -> Result<DepthSequence<f32>>,
    {
        let bytes = self.cache.get_or_compute(stage, key, "dseq", || compute().map(|s| seq_bytes(&s)))?;
        Ok(decode_dseq(&bytes, id)?.with_video_id(id))
    }

    fn prepare<'m>(&self, entry: &'m ManifestEntry) -> Result<Video<'m>> {
        let cfg = self.cfg;
        let id = entry.video_id.as_str();
        let seq = read_sequence(self.manifest.resolve(entry))?.with_video_id(id);
        let raw_key = content_key([b"sequence".as_slice(), &seq_bytes(&seq)]);
        let norm_tag = format!(
            "{:?}|{}|{}|{}",
            cfg.normalize_mode, cfg.stdn.window_n, cfg.stdn.bands, cfg.stdn.percentile_p
        );
        let norm_key = content_key(["normalize", raw_key.as_str(), norm_tag.as_str()]);
        let norm = self.cached_seq("normalized", &norm_key, id, || normalize_sequence(cfg, &seq))?;
        let motion_key = content_key(["motion", norm_key.as_str(), &cfg.clip_len.to_string()]);
        let motion = self.cached_seq("motion", &motion_key, id, || motion_sequence(&norm, cfg.clip_len))?;

        let stream = |key: String, frames: DepthSequence<f32>| -> Result<StreamInput> {
            let fc6_key = content_key(["fc6", key.as_str(), self.ext_key.as_str()]);
            let bytes = self.cache.get_or_compute("fc6", &fc6_key, "ftr", || {
                descriptor_bytes(fc6_descriptor(self.ext.as_ref(), frames.frames())?)
            })?;
            let vector = single_descriptor(&bytes, id)?;
            Ok(StreamInput {
                key,
                frames,
                fc6: Desc { key: fc6_key, vector },
            })
        };
        Ok(Video {
            entry,
            streams: [stream(norm_key, norm)?, stream(motion_key, motion)?],
        })
    }

    /// Fits PCA and codebook for stream `k` on the training videos and
    /// returns each video's VLAD descriptor (`None` where encoding failed).
    fn encode_stream(&mut self, split: &str, k: usize, train: &[&Video], all: &[&Video]) -> Result<Vec<Option<Desc>>> {
        let cfg = self.cfg;
        let name = STREAMS[k];
        let mut train_keys: Vec<&str> = train.iter().map(|v| v.streams[k].key.as_str()).collect();
        train_keys.sort_unstable();
        let fit_tag = format!(
            "{name}|{}|pca {} whiten {}|sample {}|seed {}",
            self.ext_key, cfg.pca_dim, cfg.whiten, cfg.fit_sample, cfg.seed
        );
        let pca_key = content_key(["pca", fit_tag.as_str()].into_iter().chain(train_keys));
        let cb_key = content_key(["codebook", pca_key.as_str(), &cfg.vlad_k.to_string()]);
        let ids: Vec<String> = train.iter().map(|v| v.entry.video_id.clone()).collect();
        self.record_fit(format!("pca:{name}"), split, ids.clone());
        self.record_fit(format!("codebook:{name}"), split, ids);

        let sample: RefCell<Option<LcdSet<f32>>> = RefCell::new(None);
        let draw = || -> Result<()> {
            if sample.borrow().is_some() {
                return Ok(());
            }
            let quota = cfg.fit_sample.div_ceil(train.len());
            let parts = train
                .par_iter()
                .map(|v| {
                    let s = &v.streams[k];
                    let set = local_descriptors(self.ext.as_ref(), s.frames.frames(), cfg.stride, &cfg.spp_levels)?;
                    Ok(sample_rows(&set, quota, key_seed(cfg.seed, &s.key)))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut all = LcdSet::new(cfg.extractor_dims.channels);
            for p in &parts {
                all.extend(p);
            }
            *sample.borrow_mut() = Some(all);
            Ok(())
        };
        let pca_bytes = self.cache.get_or_compute("pca", &pca_key, "pcam", || {
            draw()?;
            Ok(encode_pca(&fit_reduction(cfg, sample.borrow().as_ref().expect("drawn"))?))
        })?;
        let pca = decode_pca(&pca_bytes, "pca")?;
        let cb_bytes = self.cache.get_or_compute("codebook", &cb_key, "cdbk", || {
            draw()?;
            Ok(encode_codebook(&fit_vocabulary(cfg, &pca, sample.borrow().as_ref().expect("drawn"))?))
        })?;
        let cb = decode_codebook(&cb_bytes, "codebook")?;
        drop(sample);

        let encoded: Vec<Result<Desc>> = all
            .par_iter()
            .map(|v| {
                let s = &v.streams[k];
                let key = content_key(["vlad", s.key.as_str(), pca_key.as_str(), cb_key.as_str()]);
                let bytes = self.cache.get_or_compute("vlad", &key, "ftr", || {
                    descriptor_bytes(vlad_descriptor(cfg, self.ext.as_ref(), s.frames.frames(), &pca, &cb)?)
                })?;
                let vector = single_descriptor(&bytes, &v.entry.video_id)?;
                Ok(Desc { key, vector })
            })
            .collect();
        let mut out = Vec::with_capacity(all.len());
        for (v, r) in all.iter().zip(encoded) {
            match r {
                Ok(d) => out.push(Some(d)),
                Err(e) => {
                    self.fail(&v.entry.video_id, &e);
                    out.push(None);
                }
            }
        }
        Ok(out)
    }

    /// Returns accuracy per stream in [`STREAMS`] order.
    fn run_split(&mut self, name: &str, s: usize, videos: &[Video]) -> Result<Vec<f64>> {
        let in_role = |role| videos.iter().filter(|v| v.entry.splits[s] == role).collect::<Vec<_>>();
        let (train, test) = (in_role(SplitRole::Train), in_role(SplitRole::Test));
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data(format!("split `{name}` needs training and test videos")));
        }
        let all: Vec<&Video> = videos.iter().collect();
        let vlad_s = self.encode_stream(name, 0, &train, &all)?;
        let vlad_t = self.encode_stream(name, 1, &train, &all)?;
        self.check_failures()?;

        // per video: [fc6 spatial, vlad spatial, fc6 temporal, vlad temporal]
        let mut parts: Vec<(&Video, [&Desc; 4])> = Vec::new();
        for ((v, a), b) in all.iter().zip(&vlad_s).zip(&vlad_t) {
            if let (Some(a), Some(b)) = (a, b) {
                parts.push((v, [&v.streams[0].fc6, a, &v.streams[1].fc6, b]));
            }
        }
        let train: Vec<_> = parts.iter().filter(|(v, _)| v.entry.splits[s] == SplitRole::Train).collect();
        let test: Vec<_> = parts.iter().filter(|(v, _)| v.entry.splits[s] == SplitRole::Test).collect();
        if train.is_empty() || test.is_empty() {
            return Err(Error::Data(format!("split `{name}` lost all training or test videos")));
        }
        let test_ids: Vec<String> = test.iter().map(|(v, _)| v.entry.video_id.clone()).collect();
        let test_labels: Vec<String> = test.iter().map(|(v, _)| v.entry.label.clone()).collect();

        let features = |rows: &[&(&Video, [&Desc; 4])], pick: &[usize]| -> Vec<Feature> {
            rows.iter()
                .map(|(_, d)| Feature::concat(&pick.iter().map(|&i| d[i]).collect::<Vec<_>>()))
                .collect()
        };
        let labels = |rows: &[&(&Video, [&Desc; 4])]| -> Vec<String> { rows.iter().map(|(v, _)| v.entry.label.clone()).collect() };
        let ids = |rows: &[&(&Video, [&Desc; 4])]| -> Vec<String> { rows.iter().map(|(v, _)| v.entry.video_id.clone()).collect() };

        let mut mats: Vec<ProbabilityMatrix<f64>> = Vec::new();
        match self.cfg.fusion_mode {
            FusionMode::Early => {
                for (k, pick) in [&[0, 1][..], &[2, 3], &[0, 1, 2, 3]].into_iter().enumerate() {
                    let model = self.train(&format!("svm:{}", STREAMS[k]), name, &ids(&train), &features(&train, pick), &labels(&train))?;
                    mats.push(predict(&model, &test_ids, &features(&test, pick))?);
                }
            }
            FusionMode::Late => {
                let n_tune = ((train.len() as f64 * self.cfg.tune_fraction).round() as usize).max(1);
                if train.len() < n_tune + 2 {
                    return Err(Error::Data(format!(
                        "split `{name}`: {} training videos leave too few to fit after holding out {n_tune} for tuning",
                        train.len()
                    )));
                }
                let (fit, tune) = train.split_at(train.len() - n_tune);
                let (tune_ids, tune_labels) = (ids(tune), labels(tune));
                let step = self.cfg.grid_step;
                let mut tune_streams = Vec::new();
                let mut test_streams = Vec::new();
                let mut weights = Vec::new();
                for k in 0..2 {
                    let mut tune_mats = Vec::new();
                    let mut test_mats = Vec::new();
                    for (part, pick) in [("fc6", [2 * k]), ("vlad", [2 * k + 1])] {
                        let stage = format!("svm:{}:{part}", STREAMS[k]);
                        let held = self.train(&format!("{stage}:tuning"), name, &ids(fit), &features(fit, &pick), &labels(fit))?;
                        tune_mats.push(predict(&held, &tune_ids, &features(tune, &pick))?);
                        let full = self.train(&stage, name, &ids(&train), &features(&train, &pick), &labels(&train))?;
                        test_mats.push(predict(&full, &test_ids, &features(&test, &pick))?);
                    }
                    let w = self.tune(&format!("fusion:{}", STREAMS[k]), name, &tune_ids, &tune_mats, &tune_labels, step)?;
                    tune_streams.push(fuse_scores(&tune_mats.iter().collect::<Vec<_>>(), &w)?);
                    test_streams.push(fuse_scores(&test_mats.iter().collect::<Vec<_>>(), &w)?);
                    weights.push((STREAMS[k], w));
                }
                let w = self.tune("fusion:two_stream", name, &tune_ids, &tune_streams, &tune_labels, step)?;
                let two = fuse_scores(&test_streams.iter().collect::<Vec<_>>(), &w)?;
                weights.push(("two_stream", w));
                mats.extend(test_streams);
                mats.push(two);
                write_text(&self.mode_dir.join(format!("weights_{name}.csv")), &weights_csv(&weights))?;
            }
        }

        let mut acc = Vec::with_capacity(mats.len());
        for (stream, m) in STREAMS.iter().zip(&mats) {
            write_probability_csv(m, self.mode_dir.join(format!("proba_{stream}_{name}.csv")))?;
            acc.push(top1_accuracy(m, &test_labels)?);
        }
        Ok(acc)
    }

    fn train(
        &mut self,
        stage: &str,
        split: &str,
        ids: &[String],
        features: &[Feature],
        labels: &[String],
    ) -> Result<LinearSvmModel<f64>> {
        self.record_fit(stage.to_string(), split, ids.to_vec());
        let p = &self.params;
        let tag = format!("c {} seed {} epochs {} tol {}", p.c, p.seed, p.max_epochs, p.tol);
        let mut parts = vec![tag];
        for (f, l) in features.iter().zip(labels) {
            parts.push(f.key.clone());
            parts.push(l.clone());
        }
        let key = content_key(&parts);
        let bytes = self.cache.get_or_compute("svm", &key, "lsvm", || {
            let samples: Vec<(&[f64], &str)> = features.iter().zip(labels).map(|(f, l)| (f.vector.as_slice(), l.as_str())).collect();
            Ok(encode_svm(&train_svm_with(&samples, p)?.0))
        })?;
        decode_svm(&bytes, stage)
    }

    fn tune(
        &mut self,
        stage: &str,
        split: &str,
        ids: &[String],
        mats: &[ProbabilityMatrix<f64>],
        labels: &[String],
        step: f64,
    ) -> Result<FusionWeights> {
        self.record_fit(stage.to_string(), split, ids.to_vec());
        let w = grid_search_weights(&mats.iter().collect::<Vec<_>>(), labels, step)?;
        info!("{stage} [{split}] weights {:?}", w.as_slice());
        Ok(w)
    }
}

fn predict(model: &LinearSvmModel<f64>, ids: &[String], features: &[Feature]) -> Result<ProbabilityMatrix<f64>> {
    let xs: Vec<&[f64]> = features.iter().map(|f| f.vector.as_slice()).collect();
    predict_proba(model, ids, &xs)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn fits_csv(fits: &[FitRecord]) -> String {
    let mut s = String::from("stage,split,video_ids\n");
    for f in fits {
        s.push_str(&format!("{},{},{}\n", f.stage, f.split, f.video_ids.join(" ")));
    }
    s
}

fn weights_csv(weights: &[(&str, FusionWeights)]) -> String {
    let mut s = String::from("fusion,weights\n");
    for (name, w) in weights {
        let ws: Vec<String> = w.as_slice().iter().map(|x| format!("{x}")).collect();
        s.push_str(&format!("{name},{}\n", ws.join(" ")));
    }
    s
}
