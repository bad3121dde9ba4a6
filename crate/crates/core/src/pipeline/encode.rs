//! Per-video encoding chain shared by the pipeline and the CLI.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::depth_io::{DepthFrame, DepthSequence};
use crate::error::{Error, Result};
use crate::features::{
    extract_frame_features, fc6_pool, fit_codebook, fit_pca, spp_augment, vlad_encode, Codebook, FrameExtractor,
    LcdSet, PcaModel, ToyExtractor, VideoDescriptor,
};
use crate::motion::mdmm_tiling;
use crate::normalize::{intra_frame_normalize, stdn};

use super::config::{NormalizeMode, PipelineConfig};

pub type Extractor = Box<dyn FrameExtractor<f32>>;

pub fn make_extractor(cfg: &PipelineConfig) -> Result<Extractor> {
    match cfg.extractor.as_str() {
        "toy" => Ok(Box::new(ToyExtractor::new(cfg.extractor_dims)?)),
        other => Err(Error::Config(format!("unknown extractor `{other}`"))),
    }
}

pub fn normalize_sequence(cfg: &PipelineConfig, seq: &DepthSequence<f32>) -> Result<DepthSequence<f32>> {
    match cfg.normalize_mode {
        NormalizeMode::Stdn => stdn(seq, &cfg.stdn),
        NormalizeMode::Intra => Ok(intra_frame_normalize(seq)),
        NormalizeMode::None => Ok(seq.clone()),
    }
}

/// Motion maps of a sequence as a sequence of frames, one per clip.
pub fn motion_sequence(seq: &DepthSequence<f32>, clip_len: usize) -> Result<DepthSequence<f32>> {
    let maps = mdmm_tiling(seq, clip_len)?;
    if maps.is_empty() {
        return Err(Error::Data(format!(
            "`{}`: {} frame(s) is too short for a motion map",
            seq.video_id(),
            seq.len()
        )));
    }
    DepthSequence::new(seq.video_id(), maps.iter().map(|m| m.to_frame()).collect())
}

pub fn fc6_descriptor(ext: &dyn FrameExtractor<f32>, frames: &[DepthFrame<f32>]) -> Result<VideoDescriptor<f32>> {
    let flats = frames
        .iter()
        .map(|f| extract_frame_features(f, ext).map(|ff| ff.flat))
        .collect::<Result<Vec<_>>>()?;
    fc6_pool(&flats)
}

/// Pyramid-augmented local descriptors of every `stride`-th frame.
pub fn local_descriptors(
    ext: &dyn FrameExtractor<f32>,
    frames: &[DepthFrame<f32>],
    stride: usize,
    levels: &[usize],
) -> Result<LcdSet<f32>> {
    let mut set = LcdSet::new(ext.dims().channels);
    for f in frames.iter().step_by(stride.max(1)) {
        let map = extract_frame_features(f, ext)?.map;
        set.extend(&spp_augment(&map, levels)?);
    }
    Ok(set)
}

/// Up to `quota` rows drawn without replacement, kept in their original order.
pub fn sample_rows(set: &LcdSet<f32>, quota: usize, seed: u64) -> LcdSet<f32> {
    if set.len() <= quota {
        return set.clone();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, set.len(), quota).into_vec();
    idx.sort_unstable();
    let mut out = LcdSet::new(set.dim());
    for i in idx {
        out.push(set.row(i));
    }
    out
}

pub fn fit_reduction(cfg: &PipelineConfig, sample: &LcdSet<f32>) -> Result<PcaModel<f32>> {
    fit_pca(sample, cfg.pca_dim, cfg.whiten)
}

pub fn fit_vocabulary(cfg: &PipelineConfig, pca: &PcaModel<f32>, sample: &LcdSet<f32>) -> Result<Codebook<f32>> {
    fit_codebook(&pca.transform_set(sample)?, cfg.vlad_k, cfg.seed)
}

pub fn vlad_descriptor(
    cfg: &PipelineConfig,
    ext: &dyn FrameExtractor<f32>,
    frames: &[DepthFrame<f32>],
    pca: &PcaModel<f32>,
    cb: &Codebook<f32>,
) -> Result<VideoDescriptor<f32>> {
    let set = local_descriptors(ext, frames, cfg.stride, &cfg.spp_levels)?;
    vlad_encode(&pca.transform_set(&set)?, cb)
}
