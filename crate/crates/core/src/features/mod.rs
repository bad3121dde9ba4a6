//! Frame features to fixed-length video descriptors.
//!
//! Two routes produce a video descriptor from per-frame extractor output:
//!
//! * the flat route averages per-frame flat vectors and L2-normalizes
//!   ([`fc6_pool`]);
//! * the map route turns each spatial cell of a feature map into a local
//!   descriptor ([`lcd`]), adds pyramid-pooled descriptors
//!   ([`spp_augment`]), reduces them with PCA and VLAD-encodes them against a
//!   k-means codebook ([`vlad_encode`]).
//!
//! [`early_fuse`] concatenates descriptors for a single classifier.

mod extractor;
mod io;
mod kmeans;
mod lcd;
mod pca;
mod vlad;

pub use extractor::{extract_frame_features, ExtractorDims, FrameExtractor, ToyExtractor};
pub use io::{
    decode_codebook, decode_features, decode_pca, encode_codebook, encode_features, encode_pca, read_codebook,
    read_features, read_pca, write_codebook, write_features, write_pca, FeatureFile,
};
pub use kmeans::{fit_codebook, KmeansParams};
pub use lcd::{lcd, spp_augment};
pub use pca::{fit_pca, pca_transform, PcaModel};
pub use vlad::{nearest_center, vlad_encode, Codebook};

use crate::error::{Error, Result};
use crate::scalar::{l2_normalize, Scalar};

/// Default PCA output dimension for local descriptors.
pub const DEFAULT_PCA_DIM: usize = 64;
/// Default codebook size; with 64-dim descriptors gives 16384-dim VLAD.
pub const DEFAULT_VLAD_K: usize = 256;
/// Default pyramid: one global cell plus a 2x2 grid.
pub const DEFAULT_SPP_LEVELS: [usize; 2] = [1, 2];

/// Spatial feature map, `height x width x channels`, channel-fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Scalar> FeatureMap<T> {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<T>) -> Result<Self> {
        if height == 0 || width == 0 || channels == 0 {
            return Err(Error::arg("feature map dimensions must be positive"));
        }
        if data.len() != height * width * channels {
            return Err(Error::arg(format!(
                "feature map {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("feature map holds non-finite values"));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    /// Channel vector at cell `(i, j)`.
    pub fn cell(&self, i: usize, j: usize) -> &[T] {
        let at = (i * self.width + j) * self.channels;
        &self.data[at..at + self.channels]
    }
}

/// Per-frame extractor output: a flat vector and a spatial map.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameFeatures<T> {
    pub flat: Vec<T>,
    pub map: FeatureMap<T>,
}

/// A set of equal-length local descriptors, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LcdSet<T> {
    dim: usize,
    data: Vec<T>,
}

impl<T: Scalar> LcdSet<T> {
    pub fn new(dim: usize) -> Self {
        Self { dim, data: Vec::new() }
    }

    pub fn from_rows(dim: usize, data: Vec<T>) -> Result<Self> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(Error::arg(format!("{} values do not form rows of {dim}", data.len())));
        }
        Ok(Self { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn push(&mut self, row: &[T]) {
        assert_eq!(row.len(), self.dim, "descriptor dimension");
        self.data.extend_from_slice(row);
    }

    pub fn extend(&mut self, other: &LcdSet<T>) {
        assert_eq!(other.dim, self.dim, "descriptor dimension");
        self.data.extend_from_slice(&other.data);
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, T> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DescriptorKind {
    Fc6Pooled,
    Vlad,
    EarlyFused,
}

impl DescriptorKind {
    pub fn tag(self) -> u8 {
        match self {
            DescriptorKind::Fc6Pooled => 0,
            DescriptorKind::Vlad => 1,
            DescriptorKind::EarlyFused => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(DescriptorKind::Fc6Pooled),
            1 => Some(DescriptorKind::Vlad),
            2 => Some(DescriptorKind::EarlyFused),
            _ => None,
        }
    }
}

/// Fixed-length descriptor of one video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoDescriptor<T> {
    pub kind: DescriptorKind,
    pub vector: Vec<T>,
}

impl<T: Scalar> VideoDescriptor<T> {
    pub fn new(kind: DescriptorKind, vector: Vec<T>) -> Self {
        Self { kind, vector }
    }

    pub fn dim(&self) -> usize {
        self.vector.len()
    }
}

/// Mean of per-frame flat vectors, L2-normalized (a zero mean stays zero).
pub fn fc6_pool<T: Scalar>(per_frame_flats: &[Vec<T>]) -> Result<VideoDescriptor<T>> {
    let Some(first) = per_frame_flats.first() else {
        return Err(Error::arg("cannot pool zero frames"));
    };
    let dim = first.len();
    let mut mean = vec![T::zero(); dim];
    for (i, v) in per_frame_flats.iter().enumerate() {
        if v.len() != dim {
            return Err(Error::arg(format!("frame {i} has {} features, expected {dim}", v.len())));
        }
        for (m, &x) in mean.iter_mut().zip(v) {
            *m += x;
        }
    }
    let n = T::from_usize_lossy(per_frame_flats.len());
    for m in &mut mean {
        *m /= n;
    }
    l2_normalize(&mut mean);
    Ok(VideoDescriptor::new(DescriptorKind::Fc6Pooled, mean))
}

/// `[a | b]`, without renormalization.
pub fn early_fuse<T: Scalar>(a: &VideoDescriptor<T>, b: &VideoDescriptor<T>) -> VideoDescriptor<T> {
    let mut v = Vec::with_capacity(a.dim() + b.dim());
    v.extend_from_slice(&a.vector);
    v.extend_from_slice(&b.vector);
    VideoDescriptor::new(DescriptorKind::EarlyFused, v)
}
