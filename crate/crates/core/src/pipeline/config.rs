//! Pipeline configuration: a TOML file of flat keys grouped in per-stage
//! sections, with any key overridable as `section.key=value`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::classify::SvmParams;
use crate::error::{Error, Result};
use crate::features::{ExtractorDims, DEFAULT_PCA_DIM, DEFAULT_SPP_LEVELS, DEFAULT_VLAD_K};
use crate::motion::DEFAULT_CLIP_LEN;
use crate::normalize::StdnConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NormalizeMode {
    Stdn,
    Intra,
    None,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FusionMode {
    Early,
    Late,
}

impl FusionMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMode::Early => "early",
            FusionMode::Late => "late",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
    /// Defaults to `$DEPTHPIPE_CACHE`, then `<out_dir>/cache`.
    pub cache_dir: Option<PathBuf>,
    /// Splits to evaluate; empty means every manifest split.
    pub splits: Vec<String>,
    pub seed: u64,
    /// Worker threads for per-video stages; 0 picks the machine default.
    pub threads: usize,
    pub lenient: bool,

    pub normalize_mode: NormalizeMode,
    pub stdn: StdnConfig,
    pub clip_len: usize,

    pub extractor: String,
    pub extractor_dims: ExtractorDims,
    pub pca_dim: usize,
    pub whiten: bool,
    pub vlad_k: usize,
    /// Declared VLAD length; must equal `pca_dim * vlad_k` when set.
    pub vlad_dim: Option<usize>,
    pub spp_levels: Vec<usize>,
    pub stride: usize,
    /// Cap on local descriptors sampled from training videos for PCA and k-means.
    pub fit_sample: usize,

    pub fusion_mode: FusionMode,
    pub grid_step: f64,
    pub tune_fraction: f64,
    pub svm_c: f64,
    pub svm_max_epochs: usize,
    pub svm_tol: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let svm = SvmParams::default();
        Self {
            manifest: PathBuf::from("manifest.csv"),
            out_dir: PathBuf::from("out"),
            cache_dir: None,
            splits: Vec::new(),
            seed: 7,
            threads: 0,
            lenient: false,
            normalize_mode: NormalizeMode::Stdn,
            stdn: StdnConfig::default(),
            clip_len: DEFAULT_CLIP_LEN,
            extractor: "toy".into(),
            extractor_dims: ExtractorDims::default(),
            pca_dim: DEFAULT_PCA_DIM,
            whiten: false,
            vlad_k: DEFAULT_VLAD_K,
            vlad_dim: None,
            spp_levels: DEFAULT_SPP_LEVELS.to_vec(),
            stride: 1,
            fit_sample: 20_000,
            fusion_mode: FusionMode::Early,
            grid_step: 0.05,
            tune_fraction: 0.2,
            svm_c: svm.c,
            svm_max_epochs: svm.max_epochs,
            svm_tol: svm.tol,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("`{key}`: expected true/false, got `{value}`"))),
    }
}

/// Comma-separated list; empty text is an empty list.
fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| parse(key, s))
        .collect()
}

impl PipelineConfig {
    /// Every key accepted by [`PipelineConfig::set`].
    pub const KEYS: &'static [&'static str] = &[
        "manifest",
        "out_dir",
        "cache_dir",
        "splits",
        "seed",
        "threads",
        "lenient",
        "stdn.mode",
        "stdn.window",
        "stdn.bands",
        "stdn.percentile",
        "motion.clip_len",
        "features.extractor",
        "features.flat_dim",
        "features.map_height",
        "features.map_width",
        "features.channels",
        "features.pca_dim",
        "features.whiten",
        "features.vlad_k",
        "features.vlad_dim",
        "features.spp",
        "features.stride",
        "features.fit_sample",
        "fusion.mode",
        "fusion.grid_step",
        "fusion.tune_fraction",
        "svm.c",
        "svm.max_epochs",
        "svm.tol",
    ];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "manifest" => self.manifest = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            "cache_dir" => self.cache_dir = Some(PathBuf::from(value)),
            "splits" => self.splits = parse_list(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "lenient" => self.lenient = parse_bool(key, value)?,
            "stdn.mode" => {
                self.normalize_mode = match value.trim() {
                    "stdn" => NormalizeMode::Stdn,
                    "intra" => NormalizeMode::Intra,
                    "none" => NormalizeMode::None,
                    v => return Err(Error::Config(format!("`{key}`: unknown mode `{v}`"))),
                }
            }
            "stdn.window" => self.stdn.window_n = parse(key, value)?,
            "stdn.bands" => self.stdn.bands = parse(key, value)?,
            "stdn.percentile" => self.stdn.percentile_p = parse(key, value)?,
            "motion.clip_len" => self.clip_len = parse(key, value)?,
            "features.extractor" => self.extractor = value.trim().to_string(),
            "features.flat_dim" => self.extractor_dims.flat = parse(key, value)?,
            "features.map_height" => self.extractor_dims.map_height = parse(key, value)?,
            "features.map_width" => self.extractor_dims.map_width = parse(key, value)?,
            "features.channels" => self.extractor_dims.channels = parse(key, value)?,
            "features.pca_dim" => self.pca_dim = parse(key, value)?,
            "features.whiten" => self.whiten = parse_bool(key, value)?,
            "features.vlad_k" => self.vlad_k = parse(key, value)?,
            "features.vlad_dim" => self.vlad_dim = Some(parse(key, value)?),
            "features.spp" => self.spp_levels = parse_list(key, value)?,
            "features.stride" => self.stride = parse(key, value)?,
            "features.fit_sample" => self.fit_sample = parse(key, value)?,
            "fusion.mode" => {
                self.fusion_mode = match value.trim() {
                    "early" => FusionMode::Early,
                    "late" => FusionMode::Late,
                    v => return Err(Error::Config(format!("`{key}`: unknown fusion mode `{v}`"))),
                }
            }
            "fusion.grid_step" => self.grid_step = parse(key, value)?,
            "fusion.tune_fraction" => self.tune_fraction = parse(key, value)?,
            "svm.c" => self.svm_c = parse(key, value)?,
            "svm.max_epochs" => self.svm_max_epochs = parse(key, value)?,
            "svm.tol" => self.svm_tol = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown configuration key `{key}`"))),
        }
        Ok(())
    }

    /// Parses config text into flat `section.key` pairs, in file order.
    pub fn flatten_toml(text: &str) -> Result<Vec<(String, String)>> {
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        let mut out = Vec::new();
        flatten_into("", &table, &mut out)?;
        Ok(out)
    }

    /// Loads a config file; relative `manifest`, `out_dir` and `cache_dir`
    /// values resolve against the file's directory.
    pub fn load(path: impl AsRef<Path>, overrides: &[(String, String)]) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_pairs(Self::flatten_toml(&text)?.iter().chain(overrides))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.manifest, &mut cfg.out_dir] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if let Some(c) = cfg.cache_dir.as_mut().filter(|c| c.is_relative()) {
            *c = base.join(&*c);
        }
        Ok(cfg)
    }

    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = &'a (String, String)>) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let cfg_err = |e: Error| Error::Config(e.to_string());
        self.stdn.validate().map_err(cfg_err)?;
        if self.clip_len < 2 {
            return Err(Error::Config("motion.clip_len must be >= 2".into()));
        }
        if self.extractor != "toy" {
            return Err(Error::Config(format!("unknown extractor `{}`", self.extractor)));
        }
        let d = self.extractor_dims;
        if d.flat == 0 || d.map_height == 0 || d.map_width == 0 || d.channels == 0 {
            return Err(Error::Config("extractor dimensions must be positive".into()));
        }
        if self.pca_dim == 0 || self.pca_dim > d.channels {
            return Err(Error::Config(format!("features.pca_dim must be in 1..={}", d.channels)));
        }
        if self.vlad_k == 0 {
            return Err(Error::Config("features.vlad_k must be >= 1".into()));
        }
        if let Some(v) = self.vlad_dim {
            if v != self.pca_dim * self.vlad_k {
                return Err(Error::Config(format!(
                    "features.vlad_dim {v} != pca_dim {} * vlad_k {}",
                    self.pca_dim, self.vlad_k
                )));
            }
        }
        if let Some(&g) = self.spp_levels.iter().find(|&&g| g == 0 || g > d.map_height.min(d.map_width)) {
            return Err(Error::Config(format!("pyramid level {g} does not fit the feature map")));
        }
        if self.stride == 0 {
            return Err(Error::Config("features.stride must be >= 1".into()));
        }
        if self.fit_sample < self.vlad_k.max(self.pca_dim) {
            return Err(Error::Config("features.fit_sample must cover pca_dim and vlad_k".into()));
        }
        let steps = (1.0 / self.grid_step).round();
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) || (steps * self.grid_step - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("fusion.grid_step {} must divide 1", self.grid_step)));
        }
        if !(self.tune_fraction > 0.0 && self.tune_fraction < 1.0) {
            return Err(Error::Config("fusion.tune_fraction must be in (0, 1)".into()));
        }
        if !(self.svm_c > 0.0) || self.svm_max_epochs == 0 || !(self.svm_tol > 0.0) {
            return Err(Error::Config("svm.c, svm.max_epochs and svm.tol must be positive".into()));
        }
        Ok(())
    }

    pub fn svm_params(&self) -> SvmParams {
        SvmParams {
            c: self.svm_c,
            seed: self.seed,
            max_epochs: self.svm_max_epochs,
            tol: self.svm_tol,
        }
    }

    /// Cache directory after applying the environment default.
    pub fn resolved_cache_dir(&self) -> PathBuf {
        if let Some(c) = &self.cache_dir {
            return c.clone();
        }
        match std::env::var_os("DEPTHPIPE_CACHE") {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => self.out_dir.join("cache"),
        }
    }

    /// Text form of every key, in a stable order.
    pub fn to_pairs(&self) -> BTreeMap<&'static str, String> {
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let mut m = BTreeMap::new();
        m.insert("manifest", self.manifest.display().to_string());
        m.insert("out_dir", self.out_dir.display().to_string());
        m.insert("splits", self.splits.join(","));
        m.insert("seed", self.seed.to_string());
        m.insert("lenient", self.lenient.to_string());
        m.insert(
            "stdn.mode",
            match self.normalize_mode {
                NormalizeMode::Stdn => "stdn",
                NormalizeMode::Intra => "intra",
                NormalizeMode::None => "none",
            }
            .into(),
        );
        m.insert("stdn.window", self.stdn.window_n.to_string());
        m.insert("stdn.bands", self.stdn.bands.to_string());
        m.insert("stdn.percentile", self.stdn.percentile_p.to_string());
        m.insert("motion.clip_len", self.clip_len.to_string());
        m.insert("features.extractor", self.extractor.clone());
        m.insert("features.flat_dim", self.extractor_dims.flat.to_string());
        m.insert("features.map_height", self.extractor_dims.map_height.to_string());
        m.insert("features.map_width", self.extractor_dims.map_width.to_string());
        m.insert("features.channels", self.extractor_dims.channels.to_string());
        m.insert("features.pca_dim", self.pca_dim.to_string());
        m.insert("features.whiten", self.whiten.to_string());
        m.insert("features.vlad_k", self.vlad_k.to_string());
        m.insert("features.spp", join(&self.spp_levels));
        m.insert("features.stride", self.stride.to_string());
        m.insert("features.fit_sample", self.fit_sample.to_string());
        m.insert("fusion.mode", self.fusion_mode.as_str().into());
        m.insert("fusion.grid_step", self.grid_step.to_string());
        m.insert("fusion.tune_fraction", self.tune_fraction.to_string());
        m.insert("svm.c", self.svm_c.to_string());
        m.insert("svm.max_epochs", self.svm_max_epochs.to_string());
        m.insert("svm.tol", self.svm_tol.to_string());
        m
    }
}

fn flatten_into(prefix: &str, table: &toml::Table, out: &mut Vec<(String, String)>) -> Result<()> {
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        let text = match v {
            toml::Value::Table(t) => {
                if !prefix.is_empty() {
                    return Err(Error::Config(format!("`{key}`: sections nest one level only")));
                }
                flatten_into(&key, t, out)?;
                continue;
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            toml::Value::Array(items) => items
                .iter()
                .map(|i| match i {
                    toml::Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect::<Vec<_>>()
                .join(","),
            toml::Value::Datetime(d) => d.to_string(),
        };
        out.push((key, text));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sections_and_overrides() {
        let text = r#"
            seed = 3
            splits = ["split1", "split2"]
            [stdn]
            window = 8
            [features]
            spp = [1, 2, 3]
            pca_dim = 32
            [fusion]
            mode = "late"
        "#;
        let mut pairs = PipelineConfig::flatten_toml(text).unwrap();
        pairs.push(("stdn.window".into(), "16".into()));
        let cfg = PipelineConfig::from_pairs(&pairs).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.splits, ["split1", "split2"]);
        assert_eq!(cfg.stdn.window_n, 16);
        assert_eq!(cfg.spp_levels, [1, 2, 3]);
        assert_eq!(cfg.pca_dim, 32);
        assert_eq!(cfg.fusion_mode, FusionMode::Late);
    }

    #[test]
    fn defaults_follow_the_method() {
        let cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.stdn.window_n, 16);
        assert_eq!(cfg.stdn.bands, 3);
        assert_eq!(cfg.stdn.percentile_p, 95.0);
        assert_eq!(cfg.clip_len, 10);
        assert_eq!(cfg.pca_dim * cfg.vlad_k, 16384);
    }

    #[test]
    fn invalid_values_are_config_errors() {
        let bad = |k: &str, v: &str| {
            let pairs = vec![(k.to_string(), v.to_string())];
            PipelineConfig::from_pairs(&pairs).unwrap_err()
        };
        assert!(matches!(bad("nope", "1"), Error::Config(_)));
        assert!(matches!(bad("fusion.grid_step", "0.3"), Error::Config(_)));
        assert!(matches!(bad("features.vlad_dim", "100"), Error::Config(_)));
        assert!(matches!(bad("features.spp", "1,9"), Error::Config(_)));
        assert!(matches!(bad("seed", "x"), Error::Config(_)));
        assert!(matches!(bad("stdn.percentile", "0"), Error::Config(_)));
        assert!(matches!(bad("motion.clip_len", "1"), Error::Config(_)));
    }

    #[test]
    fn every_listed_key_is_settable() {
        let cfg = PipelineConfig::default();
        let pairs = cfg.to_pairs();
        let mut again = PipelineConfig::default();
        for (k, v) in &pairs {
            assert!(PipelineConfig::KEYS.contains(k), "{k}");
            again.set(k, v).unwrap();
        }
        assert_eq!(again, cfg);
    }
}
