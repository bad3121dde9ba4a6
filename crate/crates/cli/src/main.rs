use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use depthpipe::classify::{
    fuse_scores, grid_search_weights, predict_proba, read_probability_csv, read_svm, split_evaluate, top1_accuracy,
    train_svm_with, write_probability_csv, write_svm, FusionWeights, ProbabilityMatrix, SvmParams,
};
use depthpipe::depth_io::{read_sequence, write_sequence, DatasetManifest, DepthSequence, SplitRole};
use depthpipe::features::{
    early_fuse, read_codebook, read_features, read_pca, write_codebook, write_features, write_pca, FeatureFile,
    LcdSet, VideoDescriptor,
};
use depthpipe::motion::{export_png, mdmm_tiling};
use depthpipe::pipeline::{self, make_benchmark, run_pipeline, PipelineConfig};
use depthpipe::Error;

const EXIT_CONFIG: u8 = 2;
const EXIT_DATA: u8 = 3;
const EXIT_PARTIAL: u8 = 4;

#[derive(Parser)]
#[command(name = "depthpipe", version, about = "Action recognition from depth-map sequences")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize a depth sequence over time.
    Normalize(NormalizeArgs),
    /// Write one motion map per clip of a sequence.
    Mdmm(MdmmArgs),
    /// Encode sequences into video descriptors.
    Encode(EncodeArgs),
    /// Train a linear SVM on a split's training videos.
    Train(TrainArgs),
    /// Write class probabilities for a split's test videos.
    Predict(PredictArgs),
    /// Combine probability matrices with fixed or grid-searched weights.
    Fuse(FuseArgs),
    /// Score probabilities or descriptors against manifest labels.
    Evaluate(EvaluateArgs),
    /// Run the whole pipeline from a config file.
    Run(RunArgs),
    /// Generate the synthetic static/oscillate benchmark.
    BenchMake(BenchArgs),
}

#[derive(Args)]
struct NormalizeArgs {
    /// `.dseq` file or PGM directory.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 16)]
    window: usize,
    #[arg(long, default_value_t = 3)]
    bands: usize,
    #[arg(long, default_value_t = 95.0)]
    percentile: f64,
    /// stdn, intra or none.
    #[arg(long, default_value = "stdn")]
    mode: String,
}

#[derive(Args)]
struct MdmmArgs {
    input: PathBuf,
    #[arg(long, default_value_t = 10)]
    clip_len: usize,
    #[arg(long)]
    out_dir: PathBuf,
    /// Also write an 8-bit PNG per motion map.
    #[arg(long)]
    png: bool,
}

#[derive(Args)]
struct EncodeArgs {
    /// Sequences to encode, in output order.
    inputs: Vec<PathBuf>,
    /// Encode every manifest video instead, in manifest order.
    #[arg(long, conflicts_with = "inputs")]
    manifest: Option<PathBuf>,
    /// With --fit and --manifest: fit on this split's training videos only.
    #[arg(long, requires = "manifest")]
    split: Option<String>,
    #[arg(long, default_value = "toy")]
    extractor: String,
    #[arg(long)]
    pca: Option<PathBuf>,
    #[arg(long)]
    codebook: Option<PathBuf>,
    /// Fit PCA and codebook on the inputs and write them to --pca/--codebook.
    #[arg(long)]
    fit: bool,
    /// fc6, vlad or early (fc6 and VLAD concatenated).
    #[arg(long, default_value = "vlad")]
    kind: String,
    #[arg(long, default_value_t = 1)]
    stride: usize,
    #[arg(long, default_value = "1,2")]
    spp: String,
    #[arg(long, default_value_t = 64)]
    pca_dim: usize,
    #[arg(long, default_value_t = 256)]
    vlad_k: usize,
    #[arg(long, default_value_t = 20_000)]
    fit_sample: usize,
    #[arg(long)]
    whiten: bool,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SvmArgs {
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Descriptors in manifest order.
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    split: String,
    #[command(flatten)]
    svm: SvmArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long)]
    features: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Predict this split's test videos; all videos when omitted.
    #[arg(long)]
    split: Option<String>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct FuseArgs {
    /// Probability CSVs with identical video ids and classes.
    #[arg(required = true, num_args = 2..)]
    inputs: Vec<PathBuf>,
    /// Comma-separated weights, one per input.
    #[arg(long, conflicts_with = "tune")]
    weights: Option<String>,
    /// Validation probability CSVs, aligned with the inputs, to grid-search weights on.
    #[arg(long, num_args = 2.., requires = "manifest")]
    tune: Vec<PathBuf>,
    /// Labels for --tune.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, default_value_t = 0.05)]
    grid_step: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    /// Probability CSV to score.
    #[arg(long, conflicts_with = "features", required_unless_present = "features")]
    proba: Option<PathBuf>,
    /// Descriptors in manifest order: train and test every split.
    #[arg(long)]
    features: Option<PathBuf>,
    /// Comma-separated splits; all when omitted.
    #[arg(long)]
    splits: Option<String>,
    #[command(flatten)]
    svm: SvmArgs,
    /// Write the results CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    /// TOML config; relative paths inside resolve against its directory.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides as `--section.key value` or `--section.key=value`.
    #[arg(trailing_var_arg = true, allow_hyphen_values = true, value_name = "OVERRIDES")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    out_dir: PathBuf,
    #[arg(long, default_value_t = 50)]
    videos_per_class: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            // sources already folded into a message are not repeated
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            let config = e.chain().any(|c| c.downcast_ref::<Error>().is_some_and(Error::is_config));
            ExitCode::from(if config { EXIT_CONFIG } else { EXIT_DATA })
        }
    }
}

fn dispatch(command: Command) -> anyhow::Result<ExitCode> {
    match command {
        Command::Normalize(a) => normalize(a)?,
        Command::Mdmm(a) => mdmm(a)?,
        Command::Encode(a) => encode(a)?,
        Command::Train(a) => train(a)?,
        Command::Predict(a) => predict(a)?,
        Command::Fuse(a) => fuse(a)?,
        Command::Evaluate(a) => evaluate(a)?,
        Command::Run(a) => return run(a),
        Command::BenchMake(a) => {
            let path = make_benchmark(&a.out_dir, a.videos_per_class, a.seed)?;
            println!("{}", path.display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    Error::Config(msg.into()).into()
}

/// Builds a pipeline config from `key=value` settings.
fn config_from(pairs: &[(&str, String)]) -> anyhow::Result<PipelineConfig> {
    let owned: Vec<(String, String)> = pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect();
    Ok(PipelineConfig::from_pairs(&owned)?)
}

fn normalize(a: NormalizeArgs) -> anyhow::Result<()> {
    let cfg = config_from(&[
        ("stdn.window", a.window.to_string()),
        ("stdn.bands", a.bands.to_string()),
        ("stdn.percentile", a.percentile.to_string()),
        ("stdn.mode", a.mode.clone()),
    ])?;
    let seq = read_sequence(&a.input)?;
    let out = pipeline::normalize_sequence(&cfg, &seq)?;
    write_sequence(&out, &a.out)?;
    info!("normalized {} frames of `{}`", out.len(), out.video_id());
    Ok(())
}

fn mdmm(a: MdmmArgs) -> anyhow::Result<()> {
    let seq = read_sequence(&a.input)?;
    let maps = mdmm_tiling(&seq, a.clip_len)?;
    if maps.is_empty() {
        bail!(Error::Data(format!("{} frame(s) is too short for a motion map", seq.len())));
    }
    std::fs::create_dir_all(&a.out_dir).with_context(|| a.out_dir.display().to_string())?;
    for (k, m) in maps.iter().enumerate() {
        let stem = format!("{}_mdmm_{k:03}", seq.video_id());
        let single = DepthSequence::new(stem.clone(), vec![m.to_frame()])?;
        write_sequence(&single, a.out_dir.join(format!("{stem}.dseq")))?;
        if a.png {
            export_png(m, a.out_dir.join(format!("{stem}.png")))?;
        }
    }
    println!("{}", maps.len());
    Ok(())
}

fn encode(a: EncodeArgs) -> anyhow::Result<()> {
    let cfg = config_from(&[
        ("features.extractor", a.extractor.clone()),
        ("features.stride", a.stride.to_string()),
        ("features.spp", a.spp.clone()),
        ("features.pca_dim", a.pca_dim.to_string()),
        ("features.vlad_k", a.vlad_k.to_string()),
        ("features.fit_sample", a.fit_sample.to_string()),
        ("features.whiten", a.whiten.to_string()),
        ("seed", a.seed.to_string()),
    ])?;
    let ext = pipeline::make_extractor(&cfg)?;

    // (path, used for fitting)
    let inputs: Vec<(PathBuf, bool)> = match &a.manifest {
        Some(m) => {
            let manifest = DatasetManifest::load(m)?;
            let split = a.split.as_deref().map(|s| manifest.split_index(s)).transpose()?;
            manifest
                .entries()
                .iter()
                .map(|e| (manifest.resolve(e), split.is_none_or(|s| e.splits[s] == SplitRole::Train)))
                .collect()
        }
        None => a.inputs.iter().map(|p| (p.clone(), true)).collect(),
    };
    if inputs.is_empty() {
        return Err(config_error("no inputs to encode"));
    }
    let seqs = inputs
        .iter()
        .map(|(p, _)| read_sequence(p))
        .collect::<Result<Vec<_>, _>>()?;

    let needs_models = a.kind != "fc6";
    let models = if !needs_models {
        None
    } else {
        let (pca_path, cb_path) = match (&a.pca, &a.codebook) {
            (Some(p), Some(c)) => (p, c),
            _ => return Err(config_error("--pca and --codebook are required for VLAD descriptors")),
        };
        if a.fit {
            let quota = cfg.fit_sample.div_ceil(inputs.iter().filter(|(_, f)| *f).count().max(1));
            let mut sample = LcdSet::new(cfg.extractor_dims.channels);
            for (i, (seq, _)) in seqs.iter().zip(&inputs).filter(|(_, (_, f))| *f).enumerate() {
                let set = pipeline::local_descriptors(ext.as_ref(), seq.frames(), cfg.stride, &cfg.spp_levels)?;
                sample.extend(&pipeline::sample_rows(&set, quota, cfg.seed.wrapping_add(i as u64)));
            }
            let pca = pipeline::fit_reduction(&cfg, &sample)?;
            let cb = pipeline::fit_vocabulary(&cfg, &pca, &sample)?;
            write_pca(&pca, pca_path)?;
            write_codebook(&cb, cb_path)?;
            Some((pca, cb))
        } else {
            Some((read_pca(pca_path)?, read_codebook(cb_path)?))
        }
    };

    let mut descriptors = Vec::with_capacity(seqs.len());
    for seq in &seqs {
        let fc6 = || pipeline::fc6_descriptor(ext.as_ref(), seq.frames());
        let vlad = || {
            let (pca, cb) = models.as_ref().expect("models loaded for VLAD kinds");
            pipeline::vlad_descriptor(&cfg, ext.as_ref(), seq.frames(), pca, cb)
        };
        descriptors.push(match a.kind.as_str() {
            "fc6" => fc6()?,
            "vlad" => vlad()?,
            "early" => early_fuse(&fc6()?, &vlad()?),
            k => return Err(config_error(format!("unknown descriptor kind `{k}`"))),
        });
    }
    write_features(&FeatureFile::from_descriptors(&descriptors)?, &a.out)?;
    println!("{} descriptors of dimension {}", descriptors.len(), descriptors[0].dim());
    Ok(())
}

/// Descriptors from `path`, one per manifest entry, keyed by video id.
fn manifest_features(
    manifest: &DatasetManifest,
    path: &Path,
) -> anyhow::Result<std::collections::HashMap<String, VideoDescriptor<f64>>> {
    let file = read_features(path)?;
    if file.vectors.len() != manifest.entries().len() {
        bail!(Error::Data(format!(
            "{}: {} descriptors for {} manifest entries",
            path.display(),
            file.vectors.len(),
            manifest.entries().len()
        )));
    }
    Ok(manifest
        .entries()
        .iter()
        .zip(file.vectors)
        .map(|(e, v)| {
            let v64 = v.into_iter().map(f64::from).collect();
            (e.video_id.clone(), VideoDescriptor::new(file.kind, v64))
        })
        .collect())
}

fn train(a: TrainArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let feats = manifest_features(&manifest, &a.features)?;
    let s = manifest.split_index(&a.split)?;
    let samples: Vec<(&[f64], &str)> = manifest
        .with_role(s, SplitRole::Train)
        .map(|e| (feats[&e.video_id].vector.as_slice(), e.label.as_str()))
        .collect();
    let params = SvmParams {
        c: a.svm.c,
        seed: a.svm.seed,
        ..SvmParams::default()
    };
    let (model, report) = train_svm_with(&samples, &params)?;
    for t in &report.traces {
        info!("class `{}`: {} epochs, converged {}", t.class, t.dual_objective.len(), t.converged);
    }
    write_svm(&model, &a.out)?;
    Ok(())
}

fn predict(a: PredictArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let feats = manifest_features(&manifest, &a.features)?;
    let model = read_svm(&a.model)?;
    let split = a.split.as_deref().map(|s| manifest.split_index(s)).transpose()?;
    let entries: Vec<_> = manifest
        .entries()
        .iter()
        .filter(|e| split.is_none_or(|s| e.splits[s] == SplitRole::Test))
        .collect();
    let ids: Vec<String> = entries.iter().map(|e| e.video_id.clone()).collect();
    let xs: Vec<&[f64]> = entries.iter().map(|e| feats[&e.video_id].vector.as_slice()).collect();
    write_probability_csv(&predict_proba(&model, &ids, &xs)?, &a.out)?;
    Ok(())
}

fn labels_for(manifest: &DatasetManifest, m: &ProbabilityMatrix<f64>) -> anyhow::Result<Vec<String>> {
    m.video_ids()
        .iter()
        .map(|id| {
            manifest
                .entries()
                .iter()
                .find(|e| &e.video_id == id)
                .map(|e| e.label.clone())
                .ok_or_else(|| anyhow!(Error::Data(format!("video `{id}` is not in the manifest"))))
        })
        .collect()
}

fn fuse(a: FuseArgs) -> anyhow::Result<()> {
    let mats = a
        .inputs
        .iter()
        .map(read_probability_csv::<f64>)
        .collect::<Result<Vec<_>, _>>()?;
    let weights = if let Some(w) = &a.weights {
        let ws = w
            .split(',')
            .map(|x| x.trim().parse::<f64>().map_err(|_| config_error(format!("bad weight `{x}`"))))
            .collect::<anyhow::Result<Vec<_>>>()?;
        FusionWeights::new(ws)?
    } else if !a.tune.is_empty() {
        if a.tune.len() != a.inputs.len() {
            return Err(config_error("--tune needs one matrix per input"));
        }
        let manifest = DatasetManifest::load(a.manifest.as_ref().expect("required by clap"))?;
        let tune = a
            .tune
            .iter()
            .map(read_probability_csv::<f64>)
            .collect::<Result<Vec<_>, _>>()?;
        let labels = labels_for(&manifest, &tune[0])?;
        grid_search_weights(&tune.iter().collect::<Vec<_>>(), &labels, a.grid_step)?
    } else {
        return Err(config_error("give --weights or --tune"));
    };
    let fused = fuse_scores(&mats.iter().collect::<Vec<_>>(), &weights)?;
    write_probability_csv(&fused, &a.out)?;
    let ws: Vec<String> = weights.as_slice().iter().map(f64::to_string).collect();
    println!("weights {}", ws.join(","));
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> anyhow::Result<()> {
    let manifest = DatasetManifest::load(&a.manifest)?;
    let text = if let Some(p) = &a.proba {
        let m = read_probability_csv::<f64>(p)?;
        let labels = labels_for(&manifest, &m)?;
        format!("accuracy\n{}\n", top1_accuracy(&m, &labels)?)
    } else {
        let feats = manifest_features(&manifest, a.features.as_ref().expect("required by clap"))?;
        let splits: Vec<String> = match &a.splits {
            Some(s) => s.split(',').map(|x| x.trim().to_string()).collect(),
            None => manifest.split_names().to_vec(),
        };
        let params = SvmParams {
            c: a.svm.c,
            seed: a.svm.seed,
            ..SvmParams::default()
        };
        split_evaluate(&manifest, &feats, &splits, &params)?.to_csv()
    };
    match &a.out {
        Some(p) => std::fs::write(p, &text).with_context(|| p.display().to_string())?,
        None => print!("{text}"),
    }
    Ok(())
}

/// Splits `--key value` / `--key=value` tokens into pairs.
fn parse_overrides(tokens: &[String]) -> anyhow::Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = tokens.iter();
    while let Some(tok) = it.next() {
        let Some(key) = tok.strip_prefix("--") else {
            return Err(config_error(format!("expected `--key value`, got `{tok}`")));
        };
        match key.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| config_error(format!("`--{key}` needs a value")))?;
                out.push((key.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn run(a: RunArgs) -> anyhow::Result<ExitCode> {
    let overrides = parse_overrides(&a.overrides)?;
    let cfg = match &a.config {
        Some(path) => PipelineConfig::load(path, &overrides)?,
        None => PipelineConfig::from_pairs(&overrides)?,
    };
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let report = run_pipeline(&cfg, &manifest)?;
    for (stream, r) in &report.results {
        println!("{stream},{}", r.mean);
    }
    info!(
        "{} artifacts computed, {} read from cache",
        report.computed, report.cache_hits
    );
    if report.is_partial() {
        eprintln!(
            "warning: {} video(s) skipped: {}",
            report.failures.len(),
            report.failures.iter().map(|(id, _)| id.as_str()).collect::<Vec<_>>().join(" ")
        );
        return Ok(ExitCode::from(EXIT_PARTIAL));
    }
    Ok(ExitCode::SUCCESS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_forms() {
        let toks: Vec<String> = ["--seed", "3", "--stdn.window=8"].iter().map(|s| s.to_string()).collect();
        let pairs = parse_overrides(&toks).unwrap();
        assert_eq!(pairs, [("seed".into(), "3".into()), ("stdn.window".into(), "8".into())]);
        assert!(parse_overrides(&["seed".to_string()]).is_err());
        assert!(parse_overrides(&["--seed".to_string()]).is_err());
    }
}
