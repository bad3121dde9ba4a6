use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use depthpipe::depth_io::{DatasetManifest, SplitRole};
use depthpipe::pipeline::{make_benchmark, run_pipeline, FusionMode, PipelineConfig, BENCH_SPLIT};
use depthpipe::Error;

fn small_config(root: &Path, mode: FusionMode) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.out_dir = root.join("out");
    cfg.cache_dir = Some(root.join("cache"));
    cfg.fusion_mode = mode;
    cfg.pca_dim = 8;
    cfg.vlad_k = 8;
    cfg.fit_sample = 2000;
    cfg
}

fn bench(root: &Path, per_class: usize) -> DatasetManifest {
    DatasetManifest::load(make_benchmark(root, per_class, 3).unwrap()).unwrap()
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

#[test]
fn rerun_hits_cache_and_reproduces_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = bench(dir.path(), 5);
    let cfg = small_config(dir.path(), FusionMode::Early);
    let first = run_pipeline(&cfg, &manifest).unwrap();
    assert!(first.computed > 0);
    let before = read_dir_sorted(&first.mode_dir);
    let second = run_pipeline(&cfg, &manifest).unwrap();
    assert_eq!(second.computed, 0);
    assert!(second.cache_hits > 0);
    assert_eq!(read_dir_sorted(&second.mode_dir), before);
}

#[test]
fn early_and_late_write_separate_results() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = bench(dir.path(), 5);
    for mode in [FusionMode::Early, FusionMode::Late] {
        let report = run_pipeline(&small_config(dir.path(), mode), &manifest).unwrap();
        assert!(report.mode_dir.ends_with(mode.as_str()));
        for stream in ["spatial", "temporal", "two_stream"] {
            let acc = report.result(stream).unwrap().mean;
            assert!((0.0..=1.0).contains(&acc));
        }
        let results = fs::read_to_string(report.mode_dir.join("results.csv")).unwrap();
        assert!(results.lines().count() >= 2);
        assert_eq!(
            report.mode_dir.join(format!("weights_{BENCH_SPLIT}.csv")).exists(),
            mode == FusionMode::Late
        );
    }
}

#[test]
fn fits_only_see_training_videos() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = bench(dir.path(), 5);
    let report = run_pipeline(&small_config(dir.path(), FusionMode::Late), &manifest).unwrap();
    let split = manifest.split_index(BENCH_SPLIT).unwrap();
    let train: BTreeSet<&str> = manifest
        .entries()
        .iter()
        .filter(|e| e.splits[split] == SplitRole::Train)
        .map(|e| e.video_id.as_str())
        .collect();
    assert!(!report.fits.is_empty());
    for fit in &report.fits {
        assert!(!fit.video_ids.is_empty());
        for id in &fit.video_ids {
            assert!(train.contains(id.as_str()), "{} fit on test video {id}", fit.stage);
        }
    }
    let log = fs::read_to_string(report.mode_dir.join("fits.csv")).unwrap();
    for line in log.lines().skip(1) {
        let ids = line.rsplit(',').next().unwrap();
        assert!(ids.split(' ').all(|id| train.contains(id)), "{line}");
    }
}

#[test]
fn corrupt_video_fails_strict_and_is_partial_when_lenient() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = bench(dir.path(), 5);
    let victim = &manifest.entries()[0];
    fs::write(manifest.resolve(victim), b"not a depth file").unwrap();

    let mut cfg = small_config(dir.path(), FusionMode::Early);
    match run_pipeline(&cfg, &manifest) {
        Err(e @ Error::Data(_)) => assert!(e.to_string().contains(&victim.video_id)),
        other => panic!("expected a data error, got {other:?}"),
    }
    cfg.lenient = true;
    let report = run_pipeline(&cfg, &manifest).unwrap();
    assert!(report.is_partial());
    assert_eq!(report.failures.len(), 1);
    assert_eq!(report.failures[0].0, victim.video_id);
}

#[test]
fn benchmark_split_counts_and_bytes_are_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = bench(a.path(), 10);
    bench(b.path(), 10);
    let split = ma.split_index(BENCH_SPLIT).unwrap();
    for class in ["oscillate", "static"] {
        let roles: Vec<_> = ma.entries().iter().filter(|e| e.label == class).map(|e| e.splits[split]).collect();
        assert_eq!(roles.len(), 10);
        assert_eq!(roles.iter().filter(|&&r| r == SplitRole::Train).count(), 8);
    }
    assert_eq!(fs::read(a.path().join("manifest.csv")).unwrap(), fs::read(b.path().join("manifest.csv")).unwrap());
    assert_eq!(read_dir_sorted(&a.path().join("videos")), read_dir_sorted(&b.path().join("videos")));
}

#[test]
fn toml_config_resolves_paths_next_to_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.toml");
    fs::write(
        &path,
        "manifest = \"data/manifest.csv\"\nout_dir = \"out\"\nseed = 3\n\n[features]\npca_dim = 16\nspp = [1, 2]\n\n[fusion]\nmode = \"late\"\n",
    )
    .unwrap();
    let cfg = PipelineConfig::load(&path, &[("svm.c".into(), "2.5".into())]).unwrap();
    assert_eq!(cfg.manifest, dir.path().join("data/manifest.csv"));
    assert_eq!(cfg.out_dir, dir.path().join("out"));
    assert_eq!((cfg.seed, cfg.pca_dim, cfg.svm_c), (3, 16, 2.5));
    assert_eq!(cfg.spp_levels, vec![1, 2]);
    assert_eq!(cfg.fusion_mode, FusionMode::Late);

    fs::write(&path, "[features]\nbogus = 1\n").unwrap();
    assert!(PipelineConfig::load(&path, &[]).unwrap_err().is_config());
}
