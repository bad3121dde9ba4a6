use proptest::prelude::*;

use depthpipe::classify::{
    fuse_scores, parse_probability_csv, predict_proba, probability_csv, FusionWeights, LinearSvmModel,
    ProbabilityMatrix,
};
use depthpipe::depth_io::{decode_dseq, encode_dseq, read_pgm_dir, write_pgm_dir, DatasetManifest, DepthFrame, DepthSequence};
use depthpipe::features::{decode_features, encode_features, vlad_encode, Codebook, DescriptorKind, FeatureFile, LcdSet};
use depthpipe::motion::{mdmm, Clip};
use depthpipe::normalize::{stdn, StdnConfig};

fn sequence(max_side: usize, max_frames: usize) -> impl Strategy<Value = DepthSequence<f32>> {
    (1..=max_side, 1..=max_side, 1..=max_frames).prop_flat_map(|(w, h, n)| {
        prop::collection::vec(prop::collection::vec(0.0f32..100.0, w * h), n).prop_map(move |frames| {
            let frames = frames.into_iter().map(|v| DepthFrame::new(w, h, v).unwrap()).collect();
            DepthSequence::new("p", frames).unwrap()
        })
    })
}

fn simplex_rows(n: usize, k: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, k), n)
        .prop_map(|rows| rows.into_iter().map(|r| {
            let s: f64 = r.iter().sum();
            r.into_iter().map(|x| x / s).collect()
        }).collect())
}

fn names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dseq_round_trip(seq in sequence(12, 6)) {
        let back = decode_dseq(&encode_dseq(&seq), "p").unwrap();
        prop_assert_eq!(back.len(), seq.len());
        for (a, b) in back.frames().iter().zip(seq.frames()) {
            prop_assert_eq!(a.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                            b.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn pgm_round_trip_of_representable_depths(
        raw in prop::collection::vec(prop::collection::vec(any::<u16>(), 12), 1..5),
        exp in -12i32..0,
    ) {
        // depths that are integer multiples of a power-of-two scale survive exactly
        let scale = 2f32.powi(exp);
        let frames = raw.iter().map(|r| DepthFrame::new(4, 3, r.iter().map(|&v| f32::from(v) * scale).collect()).unwrap()).collect();
        let seq = DepthSequence::new("p", frames).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_pgm_dir(&seq, dir.path(), scale).unwrap();
        let back = read_pgm_dir(dir.path()).unwrap();
        prop_assert_eq!(back.len(), seq.len());
        for (a, b) in back.frames().iter().zip(seq.frames()) {
            prop_assert_eq!(a.values(), b.values());
        }
    }

    #[test]
    fn feature_file_round_trip(dim in 1usize..40, rows in 1usize..6, seed in any::<u64>(), tag in 0u8..3) {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let f = FeatureFile {
            kind: DescriptorKind::from_tag(tag).unwrap(),
            dim,
            vectors: (0..rows).map(|_| (0..dim).map(|_| r.random_range(-1e6f32..1e6)).collect()).collect(),
        };
        prop_assert_eq!(decode_features(&encode_features(&f), "p").unwrap(), f);
    }

    #[test]
    fn stdn_commutes_exactly_with_power_of_two_scaling(seq in sequence(10, 20), k in -4i32..5, n in 1usize..8) {
        let c = 2f32.powi(k);
        let cfg = StdnConfig { window_n: n, bands: 1.min(seq.height()), percentile_p: 95.0 };
        let a = stdn(&seq.map_values(|v| v * c).unwrap(), &cfg).unwrap();
        let b = stdn(&seq, &cfg).unwrap().map_values(|v| v * c).unwrap();
        for (x, y) in a.frames().iter().zip(b.frames()) {
            prop_assert_eq!(x.values(), y.values());
        }
    }

    #[test]
    fn mdmm_is_reversal_invariant(seq in sequence(8, 12)) {
        prop_assume!(seq.len() >= 2);
        let n = seq.len();
        let a = mdmm(&Clip::new(&seq, 0, n).unwrap());
        let rev = seq.reversed();
        let b = mdmm(&Clip::new(&rev, 0, n).unwrap());
        prop_assert_eq!(a.energy(), b.energy());
        prop_assert!(a.energy().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn vlad_ignores_descriptor_order(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..40),
        centers in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 1..6),
        rot in 0usize..40,
    ) {
        let cb = Codebook::new(centers.len(), 3, centers.concat()).unwrap();
        let a = vlad_encode(&LcdSet::from_rows(3, pts.concat()).unwrap(), &cb).unwrap();
        let mut rotated = pts.clone();
        rotated.rotate_left(rot % pts.len());
        rotated.reverse();
        let b = vlad_encode(&LcdSet::from_rows(3, rotated.concat()).unwrap(), &cb).unwrap();
        prop_assert_eq!(a.vector, b.vector);
    }

    #[test]
    fn probabilities_stay_on_simplex_and_keep_margin_argmax(
        w in prop::collection::vec(prop::collection::vec(-50.0f64..50.0, 4), 2..5),
        xs in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..10),
    ) {
        let k = w.len();
        let model = LinearSvmModel { classes: names("c", k), weights: w, biases: vec![0.5; k], c_param: 1.0 };
        let ids = names("v", xs.len());
        let refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let p = predict_proba(&model, &ids, &refs).unwrap();
        for (row, x) in p.rows().iter().zip(&xs) {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            prop_assert!(row.iter().all(|&v| (0.0..=1.0).contains(&v)));
            let m = model.margins(x).unwrap();
            let arg = |v: &[f64]| (0..v.len()).fold(0, |b, i| if v[i] > v[b] { i } else { b });
            // rows may round distinct margins to equal probabilities; only strict winners are compared
            let top = arg(&m);
            if m.iter().enumerate().all(|(i, &s)| i == top || m[top] - s > 1e-6) {
                prop_assert_eq!(arg(row), top);
            }
        }
    }

    #[test]
    fn fusion_keeps_rows_on_simplex(a in simplex_rows(6, 3), b in simplex_rows(6, 3), t in 0.0f64..=1.0) {
        let ma = ProbabilityMatrix::new(names("v", 6), names("c", 3), a).unwrap();
        let mb = ProbabilityMatrix::new(names("v", 6), names("c", 3), b).unwrap();
        let f = fuse_scores(&[&ma, &mb], &FusionWeights::new(vec![t, 1.0 - t]).unwrap()).unwrap();
        for row in f.rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn probability_csv_round_trips_f32(rows in simplex_rows(5, 4)) {
        let rows32: Vec<Vec<f32>> = rows.iter().map(|r| r.iter().map(|&v| v as f32).collect()).collect();
        let m = ProbabilityMatrix::new(names("v", 5), names("c", 4), rows32).unwrap();
        let back: ProbabilityMatrix<f32> = parse_probability_csv(&probability_csv(&m), "p").unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn manifest_csv_round_trip(n in 1usize..10, splits in 1usize..4, bits in any::<u64>()) {
        let mut text = String::from("video_id,path,label");
        for s in 0..splits {
            text.push_str(&format!(",split{s}"));
        }
        text.push('\n');
        for i in 0..n {
            text.push_str(&format!("v{i},videos/v{i}.dseq,l{}", i % 3));
            for s in 0..splits {
                text.push_str(if bits >> ((i * splits + s) % 64) & 1 == 1 { ",train" } else { ",test" });
            }
            text.push('\n');
        }
        let m = DatasetManifest::parse(&text, "base").unwrap();
        let again = DatasetManifest::parse(&m.to_csv(), "base").unwrap();
        prop_assert_eq!(again, m);
    }
}
