//! Linear multiclass SVMs, probability matrices, score fusion and split-based
//! evaluation.

mod fusion;
mod io;
mod svm;

pub use fusion::{fuse_scores, grid_search_weights, top1_accuracy, FusionWeights};
pub use io::{parse_probability_csv, read_probability_csv, read_svm, write_probability_csv, write_svm, decode_svm, encode_svm, probability_csv};
pub use svm::{predict_proba, train_svm, train_svm_with, LinearSvmModel, SvmParams, TrainReport};

use std::collections::HashMap;

use crate::depth_io::{DatasetManifest, SplitRole};
use crate::error::{Error, Result};
use crate::features::VideoDescriptor;
use crate::scalar::Scalar;

/// Per-video class probabilities; every row lies on the simplex.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityMatrix<T> {
    video_ids: Vec<String>,
    classes: Vec<String>,
    rows: Vec<Vec<T>>,
}

impl<T: Scalar> ProbabilityMatrix<T> {
    /// Builds a matrix, checking shape and that rows sum to one within 1e-6.
    pub fn new(video_ids: Vec<String>, classes: Vec<String>, rows: Vec<Vec<T>>) -> Result<Self> {
        if rows.len() != video_ids.len() {
            return Err(Error::arg(format!("{} rows for {} videos", rows.len(), video_ids.len())));
        }
        for (id, row) in video_ids.iter().zip(&rows) {
            if row.len() != classes.len() {
                return Err(Error::arg(format!("row `{id}` has {} entries for {} classes", row.len(), classes.len())));
            }
            let sum: f64 = row.iter().map(|v| v.as_f64()).sum();
            let in_range = row.iter().all(|&v| v >= T::zero() && v <= T::one());
            if !in_range || (sum - 1.0).abs() > 1e-6 {
                return Err(Error::arg(format!("row `{id}` is not a probability distribution (sum {sum})")));
            }
        }
        Ok(Self {
            video_ids,
            classes,
            rows,
        })
    }

    pub fn video_ids(&self) -> &[String] {
        &self.video_ids
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn rows(&self) -> &[Vec<T>] {
        &self.rows
    }

    /// Column of the largest entry per row; ties go to the lowest index.
    pub fn argmax(&self) -> Vec<usize> {
        self.rows.iter().map(|r| argmax(r)).collect()
    }

    /// Rows for the listed ids, in that order.
    pub fn select(&self, ids: &[String]) -> Result<Self> {
        let index: HashMap<&str, usize> = self.video_ids.iter().enumerate().map(|(i, v)| (v.as_str(), i)).collect();
        let rows = ids
            .iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .map(|&i| self.rows[i].clone())
                    .ok_or_else(|| Error::MissingDescriptor(id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            video_ids: ids.to_vec(),
            classes: self.classes.clone(),
            rows,
        })
    }
}

pub(crate) fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Accuracy of one split plus the mean over all evaluated splits.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitReport {
    pub per_split: Vec<(String, f64)>,
    pub mean: f64,
}

impl SplitReport {
    pub fn from_accuracies(per_split: Vec<(String, f64)>) -> Self {
        let mean = if per_split.is_empty() {
            0.0
        } else {
            per_split.iter().map(|(_, a)| a).sum::<f64>() / per_split.len() as f64
        };
        Self { per_split, mean }
    }

    /// `split,accuracy` rows followed by `mean,<value>`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("split,accuracy\n");
        for (name, acc) in &self.per_split {
            s.push_str(&format!("{name},{}\n", io::format_sig9(*acc)));
        }
        s.push_str(&format!("mean,{}\n", io::format_sig9(self.mean)));
        s
    }
}

/// Trains on each split's training videos and scores top-1 accuracy on its
/// test videos.
pub fn split_evaluate<T: Scalar>(
    manifest: &DatasetManifest,
    features: &HashMap<String, VideoDescriptor<T>>,
    splits: &[String],
    params: &SvmParams,
) -> Result<SplitReport> {
    for e in manifest.entries() {
        if !features.contains_key(&e.video_id) {
            return Err(Error::MissingDescriptor(e.video_id.clone()));
        }
    }
    let mut per_split = Vec::with_capacity(splits.len());
    for name in splits {
        let s = manifest.split_index(name)?;
        let train: Vec<(&[T], &str)> = manifest
            .with_role(s, SplitRole::Train)
            .map(|e| (features[&e.video_id].vector.as_slice(), e.label.as_str()))
            .collect();
        let model = train_svm_with(&train, params)?.0;
        let test: Vec<_> = manifest.with_role(s, SplitRole::Test).collect();
        let ids: Vec<String> = test.iter().map(|e| e.video_id.clone()).collect();
        let xs: Vec<&[T]> = test.iter().map(|e| features[&e.video_id].vector.as_slice()).collect();
        let labels: Vec<String> = test.iter().map(|e| e.label.clone()).collect();
        let proba = predict_proba(&model, &ids, &xs)?;
        per_split.push((name.clone(), top1_accuracy(&proba, &labels)?));
    }
    Ok(SplitReport::from_accuracies(per_split))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::DescriptorKind;

    #[test]
    fn matrix_validation() {
        let ids = vec!["a".to_string()];
        let cls = vec!["x".to_string(), "y".to_string()];
        assert!(ProbabilityMatrix::new(ids.clone(), cls.clone(), vec![vec![0.5f64, 0.5]]).is_ok());
        assert!(ProbabilityMatrix::new(ids.clone(), cls.clone(), vec![vec![0.5f64, 0.6]]).is_err());
        assert!(ProbabilityMatrix::new(ids.clone(), cls.clone(), vec![vec![1.5f64, -0.5]]).is_err());
        assert!(ProbabilityMatrix::<f64>::new(ids, cls, vec![]).is_err());
    }

    #[test]
    fn report_mean_and_csv() {
        let r = SplitReport::from_accuracies(vec![("split1".into(), 0.5), ("split2".into(), 1.0), ("split3".into(), 0.75)]);
        assert_eq!(r.mean, 0.75);
        assert_eq!(r.to_csv(), "split,accuracy\nsplit1,0.5\nsplit2,1\nsplit3,0.75\nmean,0.75\n");
    }

    fn manifest() -> DatasetManifest {
        let mut text = String::from("video_id,path,label,split1\n");
        for i in 0..20 {
            let label = if i % 2 == 0 { "a" } else { "b" };
            let role = if i < 16 { "train" } else { "test" };
            text.push_str(&format!("v{i},v{i}.dseq,{label},{role}\n"));
        }
        DatasetManifest::parse(&text, ".").unwrap()
    }

    #[test]
    fn separable_split_scores_one() {
        let m = manifest();
        let feats: HashMap<String, VideoDescriptor<f64>> = m
            .entries()
            .iter()
            .enumerate()
            .map(|(i, e)| {
                let s = if e.label == "a" { 1.0 } else { -1.0 };
                (e.video_id.clone(), VideoDescriptor::new(DescriptorKind::Vlad, vec![s, 0.1 * i as f64]))
            })
            .collect();
        let r = split_evaluate(&m, &feats, &["split1".to_string()], &SvmParams::default()).unwrap();
        assert_eq!(r.per_split, [("split1".to_string(), 1.0)]);
        assert_eq!(r.mean, 1.0);
    }

    #[test]
    fn missing_descriptor_is_named() {
        let m = manifest();
        let mut feats = HashMap::new();
        feats.insert("v0".to_string(), VideoDescriptor::new(DescriptorKind::Vlad, vec![1.0f64]));
        match split_evaluate(&m, &feats, &["split1".to_string()], &SvmParams::default()) {
            Err(Error::MissingDescriptor(id)) => assert_eq!(id, "v1"),
            other => panic!("{other:?}"),
        }
    }
}
