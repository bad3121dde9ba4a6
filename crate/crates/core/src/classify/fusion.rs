//! Convex combination of probability matrices and top-1 scoring.

use super::{argmax, ProbabilityMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Nonnegative weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionWeights {
    weights: Vec<f64>,
}

impl FusionWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::arg("no fusion weights"));
        }
        if weights.iter().any(|w| !(0.0..=1.0).contains(w)) {
            return Err(Error::arg(format!("fusion weights {weights:?} must lie in [0, 1]")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::arg(format!("fusion weights sum to {sum}, not 1")));
        }
        Ok(Self { weights })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        Self::new(vec![1.0 / n as f64; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.weights
    }
}

fn check_aligned<T: Scalar>(mats: &[&ProbabilityMatrix<T>]) -> Result<()> {
    let first = mats.first().ok_or_else(|| Error::arg("nothing to fuse"))?;
    for (m, other) in mats.iter().enumerate().skip(1) {
        if other.classes != first.classes {
            let i = (0..first.classes.len().max(other.classes.len()))
                .find(|&i| first.classes.get(i) != other.classes.get(i))
                .unwrap_or(0);
            return Err(Error::arg(format!(
                "matrix {m} class {i} is {:?}, matrix 0 has {:?}",
                other.classes.get(i),
                first.classes.get(i)
            )));
        }
        if other.video_ids != first.video_ids {
            let i = (0..first.video_ids.len().max(other.video_ids.len()))
                .find(|&i| first.video_ids.get(i) != other.video_ids.get(i))
                .unwrap_or(0);
            return Err(Error::arg(format!(
                "matrix {m} row {i} is video {:?}, matrix 0 has {:?}",
                other.video_ids.get(i),
                first.video_ids.get(i)
            )));
        }
    }
    Ok(())
}

/// `sum_i w_i * mats[i]`, elementwise.
pub fn fuse_scores<T: Scalar>(mats: &[&ProbabilityMatrix<T>], w: &FusionWeights) -> Result<ProbabilityMatrix<T>> {
    check_aligned(mats)?;
    if mats.len() != w.weights.len() {
        return Err(Error::arg(format!("{} matrices, {} weights", mats.len(), w.weights.len())));
    }
    let first = mats[0];
    let rows = (0..first.rows.len())
        .map(|r| {
            (0..first.classes.len())
                .map(|c| {
                    mats.iter()
                        .zip(&w.weights)
                        .fold(T::zero(), |acc, (m, &wi)| acc + T::lit(wi) * m.rows[r][c])
                })
                .collect()
        })
        .collect();
    ProbabilityMatrix::new(first.video_ids.clone(), first.classes.clone(), rows)
}

/// Fraction of rows whose argmax (lowest index on ties) is the true label.
pub fn top1_accuracy<T: Scalar>(mat: &ProbabilityMatrix<T>, labels: &[String]) -> Result<f64> {
    if labels.len() != mat.rows.len() {
        return Err(Error::arg(format!("{} labels for {} rows", labels.len(), mat.rows.len())));
    }
    if labels.is_empty() {
        return Err(Error::arg("accuracy of zero videos"));
    }
    let mut hits = 0usize;
    for (row, label) in mat.rows.iter().zip(labels) {
        let truth = mat
            .classes
            .iter()
            .position(|c| c == label)
            .ok_or_else(|| Error::arg(format!("label `{label}` is not one of {:?}", mat.classes)))?;
        hits += usize::from(argmax(row) == truth);
    }
    Ok(hits as f64 / labels.len() as f64)
}

/// All weight tuples on the simplex with spacing `1/steps`, in lexicographic order.
fn simplex_grid(parts: usize, steps: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![steps]];
    }
    let mut out = Vec::new();
    for first in 0..=steps {
        for mut rest in simplex_grid(parts - 1, steps - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Exhaustive search over simplex grid weights for the best top-1 accuracy
/// on `labels`; ties go to the lexicographically smallest weight tuple.
pub fn grid_search_weights<T: Scalar>(mats: &[&ProbabilityMatrix<T>], labels: &[String], step: f64) -> Result<FusionWeights> {
    if !(2..=3).contains(&mats.len()) {
        return Err(Error::arg(format!("grid search takes 2 or 3 matrices, got {}", mats.len())));
    }
    if !(step > 0.0 && step <= 1.0) {
        return Err(Error::arg(format!("grid step {step} outside (0, 1]")));
    }
    let steps = (1.0 / step).round() as usize;
    if (steps as f64 * step - 1.0).abs() > 1e-9 {
        return Err(Error::arg(format!("grid step {step} does not divide 1")));
    }
    check_aligned(mats)?;
    let mut best: Option<(f64, FusionWeights)> = None;
    for tuple in simplex_grid(mats.len(), steps) {
        let w = FusionWeights::new(tuple.iter().map(|&t| t as f64 / steps as f64).collect())?;
        let acc = top1_accuracy(&fuse_scores(mats, &w)?, labels)?;
        if best.as_ref().is_none_or(|(b, _)| acc > *b) {
            best = Some((acc, w));
        }
    }
    Ok(best.expect("grid is never empty").1)
}
