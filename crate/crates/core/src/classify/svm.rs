//! One-vs-rest linear SVM trained by dual coordinate descent.
//!
//! Each binary problem minimizes `0.5 |w|^2 + C * sum max(0, 1 - y w.x)`
//! with the bias folded into `w` through a constant feature of 1. The dual
//! `f(a) = 0.5 |sum a_i y_i x_i|^2 - sum a_i`, `0 <= a_i <= C`, is minimized
//! one coordinate at a time in a seeded random order per epoch, until the
//! relative duality gap drops below the tolerance.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ProbabilityMatrix;
use crate::error::{Error, Result};
use crate::features::VideoDescriptor;
use crate::scalar::{dot, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub seed: u64,
    pub max_epochs: usize,
    /// Relative duality-gap tolerance.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            seed: 7,
            max_epochs: 1000,
            tol: 1e-4,
        }
    }
}

/// Per-class weights and biases; `classes` are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSvmModel<T> {
    pub classes: Vec<String>,
    pub weights: Vec<Vec<T>>,
    pub biases: Vec<T>,
    pub c_param: T,
}

impl<T: Scalar> LinearSvmModel<T> {
    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// `w_k . x + b_k` for every class.
    pub fn margins(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.dim() {
            return Err(Error::arg(format!("descriptor has {} dims, model expects {}", x.len(), self.dim())));
        }
        Ok(self.weights.iter().zip(&self.biases).map(|(w, &b)| dot(w, x) + b).collect())
    }
}

/// Convergence trace of one binary subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryTrace {
    pub class: String,
    /// Dual objective after each epoch.
    pub dual_objective: Vec<f64>,
    pub primal_objective: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub traces: Vec<BinaryTrace>,
}

/// Trains on labelled descriptors with the given cost and shuffling seed.
pub fn train_svm<T: Scalar>(features: &[(VideoDescriptor<T>, String)], c_param: f64, rng_seed: u64) -> Result<LinearSvmModel<T>> {
    let samples: Vec<(&[T], &str)> = features.iter().map(|(d, l)| (d.vector.as_slice(), l.as_str())).collect();
    let params = SvmParams {
        c: c_param,
        seed: rng_seed,
        ..SvmParams::default()
    };
    train_svm_with(&samples, &params).map(|(m, _)| m)
}

/// Trains on `(vector, label)` pairs, also returning the convergence traces.
pub fn train_svm_with<T: Scalar>(samples: &[(&[T], &str)], params: &SvmParams) -> Result<(LinearSvmModel<T>, TrainReport)> {
    if !(params.c > 0.0 && params.c.is_finite()) {
        return Err(Error::arg(format!("SVM cost must be positive, got {}", params.c)));
    }
    let mut classes: Vec<String> = samples.iter().map(|(_, l)| l.to_string()).collect();
    classes.sort();
    classes.dedup();
    if classes.len() < 2 {
        return Err(Error::arg(format!("SVM training needs >= 2 classes, got {}", classes.len())));
    }
    let dim = samples[0].0.len();
    if let Some((x, _)) = samples.iter().find(|(x, _)| x.len() != dim) {
        return Err(Error::arg(format!("descriptor has {} dims, expected {dim}", x.len())));
    }
    let xs: Vec<&[T]> = samples.iter().map(|(x, _)| *x).collect();
    let mut weights = Vec::with_capacity(classes.len());
    let mut biases = Vec::with_capacity(classes.len());
    let mut report = TrainReport::default();
    for (k, class) in classes.iter().enumerate() {
        let y: Vec<T> = samples
            .iter()
            .map(|(_, l)| if *l == class { T::one() } else { -T::one() })
            .collect();
        let seed = params.seed.wrapping_add(k as u64);
        let (w, b, trace) = solve_binary(&xs, &y, params, seed);
        weights.push(w);
        biases.push(b);
        report.traces.push(BinaryTrace {
            class: class.clone(),
            ..trace
        });
    }
    let model = LinearSvmModel {
        classes,
        weights,
        biases,
        c_param: T::lit(params.c),
    };
    Ok((model, report))
}

fn solve_binary<T: Scalar>(xs: &[&[T]], y: &[T], params: &SvmParams, seed: u64) -> (Vec<T>, T, BinaryTrace) {
    let n = xs.len();
    let c = T::lit(params.c);
    let mut w = vec![T::zero(); xs[0].len()];
    let mut b = T::zero();
    let mut alpha = vec![T::zero(); n];
    let qd: Vec<T> = xs.iter().map(|x| dot(x, x) + T::one()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trace = BinaryTrace {
        class: String::new(),
        dual_objective: Vec::new(),
        primal_objective: f64::NAN,
        converged: false,
    };

    for _ in 0..params.max_epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = y[i] * (dot(&w, xs[i]) + b) - T::one();
            let pg = if alpha[i] == T::zero() {
                g.min(T::zero())
            } else if alpha[i] == c {
                g.max(T::zero())
            } else {
                g
            };
            if pg != T::zero() {
                let old = alpha[i];
                alpha[i] = (old - g / qd[i]).max(T::zero()).min(c);
                let step = (alpha[i] - old) * y[i];
                for (wj, &xj) in w.iter_mut().zip(xs[i]) {
                    *wj += step * xj;
                }
                b += step;
            }
        }
        let half_norm = 0.5 * (dot(&w, &w) + b * b).as_f64();
        let dual = half_norm - alpha.iter().map(|a| a.as_f64()).sum::<f64>();
        let hinge: f64 = xs
            .iter()
            .zip(y)
            .map(|(x, &yi)| (1.0 - (yi * (dot(&w, x) + b)).as_f64()).max(0.0))
            .sum();
        let primal = half_norm + params.c * hinge;
        trace.dual_objective.push(dual);
        trace.primal_objective = primal;
        if primal + dual <= params.tol * primal.abs().max(f64::MIN_POSITIVE) {
            trace.converged = true;
            break;
        }
    }
    (w, b, trace)
}

/// Softmax of the shifted margins, one row per video.
pub fn predict_proba<T: Scalar>(m: &LinearSvmModel<T>, video_ids: &[String], features: &[&[T]]) -> Result<ProbabilityMatrix<T>> {
    if video_ids.len() != features.len() {
        return Err(Error::arg(format!("{} ids for {} descriptors", video_ids.len(), features.len())));
    }
    let rows = features
        .iter()
        .map(|x| m.margins(x).map(|s| softmax(&s)))
        .collect::<Result<Vec<_>>>()?;
    ProbabilityMatrix::new(video_ids.to_vec(), m.classes.clone(), rows)
}

pub(crate) fn softmax<T: Scalar>(margins: &[T]) -> Vec<T> {
    let max = margins.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
    let exps: Vec<T> = margins.iter().map(|&s| (s - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::top1_accuracy;
    use crate::features::DescriptorKind;

    fn desc(v: &[f64]) -> VideoDescriptor<f64> {
        VideoDescriptor::new(DescriptorKind::EarlyFused, v.to_vec())
    }

    #[test]
    fn separable_2d_is_fit_exactly() {
        let data: Vec<(VideoDescriptor<f64>, String)> = [
            ([2.0, 1.0], "pos"),
            ([3.0, -1.0], "pos"),
            ([2.5, 0.0], "pos"),
            ([-2.0, 1.0], "neg"),
            ([-3.0, 0.5], "neg"),
            ([-2.5, -1.0], "neg"),
        ]
        .iter()
        .map(|(x, l)| (desc(x), l.to_string()))
        .collect();
        let m = train_svm(&data, 1.0, 3).unwrap();
        let ids: Vec<String> = (0..6).map(|i| i.to_string()).collect();
        let xs: Vec<&[f64]> = data.iter().map(|(d, _)| d.vector.as_slice()).collect();
        let labels: Vec<String> = data.iter().map(|(_, l)| l.clone()).collect();
        let p = predict_proba(&m, &ids, &xs).unwrap();
        assert_eq!(top1_accuracy(&p, &labels).unwrap(), 1.0);
    }

    #[test]
    fn conflicting_duplicates_do_not_crash() {
        let data = vec![
            (desc(&[1.0, 1.0]), "a".to_string()),
            (desc(&[1.0, 1.0]), "b".to_string()),
            (desc(&[-1.0, 0.0]), "b".to_string()),
        ];
        let m = train_svm(&data, 1.0, 0).unwrap();
        let xs: Vec<&[f64]> = data.iter().map(|(d, _)| d.vector.as_slice()).collect();
        let ids: Vec<String> = vec!["0".into(), "1".into(), "2".into()];
        let labels: Vec<String> = data.iter().map(|(_, l)| l.clone()).collect();
        let acc = top1_accuracy(&predict_proba(&m, &ids, &xs).unwrap(), &labels).unwrap();
        assert!(acc < 1.0);
    }

    #[test]
    fn deterministic_and_rejects_single_class() {
        let data: Vec<_> = (0..10)
            .map(|i| (desc(&[i as f64, (i * i % 7) as f64]), ["a", "b", "c"][i % 3].to_string()))
            .collect();
        assert_eq!(train_svm(&data, 1.0, 5).unwrap(), train_svm(&data, 1.0, 5).unwrap());
        let one = vec![(desc(&[1.0]), "a".to_string()), (desc(&[2.0]), "a".to_string())];
        assert!(train_svm(&one, 1.0, 5).is_err());
    }

    #[test]
    fn softmax_examples() {
        let p = softmax(&[10.0f64, 0.0]);
        let oracle = 1.0 / (1.0 + (-10.0f64).exp());
        assert!((p[0] - oracle).abs() < 1e-15);
        assert!((p[0] - 0.99995).abs() < 1e-5 && (p[1] - 0.00005).abs() < 1e-5);
        assert_eq!(softmax(&[0.0f64, 0.0, 0.0]), [1.0 / 3.0; 3]);
        assert_eq!(softmax(&[1.0f64, 2.0, -3.0]), softmax(&[101.0f64, 102.0, 97.0]));
    }

    #[test]
    fn zero_model_gives_uniform_rows() {
        let m = LinearSvmModel {
            classes: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            weights: vec![vec![0.0f64; 2]; 4],
            biases: vec![0.0; 4],
            c_param: 1.0,
        };
        let p = predict_proba(&m, &["v".to_string()], &[&[3.0, -1.0]]).unwrap();
        assert_eq!(p.rows()[0], [0.25; 4]);
        assert!(predict_proba(&m, &["v".to_string()], &[&[3.0]]).is_err());
    }
}
