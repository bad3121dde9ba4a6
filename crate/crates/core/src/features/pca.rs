//! Principal component projection of local descriptors.

use nalgebra::{DMatrix, SymmetricEigen};

use super::LcdSet;
use crate::error::{Error, Result};
use crate::scalar::{cast_slice, dot, Scalar};

/// `projection · (v - mean)`, with `projection` stored `d x C` row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel<T> {
    mean: Vec<T>,
    projection: Vec<T>,
    out_dim: usize,
}

impl<T: Scalar> PcaModel<T> {
    pub fn new(mean: Vec<T>, projection: Vec<T>, out_dim: usize) -> Result<Self> {
        if out_dim == 0 || mean.is_empty() || projection.len() != out_dim * mean.len() {
            return Err(Error::arg(format!(
                "PCA projection of {} values does not fit {out_dim}x{}",
                projection.len(),
                mean.len()
            )));
        }
        Ok(Self {
            mean,
            projection,
            out_dim,
        })
    }

    pub fn in_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn out_dim(&self) -> usize {
        self.out_dim
    }

    pub fn mean(&self) -> &[T] {
        &self.mean
    }

    pub fn projection(&self) -> &[T] {
        &self.projection
    }

    pub fn component(&self, k: usize) -> &[T] {
        let c = self.in_dim();
        &self.projection[k * c..(k + 1) * c]
    }

    /// Projects every row of `set`.
    pub fn transform_set(&self, set: &LcdSet<T>) -> Result<LcdSet<T>> {
        let mut out = LcdSet::new(self.out_dim);
        let mut buf = vec![T::zero(); self.out_dim];
        for row in set.rows() {
            self.project_into(row, &mut buf)?;
            out.push(&buf);
        }
        Ok(out)
    }

    fn project_into(&self, v: &[T], out: &mut [T]) -> Result<()> {
        if v.len() != self.in_dim() {
            return Err(Error::arg(format!("vector has {} dims, PCA expects {}", v.len(), self.in_dim())));
        }
        let centered: Vec<T> = v.iter().zip(&self.mean).map(|(&x, &m)| x - m).collect();
        for (k, o) in out.iter_mut().enumerate() {
            *o = dot(self.component(k), &centered);
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> PcaModel<U> {
        PcaModel {
            mean: cast_slice(&self.mean),
            projection: cast_slice(&self.projection),
            out_dim: self.out_dim,
        }
    }
}

/// Projects one vector onto the model's components.
pub fn pca_transform<T: Scalar>(m: &PcaModel<T>, v: &[T]) -> Result<Vec<T>> {
    let mut out = vec![T::zero(); m.out_dim];
    m.project_into(v, &mut out)?;
    Ok(out)
}

/// Fits a `d`-component PCA: the top-`d` eigenvectors of the sample
/// covariance, in descending eigenvalue order, each signed so its
/// largest-magnitude coordinate is positive.
///
/// With `whiten`, component `k` is divided by `sqrt(lambda_k)` (components
/// with zero variance are left unscaled).
pub fn fit_pca<T: Scalar>(descriptors: &LcdSet<T>, d: usize, whiten: bool) -> Result<PcaModel<T>> {
    let (n, c) = (descriptors.len(), descriptors.dim());
    if d == 0 || d > c {
        return Err(Error::arg(format!("PCA target dimension {d} must be in 1..={c}")));
    }
    if n < d {
        return Err(Error::arg(format!("PCA to {d} dims needs >= {d} samples, got {n}")));
    }
    let mut mean = vec![0.0f64; c];
    for row in descriptors.rows() {
        for (m, &x) in mean.iter_mut().zip(row) {
            *m += x.as_f64();
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let centered = DMatrix::from_fn(n, c, |i, j| descriptors.row(i)[j].as_f64() - mean[j]);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    let cov = (centered.transpose() * &centered) / denom;
    let eig = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..c).collect();
    // stable: equal eigenvalues keep solver order
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));

    let mut projection = Vec::with_capacity(d * c);
    for &k in order.iter().take(d) {
        let col = eig.eigenvectors.column(k);
        let lead = (0..c).fold(0, |best, j| if col[j].abs() > col[best].abs() { j } else { best });
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        let lambda = eig.eigenvalues[k].max(0.0);
        let scale = if whiten && lambda > 0.0 { sign / lambda.sqrt() } else { sign };
        projection.extend(col.iter().map(|&v| T::lit(v * scale)));
    }
    PcaModel::new(cast_slice(&mean), projection, d)
}
