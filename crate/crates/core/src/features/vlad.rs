//! VLAD encoding: per-center residual sums, intra-normalized per block and
//! L2-normalized overall.

use std::cmp::Ordering;

use super::{DescriptorKind, LcdSet, VideoDescriptor};
use crate::error::{Error, Result};
use crate::scalar::{cast_slice, l2_normalize, squared_distance, Scalar};

/// `k` centers of dimension `dim`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    k: usize,
    dim: usize,
    centers: Vec<T>,
}

impl<T: Scalar> Codebook<T> {
    pub fn new(k: usize, dim: usize, centers: Vec<T>) -> Result<Self> {
        if k == 0 || dim == 0 || centers.len() != k * dim {
            return Err(Error::arg(format!("codebook of {} values does not fit {k}x{dim}", centers.len())));
        }
        if centers.iter().any(|v| !v.is_finite()) {
            return Err(Error::arg("codebook holds non-finite values"));
        }
        Ok(Self { k, dim, centers })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn centers(&self) -> &[T] {
        &self.centers
    }

    pub fn center(&self, c: usize) -> &[T] {
        &self.centers[c * self.dim..(c + 1) * self.dim]
    }

    pub fn cast<U: Scalar>(&self) -> Codebook<U> {
        Codebook {
            k: self.k,
            dim: self.dim,
            centers: cast_slice(&self.centers),
        }
    }
}

/// Index and squared distance of the closest center; ties go to the lowest index.
pub fn nearest_center<T: Scalar>(x: &[T], centers: &[T], dim: usize) -> (usize, T) {
    let mut best = (0, T::infinity());
    for (c, center) in centers.chunks_exact(dim).enumerate() {
        let d = squared_distance(x, center);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn lexicographic<T: Scalar>(a: &[T], b: &[T]) -> Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.partial_cmp(y).unwrap_or(Ordering::Equal))
        .find(|o| o.is_ne())
        .unwrap_or(Ordering::Equal)
}

/// Encodes a descriptor set into a `k * dim` VLAD vector.
///
/// Residuals are accumulated in lexicographic descriptor order, so the
/// output does not depend on the order of `descriptors`, bit for bit.
pub fn vlad_encode<T: Scalar>(descriptors: &LcdSet<T>, cb: &Codebook<T>) -> Result<VideoDescriptor<T>> {
    if descriptors.is_empty() {
        return Err(Error::arg("VLAD of an empty descriptor set"));
    }
    if descriptors.dim() != cb.dim {
        return Err(Error::arg(format!(
            "descriptor dimension {} does not match codebook dimension {}",
            descriptors.dim(),
            cb.dim
        )));
    }
    let dim = cb.dim;
    let mut order: Vec<&[T]> = descriptors.rows().collect();
    order.sort_by(|a, b| lexicographic(a, b));

    let mut v = vec![T::zero(); cb.k * dim];
    for x in order {
        let (c, _) = nearest_center(x, &cb.centers, dim);
        let center = cb.center(c);
        for ((acc, &xi), &ci) in v[c * dim..(c + 1) * dim].iter_mut().zip(x).zip(center) {
            *acc += xi - ci;
        }
    }
    for block in v.chunks_exact_mut(dim) {
        l2_normalize(block);
    }
    l2_normalize(&mut v);
    Ok(VideoDescriptor::new(DescriptorKind::Vlad, v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::l2_norm;

    #[test]
    fn descriptors_on_centers_give_zero() {
        let cb = Codebook::new(2, 2, vec![0.0f64, 0.0, 1.0, 1.0]).unwrap();
        let set = LcdSet::from_rows(2, vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0]).unwrap();
        let v = vlad_encode(&set, &cb).unwrap();
        assert_eq!(v.vector, [0.0; 4]);
        assert_eq!(v.kind, DescriptorKind::Vlad);
    }

    #[test]
    fn hand_computed_two_center_case() {
        let cb = Codebook::new(2, 2, vec![0.0f64, 0.0, 10.0, 0.0]).unwrap();
        // x1, x2 -> center 0: residual (1, 1) + (1, -3) = (2, -2)
        // x3 -> center 1: residual (0, 5)
        let set = LcdSet::from_rows(2, vec![1.0, 1.0, 1.0, -3.0, 10.0, 5.0]).unwrap();
        let v = vlad_encode(&set, &cb).unwrap().vector;
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [h * h, -h * h, 0.0, h];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{v:?}");
        }
        assert!((l2_norm(&v) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn equidistant_descriptor_goes_to_lowest_center() {
        let cb = Codebook::new(2, 1, vec![-1.0f64, 1.0]).unwrap();
        assert_eq!(nearest_center(&[0.0], cb.centers(), 1).0, 0);
        let v = vlad_encode(&LcdSet::from_rows(1, vec![0.0]).unwrap(), &cb).unwrap();
        assert_eq!(v.vector, [1.0, 0.0]);
    }

    #[test]
    fn default_geometry_is_16384() {
        let cb = Codebook::new(256, 64, (0..256 * 64).map(|i| (i % 97) as f32 * 0.01).collect()).unwrap();
        let set = LcdSet::from_rows(64, (0..64 * 10).map(|i| (i % 13) as f32 * 0.1).collect()).unwrap();
        assert_eq!(vlad_encode(&set, &cb).unwrap().dim(), 16384);
    }

    #[test]
    fn errors() {
        let cb = Codebook::new(1, 2, vec![0.0f64, 0.0]).unwrap();
        assert!(vlad_encode(&LcdSet::new(2), &cb).is_err());
        assert!(vlad_encode(&LcdSet::from_rows(3, vec![0.0; 3]).unwrap(), &cb).is_err());
        assert!(Codebook::new(2, 2, vec![0.0f64; 3]).is_err());
    }
}
