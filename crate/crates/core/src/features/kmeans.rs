//! Seeded k-means (k-means++ seeding, Lloyd iterations) for VLAD codebooks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::vlad::{nearest_center, Codebook};
use super::LcdSet;
use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KmeansParams {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once the relative inertia change falls below this.
    pub rel_tol: f64,
    pub seed: u64,
}

impl KmeansParams {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iter: 100,
            rel_tol: 1e-4,
            seed,
        }
    }
}

/// Trains a `k`-center codebook with the default iteration limits.
pub fn fit_codebook<T: Scalar>(descriptors: &LcdSet<T>, k: usize, rng_seed: u64) -> Result<Codebook<T>> {
    KmeansParams::new(k, rng_seed).fit(descriptors)
}

impl KmeansParams {
    pub fn fit<T: Scalar>(&self, data: &LcdSet<T>) -> Result<Codebook<T>> {
        let (n, dim, k) = (data.len(), data.dim(), self.k);
        if k == 0 {
            return Err(Error::arg("k-means needs k >= 1"));
        }
        if n < k {
            return Err(Error::arg(format!("k-means with k={k} needs >= {k} descriptors, got {n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut centers = plus_plus(data, k, &mut rng)?;

        let mut prev_inertia = f64::INFINITY;
        for _ in 0..self.max_iter {
            let assigned: Vec<(usize, T)> = data.as_slice().par_chunks_exact(dim).map(|x| nearest_center(x, &centers, dim)).collect();
            let inertia: f64 = assigned.iter().map(|(_, d)| d.as_f64()).sum();
            let converged = inertia == 0.0
                || (prev_inertia.is_finite() && (prev_inertia - inertia).abs() <= self.rel_tol * prev_inertia);
            prev_inertia = inertia;

            let mut sums = vec![0.0f64; k * dim];
            let mut counts = vec![0usize; k];
            for (x, &(c, _)) in data.rows().zip(&assigned) {
                counts[c] += 1;
                for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(x) {
                    *s += v.as_f64();
                }
            }
            let mut far: Vec<(usize, T)> = assigned.iter().enumerate().map(|(i, &(_, d))| (i, d)).collect();
            // farthest first, lowest index among equals
            far.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            let mut reseeds = far.into_iter().map(|(i, _)| i);
            let mut moved = false;
            for c in 0..k {
                let slot = &mut centers[c * dim..(c + 1) * dim];
                if counts[c] == 0 {
                    let i = reseeds.next().expect("n >= k leaves a point for every empty cluster");
                    slot.copy_from_slice(data.row(i));
                    moved = true;
                } else {
                    let inv = 1.0 / counts[c] as f64;
                    for (dst, &s) in slot.iter_mut().zip(&sums[c * dim..(c + 1) * dim]) {
                        let v = T::lit(s * inv);
                        moved |= v != *dst;
                        *dst = v;
                    }
                }
            }
            if converged || !moved {
                break;
            }
        }
        Codebook::new(k, dim, centers)
    }
}

/// k-means++ seeding: each new center is drawn with probability proportional
/// to the squared distance from the nearest existing center.
fn plus_plus<T: Scalar>(data: &LcdSet<T>, k: usize, rng: &mut ChaCha8Rng) -> Result<Vec<T>> {
    let (n, dim) = (data.len(), data.dim());
    let mut centers = Vec::with_capacity(k * dim);
    centers.extend_from_slice(data.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = data.rows().map(|x| squared_distance(x, &centers[..dim]).as_f64()).collect();
    for _ in 1..k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::arg(format!("fewer than k={k} distinct descriptors")));
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                acc += d;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
        }
        let pick = pick.expect("total > 0 implies a positive distance");
        let start = centers.len();
        centers.extend_from_slice(data.row(pick));
        let newest = &centers[start..];
        d2.par_iter_mut().zip(data.as_slice().par_chunks_exact(dim)).for_each(|(d, x)| {
            *d = d.min(squared_distance(x, newest).as_f64());
        });
    }
    Ok(centers)
}
