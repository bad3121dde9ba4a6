//! Local descriptors from a feature map, with spatial pyramid pooling.

use super::{FeatureMap, LcdSet};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// One descriptor per spatial cell, cell `(i, j)` at position `i * W + j`.
pub fn lcd<T: Scalar>(map: &FeatureMap<T>) -> LcdSet<T> {
    LcdSet {
        dim: map.channels(),
        data: map.data().to_vec(),
    }
}

/// [`lcd`] plus, for each pyramid level `g`, the channelwise maxima over a
/// `g x g` partition of the map (row-major over the partition).
pub fn spp_augment<T: Scalar>(map: &FeatureMap<T>, levels: &[usize]) -> Result<LcdSet<T>> {
    let (h, w, c) = (map.height(), map.width(), map.channels());
    if let Some(&g) = levels.iter().find(|&&g| g == 0 || g > h.min(w)) {
        return Err(Error::arg(format!("pyramid level {g} does not fit a {h}x{w} map")));
    }
    let mut out = lcd(map);
    let mut pooled = vec![T::zero(); c];
    for &g in levels {
        for bi in 0..g {
            for bj in 0..g {
                pooled.fill(T::neg_infinity());
                for i in bi * h / g..(bi + 1) * h / g {
                    for j in bj * w / g..(bj + 1) * w / g {
                        for (p, &v) in pooled.iter_mut().zip(map.cell(i, j)) {
                            *p = p.max(v);
                        }
                    }
                }
                out.push(&pooled);
            }
        }
    }
    Ok(out)
}
