//! Dense vertex grids with trilinear interpolation.

use serde::{Deserialize, Serialize};

use super::hash::Corner;
use crate::geometry::Vec3;
use crate::num::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenseGridConfig {
    /// Vertices per axis of the density grid.
    pub density_resolution: usize,
    /// Vertices per axis of the feature grid.
    pub feature_resolution: usize,
    pub feature_dim: usize,
}

impl Default for DenseGridConfig {
    fn default() -> Self {
        Self {
            density_resolution: 64,
            feature_resolution: 32,
            feature_dim: 8,
        }
    }
}

/// Corners of the cell containing `u ∈ [0,1]^3` on a grid of `res`
/// vertices per axis. `offset` is the flat vertex index times `stride`.
pub fn dense_corners<T: Real>(res: usize, stride: usize, u: Vec3<T>, corners: &mut [Corner<T>; 8]) {
    debug_assert!(res >= 2);
    let scale = T::from_usize_lossy(res - 1);
    let mut base = [0usize; 3];
    let mut frac = [T::zero(); 3];
    for a in 0..3 {
        let pos = u.get(a) * scale;
        let cell = pos.floor().to_usize().unwrap_or(0).min(res - 2);
        base[a] = cell;
        frac[a] = pos - T::from_usize_lossy(cell);
    }
    for (k, corner) in corners.iter_mut().enumerate() {
        let bit = |a: usize| (k >> a) & 1;
        let (x, y, z) = (base[0] + bit(0), base[1] + bit(1), base[2] + bit(2));
        let mut w = T::one();
        for (a, fr) in frac.iter().enumerate() {
            w *= if bit(a) == 1 { *fr } else { T::one() - *fr };
        }
        *corner = Corner {
            offset: (((z * res + y) * res + x) * stride) as u32,
            weight: w,
        };
    }
}

/// Trilinear blend of `dim`-wide vertex records.
pub fn dense_gather<T: Real>(grid: &[T], dim: usize, corners: &[Corner<T>; 8], out: &mut [T]) {
    out[..dim].iter_mut().for_each(|v| *v = T::zero());
    for c in corners {
        let src = &grid[c.offset as usize..c.offset as usize + dim];
        for (d, &s) in out.iter_mut().zip(src) {
            *d += c.weight * s;
        }
    }
}

pub fn dense_scatter<T: Real>(dim: usize, corners: &[Corner<T>; 8], grad_out: &[T], grad_grid: &mut [T]) {
    for c in corners {
        let dst = &mut grad_grid[c.offset as usize..c.offset as usize + dim];
        for (d, &g) in dst.iter_mut().zip(grad_out) {
            *d += c.weight * g;
        }
    }
}
