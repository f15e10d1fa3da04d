//! Multiresolution hash encoding.
//!
//! Level `l` has a vertex lattice of resolution `N_l = floor(N_min · γ^l)`
//! over the normalized scene box. Each lattice vertex maps to one of `T`
//! table slots through a spatial XOR hash; the `F` features stored there
//! are trilinearly blended, and the per-level results are concatenated.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::num::Real;

/// Primes of the spatial hash. The first is 1 so that the x coordinate
/// keeps its low bits.
pub const DEFAULT_PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HashGridConfig {
    pub levels: usize,
    pub features_per_level: usize,
    pub log2_table_size: u32,
    pub base_resolution: usize,
    pub growth_factor: f64,
    pub primes: [u64; 3],
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 8,
            features_per_level: 2,
            log2_table_size: 14,
            base_resolution: 16,
            growth_factor: 1.5,
            primes: DEFAULT_PRIMES,
        }
    }
}

impl HashGridConfig {
    pub fn table_size(&self) -> usize {
        1usize << self.log2_table_size
    }

    pub fn output_dim(&self) -> usize {
        self.levels * self.features_per_level
    }

    pub fn level_resolution(&self, level: usize) -> usize {
        (self.base_resolution as f64 * self.growth_factor.powi(level as i32)).floor() as usize
    }

    /// Parameter count of the stacked tables (`levels × T × F`).
    pub fn param_count(&self) -> usize {
        self.levels * self.table_size() * self.features_per_level
    }

    /// Slot of `cell` in a level table: `(x·π1 ⊕ y·π2 ⊕ z·π3) mod T`.
    /// Level tables share size and primes, so `level` only selects which
    /// table the slot belongs to.
    #[inline]
    pub fn hash_index(&self, cell: [u32; 3], level: usize) -> usize {
        debug_assert!(level < self.levels);
        hash_index(cell, &self.primes, self.table_size())
    }
}

/// Spatial hash in 64-bit wrap-around arithmetic. `table_size` must be a
/// power of two.
#[inline]
pub fn hash_index(cell: [u32; 3], primes: &[u64; 3], table_size: usize) -> usize {
    debug_assert!(table_size.is_power_of_two());
    let h = (cell[0] as u64).wrapping_mul(primes[0])
        ^ (cell[1] as u64).wrapping_mul(primes[1])
        ^ (cell[2] as u64).wrapping_mul(primes[2]);
    (h & (table_size as u64 - 1)) as usize
}

/// One corner contribution: flat table offset (start of its `F` features)
/// and trilinear weight.
#[derive(Debug, Clone, Copy, Default)]
pub struct Corner<T> {
    pub offset: u32,
    pub weight: T,
}

/// Writes the 8 corners of every level for a point in normalized box
/// coordinates `u ∈ [0,1]^3`. `corners.len() == levels * 8`.
pub fn hash_corners<T: Real>(cfg: &HashGridConfig, u: Vec3<T>, corners: &mut [Corner<T>]) {
    let t_size = cfg.table_size();
    let f = cfg.features_per_level;
    for level in 0..cfg.levels {
        let res = cfg.level_resolution(level);
        let res_t = T::from_usize_lossy(res);
        let mut base = [0u32; 3];
        let mut frac = [T::zero(); 3];
        for a in 0..3 {
            let pos = u.get(a) * res_t;
            let cell = pos.floor().to_usize().unwrap_or(0).min(res - 1);
            base[a] = cell as u32;
            frac[a] = pos - T::from_usize_lossy(cell);
        }
        let level_base = level * t_size * f;
        for k in 0..8 {
            let bit = |a: usize| (k >> a) & 1;
            let cell = [base[0] + bit(0) as u32, base[1] + bit(1) as u32, base[2] + bit(2) as u32];
            let mut w = T::one();
            for (a, fr) in frac.iter().enumerate() {
                w *= if bit(a) == 1 { *fr } else { T::one() - *fr };
            }
            let slot = hash_index(cell, &cfg.primes, t_size);
            corners[level * 8 + k] = Corner {
                offset: (level_base + slot * f) as u32,
                weight: w,
            };
        }
    }
}

/// Blends table features at precomputed corners into `out` (`levels × F`).
pub fn hash_gather<T: Real>(cfg: &HashGridConfig, tables: &[T], corners: &[Corner<T>], out: &mut [T]) {
    let f = cfg.features_per_level;
    for level in 0..cfg.levels {
        let dst = &mut out[level * f..(level + 1) * f];
        dst.iter_mut().for_each(|v| *v = T::zero());
        for c in &corners[level * 8..(level + 1) * 8] {
            let src = &tables[c.offset as usize..c.offset as usize + f];
            for (d, &s) in dst.iter_mut().zip(src) {
                *d += c.weight * s;
            }
        }
    }
}

/// Adjoint of [`hash_gather`]: scatters `grad_out` into `grad_tables`.
pub fn hash_scatter<T: Real>(cfg: &HashGridConfig, corners: &[Corner<T>], grad_out: &[T], grad_tables: &mut [T]) {
    let f = cfg.features_per_level;
    for level in 0..cfg.levels {
        let g = &grad_out[level * f..(level + 1) * f];
        for c in &corners[level * 8..(level + 1) * 8] {
            let dst = &mut grad_tables[c.offset as usize..c.offset as usize + f];
            for (d, &gv) in dst.iter_mut().zip(g) {
                *d += c.weight * gv;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn origin_hashes_to_zero() {
        for log2 in [4, 14, 20] {
            assert_eq!(hash_index([0, 0, 0], &DEFAULT_PRIMES, 1 << log2), 0);
        }
    }

    #[test]
    fn unit_x_with_unit_prime() {
        assert_eq!(hash_index([1, 0, 0], &[1, 7, 11], 1 << 14), 1);
    }

    /// Frozen from a direct evaluation:
    /// (1 ^ 2654435761 ^ 805459861) mod 2^14.
    #[test]
    fn diagonal_cell_regression() {
        assert_eq!(hash_index([1, 1, 1], &DEFAULT_PRIMES, 1 << 14), 11813);
    }

    #[test]
    fn indices_stay_in_table() {
        let t = 1usize << 10;
        for x in (0..4000u32).step_by(37) {
            for y in (0..4000u32).step_by(53) {
                assert!(hash_index([x, y, x ^ y], &DEFAULT_PRIMES, t) < t);
            }
        }
    }

    #[test]
    fn corner_weights_partition_unity() {
        let cfg = HashGridConfig {
            levels: 3,
            ..Default::default()
        };
        let mut corners = vec![Corner::default(); 24];
        hash_corners(&cfg, Vec3::new(0.31f64, 0.77, 0.02), &mut corners);
        for level in 0..3 {
            let s: f64 = corners[level * 8..level * 8 + 8].iter().map(|c| c.weight).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn box_faces_stay_inside_lattice() {
        let cfg = HashGridConfig::default();
        let mut corners = vec![Corner::default(); cfg.levels * 8];
        hash_corners(&cfg, Vec3::new(1.0f64, 1.0, 0.0), &mut corners);
        assert!(corners.iter().all(|c| (c.offset as usize) < cfg.param_count()));
    }
}
