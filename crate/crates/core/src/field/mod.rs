//! Scene representation: `(x, view direction) → (σ, c)`.

mod checkpoint;
mod dense;
mod hash;
mod neural;

pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use dense::{dense_corners, dense_gather, dense_scatter, DenseGridConfig};
pub use hash::{hash_corners, hash_gather, hash_index, hash_scatter, Corner, HashGridConfig, DEFAULT_PRIMES};
pub use neural::{BackendConfig, DensityActivation, FieldConfig, FieldWorkspace, NeuralField};

use thiserror::Error;

use crate::geometry::{Aabb, Vec3};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldSample<T> {
    pub sigma: T,
    pub color: [T; 3],
}

/// Anything that can be queried for density and color. Implementations
/// must be safe to query concurrently.
pub trait RadianceField<T: Real>: Sync {
    fn bounds(&self) -> Aabb<T>;

    fn query(&self, x: Vec3<T>, dir: Vec3<T>) -> FieldSample<T>;

    /// Evaluates many points along one view direction. `color` is
    /// interleaved RGB.
    fn query_batch(&self, points: &[Vec3<T>], dir: Vec3<T>, sigma: &mut [T], color: &mut [T]) {
        for (i, &p) in points.iter().enumerate() {
            let s = self.query(p, dir);
            sigma[i] = s.sigma;
            color[i * 3..i * 3 + 3].copy_from_slice(&s.color);
        }
    }
}

/// Homogeneous medium filling the unit cube.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantField<T> {
    pub sigma: T,
    pub color: [T; 3],
    pub bounds: Aabb<T>,
}

impl<T: Real> ConstantField<T> {
    pub fn new(sigma: T, color: [T; 3]) -> Self {
        Self {
            sigma,
            color,
            bounds: Aabb::unit(),
        }
    }
}

impl<T: Real> RadianceField<T> for ConstantField<T> {
    fn bounds(&self) -> Aabb<T> {
        self.bounds
    }

    fn query(&self, _x: Vec3<T>, _dir: Vec3<T>) -> FieldSample<T> {
        FieldSample {
            sigma: self.sigma,
            color: self.color,
        }
    }
}

/// Frequency encoding of a unit direction: `[d, sin(2^k π d), cos(2^k π d)]`
/// for `k < bands`, written into `out` (length `3 + 6·bands`).
pub fn encode_direction<T: Real>(dir: Vec3<T>, bands: usize, out: &mut Vec<T>) {
    out.clear();
    out.extend_from_slice(&dir.to_array());
    let pi = T::PI();
    for k in 0..bands {
        let freq = pi * T::lit((1u64 << k) as f64);
        for a in 0..3 {
            out.push((freq * dir.get(a)).sin());
        }
        for a in 0..3 {
            out.push((freq * dir.get(a)).cos());
        }
    }
}

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid field configuration: {0}")]
    Config(String),
    #[error("checkpoint format error: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
