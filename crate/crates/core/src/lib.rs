//! Radiance-field stereo data factory and NeRF-supervised stereo loss.
//!
//! The numeric core is generic over [`num::Real`] (`f32` for training and
//! rendering, `f64` for gradient certification). Concrete aliases for both
//! precisions are exported at the crate root.

pub mod diff;
pub mod eval;
pub mod factory;
pub mod field;
pub mod geometry;
pub mod image;
pub mod nsloss;
pub mod num;
pub mod render;
pub mod scenegen;
pub mod stereo;
pub mod trainer;

pub use image::{Image, Mask};
pub use num::Real;

pub type Image32 = image::Image<f32>;
pub type Image64 = image::Image<f64>;
pub type Vec3f = geometry::Vec3<f32>;
pub type Vec3d = geometry::Vec3<f64>;
pub type Pose32 = geometry::Pose<f32>;
pub type Pose64 = geometry::Pose<f64>;
pub type Intrinsics32 = geometry::Intrinsics<f32>;
pub type Intrinsics64 = geometry::Intrinsics<f64>;
pub type NeuralField32 = field::NeuralField<f32>;
pub type NeuralField64 = field::NeuralField<f64>;
