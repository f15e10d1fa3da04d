//! Cameras, poses, rays, projection, the virtual stereo rig and pose I/O.

mod camera;
mod colmap;
mod linalg;

pub use camera::{
    depth_to_disparity, disparity_from_depth, make_ray, pixel_ray, project, virtual_stereo_poses, Intrinsics, Pose,
    Ray, StereoRig,
};
pub use colmap::{
    parse_colmap_text, read_pose_file, serialize_colmap_text, write_pose_file, ColmapView, PoseRecord,
};
pub use linalg::{Aabb, Mat3, Vec3};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum GeometryError {
    #[error("pixel ({u}, {v}) outside {width}x{height} raster")]
    PixelOutOfBounds { u: f64, v: f64, width: usize, height: usize },
    #[error("point behind camera (depth {depth})")]
    BehindCamera { depth: f64 },
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
    #[error("rotation not proper orthonormal (orthonormality error {orthonormality}, det {determinant})")]
    InvalidRotation { orthonormality: f64, determinant: f64 },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("degenerate geometry: {0}")]
    Degenerate(&'static str),
    #[error("ray direction must be unit length with 0 <= t_near < t_far")]
    InvalidRay,
    #[error("baseline must be positive, got {0}")]
    InvalidBaseline(f64),
    #[error("unsupported camera model {0}; only SIMPLE_PINHOLE and PINHOLE are accepted")]
    UnsupportedCameraModel(String),
    #[error("{file}:{line}: {message}")]
    Parse { file: &'static str, line: usize, message: String },
}
