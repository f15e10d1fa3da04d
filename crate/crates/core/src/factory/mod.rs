//! Rectified stereo triplets rendered around a center pose, and their
//! on-disk datasets.

mod dataset;
mod histogram;
mod pfm;

pub use dataset::{
    build_dataset, export_triplets, load_triplet, read_manifest, read_png_rgb, to_export, write_manifest, write_png_mask,
    write_png_rgb, write_triplet, DatasetManifest, ExportConfig, ManifestHeader, SceneSource, TripletRecord, MANIFEST_FILE,
    MANIFEST_FORMAT, MANIFEST_VERSION,
};
pub use histogram::DisparityHistogram;
pub use pfm::{decode_pfm, encode_pfm, read_pfm, write_pfm};

use thiserror::Error;

use crate::field::RadianceField;
use crate::geometry::{depth_to_disparity, virtual_stereo_poses, Intrinsics, Pose, StereoRig};
use crate::image::{Image, Mask};
use crate::num::Real;
use crate::render::{render_image, RenderOutput};
use crate::scenegen::{analytic_render, AnalyticScene};

#[derive(Debug, Error)]
pub enum FactoryError {
    #[error("I/O error")]
    Io(#[from] std::io::Error),
    #[error("malformed data: {0}")]
    Format(String),
    #[error("image codec error")]
    Codec(#[from] image::ImageError),
    #[error("manifest error")]
    Json(#[from] serde_json::Error),
    #[error("invalid export configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TripletMeta {
    pub baseline: f64,
    pub focal: f64,
    pub pose_id: usize,
    pub scene_id: String,
}

/// Left, center and right views with the center view's disparity, depth,
/// AO and validity.
#[derive(Debug, Clone, PartialEq)]
pub struct Triplet<T> {
    pub left: Image<T>,
    pub center: Image<T>,
    pub right: Image<T>,
    pub disparity: Image<T>,
    pub depth: Image<T>,
    pub ao: Image<T>,
    pub valid: Mask,
    pub meta: TripletMeta,
}

impl<T: Real> Triplet<T> {
    pub fn width(&self) -> usize {
        self.center.width()
    }

    pub fn height(&self) -> usize {
        self.center.height()
    }

    /// Assembles a triplet from three renders; disparity is `b·f/depth`
    /// on the center's valid pixels and 0 elsewhere.
    pub fn from_renders(left: RenderOutput<T>, center: RenderOutput<T>, right: RenderOutput<T>, baseline: T, focal: T) -> Self {
        let (disparity, valid) = depth_to_disparity(&center.depth, &center.valid, baseline, focal);
        let ao = center.ao.map(|a| a.max(T::zero()).min(T::one()));
        Self {
            left: left.color,
            center: center.color,
            right: right.color,
            disparity,
            depth: center.depth,
            ao,
            valid,
            meta: TripletMeta {
                baseline: baseline.as_f64(),
                focal: focal.as_f64(),
                ..Default::default()
            },
        }
    }

    pub fn cast<U: Real>(&self) -> Triplet<U> {
        Triplet {
            left: self.left.cast(),
            center: self.center.cast(),
            right: self.right.cast(),
            disparity: self.disparity.cast(),
            depth: self.depth.cast(),
            ao: self.ao.cast(),
            valid: self.valid.clone(),
            meta: self.meta.clone(),
        }
    }
}

/// Renders the rig around `pose` with `n` samples per ray.
pub fn render_triplet<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    pose: &Pose<T>,
    intr: &Intrinsics<T>,
    rig: &StereoRig<T>,
    n: usize,
) -> Triplet<T> {
    let (lp, rp) = virtual_stereo_poses(pose, rig);
    Triplet::from_renders(
        render_image(field, intr, &lp, n),
        render_image(field, intr, pose, n),
        render_image(field, intr, &rp, n),
        rig.baseline(),
        intr.fx,
    )
}

/// Exact counterpart of [`render_triplet`] by ray casting; its disparity
/// is ground truth.
pub fn analytic_triplet(scene: &AnalyticScene, pose: &Pose<f64>, intr: &Intrinsics<f64>, rig: &StereoRig<f64>) -> Triplet<f64> {
    let (lp, rp) = virtual_stereo_poses(pose, rig);
    Triplet::from_renders(
        analytic_render(scene, intr, &lp),
        analytic_render(scene, intr, pose),
        analytic_render(scene, intr, &rp),
        rig.baseline(),
        intr.fx,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nsloss::{warp_horizontal, Side};
    use crate::scenegen::{make_fixture_at, visibility_mask, FixtureName, FRONTAL_VIEW, PLANE_DEPTH};

    #[test]
    fn shapes_and_ranges() {
        let fx = make_fixture_at(FixtureName::Occluder, 1, 24);
        let rig = StereoRig::new(0.5).unwrap();
        let t = render_triplet(&fx.scene, fx.frontal_pose(), &fx.intrinsics, &rig, 64);
        for img in [&t.left, &t.center, &t.right] {
            assert_eq!((img.width(), img.height(), img.channels()), (24, 24, 3));
        }
        for m in [&t.disparity, &t.depth, &t.ao] {
            assert_eq!((m.width(), m.height(), m.channels()), (24, 24, 1));
        }
        assert!(t.ao.as_slice().iter().all(|a| (0.0..=1.0).contains(a)));
        assert!(t.disparity.as_slice().iter().all(|&d| d >= 0.0));
    }

    #[test]
    fn disparity_is_linear_in_baseline() {
        let fx = make_fixture_at(FixtureName::Occluder, 2, 24);
        let a = render_triplet(&fx.scene, fx.frontal_pose(), &fx.intrinsics, &StereoRig::new(0.2).unwrap(), 64);
        let b = render_triplet(&fx.scene, fx.frontal_pose(), &fx.intrinsics, &StereoRig::new(0.4).unwrap(), 64);
        assert_eq!(a.valid, b.valid);
        for (x, y) in a.disparity.as_slice().iter().zip(b.disparity.as_slice()) {
            assert!((2.0 * x - y).abs() <= 1e-4 * y.abs().max(1e-12));
        }
    }

    #[test]
    fn analytic_plane_disparity() {
        let fx = make_fixture_at(FixtureName::Plane, 3, 32);
        let rig = StereoRig::new(0.5).unwrap();
        let t = analytic_triplet(&fx.scene, &fx.poses[FRONTAL_VIEW], &fx.intrinsics, &rig);
        let expect = 0.5 * fx.intrinsics.fx / PLANE_DEPTH;
        assert!(t.valid.count() > 0);
        for (d, &v) in t.disparity.as_slice().iter().zip(t.valid.as_slice()) {
            if v {
                assert!((d - expect).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn plane_warp_reconstructs_center() {
        let fx = make_fixture_at(FixtureName::Plane, 4, 64);
        let pose = fx.frontal_pose();
        let rig = StereoRig::new(0.5).unwrap();
        let t = render_triplet(&fx.scene, pose, &fx.intrinsics, &rig, 128);
        let (_, rp) = virtual_stereo_poses(pose, &rig);
        let vis = visibility_mask(&fx.scene, &fx.intrinsics, pose, &rp);
        let (warped, inb) = warp_horizontal(&t.right, &t.disparity, Side::Right);
        let (mut err, mut n) = (0.0, 0usize);
        for y in 0..64 {
            for x in 0..64 {
                if t.valid.get(x, y) && vis.get(x, y) && inb.get(x, y) && t.ao.at(x, y) > 0.9 {
                    for c in 0..3 {
                        err += (warped.get(x, y, c) - t.center.get(x, y, c)).abs();
                    }
                    n += 3;
                }
            }
        }
        assert!(n > 1000);
        assert!(err / (n as f64) < 0.02, "mae {}", err / n as f64);
    }
}
