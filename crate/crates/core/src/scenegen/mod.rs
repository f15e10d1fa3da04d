//! Analytic scenes with exact ground truth.
//!
//! A scene is a list of textured primitives inside the unit cube. Opaque
//! primitives stop a ray at their surface; translucent ones absorb with a
//! constant density. The same scene doubles as a [`RadianceField`] (hard
//! slabs of density `slab_density`) so the quadrature renderer can be
//! judged against [`analytic_render`].

mod noise;

pub use noise::ValueNoise;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::field::{FieldSample, RadianceField};
use crate::geometry::{pixel_ray, Aabb, Intrinsics, Pose, Ray, Vec3};
use crate::image::{Image, Mask};
use crate::num::Real;
use crate::render::{RenderOutput, BACKGROUND_EPS};

#[derive(Debug, Error, PartialEq)]
pub enum SceneError {
    #[error("unknown fixture {0:?}; expected plane, occluder or textured_cube")]
    UnknownFixture(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Shape {
    Box { min: [f64; 3], max: [f64; 3] },
    Sphere { center: [f64; 3], radius: f64 },
}

impl Shape {
    /// Entry and exit distances of the ray through the shape, clipped to
    /// `t >= 0`.
    pub fn intersect(&self, origin: Vec3<f64>, dir: Vec3<f64>) -> Option<(f64, f64)> {
        match *self {
            Shape::Box { min, max } => {
                let ray = Ray {
                    origin,
                    direction: dir,
                    t_near: 0.0,
                    t_far: f64::INFINITY,
                };
                ray.clip_to_box(Vec3::from_array(min), Vec3::from_array(max))
                    .map(|r| (r.t_near, r.t_far))
            }
            Shape::Sphere { center, radius } => {
                let oc = origin - Vec3::from_array(center);
                let b = oc.dot(dir);
                let c = oc.dot(oc) - radius * radius;
                let disc = b * b - c;
                if disc <= 0.0 {
                    return None;
                }
                let s = disc.sqrt();
                let (t0, t1) = (-b - s, -b + s);
                (t1 > 0.0).then_some((t0.max(0.0), t1))
            }
        }
    }

    pub fn contains(&self, p: Vec3<f64>) -> bool {
        match *self {
            Shape::Box { min, max } => Aabb::new(Vec3::from_array(min), Vec3::from_array(max)).contains(p),
            Shape::Sphere { center, radius } => (p - Vec3::from_array(center)).norm() <= radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Opacity {
    Opaque,
    /// Constant density per world unit.
    Translucent(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Texture {
    Constant([f64; 3]),
    Noise(ValueNoise),
}

impl Texture {
    pub fn rgb(&self, p: Vec3<f64>) -> [f64; 3] {
        match self {
            Texture::Constant(c) => *c,
            Texture::Noise(n) => n.rgb(p),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Primitive {
    pub shape: Shape,
    pub opacity: Opacity,
    pub texture: Texture,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticScene {
    pub primitives: Vec<Primitive>,
    /// Density of opaque primitives when the scene is used as a field.
    pub slab_density: f64,
}

/// One ray's exact answer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyticHit {
    pub color: [f64; 3],
    pub ao: f64,
    /// Distance to the first surface entered, if any.
    pub first_hit: Option<f64>,
}

impl AnalyticScene {
    /// Composites primitives front to back. Intervals of distinct
    /// primitives are assumed disjoint along any ray (true for every
    /// bundled fixture).
    pub fn trace(&self, origin: Vec3<f64>, dir: Vec3<f64>) -> AnalyticHit {
        let mut hits: Vec<(f64, f64, &Primitive)> = self
            .primitives
            .iter()
            .filter_map(|p| p.shape.intersect(origin, dir).map(|(a, b)| (a, b, p)))
            .collect();
        hits.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut color = [0.0; 3];
        let mut trans = 1.0;
        for &(t0, t1, p) in &hits {
            let tex = p.texture.rgb(origin + dir * t0);
            let absorbed = match p.opacity {
                Opacity::Opaque => 1.0,
                Opacity::Translucent(sigma) => 1.0 - (-sigma * (t1 - t0)).exp(),
            };
            for c in 0..3 {
                color[c] += trans * absorbed * tex[c];
            }
            trans *= 1.0 - absorbed;
            if trans == 0.0 {
                break;
            }
        }
        AnalyticHit {
            color,
            ao: 1.0 - trans,
            first_hit: hits.first().map(|h| h.0),
        }
    }

    /// Whether the segment from `eye` to `point` is unobstructed by an
    /// opaque primitive (translucent ones do not occlude).
    pub fn visible(&self, eye: Vec3<f64>, point: Vec3<f64>) -> bool {
        let to = point - eye;
        let dist = to.norm();
        let dir = to * (1.0 / dist);
        let slack = 1e-7 * dist.max(1.0);
        !self.primitives.iter().any(|p| {
            matches!(p.opacity, Opacity::Opaque)
                && p.shape.intersect(eye, dir).is_some_and(|(t0, _)| t0 < dist - slack)
        })
    }
}

impl<T: Real> RadianceField<T> for AnalyticScene {
    fn bounds(&self) -> Aabb<T> {
        Aabb::unit()
    }

    fn query(&self, x: Vec3<T>, _dir: Vec3<T>) -> FieldSample<T> {
        let p = x.cast::<f64>();
        let mut sigma = 0.0;
        let mut color = None;
        for prim in &self.primitives {
            if prim.shape.contains(p) {
                sigma += match prim.opacity {
                    Opacity::Opaque => self.slab_density,
                    Opacity::Translucent(s) => s,
                };
                color.get_or_insert_with(|| prim.texture.rgb(p));
            }
        }
        let c = color.unwrap_or([0.0; 3]);
        FieldSample {
            sigma: T::lit(sigma),
            color: [T::lit(c[0]), T::lit(c[1]), T::lit(c[2])],
        }
    }
}

/// Exact render by ray casting. `depth` is the camera-frame z of the first
/// surface entered; pixels with no hit or `ao < ε_bg` are invalid.
pub fn analytic_render(scene: &AnalyticScene, intr: &Intrinsics<f64>, pose: &Pose<f64>) -> RenderOutput<f64> {
    let (w, h) = (intr.width, intr.height);
    let forward = pose.forward_axis();
    let mut color = Image::zeros(w, h, 3);
    let mut depth = Image::zeros(w, h, 1);
    let mut ao = Image::zeros(w, h, 1);
    let mut valid = Mask::new(w, h, false);
    for j in 0..h {
        for i in 0..w {
            let ray = pixel_ray(intr, pose, i, j);
            let hit = scene.trace(ray.origin, ray.direction);
            for c in 0..3 {
                color.set(i, j, c, hit.color[c]);
            }
            ao.set(i, j, 0, hit.ao);
            if let Some(t) = hit.first_hit {
                if hit.ao >= BACKGROUND_EPS {
                    depth.set(i, j, 0, t * ray.direction.dot(forward));
                    valid.set(i, j, true);
                }
            }
        }
    }
    RenderOutput { color, depth, ao, valid }
}

/// Pixels of the `pose` view whose first surface point is also visible
/// from `other` (closed-form counterpart of the disparity-based occlusion
/// test).
pub fn visibility_mask(scene: &AnalyticScene, intr: &Intrinsics<f64>, pose: &Pose<f64>, other: &Pose<f64>) -> Mask {
    Mask::from_fn(intr.width, intr.height, |i, j| {
        let ray = pixel_ray(intr, pose, i, j);
        match scene.trace(ray.origin, ray.direction).first_hit {
            Some(t) => {
                let p = ray.at(t);
                let in_frame = crate::geometry::project(p, intr, other)
                    .map(|((u, v), _)| u >= 0.0 && v >= 0.0 && u < intr.width as f64 && v < intr.height as f64)
                    .unwrap_or(false);
                in_frame && scene.visible(other.center, p)
            }
            None => false,
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixtureName {
    Plane,
    Occluder,
    TexturedCube,
}

impl FromStr for FixtureName {
    type Err = SceneError;

    fn from_str(s: &str) -> Result<Self, SceneError> {
        match s {
            "plane" => Ok(Self::Plane),
            "occluder" => Ok(Self::Occluder),
            "textured_cube" => Ok(Self::TexturedCube),
            other => Err(SceneError::UnknownFixture(other.to_string())),
        }
    }
}

impl fmt::Display for FixtureName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Plane => "plane",
            Self::Occluder => "occluder",
            Self::TexturedCube => "textured_cube",
        })
    }
}

pub const FIXTURE_VIEWS: usize = 20;
pub const FIXTURE_RESOLUTION: usize = 64;
pub const FIXTURE_FOCAL: f64 = 64.0;
/// Index of the view looking straight down +z at the scene center.
pub const FRONTAL_VIEW: usize = 10;

/// A scene, its cameras and the exact renders of every view.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: FixtureName,
    pub scene: AnalyticScene,
    pub intrinsics: Intrinsics<f64>,
    pub poses: Vec<Pose<f64>>,
    pub views: Vec<RenderOutput<f64>>,
}

impl Fixture {
    pub fn frontal_pose(&self) -> &Pose<f64> {
        &self.poses[FRONTAL_VIEW]
    }

    pub fn images(&self) -> Vec<Image<f64>> {
        self.views.iter().map(|v| v.color.clone()).collect()
    }
}

/// Cameras on a horizontal arc around `target`, 3° apart in azimuth with a
/// ±2° elevation wobble; view [`FRONTAL_VIEW`] sits on the `-z` axis.
pub fn arc_poses(target: Vec3<f64>, radius: f64, count: usize) -> Vec<Pose<f64>> {
    (0..count)
        .map(|k| {
            let offset = k as f64 - FRONTAL_VIEW as f64;
            let az = (3.0 * offset).to_radians();
            let el = if k == FRONTAL_VIEW {
                0.0
            } else if k % 2 == 0 {
                2f64.to_radians()
            } else {
                -2f64.to_radians()
            };
            let eye = target + Vec3::new(az.sin() * el.cos(), -el.sin(), -az.cos() * el.cos()) * radius;
            Pose::look_at(eye, target, Vec3::new(0.0, 1.0, 0.0)).expect("arc poses are well defined")
        })
        .collect()
}

fn slab(min: [f64; 3], max: [f64; 3], opacity: Opacity, texture: Texture) -> Primitive {
    Primitive {
        shape: Shape::Box { min, max },
        opacity,
        texture,
    }
}

/// Depth of the plane and background surfaces from the frontal camera.
pub const PLANE_DEPTH: f64 = 2.0;
/// Front face of the occluder box seen from the frontal camera.
pub const OCCLUDER_DEPTH: f64 = 1.55;

fn build_scene(name: FixtureName, seed: u64) -> (AnalyticScene, f64) {
    let noise = |salt: u64, freq: f64| Texture::Noise(ValueNoise::new(seed.wrapping_mul(0x9E37_79B9).wrapping_add(salt), freq));
    let slab_density = 1500.0;
    match name {
        FixtureName::Plane => (
            AnalyticScene {
                primitives: vec![slab([0.0, 0.0, 0.5], [1.0, 1.0, 0.56], Opacity::Opaque, noise(1, 8.0))],
                slab_density,
            },
            PLANE_DEPTH,
        ),
        FixtureName::Occluder => (
            AnalyticScene {
                primitives: vec![
                    slab([0.2, 0.0, 0.5], [1.0, 1.0, 0.56], Opacity::Opaque, noise(1, 8.0)),
                    // Faint strip: nothing behind it, accumulated opacity ≈ 0.3.
                    slab([0.0, 0.0, 0.5], [0.2, 1.0, 0.56], Opacity::Translucent(6.0), noise(3, 8.0)),
                    slab([0.35, 0.15, 0.05], [0.6, 0.85, 0.2], Opacity::Opaque, noise(2, 10.0)),
                ],
                slab_density,
            },
            PLANE_DEPTH,
        ),
        FixtureName::TexturedCube => (
            AnalyticScene {
                primitives: vec![slab([0.2, 0.2, 0.2], [0.8, 0.8, 0.8], Opacity::Opaque, noise(1, 6.0))],
                slab_density,
            },
            1.6,
        ),
    }
}

/// Deterministic scene plus [`FIXTURE_VIEWS`] posed exact renders at
/// `resolution²` pixels (focal scaled with resolution).
pub fn make_fixture_at(name: FixtureName, seed: u64, resolution: usize) -> Fixture {
    let (scene, radius) = build_scene(name, seed);
    let focal = FIXTURE_FOCAL * resolution as f64 / FIXTURE_RESOLUTION as f64;
    let intrinsics = Intrinsics::centered(focal, resolution, resolution).expect("positive focal");
    let poses = arc_poses(Vec3::splat(0.5), radius, FIXTURE_VIEWS);
    let views = poses.iter().map(|p| analytic_render(&scene, &intrinsics, p)).collect();
    Fixture {
        name,
        scene,
        intrinsics,
        poses,
        views,
    }
}

pub fn make_fixture(name: &str, seed: u64) -> Result<Fixture, SceneError> {
    Ok(make_fixture_at(name.parse()?, seed, FIXTURE_RESOLUTION))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{depth_to_disparity, virtual_stereo_poses, StereoRig};
    use approx::assert_abs_diff_eq;

    #[test]
    fn plane_depth_is_constant() {
        let fx = make_fixture("plane", 1).unwrap();
        let v = &fx.views[FRONTAL_VIEW];
        assert!(v.valid.count() > 900);
        for (z, &ok) in v.depth.as_slice().iter().zip(v.valid.as_slice()) {
            if ok {
                assert_abs_diff_eq!(*z, 2.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn plane_disparity_is_sixteen() {
        let fx = make_fixture("plane", 1).unwrap();
        let v = &fx.views[FRONTAL_VIEW];
        let (d, valid) = depth_to_disparity(&v.depth, &v.valid, 0.5, fx.intrinsics.fx);
        for (x, &ok) in d.as_slice().iter().zip(valid.as_slice()) {
            if ok {
                assert_abs_diff_eq!(*x, 16.0, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn same_seed_same_images() {
        let a = make_fixture("textured_cube", 9).unwrap();
        let b = make_fixture("textured_cube", 9).unwrap();
        for (x, y) in a.views.iter().zip(&b.views) {
            assert_eq!(x.color.as_slice(), y.color.as_slice());
        }
        let c = make_fixture("textured_cube", 10).unwrap();
        assert_ne!(a.views[0].color.as_slice(), c.views[0].color.as_slice());
    }

    #[test]
    fn unknown_fixture_is_error() {
        assert_eq!(
            make_fixture("teapot", 0).unwrap_err(),
            SceneError::UnknownFixture("teapot".into())
        );
    }

    #[test]
    fn occluder_has_depth_discontinuity_and_faint_strip() {
        let fx = make_fixture("occluder", 2).unwrap();
        let v = &fx.views[FRONTAL_VIEW];
        let zs: Vec<f64> = (0..64).filter(|&i| v.valid.get(i, 32)).map(|i| v.depth.at(i, 32)).collect();
        assert!(zs.iter().any(|&z| (z - OCCLUDER_DEPTH).abs() < 1e-9));
        assert!(zs.iter().any(|&z| (z - PLANE_DEPTH).abs() < 1e-9));
        let faint = (0..64).filter(|&i| v.valid.get(i, 32) && v.ao.at(i, 32) < 0.5).count();
        assert!(faint >= 4, "{faint}");
    }

    #[test]
    fn occluder_hides_background_from_right_camera() {
        let fx = make_fixture("occluder", 2).unwrap();
        let center = fx.frontal_pose();
        let (_, right) = virtual_stereo_poses(center, &StereoRig::new(0.5).unwrap());
        let vis = visibility_mask(&fx.scene, &fx.intrinsics, center, &right);
        let valid = &fx.views[FRONTAL_VIEW].valid;
        let occluded = valid.and(&vis.not()).count();
        assert!(occluded as f64 >= 0.05 * valid.count() as f64);
    }

    #[test]
    fn sphere_intersection() {
        let s = Shape::Sphere {
            center: [0.0, 0.0, 5.0],
            radius: 1.0,
        };
        let (t0, t1) = s.intersect(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0)).unwrap();
        assert_abs_diff_eq!(t0, 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(t1, 6.0, epsilon = 1e-12);
        assert!(s.intersect(Vec3::zero(), Vec3::new(0.0, 1.0, 0.0)).is_none());
    }
}
