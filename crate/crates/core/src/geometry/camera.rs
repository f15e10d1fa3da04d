//! Pinhole cameras, camera-to-world poses, rays and the virtual stereo rig.
//!
//! Conventions: camera axes are +x right, +y down, +z forward. A [`Pose`]
//! maps camera coordinates to world coordinates, `p_w = R p_c + center`.
//! Pixel `(i, j)` covers `[i, i+1) x [j, j+1)` and its center sits at
//! `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};

use super::linalg::{Mat3, Vec3};
use super::GeometryError;
use crate::image::{Image, Mask};
use crate::num::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Intrinsics<T> {
    pub fx: T,
    pub fy: T,
    pub cx: T,
    pub cy: T,
    pub width: usize,
    pub height: usize,
}

impl<T: Real> Intrinsics<T> {
    pub fn new(fx: T, fy: T, cx: T, cy: T, width: usize, height: usize) -> Result<Self, GeometryError> {
        let intr = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        intr.validate()?;
        Ok(intr)
    }

    /// Square-pixel camera with the principal point at the image center.
    pub fn centered(focal: T, width: usize, height: usize) -> Result<Self, GeometryError> {
        let half = T::lit(0.5);
        Self::new(
            focal,
            focal,
            T::from_usize_lossy(width) * half,
            T::from_usize_lossy(height) * half,
            width,
            height,
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        let ok = self.fx > T::zero()
            && self.fy > T::zero()
            && self.width > 0
            && self.height > 0
            && self.cx >= T::zero()
            && self.cx < T::from_usize_lossy(self.width)
            && self.cy >= T::zero()
            && self.cy < T::from_usize_lossy(self.height);
        if ok {
            Ok(())
        } else {
            Err(GeometryError::InvalidIntrinsics(format!(
                "fx={} fy={} cx={} cy={} size={}x{}",
                self.fx, self.fy, self.cx, self.cy, self.width, self.height
            )))
        }
    }

    /// Same field of view at a different raster size.
    pub fn rescaled(&self, width: usize, height: usize) -> Result<Self, GeometryError> {
        let sx = T::from_usize_lossy(width) / T::from_usize_lossy(self.width);
        let sy = T::from_usize_lossy(height) / T::from_usize_lossy(self.height);
        Self::new(self.fx * sx, self.fy * sy, self.cx * sx, self.cy * sy, width, height)
    }

    pub fn cast<U: Real>(&self) -> Intrinsics<U> {
        Intrinsics {
            fx: U::lit(self.fx.as_f64()),
            fy: U::lit(self.fy.as_f64()),
            cx: U::lit(self.cx.as_f64()),
            cy: U::lit(self.cy.as_f64()),
            width: self.width,
            height: self.height,
        }
    }
}

/// Camera-to-world rigid transform.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose<T> {
    pub rotation: Mat3<T>,
    pub center: Vec3<T>,
}

impl<T: Real> Pose<T> {
    pub fn new(rotation: Mat3<T>, center: Vec3<T>) -> Result<Self, GeometryError> {
        let tol = T::structural_tol();
        let orth = rotation.orthonormality_error();
        let det = rotation.determinant();
        if !(orth <= tol) || !((det - T::one()).abs() <= tol) {
            return Err(GeometryError::InvalidRotation {
                orthonormality: orth.as_f64(),
                determinant: det.as_f64(),
            });
        }
        if !center.is_finite() {
            return Err(GeometryError::NonFinite("pose center"));
        }
        Ok(Self { rotation, center })
    }

    pub fn identity() -> Self {
        Self {
            rotation: Mat3::identity(),
            center: Vec3::zero(),
        }
    }

    /// Camera at `eye` looking at `target`; `down` is the world direction
    /// that should appear as +y in the image.
    pub fn look_at(eye: Vec3<T>, target: Vec3<T>, down: Vec3<T>) -> Result<Self, GeometryError> {
        let forward = (target - eye).normalized();
        let right = down.cross(forward);
        if right.norm() <= T::structural_tol() {
            return Err(GeometryError::Degenerate("look_at: down parallel to view direction"));
        }
        let right = right.normalized();
        let cam_down = forward.cross(right);
        Self::new(Mat3::from_columns(right, cam_down, forward), eye)
    }

    /// Camera x-axis expressed in world coordinates.
    #[inline]
    pub fn right_axis(&self) -> Vec3<T> {
        self.rotation.column(0)
    }

    #[inline]
    pub fn forward_axis(&self) -> Vec3<T> {
        self.rotation.column(2)
    }

    #[inline]
    pub fn world_to_camera(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.transpose().mul_vec(p - self.center)
    }

    #[inline]
    pub fn camera_to_world(&self, p: Vec3<T>) -> Vec3<T> {
        self.rotation.mul_vec(p) + self.center
    }

    pub fn cast<U: Real>(&self) -> Pose<U> {
        Pose {
            rotation: self.rotation.cast(),
            center: self.center.cast(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray<T> {
    pub origin: Vec3<T>,
    pub direction: Vec3<T>,
    pub t_near: T,
    pub t_far: T,
}

impl<T: Real> Ray<T> {
    pub fn new(origin: Vec3<T>, direction: Vec3<T>, t_near: T, t_far: T) -> Result<Self, GeometryError> {
        if ((direction.norm() - T::one()).abs() > T::structural_tol())
            || !(t_near >= T::zero())
            || !(t_near < t_far)
        {
            return Err(GeometryError::InvalidRay);
        }
        Ok(Self {
            origin,
            direction,
            t_near,
            t_far,
        })
    }

    #[inline]
    pub fn at(&self, t: T) -> Vec3<T> {
        self.origin + self.direction * t
    }

    /// Restricts `[t_near, t_far]` to the part inside an axis-aligned box.
    /// Returns `None` when the ray misses the box.
    pub fn clip_to_box(&self, min: Vec3<T>, max: Vec3<T>) -> Option<Self> {
        let mut t0 = self.t_near;
        let mut t1 = self.t_far;
        for axis in 0..3 {
            let o = self.origin.get(axis);
            let d = self.direction.get(axis);
            let (lo, hi) = (min.get(axis), max.get(axis));
            if d.abs() < T::epsilon() {
                if o < lo || o > hi {
                    return None;
                }
                continue;
            }
            let inv = T::one() / d;
            let (mut a, mut b) = ((lo - o) * inv, (hi - o) * inv);
            if a > b {
                std::mem::swap(&mut a, &mut b);
            }
            t0 = t0.max(a);
            t1 = t1.min(b);
            if t0 >= t1 {
                return None;
            }
        }
        Some(Self {
            t_near: t0,
            t_far: t1,
            ..*self
        })
    }
}

/// Camera ray through continuous pixel coordinate `px = (u, v)`.
///
/// The ray starts at the camera center with `t_near = 0` and an unbounded
/// far plane; renderers clip it to the scene box.
pub fn make_ray<T: Real>(intr: &Intrinsics<T>, pose: &Pose<T>, px: (T, T)) -> Result<Ray<T>, GeometryError> {
    let (u, v) = px;
    let w = T::from_usize_lossy(intr.width);
    let h = T::from_usize_lossy(intr.height);
    if !(u >= T::zero() && u < w && v >= T::zero() && v < h) {
        return Err(GeometryError::PixelOutOfBounds {
            u: u.as_f64(),
            v: v.as_f64(),
            width: intr.width,
            height: intr.height,
        });
    }
    let cam = Vec3::new((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, T::one());
    let direction = pose.rotation.mul_vec(cam).normalized();
    Ok(Ray {
        origin: pose.center,
        direction,
        t_near: T::zero(),
        t_far: T::infinity(),
    })
}

/// Ray through the center of pixel `(i, j)`.
pub fn pixel_ray<T: Real>(intr: &Intrinsics<T>, pose: &Pose<T>, i: usize, j: usize) -> Ray<T> {
    let half = T::lit(0.5);
    make_ray(
        intr,
        pose,
        (T::from_usize_lossy(i) + half, T::from_usize_lossy(j) + half),
    )
    .expect("pixel index inside the raster")
}

/// Pinhole projection of a world point. Returns `((u, v), depth)` where
/// depth is the camera-frame z.
pub fn project<T: Real>(point: Vec3<T>, intr: &Intrinsics<T>, pose: &Pose<T>) -> Result<((T, T), T), GeometryError> {
    let pc = pose.world_to_camera(point);
    if !(pc.z > T::zero()) {
        return Err(GeometryError::BehindCamera { depth: pc.z.as_f64() });
    }
    let u = intr.fx * pc.x / pc.z + intr.cx;
    let v = intr.fy * pc.y / pc.z + intr.cy;
    Ok(((u, v), pc.z))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StereoRig<T> {
    baseline: T,
}

impl<T: Real> StereoRig<T> {
    pub fn new(baseline: T) -> Result<Self, GeometryError> {
        if baseline > T::zero() && baseline.is_finite() {
            Ok(Self { baseline })
        } else {
            Err(GeometryError::InvalidBaseline(baseline.as_f64()))
        }
    }

    #[inline]
    pub fn baseline(&self) -> T {
        self.baseline
    }
}

/// Left and right poses of a rectified horizontal triplet centered on
/// `center`. All three share the rotation; the side cameras are displaced
/// by `∓b` along the center camera's x-axis.
pub fn virtual_stereo_poses<T: Real>(center: &Pose<T>, rig: &StereoRig<T>) -> (Pose<T>, Pose<T>) {
    let offset = center.right_axis() * rig.baseline();
    let left = Pose {
        rotation: center.rotation,
        center: center.center - offset,
    };
    let right = Pose {
        rotation: center.rotation,
        center: center.center + offset,
    };
    (left, right)
}

/// Elementwise `d = b·f / z`. Pixels that are flagged invalid or have
/// non-positive depth come back as 0 and invalid.
pub fn depth_to_disparity<T: Real>(depth: &Image<T>, valid: &Mask, baseline: T, focal: T) -> (Image<T>, Mask) {
    assert_eq!(depth.channels(), 1);
    assert_eq!((depth.width(), depth.height()), (valid.width(), valid.height()));
    let mut disp = Image::zeros(depth.width(), depth.height(), 1);
    let mut out_valid = Mask::new(depth.width(), depth.height(), false);
    for (i, (&z, &ok)) in depth.as_slice().iter().zip(valid.as_slice()).enumerate() {
        if ok && z > T::zero() {
            disp.as_mut_slice()[i] = disparity_from_depth(z, baseline, focal);
            out_valid.as_mut_slice()[i] = true;
        }
    }
    (disp, out_valid)
}

/// Scalar `b·f / z`; the single arithmetic path every exporter uses.
#[inline]
pub fn disparity_from_depth<T: Real>(z: T, baseline: T, focal: T) -> T {
    baseline * focal / z
}
