//! Quadrature volume rendering of color, expected depth and ambient
//! occlusion.
//!
//! With `α_i = 1 − exp(−σ_i δ_i)` and `T_i = exp(−Σ_{j<i} σ_j δ_j)` each
//! sample gets weight `w_i = T_i α_i`; color, depth and AO are the
//! `w`-weighted sums of `c_i`, `t_i` and `1`.

use rand::Rng;
use rayon::prelude::*;

use crate::field::RadianceField;
use crate::geometry::{pixel_ray, Intrinsics, Pose, Ray};
use crate::image::{Image, Mask};
use crate::num::Real;

/// Rays whose accumulated opacity stays below this are background.
pub const BACKGROUND_EPS: f64 = 1e-3;

/// Sample positions and (after a field query) densities and colors along
/// one ray. `color` is interleaved RGB.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QuadratureSamples<T> {
    pub t: Vec<T>,
    pub delta: Vec<T>,
    pub sigma: Vec<T>,
    pub color: Vec<T>,
}

impl<T: Real> QuadratureSamples<T> {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// `n` evenly spaced bins over `[t_near, t_far]`: midpoints, or one uniform
/// draw per bin when `rng` is given.
pub fn sample_bins<T: Real, R: Rng + ?Sized>(ray: &Ray<T>, n: usize, rng: Option<&mut R>) -> QuadratureSamples<T> {
    let mut s = QuadratureSamples::default();
    fill_bins(ray, n, rng, &mut s);
    s
}

pub(crate) fn fill_bins<T: Real, R: Rng + ?Sized>(ray: &Ray<T>, n: usize, rng: Option<&mut R>, s: &mut QuadratureSamples<T>) {
    assert!(n >= 2, "at least two bins");
    let delta = (ray.t_far - ray.t_near) / T::from_usize_lossy(n);
    s.t.clear();
    s.delta.clear();
    s.delta.resize(n, delta);
    s.sigma.clear();
    s.sigma.resize(n, T::zero());
    s.color.clear();
    s.color.resize(3 * n, T::zero());
    match rng {
        None => {
            let half = T::lit(0.5);
            s.t.extend((0..n).map(|i| ray.t_near + (T::from_usize_lossy(i) + half) * delta));
        }
        Some(rng) => {
            s.t.extend((0..n).map(|i| {
                let u: f64 = rng.gen_range(0.0..1.0);
                ray.t_near + (T::from_usize_lossy(i) + T::lit(u)) * delta
            }));
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Composite<T> {
    pub color: [T; 3],
    /// Raw weighted sum of sample distances (not normalized by `ao`).
    pub depth: T,
    pub ao: T,
    pub transmittance: T,
}

impl<T: Real> Composite<T> {
    pub fn empty() -> Self {
        Self {
            color: [T::zero(); 3],
            depth: T::zero(),
            ao: T::zero(),
            transmittance: T::one(),
        }
    }

    pub fn is_valid(&self) -> bool {
        self.ao >= T::lit(BACKGROUND_EPS)
    }
}

pub fn composite<T: Real>(s: &QuadratureSamples<T>) -> Composite<T> {
    let mut out = Composite::empty();
    let mut optical = T::zero();
    for i in 0..s.len() {
        let tau = s.sigma[i] * s.delta[i];
        let trans = (-optical).exp();
        let w = trans * (T::one() - (-tau).exp());
        for k in 0..3 {
            out.color[k] += w * s.color[3 * i + k];
        }
        out.depth += w * s.t[i];
        out.ao += w;
        optical += tau;
    }
    out.transmittance = (-optical).exp();
    out
}

/// Upstream gradient on a composite's outputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompositeGrad<T> {
    pub color: [T; 3],
    pub depth: T,
    pub ao: T,
}

/// Adjoint of [`composite`]: writes `∂L/∂σ_i` and `∂L/∂c_i`.
///
/// `∂L/∂σ_k = δ_k (T_{k+1} G_k − Σ_{i>k} w_i G_i)` with
/// `G_i = g_c·c_i + g_d t_i + g_ao`.
pub fn composite_backward<T: Real>(s: &QuadratureSamples<T>, g: &CompositeGrad<T>, d_sigma: &mut [T], d_color: &mut [T]) {
    let n = s.len();
    // Forward pass again for T_i and w_i; cheaper than storing them.
    let mut weights = Vec::with_capacity(n);
    let mut trans_next = Vec::with_capacity(n);
    let mut optical = T::zero();
    for i in 0..n {
        let tau = s.sigma[i] * s.delta[i];
        let trans = (-optical).exp();
        optical += tau;
        let next = (-optical).exp();
        weights.push(trans * (T::one() - (-tau).exp()));
        trans_next.push(next);
    }
    let mut suffix = T::zero();
    for k in (0..n).rev() {
        let c = &s.color[3 * k..3 * k + 3];
        let gk = g.color[0] * c[0] + g.color[1] * c[1] + g.color[2] * c[2] + g.depth * s.t[k] + g.ao;
        d_sigma[k] = s.delta[k] * (trans_next[k] * gk - suffix);
        suffix += weights[k] * gk;
        for ch in 0..3 {
            d_color[3 * k + ch] = weights[k] * g.color[ch];
        }
    }
}

/// Clips `ray` to the field's bounds, samples, queries and composites.
pub fn render_ray<T: Real, F: RadianceField<T> + ?Sized>(field: &F, ray: &Ray<T>, n: usize) -> Composite<T> {
    let mut s = QuadratureSamples::default();
    render_ray_with(field, ray, n, &mut s)
}

fn render_ray_with<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    ray: &Ray<T>,
    n: usize,
    s: &mut QuadratureSamples<T>,
) -> Composite<T> {
    let b = field.bounds();
    let Some(clipped) = ray.clip_to_box(b.min, b.max) else {
        return Composite::empty();
    };
    fill_bins::<T, rand::rngs::ThreadRng>(&clipped, n, None, s);
    let points: Vec<_> = s.t.iter().map(|&t| clipped.at(t)).collect();
    field.query_batch(&points, clipped.direction, &mut s.sigma, &mut s.color);
    composite(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderOutput<T> {
    pub color: Image<T>,
    /// Expected camera-frame depth (`z`), zero on invalid pixels.
    pub depth: Image<T>,
    pub ao: Image<T>,
    pub valid: Mask,
}

/// Renders every pixel center with `n` bins per ray. Rows are processed
/// in parallel; output is independent of the thread count.
///
/// Expected ray distance is converted to camera-frame depth by the cosine
/// between ray and optical axis, so that `b·f/depth` is a disparity.
pub fn render_image<T: Real, F: RadianceField<T> + ?Sized>(
    field: &F,
    intr: &Intrinsics<T>,
    pose: &Pose<T>,
    n: usize,
) -> RenderOutput<T> {
    let (w, h) = (intr.width, intr.height);
    let forward = pose.forward_axis();
    let rows: Vec<Vec<(Composite<T>, T)>> = (0..h)
        .into_par_iter()
        .map(|j| {
            let mut s = QuadratureSamples::default();
            (0..w)
                .map(|i| {
                    let ray = pixel_ray(intr, pose, i, j);
                    let c = render_ray_with(field, &ray, n, &mut s);
                    (c, ray.direction.dot(forward))
                })
                .collect()
        })
        .collect();
    let mut color = Image::zeros(w, h, 3);
    let mut depth = Image::zeros(w, h, 1);
    let mut ao = Image::zeros(w, h, 1);
    let mut valid = Mask::new(w, h, false);
    for (j, row) in rows.into_iter().enumerate() {
        for (i, (c, cos)) in row.into_iter().enumerate() {
            for k in 0..3 {
                color.set(i, j, k, c.color[k]);
            }
            ao.set(i, j, 0, c.ao);
            if c.is_valid() {
                valid.set(i, j, true);
                depth.set(i, j, 0, c.depth * cos);
            }
        }
    }
    RenderOutput { color, depth, ao, valid }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::{fd_check, Objective, ParamSet};
    use crate::field::ConstantField;
    use crate::geometry::Vec3;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit_ray() -> Ray<f64> {
        Ray::new(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0), 0.0, 1.0).unwrap()
    }

    #[test]
    fn midpoints_without_jitter() {
        let s = sample_bins::<f64, ChaCha8Rng>(&unit_ray(), 4, None);
        assert_eq!(s.t, vec![0.125, 0.375, 0.625, 0.875]);
        assert_eq!(s.delta, vec![0.25; 4]);
    }

    #[test]
    fn jitter_stays_in_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_bins(&unit_ray(), 16, Some(&mut rng));
        for (i, &t) in s.t.iter().enumerate() {
            assert!(t >= i as f64 / 16.0 && t <= (i + 1) as f64 / 16.0);
        }
        assert!(s.t.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn deltas_sum_to_interval() {
        let s = sample_bins::<f64, ChaCha8Rng>(&unit_ray(), 256, None);
        assert_eq!(s.delta.iter().sum::<f64>(), 1.0);
    }

    #[test]
    fn empty_space_is_invalid() {
        let mut s = sample_bins::<f64, ChaCha8Rng>(&unit_ray(), 8, None);
        s.color.iter_mut().for_each(|c| *c = 1.0);
        let c = composite(&s);
        assert_eq!(c.color, [0.0; 3]);
        assert_eq!(c.ao, 0.0);
        assert!(!c.is_valid());
    }

    #[test]
    fn homogeneous_medium_matches_closed_form() {
        let mut s = sample_bins::<f64, ChaCha8Rng>(&unit_ray(), 256, None);
        s.sigma.iter_mut().for_each(|v| *v = 1.0);
        for i in 0..256 {
            s.color[3 * i] = 1.0;
        }
        let c = composite(&s);
        let exact = 1.0 - (-1.0f64).exp();
        assert_abs_diff_eq!(c.color[0], exact, epsilon = 1e-3);
        assert_abs_diff_eq!(c.ao, exact, epsilon = 1e-3);
        assert_eq!(c.color[1], 0.0);
    }

    #[test]
    fn opaque_bin_limit() {
        let ray = Ray::new(Vec3::zero(), Vec3::new(0.0, 0.0, 1.0), 0.0, 4.0).unwrap();
        let mut s = sample_bins::<f64, ChaCha8Rng>(&ray, 8, None);
        // Bin 4 is centered at t = 2.25; give it σδ = 20.
        s.sigma[4] = 20.0 / s.delta[4];
        s.color[12..15].copy_from_slice(&[0.2, 0.4, 0.6]);
        let c = composite(&s);
        assert_abs_diff_eq!(c.ao, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(c.depth, 2.25, epsilon = 1e-7);
        assert_abs_diff_eq!(c.color[2], 0.6, epsilon = 1e-8);
    }

    #[test]
    fn telescoping_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let mut s = sample_bins::<f64, ChaCha8Rng>(&unit_ray(), 64, None);
            s.sigma.iter_mut().for_each(|v| *v = rng.gen_range(0.0..30.0));
            let c = composite(&s);
            assert_abs_diff_eq!(c.ao + c.transmittance, 1.0, epsilon = 1e-12);
        }
    }

    struct CompositeProbe {
        base: QuadratureSamples<f64>,
        g: CompositeGrad<f64>,
    }

    impl CompositeProbe {
        fn samples(&self, p: &ParamSet<f64>) -> QuadratureSamples<f64> {
            let mut s = self.base.clone();
            s.sigma.copy_from_slice(p.by_name("sigma").unwrap());
            s.color.copy_from_slice(p.by_name("color").unwrap());
            s
        }
    }

    impl Objective<f64> for CompositeProbe {
        fn value(&self, p: &ParamSet<f64>) -> f64 {
            let c = composite(&self.samples(p));
            (0..3).map(|k| self.g.color[k] * c.color[k]).sum::<f64>() + self.g.depth * c.depth + self.g.ao * c.ao
        }

        fn value_and_gradient(&self, p: &ParamSet<f64>) -> (f64, ParamSet<f64>) {
            let s = self.samples(p);
            let mut grads = p.zeros_like();
            let (mut ds, mut dc) = (vec![0.0; s.len()], vec![0.0; 3 * s.len()]);
            composite_backward(&s, &self.g, &mut ds, &mut dc);
            grads.get_mut(grads.id("sigma").unwrap()).copy_from_slice(&ds);
            grads.get_mut(grads.id("color").unwrap()).copy_from_slice(&dc);
            (self.value(p), grads)
        }
    }

    #[test]
    fn composite_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 24;
        let base = sample_bins::<f64, _>(&unit_ray(), n, Some(&mut rng));
        let mut p = ParamSet::new();
        p.add("sigma", vec![n], (0..n).map(|_| rng.gen_range(0.0..8.0)).collect());
        p.add("color", vec![n, 3], (0..3 * n).map(|_| rng.gen_range(0.0..1.0)).collect());
        let probe = CompositeProbe {
            base,
            g: CompositeGrad {
                color: [0.7, -1.3, 0.4],
                depth: 0.9,
                ao: -0.5,
            },
        };
        let r = fd_check(&probe, &p, 100, 1e-6, 1);
        assert!(r.max_relative_error < 1e-4, "{}", r.max_relative_error);
    }

    #[test]
    fn raising_density_never_raises_later_transmittance() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut s = sample_bins::<f64, ChaCha8Rng>(&unit_ray(), 16, None);
        s.sigma.iter_mut().for_each(|v| *v = rng.gen_range(0.0..5.0));
        let before = composite(&s).transmittance;
        s.sigma[5] += 3.0;
        assert!(composite(&s).transmittance <= before);
    }

    #[test]
    fn zero_density_field_renders_all_invalid() {
        let field = ConstantField::new(0.0f64, [1.0, 1.0, 1.0]);
        let intr = Intrinsics::centered(8.0, 8, 8).unwrap();
        let pose = Pose::look_at(Vec3::new(0.5, 0.5, -1.0), Vec3::splat(0.5), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let out = render_image(&field, &intr, &pose, 32);
        assert_eq!(out.valid.count(), 0);
        assert!(out.ao.as_slice().iter().all(|&a| a == 0.0));
    }

    #[test]
    fn render_is_deterministic() {
        let field = ConstantField::new(2.0f32, [0.3, 0.6, 0.9]);
        let intr = Intrinsics::centered(12.0f32, 10, 10).unwrap();
        let pose = Pose::look_at(Vec3::new(0.5, 0.5, -1.0), Vec3::splat(0.5), Vec3::new(0.0, 1.0, 0.0)).unwrap();
        let a = render_image(&field, &intr, &pose, 64);
        let b = render_image(&field, &intr, &pose, 64);
        assert_eq!(a, b);
        assert!(a.valid.count() > 0);
    }
}
