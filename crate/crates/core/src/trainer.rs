//! Per-scene radiance-field fitting by minimizing the rendering loss
//! `mean_r ‖Ĉ(r) − C(r)‖²` over random ray batches.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{adam_step, AdamConfig, Objective, OptState, ParamSet};
use crate::field::{FieldConfig, FieldError, FieldWorkspace, NeuralField, RadianceField};
use crate::geometry::{pixel_ray, Intrinsics, Pose, Ray};
use crate::image::Image;
use crate::num::Real;
use crate::render::{composite, composite_backward, fill_bins, render_image, CompositeGrad, QuadratureSamples};
use crate::scenegen::Fixture;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid dataset: {0}")]
    Dataset(String),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("loss became non-finite at step {step} (last finite loss {last_loss:?})")]
    NonFinite { step: usize, last_loss: Option<f64>, trace: Vec<TraceRow> },
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error("image shapes differ")]
    ShapeMismatch,
}

/// Posed images of one static scene.
#[derive(Debug, Clone)]
pub struct SceneDataset<T> {
    images: Vec<Image<T>>,
    intrinsics: Vec<Intrinsics<T>>,
    poses: Vec<Pose<T>>,
}

impl<T: Real> SceneDataset<T> {
    pub fn new(images: Vec<Image<T>>, intrinsics: Vec<Intrinsics<T>>, poses: Vec<Pose<T>>) -> Result<Self, TrainError> {
        if images.len() < 2 {
            return Err(TrainError::Dataset("need at least two images".into()));
        }
        if images.len() != intrinsics.len() || images.len() != poses.len() {
            return Err(TrainError::Dataset("images, intrinsics and poses differ in count".into()));
        }
        let first = &images[0];
        for (img, k) in images.iter().zip(&intrinsics) {
            if !img.same_shape(first) || img.channels() != 3 {
                return Err(TrainError::Dataset("all images must be RGB of equal size".into()));
            }
            if (k.width, k.height) != (img.width(), img.height()) {
                return Err(TrainError::Dataset("intrinsics do not match image size".into()));
            }
        }
        if poses.iter().any(|p| !p.center.is_finite()) {
            return Err(TrainError::Dataset("non-finite pose".into()));
        }
        Ok(Self {
            images,
            intrinsics,
            poses,
        })
    }

    /// All fixture views except `holdout`.
    pub fn from_fixture(fixture: &Fixture, holdout: Option<usize>) -> Result<Self, TrainError> {
        let keep: Vec<usize> = (0..fixture.poses.len()).filter(|&i| Some(i) != holdout).collect();
        Self::new(
            keep.iter().map(|&i| fixture.views[i].color.cast()).collect(),
            keep.iter().map(|_| fixture.intrinsics.cast()).collect(),
            keep.iter().map(|&i| fixture.poses[i].cast()).collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn images(&self) -> &[Image<T>] {
        &self.images
    }

    pub fn intrinsics(&self) -> &[Intrinsics<T>] {
        &self.intrinsics
    }

    pub fn poses(&self) -> &[Pose<T>] {
        &self.poses
    }

    fn pixels_per_image(&self) -> usize {
        self.images[0].pixel_count()
    }

    /// Ray and target color of flat pixel index `k` over all images.
    pub fn ray_sample(&self, k: usize) -> (Ray<T>, [T; 3]) {
        let per = self.pixels_per_image();
        let (m, p) = (k / per, k % per);
        let img = &self.images[m];
        let (i, j) = (p % img.width(), p / img.width());
        let px = img.pixel(i, j);
        (pixel_ray(&self.intrinsics[m], &self.poses[m], i, j), [px[0], px[1], px[2]])
    }
}

/// A view excluded from training, rendered for held-out PSNR.
#[derive(Debug, Clone)]
pub struct HoldoutView<T> {
    pub image: Image<T>,
    pub intrinsics: Intrinsics<T>,
    pub pose: Pose<T>,
}

impl HoldoutView<f32> {
    pub fn from_fixture(fixture: &Fixture, index: usize) -> Self {
        Self {
            image: fixture.views[index].color.cast(),
            intrinsics: fixture.intrinsics.cast(),
            pose: fixture.poses[index].cast(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub steps: usize,
    pub rays_per_batch: usize,
    pub samples: usize,
    pub seed: u64,
    /// Fixed gradient reduction order independent of the worker count.
    pub deterministic: bool,
    pub grid_lr: f64,
    pub mlp_lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Held-out PSNR is evaluated every this many steps (and at the end).
    pub eval_every: usize,
    /// Samples per ray when rendering the held-out view.
    pub eval_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 2000,
            rays_per_batch: 512,
            samples: 64,
            seed: 0,
            deterministic: true,
            grid_lr: 1e-2,
            mlp_lr: 1e-3,
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
            eval_every: 500,
            eval_samples: 128,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if self.steps == 0 || self.rays_per_batch == 0 {
            return Err(TrainError::Config("steps and rays_per_batch must be >= 1".into()));
        }
        if self.samples < 2 || self.eval_samples < 2 {
            return Err(TrainError::Config("need at least two samples per ray".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub step: usize,
    pub loss: f64,
    /// PSNR of the current batch (`MSE = loss / 3`).
    pub psnr_train: f64,
    pub psnr_holdout: Option<f64>,
}

pub fn write_trace_csv<W: Write>(trace: &[TraceRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "loss", "psnr_train", "psnr_holdout"])?;
    for r in trace {
        wr.write_record([
            r.step.to_string(),
            format!("{:.8}", r.loss),
            format!("{:.4}", r.psnr_train),
            r.psnr_holdout.map(|p| format!("{p:.4}")).unwrap_or_default(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// `−10·log10(MSE)` over all channels; identical images give `+∞`.
pub fn psnr<T: Real>(img: &Image<T>, reference: &Image<T>) -> Result<f64, TrainError> {
    if !img.same_shape(reference) {
        return Err(TrainError::ShapeMismatch);
    }
    let n = img.as_slice().len() as f64;
    let mse: f64 = img
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
        .sum::<f64>()
        / n;
    Ok(psnr_from_mse(mse))
}

pub fn psnr_from_mse(mse: f64) -> f64 {
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

/// `mean_r ‖Ĉ(r) − C(r)‖²` with midpoint samples.
pub fn rend_loss<T: Real, F: RadianceField<T> + ?Sized>(field: &F, rays: &[(Ray<T>, [T; 3])], samples: usize) -> T {
    let total: T = rays
        .iter()
        .map(|(ray, target)| {
            let c = crate::render::render_ray(field, ray, samples);
            (0..3).map(|k| (c.color[k] - target[k]).powi(2)).sum::<T>()
        })
        .sum();
    total / T::from_usize_lossy(rays.len())
}

struct RayScratch<T> {
    samples: QuadratureSamples<T>,
    points: Vec<crate::geometry::Vec3<T>>,
    ws: FieldWorkspace<T>,
    d_sigma: Vec<T>,
    d_color: Vec<T>,
}

/// Loss and gradient of one ray chunk. `jitter_seed` switches on
/// stratified jitter, seeded per ray from `(seed, ray index)`.
fn chunk_loss_grad<T: Real>(
    field: &NeuralField<T>,
    rays: &[(Ray<T>, [T; 3])],
    first_index: usize,
    samples: usize,
    jitter_seed: Option<u64>,
    scale: T,
    grads: &mut ParamSet<T>,
) -> T {
    let mut s = RayScratch {
        samples: QuadratureSamples::default(),
        points: Vec::with_capacity(samples),
        ws: field.workspace(samples),
        d_sigma: vec![T::zero(); samples],
        d_color: vec![T::zero(); 3 * samples],
    };
    let bounds = field.bounds();
    let mut loss = T::zero();
    for (r, (ray, target)) in rays.iter().enumerate() {
        let Some(clipped) = ray.clip_to_box(bounds.min, bounds.max) else {
            loss += target.iter().map(|&t| t * t).sum::<T>();
            continue;
        };
        match jitter_seed {
            Some(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((first_index + r) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
                fill_bins(&clipped, samples, Some(&mut rng), &mut s.samples);
            }
            None => fill_bins::<T, ChaCha8Rng>(&clipped, samples, None, &mut s.samples),
        }
        s.points.clear();
        s.points.extend(s.samples.t.iter().map(|&t| clipped.at(t)));
        field.forward(&s.points, clipped.direction, &mut s.ws);
        s.samples.sigma.copy_from_slice(&s.ws.sigma);
        s.samples.color.copy_from_slice(&s.ws.color);
        let c = composite(&s.samples);
        let mut g = CompositeGrad {
            color: [T::zero(); 3],
            depth: T::zero(),
            ao: T::zero(),
        };
        for k in 0..3 {
            let e = c.color[k] - target[k];
            loss += e * e;
            g.color[k] = T::lit(2.0) * e * scale;
        }
        composite_backward(&s.samples, &g, &mut s.d_sigma, &mut s.d_color);
        field.backward(&mut s.ws, &s.d_sigma, &s.d_color, grads);
    }
    loss
}

/// Mean rendering loss over `rays` and its gradient. Chunks are reduced in
/// index order, so the result depends only on `chunks`, not on how many
/// workers ran them.
pub fn rend_loss_and_grad<T: Real>(
    field: &NeuralField<T>,
    rays: &[(Ray<T>, [T; 3])],
    samples: usize,
    jitter_seed: Option<u64>,
    chunks: usize,
) -> (T, ParamSet<T>) {
    let n = rays.len();
    let scale = T::one() / T::from_usize_lossy(n);
    let chunk_len = n.div_ceil(chunks.max(1)).max(1);
    let parts: Vec<(T, ParamSet<T>)> = rays
        .par_chunks(chunk_len)
        .enumerate()
        .map(|(ci, chunk)| {
            let mut g = field.params().zeros_like();
            let l = chunk_loss_grad(field, chunk, ci * chunk_len, samples, jitter_seed, scale, &mut g);
            (l, g)
        })
        .collect();
    let mut iter = parts.into_iter();
    let (mut loss, mut grads) = iter.next().expect("at least one ray");
    for (l, g) in iter {
        loss += l;
        grads.accumulate(&g).expect("same layout");
    }
    (loss * scale, grads)
}

/// Rendering loss on a fixed ray set as a differentiable objective of the
/// field parameters (gradient certification).
pub struct RendObjective<T> {
    pub config: FieldConfig,
    pub rays: Vec<(Ray<T>, [T; 3])>,
    pub samples: usize,
}

impl<T: Real> Objective<T> for RendObjective<T> {
    fn value(&self, params: &ParamSet<T>) -> T {
        let field = NeuralField::from_params(self.config.clone(), params.clone()).expect("layout");
        rend_loss(&field, &self.rays, self.samples)
    }

    fn value_and_gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>) {
        let field = NeuralField::from_params(self.config.clone(), params.clone()).expect("layout");
        rend_loss_and_grad(&field, &self.rays, self.samples, None, 1)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub field: NeuralField<f32>,
    pub trace: Vec<TraceRow>,
}

impl TrainOutcome {
    pub fn final_holdout_psnr(&self) -> Option<f64> {
        self.trace.iter().rev().find_map(|r| r.psnr_holdout)
    }
}

pub fn holdout_psnr<F: RadianceField<f32>>(field: &F, view: &HoldoutView<f32>, samples: usize) -> f64 {
    let out = render_image(field, &view.intrinsics, &view.pose, samples);
    psnr(&out.color, &view.image).expect("holdout render matches image size")
}

/// Fits a fresh field (seeded from `config.seed`) to `dataset`.
pub fn fit(
    dataset: &SceneDataset<f32>,
    field_config: &FieldConfig,
    config: &TrainConfig,
    holdout: Option<&HoldoutView<f32>>,
) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    let mut field = NeuralField::<f32>::new(field_config.clone(), config.seed)?;
    let adam = AdamConfig {
        lr: config.grid_lr,
        beta1: config.beta1,
        beta2: config.beta2,
        eps: config.eps,
    };
    let mut opt = OptState::new(field.params(), adam).with_lr("mlp.", config.mlp_lr);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let total_pixels = dataset.len() * dataset.pixels_per_image();
    let chunks = if config.deterministic {
        4
    } else {
        rayon::current_num_threads()
    };
    let mut trace = Vec::with_capacity(config.steps);
    let mut last_loss = None;
    for step in 1..=config.steps {
        let batch: Vec<_> = (0..config.rays_per_batch)
            .map(|_| dataset.ray_sample(rng.gen_range(0..total_pixels)))
            .collect();
        let jitter = rng.gen::<u64>();
        let (loss, grads) = rend_loss_and_grad(&field, &batch, config.samples, Some(jitter), chunks);
        let loss = loss as f64;
        if !loss.is_finite() || !grads.all_finite() {
            log::error!("non-finite loss at step {step}");
            return Err(TrainError::NonFinite { step, last_loss, trace });
        }
        adam_step(field.params_mut(), &grads, &mut opt).expect("gradient layout matches parameters");
        last_loss = Some(loss);
        let eval = holdout.filter(|_| step % config.eval_every.max(1) == 0 || step == config.steps);
        let psnr_holdout = eval.map(|v| holdout_psnr(&field, v, config.eval_samples));
        if let Some(p) = psnr_holdout {
            log::info!("step {step}: loss {loss:.6}, holdout PSNR {p:.2} dB");
        }
        trace.push(TraceRow {
            step,
            loss,
            psnr_train: psnr_from_mse(loss / 3.0),
            psnr_holdout,
        });
    }
    Ok(TrainOutcome { field, trace })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::ConstantField;
    use crate::geometry::Vec3;
    use approx::assert_abs_diff_eq;

    #[test]
    fn psnr_formula() {
        let a = Image::<f64>::filled(4, 4, 3, 0.5);
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let b = Image::<f64>::filled(4, 4, 3, 0.6);
        assert_abs_diff_eq!(psnr(&a, &b).unwrap(), 20.0, epsilon = 1e-9);
        let c = Image::<f64>::filled(4, 4, 3, 0.51);
        assert_abs_diff_eq!(psnr(&a, &c).unwrap(), 40.0, epsilon = 1e-9);
        assert!(psnr(&a, &Image::zeros(4, 3, 3)).is_err());
    }

    fn one_ray() -> Ray<f64> {
        Ray::new(Vec3::new(0.5, 0.5, -1.0), Vec3::new(0.0, 0.0, 1.0), 0.0, f64::INFINITY).unwrap()
    }

    #[test]
    fn rend_loss_zero_on_exact_target() {
        let field = ConstantField::new(50.0f64, [0.2, 0.4, 0.6]);
        let c = crate::render::render_ray(&field, &one_ray(), 64);
        let loss = rend_loss(&field, &[(one_ray(), c.color)], 64);
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn rend_loss_of_constant_offset() {
        let field = ConstantField::new(50.0f64, [0.2, 0.4, 0.6]);
        let c = crate::render::render_ray(&field, &one_ray(), 64);
        let target = [c.color[0] - 0.1, c.color[1], c.color[2]];
        let rays = vec![(one_ray(), target); 5];
        assert_abs_diff_eq!(rend_loss(&field, &rays, 64), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn dataset_validation() {
        let img = Image::<f32>::zeros(4, 4, 3);
        let k = Intrinsics::centered(4.0f32, 4, 4).unwrap();
        let p = Pose::identity();
        assert!(SceneDataset::new(vec![img.clone()], vec![k], vec![p]).is_err());
        let bad = Image::<f32>::zeros(5, 4, 3);
        assert!(SceneDataset::new(vec![img.clone(), bad], vec![k, k], vec![p, p]).is_err());
        assert!(SceneDataset::new(vec![img.clone(), img], vec![k, k], vec![p, p]).is_ok());
    }

    #[test]
    fn chunking_does_not_change_loss() {
        let cfg = FieldConfig {
            hidden_width: 8,
            ..FieldConfig::hash_default()
        };
        let field = NeuralField::<f64>::new(cfg, 2).unwrap();
        let rays: Vec<_> = (0..10)
            .map(|i| {
                let o = Vec3::new(0.05 * i as f64, 0.5, -1.0);
                (Ray::new(o, Vec3::new(0.1, 0.0, 1.0).normalized(), 0.0, f64::INFINITY).unwrap(), [0.3, 0.2, 0.1])
            })
            .collect();
        let (l1, g1) = rend_loss_and_grad(&field, &rays, 16, None, 1);
        let (l3, g3) = rend_loss_and_grad(&field, &rays, 16, None, 3);
        assert_abs_diff_eq!(l1, l3, epsilon = 1e-12);
        assert_abs_diff_eq!(l1, rend_loss(&field, &rays, 16), epsilon = 1e-12);
        for k in (0..g1.numel()).step_by(97) {
            assert_abs_diff_eq!(g1.flat_get(k), g3.flat_get(k), epsilon = 1e-12);
        }
    }
}
