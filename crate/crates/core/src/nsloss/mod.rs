//! The NeRF-supervised training signal for a disparity prediction `d̂`:
//! photometric reconstruction from the side views of a rendered triplet,
//! gated by AO against direct supervision from the rendered disparity.
//!
//! Per pixel,
//!
//! ```text
//! L_NS = γ_disp · η · |d_c − d̂| + μ · γ_3ρ · (1 − η) · L_3ρ
//! L_3ρ = min(L_ρ(I_c, I_l(x + d̂)), L_ρ(I_c, I_r(x − d̂)))
//! μ    = [L_3ρ < min(L_ρ(I_c, I_l), L_ρ(I_c, I_r))]
//! η    = 0 if AO < th else AO
//! ```
//!
//! and the scalar loss is the mean over pixels where a term is active.

mod ssim;
mod warp;

pub use ssim::{ssim_backward, ssim_map, SSIM_C1, SSIM_C2};
pub use warp::{warp_horizontal, Side};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{Objective, ParamSet};
use crate::factory::Triplet;
use crate::image::{Image, Mask};
use crate::num::Real;
use warp::warp_slope;

#[derive(Debug, Error, PartialEq)]
pub enum LossError {
    #[error("image shapes differ: {0}")]
    ShapeMismatch(&'static str),
    #[error("invalid loss configuration: {0}")]
    Config(String),
}

/// Which photometric term enters the loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PhotometricMode {
    None,
    /// Center reconstructed from the right view only. With `automask`,
    /// pixels where the warp does not beat the unwarped right view are
    /// dropped.
    RightPair { automask: bool },
    /// Per-pixel minimum over both side views with the triplet automask.
    Triplet,
}

/// How AO weights the rendered-disparity term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisparityWeighting {
    None,
    /// `η = [AO ≥ th]`.
    Binary,
    /// `η = 0 if AO < th else AO`.
    Eta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub beta: f64,
    pub th: f64,
    pub gamma_3rho: f64,
    pub gamma_disp: f64,
    pub window: usize,
    pub photometric: PhotometricMode,
    pub weighting: DisparityWeighting,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            beta: 0.85,
            th: 0.5,
            gamma_3rho: 0.1,
            gamma_disp: 1.0,
            window: 3,
            photometric: PhotometricMode::Triplet,
            weighting: DisparityWeighting::Eta,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<(), LossError> {
        if !(0.0..=1.0).contains(&self.beta) || !(0.0..=1.0).contains(&self.th) {
            return Err(LossError::Config("beta and th must lie in [0, 1]".into()));
        }
        if self.gamma_3rho < 0.0 || self.gamma_disp < 0.0 {
            return Err(LossError::Config("term weights must be non-negative".into()));
        }
        if self.window % 2 == 0 || self.window < 1 {
            return Err(LossError::Config("SSIM window must be odd".into()));
        }
        Ok(())
    }

    /// Photometric-only variant of `self` (no disparity supervision).
    pub fn photometric_only(&self, mode: PhotometricMode) -> Self {
        Self {
            photometric: mode,
            weighting: DisparityWeighting::None,
            ..self.clone()
        }
    }
}

/// `β·(1 − SSIM)/2 + (1−β)·mean_c |I_c − Î|` per pixel.
pub fn photometric_loss<T: Real>(center: &Image<T>, recon: &Image<T>, cfg: &LossConfig) -> Result<Image<T>, LossError> {
    if !center.same_shape(recon) {
        return Err(LossError::ShapeMismatch("photometric_loss"));
    }
    let s = ssim_map(center, recon, cfg.window);
    let beta = T::lit(cfg.beta);
    let half = T::lit(0.5);
    let ch = center.channels();
    let inv_c = T::one() / T::from_usize_lossy(ch);
    Ok(Image::from_fn(center.width(), center.height(), 1, |x, y, _| {
        let l1 = (0..ch).map(|c| (center.get(x, y, c) - recon.get(x, y, c)).abs()).sum::<T>() * inv_c;
        beta * (T::one() - s.at(x, y)) * half + (T::one() - beta) * l1
    }))
}

/// Adds `Σ_p upstream(p) · ∂L_ρ(p)/∂recon` to `grad`.
fn photometric_backward<T: Real>(center: &Image<T>, recon: &Image<T>, cfg: &LossConfig, upstream: &Image<T>, grad: &mut Image<T>) {
    let beta = T::lit(cfg.beta);
    let ssim_up = upstream.map(|g| -beta * T::lit(0.5) * g);
    ssim_backward(center, recon, cfg.window, &ssim_up, grad);
    let ch = center.channels();
    let l1w = (T::one() - beta) / T::from_usize_lossy(ch);
    for y in 0..center.height() {
        for x in 0..center.width() {
            let g = upstream.at(x, y);
            if g == T::zero() {
                continue;
            }
            for c in 0..ch {
                let diff = recon.get(x, y, c) - center.get(x, y, c);
                let sign = if diff > T::zero() {
                    T::one()
                } else if diff < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                let i = grad.index(x, y, c);
                grad.as_mut_slice()[i] += g * l1w * sign;
            }
        }
    }
}

/// Result of [`triplet_loss`]: the min map, the automask, and which side
/// supplied each pixel's minimum.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletTerms<T> {
    pub l3rho: Image<T>,
    pub mu: Mask,
    pub from_right: Mask,
    pub right: Image<T>,
    pub left: Image<T>,
    pub right_in_bounds: Mask,
    pub left_in_bounds: Mask,
}

/// Per-pixel minimum reconstruction loss over both side views and the
/// automask. Out-of-bounds warps fall back to the other side; if both are
/// out of bounds the pixel keeps the plain minimum and `μ = 0`.
pub fn triplet_loss<T: Real>(
    left: &Image<T>,
    center: &Image<T>,
    right: &Image<T>,
    disp: &Image<T>,
    cfg: &LossConfig,
) -> Result<TripletTerms<T>, LossError> {
    if !left.same_shape(center) || !right.same_shape(center) || !disp.same_extent(center) {
        return Err(LossError::ShapeMismatch("triplet_loss"));
    }
    let (wr, mr) = warp_horizontal(right, disp, Side::Right);
    let (wl, ml) = warp_horizontal(left, disp, Side::Left);
    let lr = photometric_loss(center, &wr, cfg)?;
    let ll = photometric_loss(center, &wl, cfg)?;
    let id_r = photometric_loss(center, right, cfg)?;
    let id_l = photometric_loss(center, left, cfg)?;
    let (w, h) = (center.width(), center.height());
    let mut l3 = Image::zeros(w, h, 1);
    let mut mu = Mask::new(w, h, false);
    let mut from_right = Mask::new(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let (a, b) = (lr.at(x, y), ll.at(x, y));
            let (ra, la) = (mr.get(x, y), ml.get(x, y));
            let use_right = match (ra, la) {
                (true, false) => true,
                (false, true) => false,
                _ => a <= b,
            };
            let v = if use_right { a } else { b };
            l3.set(x, y, 0, v);
            from_right.set(x, y, use_right);
            mu.set(x, y, (ra || la) && v < id_l.at(x, y).min(id_r.at(x, y)));
        }
    }
    Ok(TripletTerms {
        l3rho: l3,
        mu,
        from_right,
        right: lr,
        left: ll,
        right_in_bounds: mr,
        left_in_bounds: ml,
    })
}

/// `|d_c − d̂|` on valid pixels, 0 elsewhere; the mask marks pixels that
/// count towards a mean.
pub fn disparity_loss<T: Real>(d_c: &Image<T>, d_hat: &Image<T>, valid: &Mask) -> Result<(Image<T>, Mask), LossError> {
    if !d_c.same_shape(d_hat) || (valid.width(), valid.height()) != (d_c.width(), d_c.height()) {
        return Err(LossError::ShapeMismatch("disparity_loss"));
    }
    let map = Image::from_fn(d_c.width(), d_c.height(), 1, |x, y, _| {
        if valid.get(x, y) {
            (d_c.at(x, y) - d_hat.at(x, y)).abs()
        } else {
            T::zero()
        }
    });
    Ok((map, valid.clone()))
}

/// Mean of `map` over `mask`; `None` if the mask is empty.
pub fn masked_mean<T: Real>(map: &Image<T>, mask: &Mask) -> Option<T> {
    let n = mask.count();
    (n > 0).then(|| {
        map.as_slice()
            .iter()
            .zip(mask.as_slice())
            .filter(|(_, &m)| m)
            .map(|(&v, _)| v)
            .sum::<T>()
            / T::from_usize_lossy(n)
    })
}

/// AO gate.
pub fn eta<T: Real>(ao: T, th: T, weighting: DisparityWeighting) -> T {
    match weighting {
        DisparityWeighting::None => T::zero(),
        _ if ao < th => T::zero(),
        DisparityWeighting::Binary => T::one(),
        DisparityWeighting::Eta => ao,
    }
}

/// Per-pixel maps and scalar reductions of one loss evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LossReport<T> {
    /// `L_ρ(I_c, warp(I_r))`.
    pub photometric_right: Image<T>,
    /// `L_ρ(I_c, warp(I_l))`.
    pub photometric_left: Image<T>,
    /// The photometric term in use: `L_3ρ`, or the right-pair loss.
    pub photometric: Image<T>,
    pub mu: Mask,
    pub eta: Image<T>,
    pub disparity: Image<T>,
    pub total: Image<T>,
    pub active: Mask,
    /// Mean of `total` over active pixels (0 if none).
    pub loss: T,
    pub mean_photometric: Option<T>,
    pub mean_disparity: Option<T>,
}

struct Forward<T> {
    report: LossReport<T>,
    terms: TripletTerms<T>,
    /// Photometric weight `μ·γ_3ρ·(1−η)` per pixel.
    photo_weight: Image<T>,
}

fn forward<T: Real>(triplet: &Triplet<T>, d_hat: &Image<T>, cfg: &LossConfig) -> Result<Forward<T>, LossError> {
    cfg.validate()?;
    if !d_hat.same_extent(&triplet.center) {
        return Err(LossError::ShapeMismatch("prediction vs triplet"));
    }
    let terms = triplet_loss(&triplet.left, &triplet.center, &triplet.right, d_hat, cfg)?;
    let (ldisp, _) = disparity_loss(&triplet.disparity, d_hat, &triplet.valid)?;
    let (w, h) = (d_hat.width(), d_hat.height());
    let th = T::lit(cfg.th);
    let (g3, gd) = (T::lit(cfg.gamma_3rho), T::lit(cfg.gamma_disp));

    let (photo, mu) = match cfg.photometric {
        PhotometricMode::None => (Image::zeros(w, h, 1), Mask::new(w, h, false)),
        PhotometricMode::Triplet => (terms.l3rho.clone(), terms.mu.clone()),
        PhotometricMode::RightPair { automask } => {
            let id_r = photometric_loss(&triplet.center, &triplet.right, cfg)?;
            let mu = Mask::from_fn(w, h, |x, y| {
                terms.right_in_bounds.get(x, y) && (!automask || terms.right.at(x, y) < id_r.at(x, y))
            });
            (terms.right.clone(), mu)
        }
    };
    let eta_map = Image::from_fn(w, h, 1, |x, y, _| eta(triplet.ao.at(x, y), th, cfg.weighting));
    let mut total = Image::zeros(w, h, 1);
    let mut active = Mask::new(w, h, false);
    let mut photo_weight = Image::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let e = eta_map.at(x, y);
            let disp_on = triplet.valid.get(x, y) && e * gd > T::zero();
            let pw = if mu.get(x, y) { g3 * (T::one() - e) } else { T::zero() };
            let photo_on = pw > T::zero();
            let mut v = T::zero();
            if disp_on {
                v += gd * e * ldisp.at(x, y);
            }
            if photo_on {
                v += pw * photo.at(x, y);
            }
            total.set(x, y, 0, v);
            active.set(x, y, disp_on || photo_on);
            photo_weight.set(x, y, 0, pw);
        }
    }
    let loss = masked_mean(&total, &active).unwrap_or(T::zero());
    let report = LossReport {
        photometric_right: terms.right.clone(),
        photometric_left: terms.left.clone(),
        mean_photometric: masked_mean(&photo, &mu),
        mean_disparity: masked_mean(&ldisp, &triplet.valid),
        photometric: photo,
        mu,
        eta: eta_map,
        disparity: ldisp,
        total,
        active,
        loss,
    };
    Ok(Forward {
        report,
        terms,
        photo_weight,
    })
}

/// Full loss evaluation.
pub fn ns_loss<T: Real>(triplet: &Triplet<T>, d_hat: &Image<T>, cfg: &LossConfig) -> Result<LossReport<T>, LossError> {
    Ok(forward(triplet, d_hat, cfg)?.report)
}

/// Loss report and `∂loss/∂d̂`. The automask, the min selection and the
/// active set are piecewise constant and treated as such.
pub fn ns_loss_grad<T: Real>(triplet: &Triplet<T>, d_hat: &Image<T>, cfg: &LossConfig) -> Result<(LossReport<T>, Image<T>), LossError> {
    let fwd = forward(triplet, d_hat, cfg)?;
    let rep = &fwd.report;
    let (w, h) = (d_hat.width(), d_hat.height());
    let mut grad = Image::zeros(w, h, 1);
    let n_active = rep.active.count();
    if n_active == 0 {
        return Ok((fwd.report, grad));
    }
    let inv_n = T::one() / T::from_usize_lossy(n_active);
    let gd = T::lit(cfg.gamma_disp);

    // Disparity term.
    for y in 0..h {
        for x in 0..w {
            let e = rep.eta.at(x, y);
            if triplet.valid.get(x, y) && e * gd > T::zero() {
                let diff = d_hat.at(x, y) - triplet.disparity.at(x, y);
                let sign = if diff > T::zero() {
                    T::one()
                } else if diff < T::zero() {
                    -T::one()
                } else {
                    T::zero()
                };
                grad.set(x, y, 0, gd * e * sign * inv_n);
            }
        }
    }

    // Photometric term, routed to the side that supplied each pixel.
    let mut up_right = Image::zeros(w, h, 1);
    let mut up_left = Image::zeros(w, h, 1);
    for y in 0..h {
        for x in 0..w {
            let pw = fwd.photo_weight.at(x, y) * inv_n;
            if pw == T::zero() {
                continue;
            }
            let right = match cfg.photometric {
                PhotometricMode::RightPair { .. } => true,
                _ => fwd.terms.from_right.get(x, y),
            };
            if right {
                up_right.set(x, y, 0, pw);
            } else {
                up_left.set(x, y, 0, pw);
            }
        }
    }
    for (side, up, src) in [(Side::Right, &up_right, &triplet.right), (Side::Left, &up_left, &triplet.left)] {
        if up.as_slice().iter().all(|&v| v == T::zero()) {
            continue;
        }
        let (warped, _) = warp_horizontal(src, d_hat, side);
        let mut g_img = Image::zeros(w, h, src.channels());
        photometric_backward(&triplet.center, &warped, cfg, up, &mut g_img);
        let slope = warp_slope(src, d_hat, side);
        for y in 0..h {
            for x in 0..w {
                let mut acc = T::zero();
                for c in 0..src.channels() {
                    acc += g_img.get(x, y, c) * slope.get(x, y, c);
                }
                let i = grad.index(x, y, 0);
                grad.as_mut_slice()[i] += acc;
            }
        }
    }
    Ok((fwd.report, grad))
}

/// Scalar loss as a function of a `"disparity"` parameter (`H × W`).
pub struct NsObjective<'a, T> {
    pub triplet: &'a Triplet<T>,
    pub config: LossConfig,
}

impl<T: Real> NsObjective<'_, T> {
    fn disparity(&self, params: &ParamSet<T>) -> Image<T> {
        let c = &self.triplet.center;
        Image::from_vec(c.width(), c.height(), 1, params.by_name("disparity").expect("disparity parameter").to_vec())
    }

    pub fn params_for(d: &Image<T>) -> ParamSet<T> {
        let mut p = ParamSet::new();
        p.add("disparity", vec![d.height(), d.width()], d.as_slice().to_vec());
        p
    }
}

impl<T: Real> Objective<T> for NsObjective<'_, T> {
    fn value(&self, params: &ParamSet<T>) -> T {
        ns_loss(self.triplet, &self.disparity(params), &self.config).expect("consistent shapes").loss
    }

    fn value_and_gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>) {
        let (rep, g) = ns_loss_grad(self.triplet, &self.disparity(params), &self.config).expect("consistent shapes");
        let mut grads = params.zeros_like();
        grads.get_mut(grads.id("disparity").unwrap()).copy_from_slice(g.as_slice());
        (rep.loss, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diff::fd_check_significant;
    use crate::factory::TripletMeta;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_img(w: usize, h: usize, rng: &mut ChaCha8Rng) -> Image<f64> {
        Image::from_fn(w, h, 3, |_, _, _| rng.gen_range(0.0..1.0))
    }

    fn uniform_triplet(img: Image<f64>, ao: f64) -> Triplet<f64> {
        let (w, h) = (img.width(), img.height());
        Triplet {
            left: img.clone(),
            center: img.clone(),
            right: img,
            disparity: Image::zeros(w, h, 1),
            depth: Image::filled(w, h, 1, 1.0),
            ao: Image::filled(w, h, 1, ao),
            valid: Mask::new(w, h, true),
            meta: TripletMeta::default(),
        }
    }

    #[test]
    fn photometric_identical_is_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random_img(8, 8, &mut rng);
        let l = photometric_loss(&a, &a, &LossConfig::default()).unwrap();
        assert!(l.as_slice().iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn photometric_constant_images() {
        let a = Image::<f64>::filled(5, 5, 3, 1.0);
        let b = Image::<f64>::filled(5, 5, 3, 0.0);
        let l = photometric_loss(&a, &b, &LossConfig::default()).unwrap();
        let s = SSIM_C1 / (1.0 + SSIM_C1);
        for &v in l.as_slice() {
            assert_abs_diff_eq!(v, 0.85 * (1.0 - s) / 2.0 + 0.15, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(l.at(0, 0), 0.5749, epsilon = 1e-4);
    }

    #[test]
    fn beta_zero_is_pure_l1() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (a, b) = (random_img(6, 6, &mut rng), random_img(6, 6, &mut rng));
        let cfg = LossConfig {
            beta: 0.0,
            ..Default::default()
        };
        let l = photometric_loss(&a, &b, &cfg).unwrap();
        let expect = (0..3).map(|c| (a.get(2, 3, c) - b.get(2, 3, c)).abs()).sum::<f64>() / 3.0;
        assert_abs_diff_eq!(l.at(2, 3), expect, epsilon = 1e-15);
    }

    #[test]
    fn identical_views_zero_disparity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = random_img(10, 6, &mut rng);
        let t = triplet_loss(&img, &img, &img, &Image::zeros(10, 6, 1), &LossConfig::default()).unwrap();
        assert!(t.l3rho.as_slice().iter().all(|&v| v.abs() < 1e-12));
        assert_eq!(t.mu.count(), 0);
    }

    #[test]
    fn triplet_min_never_exceeds_in_bounds_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (l, c, r) = (random_img(12, 5, &mut rng), random_img(12, 5, &mut rng), random_img(12, 5, &mut rng));
        let d = Image::from_fn(12, 5, 1, |_, _, _| rng.gen_range(0.0..4.0));
        let t = triplet_loss(&l, &c, &r, &d, &LossConfig::default()).unwrap();
        for y in 0..5 {
            for x in 0..12 {
                let v = t.l3rho.at(x, y);
                if t.right_in_bounds.get(x, y) {
                    assert!(v <= t.right.at(x, y) || !t.left_in_bounds.get(x, y) && v == t.left.at(x, y));
                }
                if t.left_in_bounds.get(x, y) && t.right_in_bounds.get(x, y) {
                    assert!(v <= t.left.at(x, y) && v <= t.right.at(x, y));
                }
            }
        }
    }

    #[test]
    fn disparity_loss_examples() {
        let dc = Image::from_vec(2, 1, 1, vec![5.0, 1.0]);
        let dh = Image::from_vec(2, 1, 1, vec![3.0, 7.0]);
        let (m, _) = disparity_loss(&dc, &dh, &Mask::new(2, 1, true)).unwrap();
        assert_eq!(m.as_slice(), &[2.0, 6.0]);
        let half = Mask::from_vec(2, 1, vec![true, false]);
        let (m, v) = disparity_loss(&dc, &dh, &half).unwrap();
        assert_eq!(masked_mean(&m, &v), Some(2.0));
    }

    #[test]
    fn gate_branches() {
        assert_eq!(eta(0.49, 0.5, DisparityWeighting::Eta), 0.0);
        assert_eq!(eta(0.5, 0.5, DisparityWeighting::Eta), 0.5);
        assert_eq!(eta(0.8, 0.5, DisparityWeighting::Binary), 1.0);
    }

    #[test]
    fn combined_pixel_value() {
        // AO 0.8, |d_c − d̂| = 2, L_3ρ = 0.5, μ = 1 → 0.8·2 + 0.1·0.2·0.5.
        let e: f64 = eta(0.8, 0.5, DisparityWeighting::Eta);
        let v = 1.0 * e * 2.0 + 1.0 * 0.1 * (1.0 - e) * 0.5;
        assert_abs_diff_eq!(v, 1.61, epsilon = 1e-12);
    }

    #[test]
    fn zero_photometric_weight_leaves_disparity_term() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut t = uniform_triplet(random_img(8, 8, &mut rng), 0.7);
        t.disparity = Image::filled(8, 8, 1, 2.0);
        let d_hat = Image::from_fn(8, 8, 1, |x, _, _| x as f64 * 0.3);
        let cfg = LossConfig {
            gamma_3rho: 0.0,
            ..Default::default()
        };
        let rep = ns_loss(&t, &d_hat, &cfg).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                assert_abs_diff_eq!(rep.total.at(x, y), 0.7 * (2.0 - x as f64 * 0.3).abs(), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gate_partition_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = uniform_triplet(random_img(8, 8, &mut rng), 0.0);
        t.ao = Image::from_fn(8, 8, 1, |_, _, _| rng.gen_range(0.0..1.0));
        let rep = ns_loss(&t, &Image::filled(8, 8, 1, 1.0), &LossConfig::default()).unwrap();
        for &e in rep.eta.as_slice() {
            assert!(e == 0.0 || (0.5..=1.0).contains(&e));
        }
    }

    fn random_triplet(w: usize, h: usize, seed: u64) -> (Triplet<f64>, Image<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base: Vec<f64> = (0..(w + 8) * h * 3).map(|_| rng.gen_range(0.0..1.0)).collect();
        let shifted = |s: usize| Image::from_fn(w, h, 3, |x, y, c| base[((y * (w + 8)) + x + s) * 3 + c]);
        let (l, c, r) = (shifted(2), shifted(4), shifted(6));
        let d_c = Image::from_fn(w, h, 1, |_, _, _| rng.gen_range(1.0..3.0));
        let ao = Image::from_fn(w, h, 1, |_, _, _| rng.gen_range(0.0..1.0));
        let valid = Mask::from_fn(w, h, |_, _| rng.gen_bool(0.8));
        let d_hat = Image::from_fn(w, h, 1, |_, _, _| rng.gen_range(0.5..3.5));
        let t = Triplet {
            left: l,
            center: c,
            right: r,
            disparity: d_c,
            depth: Image::filled(w, h, 1, 1.0),
            ao,
            valid,
            meta: TripletMeta::default(),
        };
        (t, d_hat)
    }

    #[test]
    fn ns_gradient_matches_finite_differences() {
        let (t, d_hat) = random_triplet(16, 16, 9);
        let obj = NsObjective {
            triplet: &t,
            config: LossConfig::default(),
        };
        let params = NsObjective::params_for(&d_hat);
        let r = fd_check_significant(&obj, &params, 120, 1e-5, 1e-6, 3);
        assert_eq!(r.probes.len(), 120);
        assert!(r.max_relative_error < 1e-4, "{}", r.max_relative_error);
    }

    #[test]
    fn zero_disparity_gradient_vanishes_on_identical_views() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let t = uniform_triplet(random_img(10, 10, &mut rng), 0.0);
        let cfg = LossConfig::default().photometric_only(PhotometricMode::RightPair { automask: false });
        let (rep, g) = ns_loss_grad(&t, &Image::zeros(10, 10, 1), &cfg).unwrap();
        assert_abs_diff_eq!(rep.loss, 0.0, epsilon = 1e-12);
        assert!(g.as_slice().iter().all(|&v| v.abs() < 1e-12));
    }
}
