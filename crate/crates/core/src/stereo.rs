//! Consumers of the NS loss: a block-matching oracle and a per-pixel
//! disparity field optimized directly against `L_NS`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diff::{adam_step, AdamConfig, OptState, ParamSet};
use crate::eval::{bad_tau, EvalMask, Region};
use crate::factory::Triplet;
use crate::image::{Image, Mask};
use crate::nsloss::{ns_loss, ns_loss_grad, LossConfig, LossError, LossReport};
use crate::num::Real;

#[derive(Debug, Error)]
pub enum StereoError {
    #[error("invalid matcher configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Loss(#[from] LossError),
    #[error("non-finite loss at step {step}")]
    Diverged { step: usize, trace: Vec<OptimizeTraceRow> },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchCost {
    Sad,
    /// `1 − SSIM` of the two blocks.
    Ssim,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatcherConfig {
    pub d_max: usize,
    pub window: usize,
    pub cost: MatchCost,
    /// A match is kept only if its cost is below `(1 − uniqueness)` times
    /// the best cost at least 2 px away; pixels with no such rival fail.
    pub uniqueness: f64,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        Self {
            d_max: 64,
            window: 5,
            cost: MatchCost::Sad,
            uniqueness: 0.05,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<(), StereoError> {
        if self.d_max < 1 {
            return Err(StereoError::Config("d_max must be at least 1".into()));
        }
        if self.window < 3 || self.window % 2 == 0 {
            return Err(StereoError::Config("window must be odd and at least 3".into()));
        }
        if !(0.0..1.0).contains(&self.uniqueness) {
            return Err(StereoError::Config("uniqueness must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

fn block_cost<T: Real>(a: &Image<T>, xa: usize, b: &Image<T>, xb: usize, y: usize, cfg: &MatcherConfig) -> f64 {
    let r = (cfg.window / 2) as isize;
    let (w, h, ch) = (a.width() as isize, a.height() as isize, a.channels());
    let clamp = |v: isize, n: isize| v.clamp(0, n - 1) as usize;
    match cfg.cost {
        MatchCost::Sad => {
            let mut s = 0.0;
            for dy in -r..=r {
                let yy = clamp(y as isize + dy, h);
                for dx in -r..=r {
                    let (pa, pb) = (clamp(xa as isize + dx, w), clamp(xb as isize + dx, w));
                    for c in 0..ch {
                        s += (a.get(pa, yy, c) - b.get(pb, yy, c)).abs().as_f64();
                    }
                }
            }
            s
        }
        MatchCost::Ssim => {
            let n = ((2 * r + 1) * (2 * r + 1)) as f64;
            let mut total = 0.0;
            for c in 0..ch {
                let (mut sa, mut sb, mut saa, mut sbb, mut sab) = (0.0, 0.0, 0.0, 0.0, 0.0);
                for dy in -r..=r {
                    let yy = clamp(y as isize + dy, h);
                    for dx in -r..=r {
                        let va = a.get(clamp(xa as isize + dx, w), yy, c).as_f64();
                        let vb = b.get(clamp(xb as isize + dx, w), yy, c).as_f64();
                        sa += va;
                        sb += vb;
                        saa += va * va;
                        sbb += vb * vb;
                        sab += va * vb;
                    }
                }
                let (ma, mb) = (sa / n, sb / n);
                let (vaa, vbb, vab) = (saa / n - ma * ma, sbb / n - mb * mb, sab / n - ma * mb);
                let (c1, c2) = (crate::nsloss::SSIM_C1, crate::nsloss::SSIM_C2);
                let s = (2.0 * ma * mb + c1) * (2.0 * vab + c2) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
                total += 1.0 - s;
            }
            total / ch as f64
        }
    }
}

/// Winner-take-all disparities for `reference`, matching `reference(x)`
/// against `other(x + dir·d)`. Returns `(disparity, unique)`.
fn wta<T: Real>(reference: &Image<T>, other: &Image<T>, dir: isize, cfg: &MatcherConfig) -> (Vec<usize>, Vec<bool>) {
    let (w, h) = (reference.width(), reference.height());
    let rows: Vec<Vec<(usize, bool)>> = (0..h)
        .into_par_iter()
        .map(|y| {
            (0..w)
                .map(|x| {
                    let mut costs = Vec::with_capacity(cfg.d_max + 1);
                    for d in 0..=cfg.d_max {
                        let xo = x as isize + dir * d as isize;
                        if xo < 0 || xo >= w as isize {
                            break;
                        }
                        costs.push(block_cost(reference, x, other, xo as usize, y, cfg));
                    }
                    let (best, &bc) = costs
                        .iter()
                        .enumerate()
                        .min_by(|a, b| a.1.total_cmp(b.1))
                        .expect("d = 0 is always in range");
                    let second = costs
                        .iter()
                        .enumerate()
                        .filter(|(d, _)| d.abs_diff(best) > 1)
                        .map(|(_, &c)| c)
                        .fold(f64::INFINITY, f64::min);
                    (best, second.is_finite() && bc < (1.0 - cfg.uniqueness) * second)
                })
                .collect()
        })
        .collect();
    rows.into_iter().flatten().unzip()
}

/// Integer disparities of `left` w.r.t. `right` (`left(x) ↔ right(x − d)`)
/// and a validity mask from a symmetric left-right check (1 px) plus a
/// uniqueness test.
pub fn block_match<T: Real>(left: &Image<T>, right: &Image<T>, cfg: &MatcherConfig) -> Result<(Image<T>, Mask), StereoError> {
    cfg.validate()?;
    assert!(left.same_shape(right), "block_match operands differ in shape");
    let (w, h) = (left.width(), left.height());
    let (dl, ul) = wta(left, right, -1, cfg);
    let (dr, _) = wta(right, left, 1, cfg);
    let disp = Image::from_vec(w, h, 1, dl.iter().map(|&d| T::from_usize_lossy(d)).collect());
    let valid = Mask::from_fn(w, h, |x, y| {
        let i = y * w + x;
        let d = dl[i];
        ul[i] && x >= d && dr[y * w + x - d].abs_diff(d) <= 1
    });
    Ok((disp, valid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizeConfig {
    pub steps: usize,
    pub lr: f64,
    pub d_max: f64,
    pub matcher: MatcherConfig,
    pub init_fill: InitFill,
    /// Threshold for the bad-τ trace columns.
    pub tau: f64,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            steps: 500,
            lr: 0.05,
            d_max: 64.0,
            matcher: MatcherConfig::default(),
            init_fill: InitFill::Background,
            tau: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizeTraceRow {
    pub step: usize,
    pub loss: f64,
    /// bad-τ against the triplet's rendered disparity.
    pub bad_rendered: Option<f64>,
    /// bad-τ against the supplied ground truth.
    pub bad_gt: Option<f64>,
}

/// Ground-truth disparity for trace evaluation.
pub struct GroundTruth<'a, T> {
    pub disparity: &'a Image<T>,
    pub mask: &'a EvalMask,
}

#[derive(Debug, Clone)]
pub struct OptimizeOutcome<T> {
    pub initial: Image<T>,
    pub disparity: Image<T>,
    pub report: LossReport<T>,
    pub trace: Vec<OptimizeTraceRow>,
}

impl<T> OptimizeOutcome<T> {
    pub fn final_row(&self) -> &OptimizeTraceRow {
        self.trace.last().expect("trace holds at least the initial row")
    }
}

/// How pixels rejected by the block matcher are initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitFill {
    Zero,
    /// Smaller of the nearest valid disparities to the left and right in
    /// the same row (rejected pixels are mostly occluded background).
    Background,
}

/// Block-match initialization: the oracle's disparity where it is valid,
/// filled per `cfg.init_fill` elsewhere, clamped to `[0, d_max]`.
pub fn initial_disparity<T: Real>(triplet: &Triplet<T>, cfg: &OptimizeConfig) -> Result<Image<T>, StereoError> {
    let (d, valid) = block_match(&triplet.center, &triplet.right, &cfg.matcher)?;
    let dm = T::lit(cfg.d_max);
    let w = d.width();
    Ok(Image::from_fn(w, d.height(), 1, |x, y, _| {
        let v = if valid.get(x, y) {
            d.at(x, y)
        } else {
            match cfg.init_fill {
                InitFill::Zero => T::zero(),
                InitFill::Background => {
                    let left = (0..x).rev().find(|&i| valid.get(i, y)).map(|i| d.at(i, y));
                    let right = (x + 1..w).find(|&i| valid.get(i, y)).map(|i| d.at(i, y));
                    match (left, right) {
                        (Some(a), Some(b)) => a.min(b),
                        (Some(a), None) | (None, Some(a)) => a,
                        (None, None) => T::zero(),
                    }
                }
            }
        };
        v.min(dm)
    }))
}

fn trace_row<T: Real>(
    step: usize,
    loss: T,
    d: &Image<T>,
    triplet: &Triplet<T>,
    tau: f64,
    gt: Option<&GroundTruth<'_, T>>,
) -> OptimizeTraceRow {
    let rendered = EvalMask::all_valid(triplet.valid.clone());
    OptimizeTraceRow {
        step,
        loss: loss.as_f64(),
        bad_rendered: bad_tau(d, &triplet.disparity, tau, &rendered, Region::All).ok(),
        bad_gt: gt.and_then(|g| bad_tau(d, g.disparity, tau, g.mask, Region::All).ok()),
    }
}

/// Minimizes the scalar loss over a free per-pixel disparity field with
/// Adam, clamping to `[0, d_max]` after every step. The trace holds the
/// initial state (step 0) and every step after it.
pub fn optimize_disparity<T: Real>(
    triplet: &Triplet<T>,
    loss: &LossConfig,
    cfg: &OptimizeConfig,
    gt: Option<GroundTruth<'_, T>>,
) -> Result<OptimizeOutcome<T>, StereoError> {
    if !(cfg.d_max > 0.0) || !(cfg.lr > 0.0) {
        return Err(StereoError::Config("d_max and lr must be positive".into()));
    }
    let initial = initial_disparity(triplet, cfg)?;
    optimize_from(triplet, loss, cfg, initial, gt)
}

/// [`optimize_disparity`] from an explicit starting field.
pub fn optimize_from<T: Real>(
    triplet: &Triplet<T>,
    loss: &LossConfig,
    cfg: &OptimizeConfig,
    initial: Image<T>,
    gt: Option<GroundTruth<'_, T>>,
) -> Result<OptimizeOutcome<T>, StereoError> {
    let (w, h) = (initial.width(), initial.height());
    let mut params = ParamSet::new();
    let id = params.add("disparity", vec![h, w], initial.as_slice().to_vec());
    let mut state = OptState::new(
        &params,
        AdamConfig {
            lr: cfg.lr,
            ..Default::default()
        },
    );
    let dm = T::lit(cfg.d_max);
    let mut trace = Vec::with_capacity(cfg.steps + 1);
    let mut current = initial.clone();
    for step in 0..cfg.steps {
        let (rep, g) = ns_loss_grad(triplet, &current, loss)?;
        if !rep.loss.is_finite() || !g.is_finite() {
            return Err(StereoError::Diverged { step, trace });
        }
        trace.push(trace_row(step, rep.loss, &current, triplet, cfg.tau, gt.as_ref()));
        let mut grads = params.zeros_like();
        grads.get_mut(id).copy_from_slice(g.as_slice());
        adam_step(&mut params, &grads, &mut state).map_err(|e| StereoError::Config(e.to_string()))?;
        for v in params.get_mut(id) {
            *v = v.max(T::zero()).min(dm);
        }
        current = Image::from_vec(w, h, 1, params.get(id).to_vec());
    }
    let report = ns_loss(triplet, &current, loss)?;
    if !report.loss.is_finite() {
        return Err(StereoError::Diverged { step: cfg.steps, trace });
    }
    trace.push(trace_row(cfg.steps, report.loss, &current, triplet, cfg.tau, gt.as_ref()));
    Ok(OptimizeOutcome {
        initial,
        disparity: current,
        report,
        trace,
    })
}

pub fn write_trace_csv<W: std::io::Write>(trace: &[OptimizeTraceRow], w: W) -> Result<(), csv::Error> {
    let mut wr = csv::Writer::from_writer(w);
    for r in trace {
        wr.serialize(r)?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::factory::TripletMeta;
    use crate::geometry::Vec3;
    use crate::scenegen::ValueNoise;

    fn textured(w: usize, h: usize, seed: u64) -> Image<f64> {
        let noise = ValueNoise::new(seed, 0.35);
        Image::from_fn(w, h, 3, |x, y, c| noise.rgb(Vec3::new(x as f64, y as f64, 0.0))[c])
    }

    #[test]
    fn recovers_constant_shift() {
        let base = textured(48, 16, 1);
        let left = Image::from_fn(40, 16, 3, |x, y, c| base.get(x, y, c));
        let right = Image::from_fn(40, 16, 3, |x, y, c| base.get(x + 3, y, c));
        let (d, valid) = block_match(&left, &right, &MatcherConfig { d_max: 8, ..Default::default() }).unwrap();
        let mut checked = 0;
        for y in 2..14 {
            for x in 10..37 {
                assert_eq!(d.at(x, y), 3.0, "({x},{y})");
                checked += valid.get(x, y) as usize;
            }
        }
        assert!(checked > 200);
    }

    #[test]
    fn ssim_cost_also_recovers_shift() {
        let base = textured(40, 12, 2);
        let left = Image::from_fn(34, 12, 3, |x, y, c| base.get(x, y, c));
        let right = Image::from_fn(34, 12, 3, |x, y, c| base.get(x + 2, y, c));
        let cfg = MatcherConfig {
            d_max: 6,
            cost: MatchCost::Ssim,
            ..Default::default()
        };
        let (d, _) = block_match(&left, &right, &cfg).unwrap();
        for x in 8..30 {
            assert_eq!(d.at(x, 6), 2.0);
        }
    }

    #[test]
    fn textureless_pair_is_mostly_invalid() {
        let img = Image::<f64>::filled(20, 10, 3, 0.4);
        let (_, valid) = block_match(&img, &img, &MatcherConfig { d_max: 6, ..Default::default() }).unwrap();
        assert!(valid.count() * 10 < 200);
    }

    #[test]
    fn short_search_range_misses_shift() {
        let base = textured(48, 12, 3);
        let left = Image::from_fn(40, 12, 3, |x, y, c| base.get(x, y, c));
        let right = Image::from_fn(40, 12, 3, |x, y, c| base.get(x + 6, y, c));
        let (d, _) = block_match(&left, &right, &MatcherConfig { d_max: 3, ..Default::default() }).unwrap();
        for x in 10..38 {
            assert_ne!(d.at(x, 6), 6.0);
        }
    }

    #[test]
    fn config_validation() {
        assert!(MatcherConfig { window: 4, ..Default::default() }.validate().is_err());
        assert!(MatcherConfig { d_max: 0, ..Default::default() }.validate().is_err());
    }

    fn shifted_triplet(shift: usize) -> Triplet<f64> {
        let (w, h) = (40, 12);
        let base = textured(w + 2 * shift, h, 4);
        let view = |o: usize| Image::from_fn(w, h, 3, |x, y, c| base.get(x + o, y, c));
        Triplet {
            left: view(0),
            center: view(shift),
            right: view(2 * shift),
            disparity: Image::filled(w, h, 1, shift as f64),
            depth: Image::filled(w, h, 1, 1.0),
            ao: Image::filled(w, h, 1, 1.0),
            valid: Mask::new(w, h, true),
            meta: TripletMeta::default(),
        }
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let t = shifted_triplet(3);
        let cfg = OptimizeConfig {
            steps: 0,
            d_max: 16.0,
            matcher: MatcherConfig { d_max: 16, ..Default::default() },
            ..Default::default()
        };
        let out = optimize_disparity(&t, &LossConfig::default(), &cfg, None).unwrap();
        assert_eq!(out.disparity, out.initial);
        assert_eq!(out.trace.len(), 1);
    }

    #[test]
    fn optimizer_decreases_loss_and_respects_clamp() {
        let t = shifted_triplet(3);
        let cfg = OptimizeConfig {
            steps: 60,
            d_max: 5.0,
            matcher: MatcherConfig { d_max: 5, ..Default::default() },
            ..Default::default()
        };
        let init = Image::filled(40, 12, 1, 4.5);
        let out = optimize_from(&t, &LossConfig::default(), &cfg, init, None).unwrap();
        assert!(out.final_row().loss <= out.trace[0].loss);
        assert!(out.disparity.as_slice().iter().all(|&d| (0.0..=5.0).contains(&d)));
    }
}
