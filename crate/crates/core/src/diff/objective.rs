use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::num::Real;

/// A scalar function of a [`ParamSet`] with an exact reverse-mode gradient.
pub trait Objective<T: Real> {
    fn value(&self, params: &ParamSet<T>) -> T;

    /// Value and gradient; the gradient has the layout of `params`.
    fn value_and_gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>);
}

pub fn gradient<T: Real, O: Objective<T> + ?Sized>(objective: &O, params: &ParamSet<T>) -> ParamSet<T> {
    objective.value_and_gradient(params).1
}

/// Objective recorded on a fresh [`Tape`] per evaluation. The closure sees
/// the parameters flattened in insertion order.
pub struct TapeObjective<F> {
    program: F,
}

impl<F> TapeObjective<F> {
    pub fn new<T: Real>(program: F) -> Self
    where
        F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Var<'t, T>,
    {
        Self { program }
    }
}

/// Pins a closure to the higher-ranked signature [`TapeObjective`] expects,
/// for closures built before being handed over.
pub fn tape_program<T: Real, F>(program: F) -> F
where
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Var<'t, T>,
{
    program
}

impl<T, F> Objective<T> for TapeObjective<F>
where
    T: Real,
    F: for<'t> Fn(&'t Tape<T>, &[Var<'t, T>]) -> Var<'t, T>,
{
    fn value(&self, params: &ParamSet<T>) -> T {
        let tape = Tape::new();
        let vars: Vec<_> = params.to_flat().into_iter().map(|v| tape.var(v)).collect();
        (self.program)(&tape, &vars).value()
    }

    fn value_and_gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>) {
        let tape = Tape::new();
        let vars: Vec<_> = params.to_flat().into_iter().map(|v| tape.var(v)).collect();
        let out = (self.program)(&tape, &vars);
        let grads = tape.backward(&out);
        let mut g = params.zeros_like();
        for (k, v) in vars.iter().enumerate() {
            g.flat_set(k, grads.wrt(v));
        }
        (out.value(), g)
    }
}

/// Sum of two objectives over the same parameters.
pub struct SumObjective<A, B>(pub A, pub B);

impl<T: Real, A: Objective<T>, B: Objective<T>> Objective<T> for SumObjective<A, B> {
    fn value(&self, params: &ParamSet<T>) -> T {
        self.0.value(params) + self.1.value(params)
    }

    fn value_and_gradient(&self, params: &ParamSet<T>) -> (T, ParamSet<T>) {
        let (va, mut ga) = self.0.value_and_gradient(params);
        let (vb, gb) = self.1.value_and_gradient(params);
        ga.accumulate(&gb).expect("same parameter layout");
        (va + vb, ga)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdProbe {
    pub coordinate: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FdReport {
    pub max_relative_error: f64,
    pub probes: Vec<FdProbe>,
}

/// `|a − b| / max(|a|, |b|, 1e-12)`.
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Central-difference check of `objective`'s gradient on `probe_count`
/// coordinates drawn uniformly (with replacement) from `params`.
pub fn fd_check<O: Objective<f64> + ?Sized>(
    objective: &O,
    params: &ParamSet<f64>,
    probe_count: usize,
    h: f64,
    seed: u64,
) -> FdReport {
    let coords = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = params.numel();
        (0..probe_count).map(|_| rng.gen_range(0..n)).collect::<Vec<_>>()
    };
    fd_check_at(objective, params, &coords, h)
}

/// Central-difference check at explicit flat coordinates.
pub fn fd_check_at<O: Objective<f64> + ?Sized>(
    objective: &O,
    params: &ParamSet<f64>,
    coordinates: &[usize],
    h: f64,
) -> FdReport {
    let (_, grad) = objective.value_and_gradient(params);
    let mut work = params.clone();
    let mut probes = Vec::with_capacity(coordinates.len());
    for &k in coordinates {
        let x0 = params.flat_get(k);
        work.flat_set(k, x0 + h);
        let fp = objective.value(&work);
        work.flat_set(k, x0 - h);
        let fm = objective.value(&work);
        work.flat_set(k, x0);
        let numeric = (fp - fm) / (2.0 * h);
        let analytic = grad.flat_get(k);
        probes.push(FdProbe {
            coordinate: k,
            analytic,
            numeric,
            relative_error: relative_error(analytic, numeric),
        });
    }
    let max_relative_error = probes.iter().map(|p| p.relative_error).fold(0.0, f64::max);
    FdReport {
        max_relative_error,
        probes,
    }
}

/// Like [`fd_check`], but draws `probe_count` distinct coordinates among
/// those whose analytic gradient magnitude is at least `floor`. Below the
/// floor, central differences are dominated by cancellation in `f(x±h)`
/// and a relative comparison carries no information.
pub fn fd_check_significant<O: Objective<f64> + ?Sized>(
    objective: &O,
    params: &ParamSet<f64>,
    probe_count: usize,
    h: f64,
    floor: f64,
    seed: u64,
) -> FdReport {
    let (_, grad) = objective.value_and_gradient(params);
    let mut eligible: Vec<usize> = (0..grad.numel()).filter(|&k| grad.flat_get(k).abs() >= floor).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..eligible.len()).rev() {
        eligible.swap(i, rng.gen_range(0..=i));
    }
    eligible.truncate(probe_count);
    fd_check_at(objective, params, &eligible, h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn least_squares(x: Vec<Vec<f64>>, y: Vec<f64>) -> impl for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Var<'t, f64> {
        move |tape, p| {
            let terms: Vec<_> = x
                .iter()
                .zip(&y)
                .map(|(row, &yi)| {
                    let pred = tape.sum(&row.iter().zip(p).map(|(&xij, &pj)| pj.scale(xij)).collect::<Vec<_>>());
                    pred.offset(-yi).square()
                })
                .collect();
            tape.sum(&terms)
        }
    }

    #[test]
    fn least_squares_matches_normal_equations_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (m, n) = (12, 4);
        let x: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..m).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut params = ParamSet::new();
        params.add("p", vec![n], (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect());
        let obj = TapeObjective::new(least_squares(x.clone(), y.clone()));
        let g = gradient(&obj, &params);
        let p = params.by_name("p").unwrap();
        // 2 Xᵀ (X p − y)
        let resid: Vec<f64> = x
            .iter()
            .zip(&y)
            .map(|(row, yi)| row.iter().zip(p).map(|(a, b)| a * b).sum::<f64>() - yi)
            .collect();
        for j in 0..n {
            let expected: f64 = 2.0 * x.iter().zip(&resid).map(|(row, r)| row[j] * r).sum::<f64>();
            assert_abs_diff_eq!(g.by_name("p").unwrap()[j], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn quadratic_fd_check_is_tight() {
        let mut params = ParamSet::new();
        params.add("p", vec![5], vec![0.3, -1.2, 2.0, 0.7, -0.1]);
        let obj = TapeObjective::new(|tape: &Tape<f64>, p| {
            let terms: Vec<_> = p.iter().enumerate().map(|(i, v)| v.square().scale(i as f64 + 1.0)).collect();
            tape.sum(&terms)
        });
        let report = fd_check(&obj, &params, 20, 1e-4, 3);
        assert!(report.max_relative_error < 1e-8, "{}", report.max_relative_error);
    }

    #[test]
    fn gradient_of_sum_is_sum_of_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut params = ParamSet::new();
        params.add("p", vec![6], (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect());
        for _ in 0..10 {
            let (a, b, c): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
            let f = tape_program(move |tape: &Tape<f64>, p| {
                let t: Vec<_> = p.iter().map(|v| (v.scale(a).sin() * v.offset(b)).exp()).collect();
                tape.sum(&t)
            });
            let g = tape_program(move |tape: &Tape<f64>, p| {
                let t: Vec<_> = p.windows(2).map(|w| (w[0] * w[1]).scale(c).sigmoid()).collect();
                tape.sum(&t)
            });
            let ga = gradient(&TapeObjective::new(f), &params);
            let gb = gradient(&TapeObjective::new(g), &params);
            let gs = gradient(&SumObjective(TapeObjective::new(f), TapeObjective::new(g)), &params);
            for k in 0..params.numel() {
                assert_abs_diff_eq!(gs.flat_get(k), ga.flat_get(k) + gb.flat_get(k), epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 0.5), 0.5);
    }
}
