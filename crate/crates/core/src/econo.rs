//! Wealth exchange with random weights: the fixed point `γ` of
//!
//! ```text
//! S_m(μ) = law of H_1 X_1 + … + H_m X_m,   X_i ~ μ i.i.d.
//! ```
//!
//! and the exponential rate `η = 1 − E[H_1² + … + H_m²]` at which `μ_t`
//! approaches it.
//!
//! `γ` is approximated by iterating `S_m` on a sample ensemble. Since `S_m`
//! preserves the mean, the ensemble mean is a neutral direction of the
//! iteration and resampling noise makes it drift like a random walk. The
//! default pins it to the initial mean after each step; the fixed point is
//! only unique given its mean, so this selects the right member of the
//! family rather than biasing it.
//!
//! The convergence experiment compares `⟨μ_t, f⟩` with `⟨γ̂, f⟩` over the
//! test panel. The panel is finite, so it stands in for the smooth bounded
//! class of the theory without covering it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Add, Div, Mul};

use num_traits::One;
use rand::Rng;

use crate::exec::Executor;
use crate::kernels::{Kernel, WeightSpec};
use crate::rng::{child_seed, substream, Purpose};
use crate::stats::{ks_statistic, CompensatedSum};
use crate::wildsum::{default_panel, expect_mu_t, Base, EnsembleMeta, SampleEnsemble, TestFunction, WildSum};
use crate::{Error, Result};

/// `1 − E[H_1² + … + H_m²]`, in closed form for every built-in family.
pub fn eta(spec: &WeightSpec) -> Result<f64> {
    let eta = 1.0 - spec.sum_of_squares();
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::invalid("weights", format!("need E[ΣH²] < 1, got {}", 1.0 - eta)));
    }
    Ok(eta)
}

/// Exponent `a = (1 − η)/(m − 1)`.
pub fn exponent_a(m: usize, eta: f64) -> f64 {
    (1.0 - eta) / (m - 1) as f64
}

/// `e_0 = 1`, `e_n = (a/n)(1 + e_1 + … + e_{n−1})`, in any field.
pub fn e_sequence_in<T>(a: T, n_max: usize) -> Vec<T>
where
    T: Clone + One + Add<Output = T> + Mul<Output = T> + Div<Output = T>,
{
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(T::one());
    let mut sum = T::one();
    let mut n = T::one();
    for _ in 1..=n_max {
        let e = a.clone() * sum.clone() / n.clone();
        sum = sum + e.clone();
        n = n + T::one();
        out.push(e);
    }
    out
}

fn check_eta(m: usize, eta: f64) -> Result<()> {
    crate::error::check_arity(m)?;
    if !(eta > 0.0 && eta < 1.0) {
        return Err(Error::invalid("eta", format!("must lie in (0, 1), got {eta}")));
    }
    Ok(())
}

/// The running-sum recursion in floating point.
pub fn e_sequence(m: usize, eta: f64, n_max: usize) -> Result<Vec<f64>> {
    check_eta(m, eta)?;
    let a = exponent_a(m, eta);
    let mut out = Vec::with_capacity(n_max + 1);
    out.push(1.0);
    let mut sum = CompensatedSum::new();
    sum.add(1.0);
    for n in 1..=n_max {
        let e = a * sum.value() / n as f64;
        sum.add(e);
        out.push(e);
    }
    Ok(out)
}

/// Same sequence through `e_n = e_{n−1}(n − 1 + a)/n`.
pub fn e_sequence_product(m: usize, eta: f64, n_max: usize) -> Result<Vec<f64>> {
    check_eta(m, eta)?;
    let a = exponent_a(m, eta);
    let mut out = vec![1.0];
    for n in 1..=n_max {
        let prev = out[n - 1];
        out.push(prev * (n as f64 - 1.0 + a) / n as f64);
    }
    Ok(out)
}

/// How the ensemble mean is held during fixed-point iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanPin {
    Off,
    /// Mean of the initial ensemble.
    Initial,
    Value(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointOptions {
    pub max_iterations: usize,
    pub ensemble_size: usize,
    pub ks_tolerance: f64,
    /// Consecutive iterations below tolerance needed to stop early.
    pub patience: usize,
    pub early_stop: bool,
    pub pin_mean: MeanPin,
}

impl Default for FixedPointOptions {
    fn default() -> Self {
        FixedPointOptions {
            max_iterations: 50,
            ensemble_size: 100_000,
            ks_tolerance: 1e-2,
            patience: 3,
            early_stop: true,
            pin_mean: MeanPin::Initial,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub ensemble: SampleEnsemble,
    pub iterations: usize,
    /// KS distance between successive ensembles.
    pub ks_history: Vec<f64>,
    /// The last `patience` steps all moved less than the tolerance.
    pub converged: bool,
}

/// Inverse-CDF resampling from a (possibly weighted) ensemble.
struct Resampler<'a> {
    values: &'a [f64],
    cdf: Option<Vec<f64>>,
}

impl<'a> Resampler<'a> {
    fn new(ens: &'a SampleEnsemble) -> Self {
        let cdf = ens.weights().map(|w| {
            let mut acc = CompensatedSum::new();
            w.iter()
                .map(|&x| {
                    acc.add(x);
                    acc.value()
                })
                .collect()
        });
        Resampler { values: ens.values(), cdf }
    }

    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = match &self.cdf {
            None => rng.random_range(0..self.values.len()),
            Some(cdf) => {
                let u: f64 = rng.random();
                cdf.partition_point(|&c| c <= u).min(self.values.len() - 1)
            }
        };
        self.values[i]
    }
}

fn pin(values: &mut [f64], target: f64) {
    let mean = values.iter().copied().collect::<CompensatedSum>().value() / values.len() as f64;
    if mean != 0.0 && target / mean > 0.0 {
        let s = target / mean;
        values.iter_mut().for_each(|x| *x *= s);
    } else {
        let d = target - mean;
        values.iter_mut().for_each(|x| *x += d);
    }
}

/// Iterates the sample-level `S_m` map from `initial`.
///
/// Each new sample is `Σ H_i X_i` with `X_i` drawn with replacement from the
/// current ensemble and fresh weights. Non-convergence is reported through
/// [`FixedPoint::converged`], not as an error.
pub fn fixed_point<E: Executor + ?Sized>(
    spec: &WeightSpec,
    initial: &SampleEnsemble,
    opts: &FixedPointOptions,
    seed: u64,
    exec: &E,
) -> Result<FixedPoint> {
    eta(spec)?;
    if opts.ensemble_size == 0 || opts.max_iterations == 0 || opts.patience == 0 {
        return Err(Error::invalid("fixed-point options", "sizes and counts must be positive"));
    }
    let m2 = initial.expect(|x| x * x).mean;
    if !m2.is_finite() {
        return Err(Error::invalid("initial ensemble", "needs a finite second moment"));
    }
    let target = match opts.pin_mean {
        MeanPin::Off => None,
        MeanPin::Initial => Some(initial.expect(|x| x).mean),
        MeanPin::Value(v) => Some(v),
    };

    let m = spec.m;
    let mut current = initial.clone();
    let mut ks_history = Vec::new();
    let mut calm = 0usize;
    for it in 0..opts.max_iterations {
        let source = Resampler::new(&current);
        let it_seed = child_seed(seed, it as u64);
        let mut values = exec.map_indexed(opts.ensemble_size, |j| {
            let mut rng = substream(it_seed, Purpose::FixedPoint, j as u64);
            (0..m).map(|_| spec.sample(&mut rng) * source.draw(&mut rng)).sum::<f64>()
        });
        if let Some(target) = target {
            pin(&mut values, target);
        }
        let next = SampleEnsemble::new(values)?;
        let d = ks_statistic(current.values(), current.weights(), next.values(), None)?;
        ks_history.push(d);
        calm = if d < opts.ks_tolerance { calm + 1 } else { 0 };
        current = next;
        if opts.early_stop && calm >= opts.patience {
            break;
        }
    }
    let meta = EnsembleMeta { t: None, kernel_id: Some(Kernel::Wealth(spec.clone()).id()), seed: Some(seed) };
    Ok(FixedPoint {
        iterations: ks_history.len(),
        converged: calm >= opts.patience,
        ks_history,
        ensemble: current.with_meta(meta),
    })
}

/// `M₂* = (m − 1) M₁² / (m η)`, the second moment of the fixed point with
/// first moment `M₁`.
pub fn fixed_point_second_moment(m: usize, eta: f64, m1: f64) -> f64 {
    (m - 1) as f64 * m1 * m1 / (m as f64 * eta)
}

/// `M₂(t)` under `dM₂/dt = −η M₂ + ((m − 1)/m) M₁²`.
pub fn second_moment_at(m: usize, eta: f64, m1: f64, m2_0: f64, t: f64) -> f64 {
    let star = fixed_point_second_moment(m, eta, m1);
    star + (m2_0 - star) * libm::exp(-eta * t)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapPoint {
    pub t: f64,
    /// `max_f |⟨μ_t, f⟩ − ⟨γ̂, f⟩|` over the panel.
    pub gap: f64,
    pub se: f64,
    /// The panel function attaining the maximum.
    pub function: TestFunction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub eta: f64,
    pub a: f64,
    pub e_sequence: Vec<f64>,
    pub gap_curve: Vec<GapPoint>,
    /// Indices into `gap_curve` used by the fit.
    pub window: Vec<usize>,
    /// Decay rate of the fitted `c e^{−r t}`; `None` with too little signal.
    pub fitted_rate: Option<f64>,
    pub fitted_constant: Option<f64>,
    pub insufficient_signal: bool,
    pub gamma_iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    pub samples_per_t: usize,
    pub fixed_point: FixedPointOptions,
    pub panel: Vec<TestFunction>,
    /// Length of the reported `e_n` sequence.
    pub e_terms: usize,
    /// A gap enters the fit when it exceeds this many standard errors.
    pub signal_ratio: f64,
}

impl Default for RateOptions {
    fn default() -> Self {
        RateOptions {
            samples_per_t: 100_000,
            // every iteration counts here: stopping at the first calm steps
            // leaves a visible bias in ⟨γ̂, x²⟩
            fixed_point: FixedPointOptions { early_stop: false, ..FixedPointOptions::default() },
            panel: default_panel(),
            e_terms: 200,
            signal_ratio: 5.0,
        }
    }
}

/// Weighted least squares of `ln gap` on `t` with weights `(gap/se)²`.
/// Returns `(rate, constant)` of `gap ≈ c e^{−rate·t}`.
pub fn fit_exponential(points: &[GapPoint]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let w: Vec<f64> = points.iter().map(|p| if p.se > 0.0 { (p.gap / p.se) * (p.gap / p.se) } else { 1.0 }).collect();
    let sw: f64 = w.iter().sum();
    let tx = points.iter().zip(&w).map(|(p, w)| w * p.t).sum::<f64>() / sw;
    let ty = points.iter().zip(&w).map(|(p, w)| w * libm::log(p.gap)).sum::<f64>() / sw;
    let sxx: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.t - tx) * (p.t - tx)).sum();
    let sxy: f64 = points.iter().zip(&w).map(|(p, w)| w * (p.t - tx) * (libm::log(p.gap) - ty)).sum();
    if !(sxx > 0.0) {
        return None;
    }
    let slope = sxy / sxx;
    Some((-slope, libm::exp(ty - slope * tx)))
}

/// The convergence experiment: gaps between `μ_t` and `γ̂` on `t_grid`
/// (with `t = 0` added when missing) and an exponential fit.
pub fn rate_fit<E: Executor + ?Sized>(
    spec: &WeightSpec,
    base: &Base,
    t_grid: &[f64],
    opts: &RateOptions,
    seed: u64,
    exec: &E,
) -> Result<RateReport> {
    let eta = eta(spec)?;
    base.validate()?;
    let mut grid: Vec<f64> = t_grid.to_vec();
    if grid.iter().any(|t| !(t.is_finite() && *t >= 0.0)) {
        return Err(Error::invalid("t grid", "times must be finite and non-negative"));
    }
    if !grid.contains(&0.0) {
        grid.push(0.0);
    }
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() < 4 || grid[grid.len() - 1] - grid[0] < 2.0 / eta {
        return Err(Error::invalid(
            "t grid",
            format!("need at least 4 times spanning 2/η = {:.3}", 2.0 / eta),
        ));
    }
    if opts.panel.is_empty() {
        return Err(Error::invalid("panel", "needs at least one test function"));
    }

    let start_values = exec.map_indexed(opts.fixed_point.ensemble_size, |j| {
        base.sample(&mut substream(seed, Purpose::Validation, j as u64))
    });
    let mut fp_opts = opts.fixed_point.clone();
    if fp_opts.pin_mean == MeanPin::Initial {
        fp_opts.pin_mean = MeanPin::Value(base.moments().0);
    }
    let gamma = fixed_point(spec, &SampleEnsemble::new(start_values)?, &fp_opts, child_seed(seed, 1), exec)?;
    let gamma_vals: Vec<_> = opts.panel.iter().map(|f| gamma.ensemble.expect(|x| f.eval(x))).collect();

    let cfg = WildSum::new(Kernel::Wealth(spec.clone()), base.clone())?;
    let mut gap_curve = Vec::with_capacity(grid.len());
    for (i, &t) in grid.iter().enumerate() {
        let mu = expect_mu_t(&opts.panel, t, &cfg, opts.samples_per_t, child_seed(seed, 100 + i as u64), exec)?;
        let best = opts
            .panel
            .iter()
            .zip(mu.iter().zip(&gamma_vals))
            .map(|(f, (a, b))| GapPoint {
                t,
                gap: libm::fabs(a.mean - b.mean),
                se: libm::sqrt(a.se * a.se + b.se * b.se),
                function: *f,
            })
            .max_by(|p, q| p.gap.total_cmp(&q.gap))
            .expect("nonempty panel");
        gap_curve.push(best);
    }

    let window: Vec<usize> = (0..gap_curve.len())
        .filter(|&i| gap_curve[i].gap > opts.signal_ratio * gap_curve[i].se)
        .collect();
    let insufficient_signal = window.len() < 3;
    let fit = if insufficient_signal {
        None
    } else {
        fit_exponential(&window.iter().map(|&i| gap_curve[i]).collect::<Vec<_>>())
    };
    Ok(RateReport {
        eta,
        a: exponent_a(spec.m, eta),
        e_sequence: e_sequence(spec.m, eta, opts.e_terms)?,
        gap_curve,
        window,
        fitted_rate: fit.map(|f| f.0),
        fitted_constant: fit.map(|f| f.1),
        insufficient_signal,
        gamma_iterations: gamma.iterations,
    })
}
