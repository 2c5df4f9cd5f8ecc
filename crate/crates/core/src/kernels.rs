//! Interaction kernels: exchangeable rules sending `m` input states to `m`
//! output states.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::format;

use rand::Rng;
use rand_distr::{Beta, Distribution};

use crate::error::check_arity;
use crate::stats::MeanAccumulator;
use crate::{Error, Result};

/// Law shared by the `m` independent random weights `H_1, ..., H_m`.
#[derive(Debug, Clone, PartialEq)]
pub enum WeightFamily {
    Uniform { lo: f64, hi: f64 },
    /// `scale · Beta(alpha, beta)`.
    ScaledBeta { alpha: f64, beta: f64, scale: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightSpec {
    pub m: usize,
    pub family: WeightFamily,
}

impl WeightSpec {
    /// Checks that the family is well formed (parameters finite, discrete
    /// probabilities summing to one). Whether the weights satisfy the
    /// wealth-exchange conditions is [`validate_weight_spec`]'s job.
    pub fn new(m: usize, family: WeightFamily) -> Result<Self> {
        check_arity(m)?;
        match &family {
            WeightFamily::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(Error::invalid("uniform weights", format!("need lo <= hi, got [{lo}, {hi}]")));
                }
            }
            WeightFamily::ScaledBeta { alpha, beta, scale } => {
                if !(*alpha > 0.0 && *beta > 0.0 && scale.is_finite() && *scale > 0.0) {
                    return Err(Error::invalid("beta weights", "alpha, beta and scale must be positive"));
                }
                if !(alpha.is_finite() && beta.is_finite()) {
                    return Err(Error::invalid("beta weights", "alpha and beta must be finite"));
                }
            }
            WeightFamily::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return Err(Error::invalid("discrete weights", "values and probs must be nonempty and of equal length"));
                }
                if values.iter().any(|v| !v.is_finite()) || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::invalid("discrete weights", "values must be finite and probs non-negative"));
                }
                let total: f64 = probs.iter().sum();
                if libm::fabs(total - 1.0) > 1e-9 {
                    return Err(Error::invalid("discrete weights", format!("probs sum to {total}")));
                }
            }
        }
        Ok(WeightSpec { m, family })
    }

    pub fn uniform(m: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(m, WeightFamily::Uniform { lo, hi })
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.family {
            WeightFamily::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            WeightFamily::ScaledBeta { alpha, beta, scale } => {
                // parameters were validated in `new`
                let b = Beta::new(*alpha, *beta).expect("validated beta parameters");
                scale * b.sample(rng)
            }
            WeightFamily::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("nonempty")
            }
        }
    }

    /// `E[H]`.
    pub fn mean(&self) -> f64 {
        match &self.family {
            WeightFamily::Uniform { lo, hi } => 0.5 * (lo + hi),
            WeightFamily::ScaledBeta { alpha, beta, scale } => scale * alpha / (alpha + beta),
            WeightFamily::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * p).sum(),
        }
    }

    /// `E[H²]`.
    pub fn second_moment(&self) -> f64 {
        match &self.family {
            WeightFamily::Uniform { lo, hi } => (lo * lo + lo * hi + hi * hi) / 3.0,
            WeightFamily::ScaledBeta { alpha, beta, scale } => {
                let s = alpha + beta;
                scale * scale * alpha * (alpha + 1.0) / (s * (s + 1.0))
            }
            WeightFamily::Discrete { values, probs } => values.iter().zip(probs).map(|(v, p)| v * v * p).sum(),
        }
    }

    /// `E[H_1² + ... + H_m²]`.
    pub fn sum_of_squares(&self) -> f64 {
        self.m as f64 * self.second_moment()
    }

    /// Smallest interval containing the support.
    pub fn support(&self) -> (f64, f64) {
        match &self.family {
            WeightFamily::Uniform { lo, hi } => (*lo, *hi),
            WeightFamily::ScaledBeta { scale, .. } => (0.0, *scale),
            WeightFamily::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (v, _)| (lo.min(*v), hi.max(*v))),
        }
    }

    /// True when every weight is almost surely 0 or 1.
    pub fn is_bernoulli(&self) -> bool {
        match &self.family {
            WeightFamily::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .all(|(v, _)| *v == 0.0 || *v == 1.0),
            WeightFamily::Uniform { lo, hi } => lo == hi && (*lo == 0.0 || *lo == 1.0),
            WeightFamily::ScaledBeta { .. } => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WeightFailure {
    SupportOutsideUnitInterval,
    Bernoulli,
    MeanNotOneOverM,
    SumOfSquaresAtLeastOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub mean: f64,
    pub mean_se: f64,
    pub sum_of_squares: f64,
    pub sum_of_squares_se: f64,
    pub n_samples: usize,
    pub failures: Vec<WeightFailure>,
}

impl WeightReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    /// `1 − E[ΣH²]` from the estimate.
    pub fn eta(&self) -> f64 {
        1.0 - self.sum_of_squares
    }
}

/// Monte Carlo check of the wealth-exchange weight conditions: support in
/// `[0, 1]`, not Bernoulli, mean `1/m` (within three standard errors) and
/// `E[ΣH²] < 1`.
pub fn validate_weight_spec<R: Rng + ?Sized>(spec: &WeightSpec, n_samples: usize, rng: &mut R) -> Result<WeightReport> {
    if n_samples < 10_000 {
        return Err(Error::invalid("n_samples", format!("need at least 10^4 samples, got {n_samples}")));
    }
    let m = spec.m;
    let mut single = MeanAccumulator::new();
    let mut squares = MeanAccumulator::new();
    for _ in 0..n_samples {
        let mut sq = 0.0;
        for _ in 0..m {
            let h = spec.sample(rng);
            single.push(h);
            sq += h * h;
        }
        squares.push(sq);
    }
    let mean = single.estimate();
    let ss = squares.estimate();

    let mut failures = Vec::new();
    let (lo, hi) = spec.support();
    if lo < 0.0 || hi > 1.0 {
        failures.push(WeightFailure::SupportOutsideUnitInterval);
    }
    if spec.is_bernoulli() {
        failures.push(WeightFailure::Bernoulli);
    }
    if mean.z_score(1.0 / m as f64) > 3.0 {
        failures.push(WeightFailure::MeanNotOneOverM);
    }
    if ss.mean >= 1.0 {
        failures.push(WeightFailure::SumOfSquaresAtLeastOne);
    }
    Ok(WeightReport {
        mean: mean.mean,
        mean_se: mean.se,
        sum_of_squares: ss.mean,
        sum_of_squares_se: ss.se,
        n_samples,
        failures,
    })
}

/// Exchangeable interaction rules on the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// Nothing changes.
    Identity { m: usize },
    /// Every participant leaves with the pooled total.
    Sum { m: usize },
    /// Pooled total, capped; keeps integer-valued states on a finite range.
    CappedSum { m: usize, cap: f64 },
    /// Output `j` is `Σ_i H_i^{(j)} x_i` with a fresh weight row per output.
    Wealth(WeightSpec),
}

impl Kernel {
    pub fn arity(&self) -> usize {
        match self {
            Kernel::Identity { m } | Kernel::Sum { m } | Kernel::CappedSum { m, .. } => *m,
            Kernel::Wealth(w) => w.m,
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_arity(self.arity())?;
        if let Kernel::CappedSum { cap, .. } = self {
            if cap.is_nan() {
                return Err(Error::invalid("cap", "must not be NaN"));
            }
        }
        Ok(())
    }

    /// Short identifier used in output metadata.
    pub fn id(&self) -> String {
        match self {
            Kernel::Identity { m } => format!("identity-m{m}"),
            Kernel::Sum { m } => format!("sum-m{m}"),
            Kernel::CappedSum { m, cap } => format!("capped-sum-m{m}-cap{cap}"),
            Kernel::Wealth(w) => format!("wealth-m{}", w.m),
        }
    }

    fn check_len(&self, got: usize) -> Result<()> {
        let expected = self.arity();
        if got != expected {
            return Err(Error::ArityMismatch { expected, got });
        }
        Ok(())
    }

    /// Applies the kernel, writing all `m` outputs.
    pub fn apply<R: Rng + ?Sized>(&self, states: &[f64], out: &mut [f64], rng: &mut R) -> Result<()> {
        self.check_len(states.len())?;
        self.check_len(out.len())?;
        match self {
            Kernel::Identity { .. } => out.copy_from_slice(states),
            Kernel::Sum { .. } => out.fill(states.iter().sum()),
            Kernel::CappedSum { cap, .. } => out.fill(states.iter().sum::<f64>().min(*cap)),
            Kernel::Wealth(w) => {
                for o in out.iter_mut() {
                    *o = states.iter().map(|x| w.sample(rng) * x).sum();
                }
            }
        }
        Ok(())
    }

    /// The first output only. Same law as `apply(..)[0]`, but the wealth
    /// kernel draws a single weight row.
    pub fn apply_first<R: Rng + ?Sized>(&self, states: &[f64], rng: &mut R) -> Result<f64> {
        self.check_len(states.len())?;
        Ok(match self {
            Kernel::Identity { .. } => states[0],
            Kernel::Sum { .. } => states.iter().sum(),
            Kernel::CappedSum { cap, .. } => states.iter().sum::<f64>().min(*cap),
            Kernel::Wealth(w) => states.iter().map(|x| w.sample(rng) * x).sum(),
        })
    }
}

/// Deterministic kernels on the labels `0..s`, used for exact evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiscreteKernel {
    Identity { m: usize },
    /// `min(Σ labels, cap)`.
    CappedSum { m: usize, cap: usize },
}

impl DiscreteKernel {
    pub fn arity(&self) -> usize {
        match self {
            DiscreteKernel::Identity { m } | DiscreteKernel::CappedSum { m, .. } => *m,
        }
    }

    /// First output label.
    pub fn apply(&self, labels: &[usize]) -> usize {
        match self {
            DiscreteKernel::Identity { .. } => labels[0],
            DiscreteKernel::CappedSum { cap, .. } => labels.iter().sum::<usize>().min(*cap),
        }
    }

    /// Largest label the kernel can produce from labels below `support`.
    pub fn max_label(&self, support: usize) -> usize {
        match self {
            DiscreteKernel::Identity { .. } => support - 1,
            DiscreteKernel::CappedSum { m, cap } => (m * (support - 1)).min(*cap),
        }
    }

    /// The same rule acting on real-valued states.
    pub fn to_kernel(&self) -> Kernel {
        match *self {
            DiscreteKernel::Identity { m } => Kernel::Identity { m },
            DiscreteKernel::CappedSum { m, cap } => Kernel::CappedSum { m, cap: cap as f64 },
        }
    }
}

/// Builds the `m` output slots for a wealth kernel realization with known
/// weights. Handy for checking the kernel algebra by hand.
pub fn wealth_output(weights: &[f64], states: &[f64]) -> f64 {
    weights.iter().zip(states).map(|(h, x)| h * x).sum()
}
