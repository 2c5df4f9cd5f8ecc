//! The macroscopic law `μ_t` as an extended Wild sum.
//!
//! ```text
//! μ_t = Σ_{n≥0} p_n(t) · (1/#_m(n)) · Σ_{A ∈ 𝔸_n} μ^{∘A}
//! ```
//!
//! A draw from `μ_t` picks `n` from the closed-form branching law, a uniform
//! ordered tree with `n` nodes, puts i.i.d. base draws on its leaves and
//! pushes them through the kernel from the most recently born node back to
//! the root. On finite state spaces the same sum is evaluated exactly by
//! enumerating trees.
//!
//! The Cauchy residual check compares a central time difference of
//! `⟨μ_t, f⟩` with `⟨μ_t^{∘m}, f⟩ − ⟨μ_t, f⟩`. Both sides are estimated with
//! paired draws (common random numbers for `t ± dt`, and the kernel output
//! paired with its own first input), which keeps the standard errors of the
//! two differences small.

use alloc::string::String;
use alloc::vec::Vec;
use alloc::{format, vec};

use num_traits::ToPrimitive;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::branching::{closed_law_adaptive, p_closed, ClosedTerms};
use crate::error::check_time;
use crate::exec::Executor;
use crate::kernels::{DiscreteKernel, Kernel};
use crate::rng::{substream, Purpose};
use crate::stats::{CompensatedSum, Estimate, MeanAccumulator};
use crate::trees::{count_trees, enumerate_trees, sample_tree, OrderedTree};
use crate::{Error, Result};

/// Default cut of the branching-law table used for inverse-CDF sampling.
pub const DEFAULT_TAIL_EPS: f64 = 1e-12;

/// Default operation budget of [`exact_mu_t_discrete`].
pub const DEFAULT_EXACT_BUDGET: f64 = 1e8;

/// Initial law `μ` on the real line.
#[derive(Debug, Clone, PartialEq)]
pub enum Base {
    PointMass(f64),
    Normal { mean: f64, sd: f64 },
    Exponential { rate: f64 },
    Uniform { lo: f64, hi: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl Base {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            Base::PointMass(x) => x.is_finite(),
            Base::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && *sd >= 0.0,
            Base::Exponential { rate } => rate.is_finite() && *rate > 0.0,
            Base::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo <= hi,
            Base::Discrete { values, probs } => {
                !values.is_empty()
                    && values.len() == probs.len()
                    && values.iter().all(|v| v.is_finite())
                    && probs.iter().all(|p| p.is_finite() && *p >= 0.0)
                    && libm::fabs(probs.iter().sum::<f64>() - 1.0) < 1e-9
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("base law", format!("{self:?}")))
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Base::PointMass(x) => *x,
            Base::Normal { mean, sd } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + sd * z
            }
            Base::Exponential { rate } => {
                let e: f64 = Exp1.sample(rng);
                e / rate
            }
            Base::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            Base::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                *values.last().expect("validated nonempty")
            }
        }
    }

    /// `(E[X], E[X²])` when known in closed form.
    pub fn moments(&self) -> (f64, f64) {
        match self {
            Base::PointMass(x) => (*x, x * x),
            Base::Normal { mean, sd } => (*mean, mean * mean + sd * sd),
            Base::Exponential { rate } => (1.0 / rate, 2.0 / (rate * rate)),
            Base::Uniform { lo, hi } => (0.5 * (lo + hi), (lo * lo + lo * hi + hi * hi) / 3.0),
            Base::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .fold((0.0, 0.0), |(a, b), (v, p)| (a + p * v, b + p * v * v)),
        }
    }
}

/// Kernel plus initial law: everything needed to define `μ_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct WildSum {
    pub kernel: Kernel,
    pub base: Base,
}

impl WildSum {
    pub fn new(kernel: Kernel, base: Base) -> Result<Self> {
        kernel.validate()?;
        base.validate()?;
        Ok(WildSum { kernel, base })
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EnsembleMeta {
    pub t: Option<f64>,
    pub kernel_id: Option<String>,
    pub seed: Option<u64>,
}

/// Weighted samples standing in for a probability law.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleEnsemble {
    values: Vec<f64>,
    weights: Option<Vec<f64>>,
    pub meta: EnsembleMeta,
}

impl SampleEnsemble {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        Ok(SampleEnsemble { values, weights: None, meta: EnsembleMeta::default() })
    }

    /// Weights are normalized to sum to one.
    pub fn with_weights(values: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        if weights.len() != values.len() || weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::invalid("weights", "need one finite non-negative weight per value"));
        }
        let total = weights.iter().copied().collect::<CompensatedSum>().value();
        if !(total > 0.0) {
            return Err(Error::invalid("weights", "total weight must be positive"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(SampleEnsemble { values, weights: Some(weights), meta: EnsembleMeta::default() })
    }

    pub fn with_meta(mut self, meta: EnsembleMeta) -> Self {
        self.meta = meta;
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn weights(&self) -> Option<&[f64]> {
        self.weights.as_deref()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `⟨ensemble, f⟩` with its standard error.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> Estimate {
        match &self.weights {
            None => self.values.iter().map(|&x| f(x)).collect::<MeanAccumulator>().estimate(),
            Some(w) => {
                let mean = self.values.iter().zip(w).map(|(&x, w)| w * f(x)).collect::<CompensatedSum>().value();
                let var = self
                    .values
                    .iter()
                    .zip(w)
                    .map(|(&x, w)| w * w * (f(x) - mean) * (f(x) - mean))
                    .collect::<CompensatedSum>()
                    .value();
                Estimate { mean, se: libm::sqrt(var), n: self.values.len() }
            }
        }
    }
}

/// Exact law on the labels `0..probs.len()`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLaw {
    probs: Vec<f64>,
}

impl DiscreteLaw {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() || probs.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("discrete law", "need nonempty non-negative probabilities"));
        }
        let total = probs.iter().copied().collect::<CompensatedSum>().value();
        if libm::fabs(total - 1.0) > 1e-12 {
            return Err(Error::invalid("discrete law", format!("probabilities sum to {total}")));
        }
        Ok(DiscreteLaw { probs })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// The same law as a sampler on the reals, label `i` ↦ `i as f64`.
    pub fn to_base(&self) -> Base {
        Base::Discrete { values: (0..self.probs.len()).map(|i| i as f64).collect(), probs: self.probs.clone() }
    }
}

/// Real-valued bounded or polynomial test functions `f` for `⟨μ, f⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TestFunction {
    One,
    Linear,
    Square,
    Cos(f64),
    Sin(f64),
    /// `1 / (1 + e^{−s x})`.
    Sigmoid(f64),
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::One => 1.0,
            TestFunction::Linear => x,
            TestFunction::Square => x * x,
            TestFunction::Cos(w) => libm::cos(w * x),
            TestFunction::Sin(w) => libm::sin(w * x),
            TestFunction::Sigmoid(s) => 1.0 / (1.0 + libm::exp(-s * x)),
        }
    }

    pub fn name(&self) -> String {
        match self {
            TestFunction::One => "1".into(),
            TestFunction::Linear => "x".into(),
            TestFunction::Square => "x^2".into(),
            TestFunction::Cos(w) => format!("cos({w}x)"),
            TestFunction::Sin(w) => format!("sin({w}x)"),
            TestFunction::Sigmoid(s) => format!("sigmoid({s}x)"),
        }
    }
}

/// The fixed panel: `x`, `x²`, real and imaginary parts of `e^{iωx}` for
/// `ω ∈ {0.5, 1, 2}` and two sigmoids. It stands in for the smooth bounded
/// test functions of the convergence statements, so it under-approximates
/// that class.
pub fn default_panel() -> Vec<TestFunction> {
    let mut panel = vec![TestFunction::Linear, TestFunction::Square];
    for w in [0.5, 1.0, 2.0] {
        panel.push(TestFunction::Cos(w));
        panel.push(TestFunction::Sin(w));
    }
    panel.push(TestFunction::Sigmoid(1.0));
    panel.push(TestFunction::Sigmoid(0.5));
    panel
}

/// Draws one sample of `μ^{∘A}`: base draws on the leaves, kernel applied at
/// each node in decreasing birth order, first output of the root returned.
pub fn sample_tree_law<R: Rng + ?Sized>(tree: &OrderedTree, kernel: &Kernel, base: &Base, rng: &mut R) -> Result<f64> {
    if tree.arity() != kernel.arity() {
        return Err(Error::ArityMismatch { expected: kernel.arity(), got: tree.arity() });
    }
    let mut buf = Vec::with_capacity(kernel.arity());
    tree_law_unchecked(tree, kernel, base, rng, &mut buf)
}

fn tree_law_unchecked<R: Rng + ?Sized>(
    tree: &OrderedTree,
    kernel: &Kernel,
    base: &Base,
    rng: &mut R,
    buf: &mut Vec<f64>,
) -> Result<f64> {
    let mut lines: Vec<f64> = (0..tree.leaf_count()).map(|_| base.sample(rng)).collect();
    for k in (0..tree.node_count()).rev() {
        buf.clear();
        buf.extend(tree.child_lines(k).map(|l| lines[l]));
        let out = kernel.apply_first(buf, rng)?;
        lines[tree.history()[k] as usize] = out;
    }
    Ok(lines[0])
}

/// Sampler for `μ_t` with a precomputed inverse-CDF table of `p_n(t)`.
#[derive(Debug, Clone)]
pub struct MuSampler<'a> {
    kernel: &'a Kernel,
    base: &'a Base,
    t: f64,
    cdf: Vec<f64>,
}

impl<'a> MuSampler<'a> {
    pub fn new(kernel: &'a Kernel, base: &'a Base, t: f64, tail_eps: f64) -> Result<Self> {
        check_time("time", t)?;
        kernel.validate()?;
        base.validate()?;
        let law = closed_law_adaptive(kernel.arity(), t, tail_eps)?;
        let mut acc = CompensatedSum::new();
        let cdf = law
            .probs
            .iter()
            .map(|&p| {
                acc.add(p);
                acc.value()
            })
            .collect();
        Ok(MuSampler { kernel, base, t, cdf })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    /// Probability mass beyond the precomputed table.
    pub fn tail_mass(&self) -> f64 {
        (1.0 - self.cdf.last().copied().unwrap_or(0.0)).max(0.0)
    }

    /// Inverse CDF of the branching law. Uniforms falling beyond the table
    /// continue the closed-form series instead of being clamped.
    pub fn draw_count(&self, u: f64) -> usize {
        let idx = self.cdf.partition_point(|&c| c <= u);
        if idx < self.cdf.len() {
            return idx;
        }
        let mut terms = ClosedTerms::new(self.kernel.arity(), self.t);
        let mut acc = CompensatedSum::new();
        let mut n = 0usize;
        loop {
            let p = terms.next_term();
            acc.add(p);
            if n >= self.cdf.len() && (acc.value() > u || p == 0.0) {
                return n;
            }
            n += 1;
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mut buf = Vec::with_capacity(self.kernel.arity());
        self.sample_with(rng, &mut buf)
    }

    fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, buf: &mut Vec<f64>) -> f64 {
        let n = self.draw_count(rng.random());
        let tree = sample_tree(self.kernel.arity(), n, rng).expect("arity validated");
        tree_law_unchecked(&tree, self.kernel, self.base, rng, buf).expect("arity validated")
    }
}

/// One draw from `μ_t`.
pub fn sample_mu_t<R: Rng + ?Sized>(t: f64, kernel: &Kernel, base: &Base, rng: &mut R, tail_eps: f64) -> Result<f64> {
    Ok(MuSampler::new(kernel, base, t, tail_eps)?.sample(rng))
}

/// `n_samples` independent draws from `μ_t`; draw `i` uses substream `i`.
pub fn draw_mu_t<E: Executor + ?Sized>(
    cfg: &WildSum,
    t: f64,
    n_samples: usize,
    seed: u64,
    exec: &E,
) -> Result<SampleEnsemble> {
    let sampler = MuSampler::new(&cfg.kernel, &cfg.base, t, DEFAULT_TAIL_EPS)?;
    let values = exec.map_indexed(n_samples, |i| {
        let mut rng = substream(seed, Purpose::MuSample, i as u64);
        sampler.sample(&mut rng)
    });
    let meta = EnsembleMeta { t: Some(t), kernel_id: Some(cfg.kernel.id()), seed: Some(seed) };
    Ok(SampleEnsemble::new(values)?.with_meta(meta))
}

/// Monte Carlo `⟨μ_t, f⟩` for every `f` in the panel, from one shared set
/// of draws.
pub fn expect_mu_t<E: Executor + ?Sized>(
    panel: &[TestFunction],
    t: f64,
    cfg: &WildSum,
    n_samples: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<Estimate>> {
    if n_samples == 0 {
        return Err(Error::invalid("n_samples", "must be at least 1"));
    }
    let draws = draw_mu_t(cfg, t, n_samples, seed, exec)?;
    Ok(panel.iter().map(|f| draws.expect(|x| f.eval(x))).collect())
}

/// Result of [`exact_mu_t_discrete`]: a sub-probability vector on the labels
/// plus the branching mass beyond `n_max` it does not account for.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution {
    pub probs: Vec<f64>,
    pub tail: f64,
}

/// Work estimate `Σ_n #_m(n) · n · S^m` for the exact evaluation.
pub fn exact_work(m: usize, support: usize, n_max: usize) -> Result<f64> {
    let per_node = libm::pow(support as f64, m as f64);
    let mut work = 0.0;
    for n in 0..=n_max {
        let count = count_trees(m, n)?.to_f64().unwrap_or(f64::INFINITY);
        work += count * (n.max(1)) as f64 * per_node;
    }
    Ok(work)
}

/// Exact `μ_t` on a finite state space, summing every ordered tree with at
/// most `n_max` nodes.
pub fn exact_mu_t_discrete(
    base: &DiscreteLaw,
    kernel: &DiscreteKernel,
    t: f64,
    n_max: usize,
    budget: f64,
) -> Result<ExactSolution> {
    check_time("time", t)?;
    let m = kernel.arity();
    crate::error::check_arity(m)?;
    let s = base.probs.len();
    let support = (kernel.max_label(s) + 1).max(s);
    let work = exact_work(m, support, n_max)?;
    if work > budget {
        return Err(Error::BudgetExceeded { work, budget });
    }
    let mut leaf = vec![0.0; support];
    leaf[..s].copy_from_slice(&base.probs);

    let mut mixture = vec![CompensatedSum::new(); support];
    let mut covered = CompensatedSum::new();
    for n in 0..=n_max {
        let weight = p_closed(m, n as u64, t)?;
        covered.add(weight);
        if weight == 0.0 {
            continue;
        }
        let trees = enumerate_trees(m, n, u64::MAX)?;
        let share = weight / trees.len() as f64;
        for tree in &trees {
            let law = tree_law_exact(tree, kernel, &leaf);
            for (acc, p) in mixture.iter_mut().zip(&law) {
                acc.add(share * p);
            }
        }
    }
    Ok(ExactSolution {
        probs: mixture.iter().map(CompensatedSum::value).collect(),
        tail: (1.0 - covered.value()).max(0.0),
    })
}

/// Law at the root of one tree when every leaf carries `leaf`.
pub fn tree_law_exact(tree: &OrderedTree, kernel: &DiscreteKernel, leaf: &[f64]) -> Vec<f64> {
    let mut lines: Vec<Vec<f64>> = vec![leaf.to_vec(); tree.leaf_count()];
    for k in (0..tree.node_count()).rev() {
        let inputs: Vec<&[f64]> = tree.child_lines(k).map(|l| lines[l].as_slice()).collect();
        let out = push_forward(kernel, &inputs, leaf.len());
        lines[tree.history()[k] as usize] = out;
    }
    lines.swap_remove(0)
}

/// Law of the kernel's first output for independent inputs.
pub fn push_forward(kernel: &DiscreteKernel, inputs: &[&[f64]], support: usize) -> Vec<f64> {
    let m = inputs.len();
    let mut out = vec![0.0; support];
    let mut labels = vec![0usize; m];
    loop {
        let p: f64 = labels.iter().zip(inputs).map(|(&l, law)| law[l]).product();
        if p > 0.0 {
            out[kernel.apply(&labels)] += p;
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return out;
            }
            pos -= 1;
            labels[pos] += 1;
            if labels[pos] < support {
                break;
            }
            labels[pos] = 0;
        }
    }
}

/// Both sides of the Cauchy problem for one test function.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub function: TestFunction,
    /// Central difference `(⟨μ_{t+dt},f⟩ − ⟨μ_{t−dt},f⟩) / 2dt`.
    pub derivative: Estimate,
    /// `⟨μ_t^{∘m}, f⟩ − ⟨μ_t, f⟩`.
    pub generator: Estimate,
    pub residual: f64,
    /// Combined standard error of the two sides.
    pub se: f64,
}

/// `|d/dt ⟨μ_t,f⟩ − (⟨μ_t^{∘m},f⟩ − ⟨μ_t,f⟩)|` for each panel function.
pub fn cauchy_residual<E: Executor + ?Sized>(
    panel: &[TestFunction],
    t: f64,
    dt: f64,
    cfg: &WildSum,
    n_samples: usize,
    seed: u64,
    exec: &E,
) -> Result<Vec<Residual>> {
    if !(dt > 0.0 && dt <= 0.1) {
        return Err(Error::invalid("dt", format!("must lie in (0, 0.1], got {dt}")));
    }
    if t - dt < 0.0 {
        return Err(Error::invalid("time", format!("need t − dt ≥ 0, got t = {t}, dt = {dt}")));
    }
    if n_samples < 2 {
        return Err(Error::invalid("n_samples", "need at least 2 samples"));
    }
    let kernel = &cfg.kernel;
    let plus = MuSampler::new(kernel, &cfg.base, t + dt, DEFAULT_TAIL_EPS)?;
    let minus = MuSampler::new(kernel, &cfg.base, t - dt, DEFAULT_TAIL_EPS)?;
    let now = MuSampler::new(kernel, &cfg.base, t, DEFAULT_TAIL_EPS)?;
    let m = kernel.arity();

    let draws: Vec<[f64; 4]> = exec.map_indexed(n_samples, |i| {
        let mut buf = Vec::with_capacity(m);
        let mut a = substream(seed, Purpose::MuSample, i as u64);
        let mut a_twin = a.clone();
        let x_plus = plus.sample_with(&mut a, &mut buf);
        let x_minus = minus.sample_with(&mut a_twin, &mut buf);
        let mut b = substream(seed, Purpose::KernelStep, i as u64);
        let inputs: Vec<f64> = (0..m).map(|_| now.sample_with(&mut b, &mut buf)).collect();
        let y = kernel.apply_first(&inputs, &mut b).expect("arity validated");
        [x_plus, x_minus, y, inputs[0]]
    });

    Ok(panel
        .iter()
        .map(|f| {
            let derivative = draws
                .iter()
                .map(|d| (f.eval(d[0]) - f.eval(d[1])) / (2.0 * dt))
                .collect::<MeanAccumulator>()
                .estimate();
            let generator = draws
                .iter()
                .map(|d| f.eval(d[2]) - f.eval(d[3]))
                .collect::<MeanAccumulator>()
                .estimate();
            Residual {
                function: *f,
                derivative,
                generator,
                residual: libm::fabs(derivative.mean - generator.mean),
                se: libm::sqrt(derivative.se * derivative.se + generator.se * generator.se),
            }
        })
        .collect())
}
