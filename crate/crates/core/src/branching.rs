//! Laws of the number of interactions in a tagged history by time `t`.
//!
//! Time is measured after the change that sets every agent's meeting rate
//! to 1. With `L = (m−1)n + 1` lines in the history, the limiting pure-birth
//! chain jumps at rate `L`, which gives the closed form
//!
//! ```text
//! p_n(t) = #_m(n) / ((m−1)^n n!) · e^{−t} (1 − e^{−(m−1)t})^n
//! ```
//!
//! For a finite population the rate is
//! `λ_{N,n} = L · C(N−L, m−1) / C(N−1, m−1)`, the chance per unit time that
//! one of the `L` lines meets `m−1` agents outside the history.
//!
//! Truncated laws never renormalize: mass beyond `n_max` is carried in
//! [`BranchingLaw::tail`].

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{check_arity, check_time};
use crate::stats::CompensatedSum;
use crate::{Error, Result};

/// Default integrator step.
pub const DEFAULT_STEP: f64 = 1e-3;

/// Largest `step · rate` the integrator accepts before refining the step.
const MAX_STEP_RATE: f64 = 0.5;

/// Below this count `p_closed` multiplies the coefficient out directly.
const DIRECT_PRODUCT_LIMIT: u64 = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LawSource {
    ClosedForm,
    Kolmogorov,
    FiniteN(u64),
    GeometricBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BranchingLaw {
    pub m: usize,
    pub t: f64,
    pub probs: Vec<f64>,
    /// Mass beyond `probs.len() − 1`.
    pub tail: f64,
    pub source: LawSource,
}

impl BranchingLaw {
    pub fn n_max(&self) -> usize {
        self.probs.len().saturating_sub(1)
    }

    pub fn total(&self) -> f64 {
        let mut s: CompensatedSum = self.probs.iter().copied().collect();
        s.add(self.tail);
        s.value()
    }

    /// Mean over the represented states (tail excluded).
    pub fn truncated_mean(&self) -> f64 {
        self.probs
            .iter()
            .enumerate()
            .map(|(n, p)| n as f64 * p)
            .collect::<CompensatedSum>()
            .value()
    }

    /// `P(count > n)` for every represented `n`, tail mass included,
    /// accumulated from the top for accuracy on small tails.
    pub fn tail_sums(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.probs.len()];
        let mut acc = CompensatedSum::new();
        acc.add(self.tail);
        for n in (0..self.probs.len()).rev() {
            out[n] = acc.value();
            acc.add(self.probs[n]);
        }
        out
    }

    pub fn sup_distance(&self, other: &BranchingLaw) -> f64 {
        let len = self.probs.len().max(other.probs.len());
        (0..len)
            .map(|n| {
                let a = self.probs.get(n).copied().unwrap_or(0.0);
                let b = other.probs.get(n).copied().unwrap_or(0.0);
                libm::fabs(a - b)
            })
            .fold(0.0, f64::max)
    }
}

fn lines(m: usize, n: u64) -> u64 {
    (m as u64 - 1) * n + 1
}

/// `1 − e^{−(m−1)t}`, the per-step ratio of the closed form.
fn growth_ratio(m: usize, t: f64) -> f64 {
    -libm::expm1(-((m - 1) as f64) * t)
}

/// `ln((L_k)/((m−1)(k+1)))`, the log of one factor of
/// `#_m(n) / ((m−1)^n n!)`.
fn ln_coefficient_factor(m: usize, k: u64) -> f64 {
    let mm = (m - 1) as f64;
    libm::log1p(-(mm - 1.0) / (mm * (k + 1) as f64))
}

/// Closed-form `p_n(t)`.
pub fn p_closed(m: usize, n: u64, t: f64) -> Result<f64> {
    check_arity(m)?;
    check_time("time", t)?;
    let q = growth_ratio(m, t);
    if n == 0 {
        return Ok(libm::exp(-t));
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if n <= DIRECT_PRODUCT_LIMIT {
        let mm = (m - 1) as f64;
        let coef: f64 = (0..n).map(|k| lines(m, k) as f64 / (mm * (k + 1) as f64)).product();
        return Ok(coef * libm::exp(-t) * libm::pow(q, n as f64));
    }
    // #_m(n)/((m−1)^n n!) = Γ(n + 1/(m−1)) / (Γ(1/(m−1)) Γ(n+1))
    let a = 1.0 / (m - 1) as f64;
    let nf = n as f64;
    let ln_coef = libm::lgamma(nf + a) - libm::lgamma(a) - libm::lgamma(nf + 1.0);
    Ok(libm::exp(ln_coef - t + nf * libm::log(q)))
}

/// Analytic mean of the closed-form law, `(e^{(m−1)t} − 1)/(m−1)`.
pub fn closed_mean(m: usize, t: f64) -> f64 {
    let mm = (m - 1) as f64;
    libm::expm1(mm * t) / mm
}

/// Closed-form law on `0..=n_max`, each term computed in log space from a
/// compensated running sum of log-ratios.
pub fn closed_law(m: usize, t: f64, n_max: usize) -> Result<BranchingLaw> {
    check_arity(m)?;
    check_time("time", t)?;
    let mut probs = Vec::with_capacity(n_max + 1);
    let mut walker = ClosedTerms::new(m, t);
    for _ in 0..=n_max {
        probs.push(walker.next_term());
    }
    let tail = (1.0 - probs.iter().copied().collect::<CompensatedSum>().value()).max(0.0);
    Ok(BranchingLaw { m, t, probs, tail, source: LawSource::ClosedForm })
}

/// Closed-form law truncated where both the remaining mass and the
/// remaining first moment are below `tol`.
pub fn closed_law_adaptive(m: usize, t: f64, tol: f64) -> Result<BranchingLaw> {
    check_arity(m)?;
    check_time("time", t)?;
    if !(tol > 0.0) {
        return Err(Error::invalid("tolerance", "must be positive"));
    }
    let q = growth_ratio(m, t);
    let mut probs = Vec::new();
    let mut walker = ClosedTerms::new(m, t);
    loop {
        let p = walker.next_term();
        probs.push(p);
        let n = (probs.len() - 1) as f64;
        if q == 0.0 {
            break;
        }
        // successive ratios are at most q, so the rest is bounded geometrically
        let rest = p * q / (1.0 - q);
        let rest_moment = p * (n * q / (1.0 - q) + q / ((1.0 - q) * (1.0 - q)));
        if rest < tol && rest_moment < tol {
            break;
        }
    }
    let tail = (1.0 - probs.iter().copied().collect::<CompensatedSum>().value()).max(0.0);
    Ok(BranchingLaw { m, t, probs, tail, source: LawSource::ClosedForm })
}

/// Iterates `p_0(t), p_1(t), ...` of the closed form.
#[derive(Debug, Clone)]
pub(crate) struct ClosedTerms {
    m: usize,
    n: u64,
    ln_q: f64,
    base: f64,
    ln_coef: CompensatedSum,
}

impl ClosedTerms {
    pub(crate) fn new(m: usize, t: f64) -> Self {
        let q = growth_ratio(m, t);
        ClosedTerms { m, n: 0, ln_q: libm::log(q), base: -t, ln_coef: CompensatedSum::new() }
    }

    pub(crate) fn next_term(&mut self) -> f64 {
        let n = self.n;
        let p = if n == 0 {
            libm::exp(self.base)
        } else if self.ln_q == f64::NEG_INFINITY {
            0.0
        } else {
            libm::exp(self.base + n as f64 * self.ln_q + self.ln_coef.value())
        };
        self.ln_coef.add(ln_coefficient_factor(self.m, n));
        self.n += 1;
        p
    }
}

/// Integrates the forward equations of a pure-birth chain started at 0.
///
/// `rates[n]` is the jump rate out of state `n`; mass leaving the last
/// state collects in the returned tail. Classical fourth-order Runge–Kutta
/// with `ceil(t/step)` equal steps, refined if needed so that
/// `step · max_rate ≤ 0.5`.
pub fn pure_birth_forward(rates: &[f64], t: f64, step: f64) -> Result<(Vec<f64>, f64)> {
    check_time("time", t)?;
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::invalid("step", alloc::format!("must be positive, got {step}")));
    }
    if rates.is_empty() {
        return Err(Error::invalid("rates", "need at least one state"));
    }
    if rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
        return Err(Error::invalid("rates", "must be finite and non-negative"));
    }
    let states = rates.len();
    // state `states` is the absorbing tail
    let mut p = vec![0.0; states + 1];
    p[0] = 1.0;
    if t == 0.0 {
        p.pop();
        return Ok((p, 0.0));
    }
    let max_rate = rates.iter().copied().fold(0.0, f64::max);
    let mut h = step;
    if max_rate * h > MAX_STEP_RATE {
        h = MAX_STEP_RATE / max_rate;
    }
    let steps = libm::ceil(t / h - 1e-9).max(1.0) as usize;
    let h = t / steps as f64;

    let deriv = |p: &[f64], out: &mut [f64]| {
        let mut inflow = 0.0;
        for n in 0..states {
            let outflow = rates[n] * p[n];
            out[n] = inflow - outflow;
            inflow = outflow;
        }
        out[states] = inflow;
    };
    let mut k1 = vec![0.0; states + 1];
    let mut k2 = vec![0.0; states + 1];
    let mut k3 = vec![0.0; states + 1];
    let mut k4 = vec![0.0; states + 1];
    let mut tmp = vec![0.0; states + 1];
    for _ in 0..steps {
        deriv(&p, &mut k1);
        for i in 0..=states {
            tmp[i] = p[i] + 0.5 * h * k1[i];
        }
        deriv(&tmp, &mut k2);
        for i in 0..=states {
            tmp[i] = p[i] + 0.5 * h * k2[i];
        }
        deriv(&tmp, &mut k3);
        for i in 0..=states {
            tmp[i] = p[i] + h * k3[i];
        }
        deriv(&tmp, &mut k4);
        for i in 0..=states {
            p[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    let tail = p.pop().unwrap_or(0.0).max(0.0);
    Ok((p, tail))
}

/// The limiting law by integrating `dp(n)/dt = L_{n−1} p(n−1) − L_n p(n)`.
pub fn p_kolmogorov(m: usize, n_max: usize, t: f64, step: f64) -> Result<BranchingLaw> {
    check_arity(m)?;
    if n_max < 1 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::invalid("step", alloc::format!("must lie in (0, 0.1], got {step}")));
    }
    let rates: Vec<f64> = (0..=n_max as u64).map(|n| lines(m, n) as f64).collect();
    let (probs, tail) = pure_birth_forward(&rates, t, step)?;
    Ok(BranchingLaw { m, t, probs, tail, source: LawSource::Kolmogorov })
}

/// Finite-population branching rate `λ_{N,n}`.
pub fn lambda_finite(m: usize, n: u64, population: u64) -> Result<f64> {
    check_arity(m)?;
    if population < m as u64 {
        return Err(Error::invalid(
            "population",
            alloc::format!("need at least m = {m} agents, got {population}"),
        ));
    }
    let l = lines(m, n);
    if l > population {
        return Err(Error::PopulationTooSmall { branching: l, population });
    }
    Ok(finite_rate(m, l, population))
}

fn finite_rate(m: usize, l: u64, population: u64) -> f64 {
    // C(N−L, m−1)/C(N−1, m−1) = ∏_{i<m−1} (N−L−i)/(N−1−i); the first
    // vanishing factor stops the product before any goes negative
    let free = population - l;
    let mut ratio = 1.0;
    for i in 0..(m as u64 - 1) {
        if free <= i {
            return 0.0;
        }
        ratio *= (free - i) as f64 / (population - 1 - i) as f64;
    }
    l as f64 * ratio
}

fn check_population(m: usize, population: u64) -> Result<()> {
    if population < m as u64 {
        return Err(Error::invalid(
            "population",
            alloc::format!("need at least m = {m} agents, got {population}"),
        ));
    }
    Ok(())
}

/// Finite-population law `p_{N,n}(t)`. States whose line count exceeds the
/// population are unreachable; the chain is absorbed before them.
pub fn p_finite_n(m: usize, population: u64, n_max: usize, t: f64, step: f64) -> Result<BranchingLaw> {
    check_arity(m)?;
    check_population(m, population)?;
    if n_max < 1 {
        return Err(Error::invalid("n_max", "must be at least 1"));
    }
    if !(step > 0.0 && step <= 0.1) {
        return Err(Error::invalid("step", alloc::format!("must lie in (0, 0.1], got {step}")));
    }
    let rates: Vec<f64> = (0..=n_max as u64)
        .map(|n| {
            let l = lines(m, n);
            if l > population {
                0.0
            } else {
                finite_rate(m, l, population)
            }
        })
        .collect();
    let (probs, tail) = pure_birth_forward(&rates, t, step)?;
    Ok(BranchingLaw { m, t, probs, tail, source: LawSource::FiniteN(population) })
}

/// Geometric law `e^{−mt}(1 − e^{−mt})^n` of the chain with rates `m(n+1)`,
/// which dominates both the limiting and the finite-population laws.
pub fn geometric_dominating(m: usize, n: u64, t: f64) -> Result<f64> {
    check_arity(m)?;
    check_time("time", t)?;
    let mt = m as f64 * t;
    let q = -libm::expm1(-mt);
    Ok(libm::exp(-mt) * libm::pow(q, n as f64))
}

pub fn geometric_law(m: usize, t: f64, n_max: usize) -> Result<BranchingLaw> {
    check_arity(m)?;
    check_time("time", t)?;
    let q = -libm::expm1(-(m as f64) * t);
    let probs = (0..=n_max as u64).map(|n| geometric_dominating(m, n, t)).collect::<Result<Vec<_>>>()?;
    let tail = libm::pow(q, (n_max + 1) as f64);
    Ok(BranchingLaw { m, t, probs, tail, source: LawSource::GeometricBound })
}

/// Smallest `n_max` whose geometric-law tail is below `tol`.
pub fn geometric_cutoff(m: usize, t: f64, tol: f64) -> usize {
    let q = -libm::expm1(-(m as f64) * t);
    if q <= 0.0 {
        return 1;
    }
    let n = libm::ceil(libm::log(tol) / libm::log(q));
    (n.max(1.0) as usize).max(1)
}

/// Expected number of redundant meetings per unit time when the tagged
/// history holds `L` lines: each pair of lines lies in `C(N−2, m−2)` of the
/// `C(N, m)` groups, met at total rate `N/m`, giving
/// `(m−1) C(L,2) / (N−1)`. For `m = 2` the pair count is exact.
pub fn redundancy_rate(m: usize, population: u64, n: u64) -> f64 {
    let l = lines(m, n) as f64;
    (m - 1) as f64 * l * (l - 1.0) / (2.0 * (population - 1) as f64)
}

/// Upper bound on the mean number of redundant lines in a tagged history
/// up to time `t`.
///
/// The line count only grows, so the rate at time `t` bounds the rate at
/// every earlier time and the expected count is at most
/// `t · Σ_n rate(n) p_{N,n}(t)`. Terms past `n_max` are bounded with the
/// dominating geometric law.
pub fn redundant_mean_bound(m: usize, population: u64, t: f64, n_max: usize) -> Result<f64> {
    check_arity(m)?;
    check_population(m, population)?;
    check_time("time", t)?;
    if t == 0.0 {
        return Ok(0.0);
    }
    let law = p_finite_n(m, population, n_max, t, DEFAULT_STEP)?;
    let mut sum: CompensatedSum = law
        .probs
        .iter()
        .enumerate()
        .map(|(n, p)| redundancy_rate(m, population, n as u64) * p)
        .collect();
    // the rate grows polynomially and the geometric law decays geometrically
    let q = -libm::expm1(-(m as f64) * t);
    let mut n = n_max as u64 + 1;
    let mut p = geometric_dominating(m, n, t)?;
    loop {
        let term = redundancy_rate(m, population, n) * p;
        sum.add(term);
        if term < 1e-18 * sum.value().max(1e-300) || p == 0.0 {
            break;
        }
        n += 1;
        p *= q;
    }
    Ok(t * sum.value())
}
