//! Small statistics toolkit: compensated sums, mean estimates and the
//! two-sample Kolmogorov–Smirnov distance.

use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::{Error, Result};

/// Neumaier-compensated summation.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if libm::fabs(self.sum) >= libm::fabs(x) {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl Estimate {
    /// Number of standard errors separating the estimate from `target`.
    /// Zero-variance estimates count as exact.
    pub fn z_score(&self, target: f64) -> f64 {
        let diff = libm::fabs(self.mean - target);
        if self.se > 0.0 {
            diff / self.se
        } else if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Streaming mean/variance (Welford). Pushing values in the same order
/// always yields bit-identical results.
#[derive(Debug, Clone, Copy, Default)]
pub struct MeanAccumulator {
    n: usize,
    mean: f64,
    m2: f64,
}

impl MeanAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    pub fn count(&self) -> usize {
        self.n
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    /// Unbiased sample variance.
    pub fn variance(&self) -> f64 {
        if self.n < 2 {
            0.0
        } else {
            self.m2 / (self.n - 1) as f64
        }
    }

    pub fn estimate(&self) -> Estimate {
        let se = if self.n < 2 { 0.0 } else { libm::sqrt(self.variance() / self.n as f64) };
        Estimate { mean: self.mean, se, n: self.n }
    }
}

impl FromIterator<f64> for MeanAccumulator {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut acc = MeanAccumulator::new();
        for x in iter {
            acc.push(x);
        }
        acc
    }
}

fn total_cmp(a: &(f64, f64), b: &(f64, f64)) -> Ordering {
    a.0.total_cmp(&b.0)
}

/// Two-sample Kolmogorov–Smirnov statistic between weighted samples.
///
/// `weights` default to uniform when `None`; they are normalized internally.
/// Ties are handled by advancing both empirical CDFs past equal values
/// before comparing.
pub fn ks_statistic(
    a: &[f64],
    wa: Option<&[f64]>,
    b: &[f64],
    wb: Option<&[f64]>,
) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let pack = |xs: &[f64], ws: Option<&[f64]>| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = match ws {
            Some(w) => {
                let total: f64 = w.iter().copied().collect::<CompensatedSum>().value();
                xs.iter().zip(w).map(|(&x, &w)| (x, w / total)).collect()
            }
            None => {
                let w = 1.0 / xs.len() as f64;
                xs.iter().map(|&x| (x, w)).collect()
            }
        };
        v.sort_by(total_cmp);
        v
    };
    let a = pack(a, wa);
    let b = pack(b, wb);

    let (mut i, mut j) = (0, 0);
    let (mut fa, mut fb) = (0.0f64, 0.0f64);
    let mut d = 0.0f64;
    while i < a.len() || j < b.len() {
        let x = match (a.get(i), b.get(j)) {
            (Some(p), Some(q)) => p.0.min(q.0),
            (Some(p), None) => p.0,
            (None, Some(q)) => q.0,
            (None, None) => break,
        };
        while i < a.len() && a[i].0 == x {
            fa += a[i].1;
            i += 1;
        }
        while j < b.len() && b[j].0 == x {
            fb += b[j].1;
            j += 1;
        }
        d = d.max(libm::fabs(fa - fb));
    }
    Ok(d.min(1.0))
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        // the alternating series converges slowly here; the value is 1 to
        // double precision anyway
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=200u32 {
        let kf = k as f64;
        let term = libm::exp(-2.0 * kf * kf * lambda * lambda);
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Asymptotic p-value of a two-sample KS statistic with sample sizes `n1`, `n2`.
pub fn ks_p_value(d: f64, n1: usize, n2: usize) -> f64 {
    let ne = (n1 as f64 * n2 as f64) / (n1 + n2) as f64;
    let sq = libm::sqrt(ne);
    kolmogorov_survival((sq + 0.12 + 0.11 / sq) * d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-17);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-16).abs() < 1e-30);
    }

    #[test]
    fn welford_matches_two_pass() {
        let xs = [1.0, 4.0, 2.5, -3.0, 7.25];
        let acc: MeanAccumulator = xs.iter().copied().collect();
        let mean = xs.iter().sum::<f64>() / 5.0;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / 4.0;
        assert!((acc.mean() - mean).abs() < 1e-14);
        assert!((acc.variance() - var).abs() < 1e-12);
    }

    #[test]
    fn ks_identical_and_disjoint() {
        let a = vec![0.3, 1.0, -2.0, 5.0];
        assert_eq!(ks_statistic(&a, None, &a, None).unwrap(), 0.0);
        assert_eq!(ks_statistic(&[0.0], None, &[1.0], None).unwrap(), 1.0);
        assert_eq!(ks_statistic(&[], None, &[1.0], None), Err(Error::EmptyEnsemble));
    }

    #[test]
    fn ks_handles_ties() {
        // same law, different multiplicities
        let a = [0.0, 0.0, 1.0, 1.0];
        let b = [0.0, 1.0];
        assert_eq!(ks_statistic(&a, None, &b, None).unwrap(), 0.0);
        let w = [3.0, 1.0];
        let d = ks_statistic(&b, Some(&w), &b, None).unwrap();
        assert!((d - 0.25).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_survival_reference_values() {
        // classical critical values: P(K > 1.358) ≈ 0.05, P(K > 1.628) ≈ 0.01
        assert!((kolmogorov_survival(1.358) - 0.05).abs() < 5e-4);
        assert!((kolmogorov_survival(1.628) - 0.01).abs() < 2e-4);
        assert_eq!(kolmogorov_survival(0.0), 1.0);
    }
}
