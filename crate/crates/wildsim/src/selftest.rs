//! Invariant suites at moderate size. Every suite writes a CSV of its raw
//! numbers; nothing time-dependent goes into the files, so two runs with the
//! same seed produce identical bytes.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use wildsim_core::branching::{
    closed_law, closed_law_adaptive, closed_mean, p_closed, p_finite_n, p_kolmogorov, redundant_mean_bound, DEFAULT_STEP,
};
use wildsim_core::econo::{self, FixedPointOptions};
use wildsim_core::exec::Executor;
use wildsim_core::kernels::{Kernel, WeightSpec};
use wildsim_core::particle::{ks_distance, redundant_stats, tagged_law, SimConfig};
use wildsim_core::rng::{child_seed, substream, Purpose};
use wildsim_core::stats::{ks_p_value, MeanAccumulator};
use wildsim_core::trees::{count_trees, enumerate_trees, sample_tree, DEFAULT_ENUMERATION_CAP};
use wildsim_core::wildsum::{cauchy_residual, default_panel, draw_mu_t, Base, SampleEnsemble, WildSum};

use crate::error::{CliError, CliResult};
use crate::io::{num, Table};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SelftestReport {
    pub checks: Vec<Check>,
}

impl SelftestReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.passed).count()
    }

    /// Fixed-width pass/fail table.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(5).max(5);
        let mut s = String::new();
        let _ = writeln!(s, "{:<width$}  result  detail", "check");
        for c in &self.checks {
            let _ = writeln!(s, "{:<width$}  {:<6}  {}", c.name, if c.passed { "pass" } else { "FAIL" }, c.detail);
        }
        s
    }
}

struct Suite<'a> {
    dir: &'a Path,
    report: SelftestReport,
}

impl Suite<'_> {
    fn record(&mut self, name: &'static str, table: Table, passed: bool, detail: String) -> CliResult<()> {
        let path = self.dir.join(format!("{name}.csv"));
        fs::write(&path, table.to_csv_string()).map_err(|source| CliError::Io { path, source })?;
        self.report.checks.push(Check { name, passed, detail });
        Ok(())
    }
}

/// Runs every suite, writing `<suite>.csv` files and `summary.csv` to `dir`.
pub fn run<E: Executor>(seed: u64, dir: &Path, exec: &E) -> CliResult<SelftestReport> {
    fs::create_dir_all(dir).map_err(|source| CliError::Io { path: dir.to_path_buf(), source })?;
    let mut suite = Suite { dir, report: SelftestReport::default() };

    closed_vs_ode(&mut suite)?;
    normalization(&mut suite)?;
    tree_counts(&mut suite)?;
    tree_sampling(&mut suite, seed)?;
    finite_population(&mut suite)?;
    sum_variance(&mut suite, seed, exec)?;
    micro_macro(&mut suite, seed, exec)?;
    redundancy(&mut suite, seed, exec)?;
    residuals(&mut suite, seed, exec)?;
    econo_suite(&mut suite, seed, exec)?;

    let mut summary = Table::new(&["check", "passed", "detail"]);
    for c in &suite.report.checks {
        summary.push(vec![c.name.to_string(), c.passed.to_string(), c.detail.clone()]);
    }
    let path = dir.join("summary.csv");
    fs::write(&path, summary.to_csv_string()).map_err(|source| CliError::Io { path, source })?;
    Ok(suite.report)
}

fn closed_vs_ode(s: &mut Suite) -> CliResult<()> {
    let mut table = Table::new(&["m", "t", "max_abs_diff"]);
    let mut worst = 0.0f64;
    for m in 2..=4 {
        for t in [0.5, 1.0, 2.0, 3.0] {
            let ode = p_kolmogorov(m, 40, t, DEFAULT_STEP)?;
            let mut d = 0.0f64;
            for n in 0..=40u64 {
                d = d.max((p_closed(m, n, t)? - ode.probs[n as usize]).abs());
            }
            worst = worst.max(d);
            table.push(vec![m.to_string(), num(t), num(d)]);
        }
    }
    s.record("closed_vs_ode", table, worst < 1e-8, format!("max diff {worst:.2e}"))
}

fn normalization(s: &mut Suite) -> CliResult<()> {
    let mut table = Table::new(&["m", "t", "n_max", "tail", "mean_error"]);
    let mut ok = true;
    for m in 2..=4 {
        for t in [0.5, 1.0, 2.0, 3.0] {
            let law = closed_law_adaptive(m, t, 1e-10)?;
            let err = (law.truncated_mean() - closed_mean(m, t)).abs();
            ok &= law.tail < 1e-10 && err < 1e-8 && (law.total() - 1.0).abs() < 1e-12;
            table.push(vec![m.to_string(), num(t), law.n_max().to_string(), num(law.tail), num(err)]);
        }
    }
    s.record("normalization", table, ok, "tail < 1e-10, mean within 1e-8".into())
}

fn factorial(n: usize) -> u128 {
    (1..=n as u128).product()
}

fn tree_counts(s: &mut Suite) -> CliResult<()> {
    let mut table = Table::new(&["m", "n", "count", "enumerated", "multinomial"]);
    let mut ok = true;
    for m in 2..=4usize {
        for n in 1..=6usize {
            let count: u128 = count_trees(m, n)?.try_into().expect("small count");
            let enumerated = enumerate_trees(m, n, DEFAULT_ENUMERATION_CAP)?.len() as u128;
            let c = |i: usize| -> u128 { count_trees(m, i).expect("valid arity").try_into().expect("small count") };
            let mut multinomial = 0u128;
            let mut idx = vec![0usize; m];
            loop {
                if idx.iter().sum::<usize>() == n - 1 {
                    multinomial += idx.iter().fold(factorial(n - 1), |acc, &i| acc / factorial(i) * c(i));
                }
                match idx.iter().rposition(|&i| i < n - 1) {
                    Some(p) => {
                        idx[p] += 1;
                        idx[p + 1..].iter_mut().for_each(|i| *i = 0);
                    }
                    None => break,
                }
            }
            ok &= count == enumerated && count == multinomial;
            table.push(vec![m.to_string(), n.to_string(), count.to_string(), enumerated.to_string(), multinomial.to_string()]);
        }
    }
    s.record("tree_counts", table, ok, "product, enumeration and multinomial agree".into())
}

fn tree_sampling(s: &mut Suite, seed: u64) -> CliResult<()> {
    let draws = 20_000;
    let mut table = Table::new(&["m", "n", "trees", "chi2", "critical"]);
    let mut ok = true;
    // 0.001 upper quantiles of chi-square with 5, 2 and 14 degrees of freedom
    for (m, n, critical) in [(2usize, 3usize, 20.515), (3, 2, 13.816), (3, 3, 36.123)] {
        let trees = enumerate_trees(m, n, DEFAULT_ENUMERATION_CAP)?;
        let index: HashMap<Vec<u32>, usize> = trees.iter().enumerate().map(|(i, t)| (t.history().to_vec(), i)).collect();
        let mut counts = vec![0.0f64; trees.len()];
        let mut rng = substream(seed, Purpose::Selftest, (10 * m + n) as u64);
        for _ in 0..draws {
            counts[index[sample_tree(m, n, &mut rng)?.history()]] += 1.0;
        }
        let e = draws as f64 / trees.len() as f64;
        let chi2: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        ok &= chi2 < critical;
        table.push(vec![m.to_string(), n.to_string(), trees.len().to_string(), num(chi2), num(critical)]);
    }
    s.record("tree_sampling", table, ok, format!("{draws} draws per case, chi-square at 0.001"))
}

fn finite_population(s: &mut Suite) -> CliResult<()> {
    let mut table = Table::new(&["m", "population", "sup_distance"]);
    let mut ok = true;
    for m in [2, 3] {
        let limit = closed_law(m, 1.0, 300)?;
        let mut prev = f64::INFINITY;
        for pop in [100u64, 1000, 10_000] {
            let d = p_finite_n(m, pop, 300, 1.0, DEFAULT_STEP)?.sup_distance(&limit);
            ok &= d < prev;
            prev = d;
            table.push(vec![m.to_string(), pop.to_string(), num(d)]);
        }
        ok &= prev < 1e-2;
    }
    s.record("finite_population", table, ok, "strictly decreasing, < 1e-2 at N = 10^4".into())
}

/// Sample variance with the standard error of the variance estimator.
fn variance_estimate(values: &[f64]) -> (f64, f64) {
    let mean = values.iter().copied().collect::<MeanAccumulator>().mean();
    let n = values.len() as f64;
    let m2 = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
    (m2 * n / (n - 1.0), ((m4 - m2 * m2) / n).sqrt())
}

fn sum_variance<E: Executor>(s: &mut Suite, seed: u64, exec: &E) -> CliResult<()> {
    let mut table = Table::new(&["m", "variance", "stderr", "target"]);
    let mut ok = true;
    for m in [2usize, 3] {
        let cfg = WildSum::new(Kernel::Sum { m }, Base::Normal { mean: 0.0, sd: 1.0 })?;
        let draws = draw_mu_t(&cfg, 1.0, 20_000, child_seed(seed, m as u64), exec)?;
        let (v, se) = variance_estimate(draws.values());
        let target = ((m - 1) as f64).exp();
        ok &= (v - target).abs() < 4.0 * se;
        table.push(vec![m.to_string(), num(v), num(se), num(target)]);
    }
    s.record("sum_variance", table, ok, "variance within 4 se of e^{(m-1)t}".into())
}

fn micro_macro<E: Executor>(s: &mut Suite, seed: u64, exec: &E) -> CliResult<()> {
    let spec = WeightSpec::uniform(2, 0.0, 1.0)?;
    let base = Base::Exponential { rate: 1.0 };
    let sim = SimConfig::new(500, Kernel::Wealth(spec.clone()), base.clone(), 1.0, child_seed(seed, 20))?;
    let micro = tagged_law(&sim, 1.0, 2000, exec)?;
    let macro_ = draw_mu_t(&WildSum::new(Kernel::Wealth(spec), base)?, 1.0, 2000, child_seed(seed, 21), exec)?;
    let d = ks_distance(&micro, &macro_)?;
    let p = ks_p_value(d, micro.len(), macro_.len());
    let mut table = Table::new(&["population", "replicas", "samples", "ks", "p_value"]);
    table.push(vec!["500".into(), "2000".into(), "2000".into(), num(d), num(p)]);
    s.record("micro_macro", table, p > 1e-3, format!("KS {d:.4}, p {p:.3}"))
}

fn redundancy<E: Executor>(s: &mut Suite, seed: u64, exec: &E) -> CliResult<()> {
    let mut table = Table::new(&["population", "mean", "stderr", "tree_fraction", "bound"]);
    let mut ok = true;
    let mut prev = f64::INFINITY;
    for pop in [100usize, 400] {
        let cfg = SimConfig::new(pop, Kernel::Identity { m: 2 }, Base::PointMass(0.0), 1.0, child_seed(seed, 30))?;
        let st = redundant_stats(&cfg, 1.0, 4000, exec)?;
        let bound = redundant_mean_bound(2, pop as u64, 1.0, 200)?;
        ok &= st.mean <= bound && st.mean < prev;
        prev = st.mean;
        table.push(vec![pop.to_string(), num(st.mean), num(st.se), num(st.tree_fraction), num(bound)]);
    }
    s.record("redundancy", table, ok, "below the bound and decreasing in N".into())
}

fn residuals<E: Executor>(s: &mut Suite, seed: u64, exec: &E) -> CliResult<()> {
    let mut table = Table::new(&["kernel", "f", "residual", "stderr"]);
    let mut ok = true;
    let kernels = [
        (Kernel::Identity { m: 2 }, Base::Normal { mean: 0.0, sd: 1.0 }),
        (Kernel::Sum { m: 2 }, Base::Normal { mean: 0.0, sd: 1.0 }),
        (Kernel::Wealth(WeightSpec::uniform(2, 0.0, 1.0)?), Base::Exponential { rate: 1.0 }),
    ];
    for (i, (kernel, base)) in kernels.into_iter().enumerate() {
        let id = kernel.id();
        let cfg = WildSum::new(kernel, base)?;
        for r in cauchy_residual(&default_panel(), 1.0, 1e-2, &cfg, 20_000, child_seed(seed, 40 + i as u64), exec)? {
            ok &= r.residual < 5e-3 + 4.0 * r.se;
            table.push(vec![id.clone(), r.function.name(), num(r.residual), num(r.se)]);
        }
    }
    s.record("cauchy_residual", table, ok, "residual < 5e-3 + 4 se at t = 1".into())
}

fn econo_suite<E: Executor>(s: &mut Suite, seed: u64, exec: &E) -> CliResult<()> {
    let spec = WeightSpec::uniform(2, 0.0, 1.0)?;
    let eta = econo::eta(&spec)?;
    let e = econo::e_sequence(2, eta, 200)?;
    let p = econo::e_sequence_product(2, eta, 200)?;
    let paths_agree = e.iter().zip(&p).all(|(x, y)| (x - y).abs() <= 1e-14 * y);
    let hand = [2.0 / 3.0, 5.0 / 9.0, 40.0 / 81.0];
    let hand_ok = hand.iter().zip(&e[1..]).all(|(h, x)| (h - x).abs() < 1e-15);

    let init = SampleEnsemble::new(vec![1.0; 100])?;
    let opts = FixedPointOptions { ensemble_size: 20_000, max_iterations: 30, early_stop: false, ..Default::default() };
    let fp = econo::fixed_point(&spec, &init, &opts, child_seed(seed, 50), exec)?;
    let m2 = fp.ensemble.expect(|x| x * x);
    let m2_ok = m2.z_score(1.5) < 4.0;

    let mut table = Table::new(&["quantity", "value", "reference"]);
    table.push(vec!["eta".into(), num(eta), num(1.0 / 3.0)]);
    for (i, h) in hand.iter().enumerate() {
        table.push(vec![format!("e_{}", i + 1), num(e[i + 1]), num(*h)]);
    }
    table.push(vec!["e_200".into(), num(e[200]), num(p[200])]);
    table.push(vec!["gamma_second_moment".into(), num(m2.mean), num(1.5)]);
    s.record(
        "econo",
        table,
        paths_agree && hand_ok && m2_ok && (eta - 1.0 / 3.0).abs() < 1e-15,
        format!("M2 {:.4} vs 1.5 (se {:.4})", m2.mean, m2.se),
    )
}
