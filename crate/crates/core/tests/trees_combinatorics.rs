use std::collections::HashMap;

use num_bigint::BigUint;
use num_traits::One;
use proptest::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use wildsim_core::rng::{substream, Purpose};
use wildsim_core::trees::{count_trees, decompose, enumerate_trees, recompose, sample_tree, DEFAULT_ENUMERATION_CAP};

fn factorial(n: usize) -> BigUint {
    (1..=n as u64).fold(BigUint::one(), |acc, k| acc * k)
}

/// `#_m(n+1) = Σ_{i_1+…+i_m=n} n!/(i_1!…i_m!) · #_m(i_1)…#_m(i_m)`.
fn multinomial_count(m: usize, n: usize) -> BigUint {
    let mut total = BigUint::default();
    let mut idx = vec![0usize; m];
    loop {
        if idx.iter().sum::<usize>() == n {
            let mut term = factorial(n);
            for &i in &idx {
                term = term / factorial(i) * count_trees(m, i).unwrap();
            }
            total += term;
        }
        let mut pos = m;
        loop {
            if pos == 0 {
                return total;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] <= n {
                break;
            }
            idx[pos] = 0;
        }
    }
}

#[test]
fn counts_satisfy_product_and_multinomial_identities() {
    for m in 2..=4usize {
        for n in 0..=8usize {
            let c = count_trees(m, n).unwrap();
            let product = (1..n as u64).fold(BigUint::one(), |acc, k| acc * ((m as u64 - 1) * k + 1));
            assert_eq!(c, product, "m={m} n={n}");
            if n >= 1 {
                assert_eq!(c, multinomial_count(m, n - 1), "m={m} n={n}");
            }
        }
    }
}

#[test]
fn enumeration_lengths_match_counts() {
    for m in 2..=4usize {
        for n in 0..=6usize {
            let trees = enumerate_trees(m, n, DEFAULT_ENUMERATION_CAP).unwrap();
            assert_eq!(BigUint::from(trees.len()), count_trees(m, n).unwrap());
        }
    }
}

#[test]
fn decomposition_groups_follow_the_multinomial() {
    // trees grouped by subtree sizes have size n!/∏i! · ∏#(i)
    let (m, n) = (3usize, 5usize);
    let mut groups: HashMap<Vec<usize>, u64> = HashMap::new();
    for t in enumerate_trees(m, n, DEFAULT_ENUMERATION_CAP).unwrap() {
        *groups.entry(decompose(&t).unwrap().node_counts()).or_default() += 1;
    }
    for (sizes, count) in groups {
        let mut expect = factorial(n - 1);
        for &i in &sizes {
            expect = expect / factorial(i) * count_trees(m, i).unwrap();
        }
        assert_eq!(BigUint::from(count), expect, "{sizes:?}");
    }
}

#[test]
fn sampling_is_uniform() {
    let draws = 100_000;
    for (m, n) in [(2usize, 3usize), (3, 2), (3, 3)] {
        let trees = enumerate_trees(m, n, DEFAULT_ENUMERATION_CAP).unwrap();
        let index: HashMap<Vec<u32>, usize> =
            trees.iter().enumerate().map(|(i, t)| (t.history().to_vec(), i)).collect();
        let mut counts = vec![0f64; trees.len()];
        let mut rng = substream(31, Purpose::Selftest, (m * 10 + n) as u64);
        for _ in 0..draws {
            counts[index[sample_tree(m, n, &mut rng).unwrap().history()]] += 1.0;
        }
        let e = draws as f64 / trees.len() as f64;
        let chi2: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        let p = 1.0 - ChiSquared::new((trees.len() - 1) as f64).unwrap().cdf(chi2);
        assert!(p > 0.001, "(m,n)=({m},{n}) chi2={chi2} p={p}");
    }
}

proptest! {
    #[test]
    fn sampled_trees_are_well_formed(m in 2usize..6, n in 0usize..40, seed in any::<u64>()) {
        let mut rng = substream(seed, Purpose::Selftest, 0);
        let t = sample_tree(m, n, &mut rng).unwrap();
        prop_assert_eq!(t.node_count(), n);
        prop_assert_eq!(t.leaf_count(), (m - 1) * n + 1);
        for (k, &l) in t.history().iter().enumerate() {
            prop_assert!((l as usize) < (m - 1) * k + 1);
        }
        let parents = t.parents();
        prop_assert!(parents.first().map_or(true, Option::is_none));
        for (k, p) in parents.iter().enumerate().skip(1) {
            prop_assert!(p.unwrap() < k);
        }
    }

    #[test]
    fn recompose_inverts_decompose(m in 2usize..5, n in 1usize..20, seed in any::<u64>()) {
        let mut rng = substream(seed, Purpose::Selftest, 1);
        let t = sample_tree(m, n, &mut rng).unwrap();
        prop_assert_eq!(recompose(&decompose(&t).unwrap()).unwrap(), t);
    }
}
