//! Ordered m-ary interaction trees.
//!
//! A tree is stored as its growth history: node `k` (birth index `k`) was
//! created by expanding leaf `history[k]` of the tree with `k` nodes. Leaves
//! are numbered as *lines*:
//!
//! * the single leaf of the empty tree is line `0`;
//! * expanding line `l` at step `k` keeps `l` as child slot 0 of the new
//!   node and appends lines `1 + (m−1)k, ..., (m−1)(k+1)` as child slots
//!   `1..m`.
//!
//! So a tree with `k` nodes always has leaves `0..(m−1)k+1`, every history
//! with `history[k] < (m−1)k+1` is a valid tree, and two trees are equal iff
//! their histories are. Birth order follows the backward-in-time reading of
//! an interaction history: node 0 is the most recent interaction (the root),
//! higher birth indices lie further in the past.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigUint;
use num_traits::{One, ToPrimitive};
use rand::Rng;

use crate::error::check_arity;
use crate::{Error, Result};

/// Default upper bound on the number of trees [`enumerate_trees`] returns.
pub const DEFAULT_ENUMERATION_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OrderedTree {
    arity: usize,
    history: Vec<u32>,
}

/// One internal node: its birth index and the leaf (line) it expanded.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeRecord {
    pub birth_index: usize,
    pub parent_slot: u32,
}

impl OrderedTree {
    /// The tree with no interaction: a single leaf.
    pub fn leaf(arity: usize) -> Result<Self> {
        check_arity(arity)?;
        Ok(OrderedTree { arity, history: Vec::new() })
    }

    pub fn from_history(arity: usize, history: Vec<u32>) -> Result<Self> {
        check_arity(arity)?;
        for (k, &l) in history.iter().enumerate() {
            if l as u64 >= leaves_after(arity, k) {
                return Err(Error::invalid(
                    "tree history",
                    alloc::format!("step {k} expands leaf {l} but only {} leaves exist", leaves_after(arity, k)),
                ));
            }
        }
        Ok(OrderedTree { arity, history })
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn history(&self) -> &[u32] {
        &self.history
    }

    pub fn node_count(&self) -> usize {
        self.history.len()
    }

    pub fn leaf_count(&self) -> usize {
        (self.arity - 1) * self.history.len() + 1
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeRecord> + '_ {
        self.history
            .iter()
            .enumerate()
            .map(|(birth_index, &parent_slot)| NodeRecord { birth_index, parent_slot })
    }

    /// Lines feeding node `k`, in child-slot order.
    pub fn child_lines(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        let first_new = 1 + (self.arity - 1) * k;
        core::iter::once(self.history[k] as usize).chain(first_new..first_new + self.arity - 1)
    }

    /// Parent node of every node (`None` for the root).
    pub fn parents(&self) -> Vec<Option<usize>> {
        let mut owner: Vec<Option<usize>> = vec![None; self.leaf_count()];
        let mut parents = Vec::with_capacity(self.node_count());
        for k in 0..self.node_count() {
            let l = self.history[k] as usize;
            parents.push(owner[l]);
            for line in self.child_lines(k).collect::<Vec<_>>() {
                owner[line] = Some(k);
            }
        }
        parents
    }
}

fn leaves_after(m: usize, k: usize) -> u64 {
    (m as u64 - 1) * k as u64 + 1
}

/// Number of ordered trees with `n` nodes, `∏_{k=1}^{n−1} ((m−1)k + 1)`.
pub fn count_trees(m: usize, n: usize) -> Result<BigUint> {
    check_arity(m)?;
    let mut count = BigUint::one();
    for k in 1..n {
        count *= leaves_after(m, k);
    }
    Ok(count)
}

/// All ordered trees with `n` nodes, sorted lexicographically by history.
pub fn enumerate_trees(m: usize, n: usize, cap: u64) -> Result<Vec<OrderedTree>> {
    let count = count_trees(m, n)?;
    let total = match count.to_u64() {
        Some(c) if c <= cap => c as usize,
        _ => return Err(Error::CapExceeded { count, cap }),
    };
    let mut out = Vec::with_capacity(total);
    let mut digits = vec![0u32; n];
    loop {
        out.push(OrderedTree { arity: m, history: digits.clone() });
        // odometer with radix (m−1)k+1 at position k, last position fastest
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(out);
            }
            pos -= 1;
            digits[pos] += 1;
            if (digits[pos] as u64) < leaves_after(m, pos) {
                break;
            }
            digits[pos] = 0;
        }
    }
}

/// Uniform draw among the `#_m(n)` ordered trees with `n` nodes, built by
/// `n` successive uniform leaf expansions.
pub fn sample_tree<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<OrderedTree> {
    check_arity(m)?;
    let history = (0..n).map(|k| rng.random_range(0..leaves_after(m, k)) as u32).collect();
    Ok(OrderedTree { arity: m, history })
}

/// The `m` subtrees hanging from the root plus the order in which their
/// nodes were born.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Decomposition {
    pub subtrees: Vec<OrderedTree>,
    /// `interleaving[k]` is the subtree owning node `k + 1` of the original tree.
    pub interleaving: Vec<u32>,
}

impl Decomposition {
    pub fn node_counts(&self) -> Vec<usize> {
        self.subtrees.iter().map(OrderedTree::node_count).collect()
    }
}

/// Splits a tree at its first node. Subtree birth indices keep their
/// relative order and are relabeled contiguously from 0.
pub fn decompose(tree: &OrderedTree) -> Result<Decomposition> {
    if tree.node_count() == 0 {
        return Err(Error::EmptyTree);
    }
    let m = tree.arity;
    // line -> (subtree, local line)
    let mut map: Vec<(u32, u32)> = (0..m as u32).map(|j| (j, 0)).collect();
    let mut histories: Vec<Vec<u32>> = vec![Vec::new(); m];
    let mut leaves = vec![1u32; m];
    let mut interleaving = Vec::with_capacity(tree.node_count() - 1);
    for &l in &tree.history[1..] {
        let (j, local) = map[l as usize];
        let j_idx = j as usize;
        histories[j_idx].push(local);
        for i in 0..(m as u32 - 1) {
            map.push((j, leaves[j_idx] + i));
        }
        leaves[j_idx] += m as u32 - 1;
        interleaving.push(j);
    }
    let subtrees = histories
        .into_iter()
        .map(|history| OrderedTree { arity: m, history })
        .collect();
    Ok(Decomposition { subtrees, interleaving })
}

/// Inverse of [`decompose`]: grafts the subtrees under a new first node.
pub fn recompose(d: &Decomposition) -> Result<OrderedTree> {
    let m = d.subtrees.len();
    check_arity(m)?;
    if let Some(bad) = d.subtrees.iter().find(|s| s.arity != m) {
        return Err(Error::ArityMismatch { expected: m, got: bad.arity });
    }
    let expected: usize = d.subtrees.iter().map(OrderedTree::node_count).sum();
    if expected != d.interleaving.len() {
        return Err(Error::invalid(
            "decomposition",
            alloc::format!("{} interleaving entries for {expected} subtree nodes", d.interleaving.len()),
        ));
    }
    let mut local_to_global: Vec<Vec<u32>> = (0..m as u32).map(|j| vec![j]).collect();
    let mut next = vec![0usize; m];
    let mut history = Vec::with_capacity(expected + 1);
    history.push(0);
    for (step, &j) in d.interleaving.iter().enumerate() {
        let j = j as usize;
        let sub = d.subtrees.get(j).ok_or_else(|| Error::invalid("decomposition", "subtree index out of range"))?;
        let local = *sub.history.get(next[j]).ok_or_else(|| {
            Error::invalid("decomposition", "interleaving references more nodes than the subtree has")
        })?;
        next[j] += 1;
        history.push(local_to_global[j][local as usize]);
        let k = step + 1;
        let first_new = 1 + (m - 1) * k;
        local_to_global[j].extend((first_new..first_new + m - 1).map(|g| g as u32));
    }
    Ok(OrderedTree { arity: m, history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{substream, Purpose};
    use alloc::collections::BTreeMap;
    use proptest::prelude::*;

    fn product_formula(m: u128, n: u128) -> u128 {
        (1..n).map(|k| (m - 1) * k + 1).product()
    }

    #[test]
    fn count_examples() {
        assert_eq!(count_trees(2, 0).unwrap(), BigUint::from(1u32));
        assert_eq!(count_trees(2, 4).unwrap(), BigUint::from(24u32));
        assert_eq!(count_trees(3, 3).unwrap(), BigUint::from(15u32));
        assert_eq!(count_trees(4, 2).unwrap(), BigUint::from(4u32));
        assert_eq!(count_trees(1, 3), Err(Error::InvalidArity(1)));
    }

    #[test]
    fn count_overflows_u64_at_21_binary_nodes() {
        // #_2(n) = n!
        let c = count_trees(2, 21).unwrap();
        assert!(c > BigUint::from(i64::MAX as u64));
        assert_eq!(c.to_u128().unwrap(), product_formula(2, 21));
    }

    #[test]
    fn count_recurrence() {
        for m in 2..=5 {
            for n in 1..15 {
                let lhs = count_trees(m, n).unwrap();
                let rhs = count_trees(m, n - 1).unwrap() * ((n as u64 - 1) * (m as u64 - 1) + 1);
                assert_eq!(lhs, rhs);
            }
        }
    }

    #[test]
    fn enumerate_small_cases() {
        let one = enumerate_trees(2, 1, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(one, vec![OrderedTree::from_history(2, vec![0]).unwrap()]);

        let two = enumerate_trees(2, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        assert_eq!(two.len(), 2);
        assert_eq!(two[0].history(), &[0, 0]);
        assert_eq!(two[1].history(), &[0, 1]);

        let three = enumerate_trees(3, 2, DEFAULT_ENUMERATION_CAP).unwrap();
        let hs: Vec<_> = three.iter().map(|t| t.history().to_vec()).collect();
        assert_eq!(hs, vec![vec![0, 0], vec![0, 1], vec![0, 2]]);

        assert_eq!(enumerate_trees(3, 0, 10).unwrap(), vec![OrderedTree::leaf(3).unwrap()]);
    }

    #[test]
    fn enumerate_respects_cap() {
        let err = enumerate_trees(2, 10, 1000).unwrap_err();
        assert_eq!(err, Error::CapExceeded { count: BigUint::from(3_628_800u32), cap: 1000 });
        assert!(err.is_budget());
    }

    #[test]
    fn enumeration_is_sorted_distinct_and_complete() {
        for (m, n) in [(2, 5), (3, 4), (4, 3)] {
            let trees = enumerate_trees(m, n, DEFAULT_ENUMERATION_CAP).unwrap();
            assert_eq!(trees.len() as u128, product_formula(m as u128, n as u128));
            assert!(trees.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn tree_invariants() {
        for t in enumerate_trees(3, 4, DEFAULT_ENUMERATION_CAP).unwrap() {
            assert_eq!(t.leaf_count(), 2 * 4 + 1);
            let parents = t.parents();
            assert_eq!(parents[0], None);
            for (k, p) in parents.iter().enumerate().skip(1) {
                assert!(p.unwrap() < k);
            }
            // every node has m children: count of (parent, slot) pairs
            let mut children = vec![0usize; t.node_count()];
            for p in parents.iter().flatten() {
                children[*p] += 1;
            }
            // children that are nodes plus children that are leaves = m per node
            let leaf_children: usize = t.leaf_count();
            assert_eq!(children.iter().sum::<usize>() + leaf_children, 3 * t.node_count());
        }
    }

    #[test]
    fn from_history_rejects_out_of_range() {
        assert!(OrderedTree::from_history(2, vec![0, 2]).is_err());
        assert!(OrderedTree::from_history(2, vec![0, 1, 2]).is_ok());
    }

    #[test]
    fn leaf_sample_is_single_leaf() {
        let mut rng = substream(1, Purpose::MuSample, 0);
        let t = sample_tree(4, 0, &mut rng).unwrap();
        assert_eq!(t.leaf_count(), 1);
        assert_eq!(t.node_count(), 0);
    }

    #[test]
    fn sampling_frequencies_look_uniform() {
        let mut rng = substream(11, Purpose::MuSample, 0);
        let mut counts: BTreeMap<Vec<u32>, usize> = BTreeMap::new();
        let draws = 10_000;
        for _ in 0..draws {
            let t = sample_tree(3, 2, &mut rng).unwrap();
            *counts.entry(t.history().to_vec()).or_default() += 1;
        }
        assert_eq!(counts.len(), 3);
        let expected = draws as f64 / 3.0;
        let chi2: f64 = counts.values().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        // df = 2, 0.999 quantile
        assert!(chi2 < 13.816, "chi2 = {chi2}");
    }

    #[test]
    fn decompose_one_node() {
        let t = OrderedTree::from_history(3, vec![0]).unwrap();
        let d = decompose(&t).unwrap();
        assert_eq!(d.subtrees, vec![OrderedTree::leaf(3).unwrap(); 3]);
        assert!(d.interleaving.is_empty());
        assert_eq!(decompose(&OrderedTree::leaf(3).unwrap()), Err(Error::EmptyTree));
    }

    #[test]
    fn decompose_hand_example() {
        // m=2: root, then expand line 1 (right child, creates line 2), then
        // line 0 (left child, creates line 3), then line 3
        let t = OrderedTree::from_history(2, vec![0, 1, 0, 3]).unwrap();
        let d = decompose(&t).unwrap();
        assert_eq!(d.interleaving, vec![1, 0, 0]);
        assert_eq!(d.subtrees[0].history(), &[0, 1]);
        assert_eq!(d.subtrees[1].history(), &[0]);
        assert_eq!(recompose(&d).unwrap(), t);
    }

    #[test]
    fn multinomial_decomposition_count() {
        // over all 6 binary trees with 3 nodes, group by (i_1, i_2)
        let trees = enumerate_trees(2, 3, DEFAULT_ENUMERATION_CAP).unwrap();
        let mut groups: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
        for t in &trees {
            *groups.entry(decompose(t).unwrap().node_counts()).or_default() += 1;
        }
        // C(2,i) #_2(i) #_2(2−i)
        assert_eq!(groups[&vec![0, 2]], 2);
        assert_eq!(groups[&vec![1, 1]], 2);
        assert_eq!(groups[&vec![2, 0]], 2);
        assert_eq!(groups.values().sum::<usize>(), 6);
    }

    proptest! {
        #[test]
        fn decompose_recompose_roundtrip(m in 2usize..5, n in 1usize..12, seed in any::<u64>()) {
            let mut rng = substream(seed, Purpose::MuSample, 0);
            let t = sample_tree(m, n, &mut rng).unwrap();
            let d = decompose(&t).unwrap();
            prop_assert_eq!(d.node_counts().iter().sum::<usize>(), n - 1);
            prop_assert_eq!(recompose(&d).unwrap(), t);
        }
    }
}
