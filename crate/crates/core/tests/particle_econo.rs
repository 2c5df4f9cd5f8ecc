use proptest::prelude::*;
use wildsim_core::econo::{fixed_point, FixedPointOptions};
use wildsim_core::exec::Sequential;
use wildsim_core::kernels::{Kernel, WeightSpec};
use wildsim_core::particle::{history_graph, ks_distance, redundant_stats, run, SimConfig};
use wildsim_core::wildsum::{Base, SampleEnsemble};

#[test]
fn tree_histories_become_typical_as_population_grows() {
    let fractions: Vec<f64> = [250usize, 1000, 4000]
        .iter()
        .map(|&n| {
            let cfg = SimConfig::new(n, Kernel::Identity { m: 2 }, Base::PointMass(0.0), 1.0, 21).unwrap();
            redundant_stats(&cfg, 1.0, 4000, &Sequential).unwrap().tree_fraction
        })
        .collect();
    assert!(fractions[0] < fractions[1] && fractions[1] < fractions[2], "{fractions:?}");
}

#[test]
fn independent_fixed_points_agree() {
    let spec = WeightSpec::uniform(2, 0.0, 1.0).unwrap();
    let init = SampleEnsemble::new(vec![1.0; 100]).unwrap();
    let opts = FixedPointOptions { ensemble_size: 10_000, ..Default::default() };
    let a = fixed_point(&spec, &init, &opts, 1, &Sequential).unwrap();
    let b = fixed_point(&spec, &init, &opts, 2, &Sequential).unwrap();
    assert!(ks_distance(&a.ensemble, &b.ensemble).unwrap() < 0.03);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn history_graph_bookkeeping(m in 2usize..4, pop in 4usize..40, t in 0.0f64..3.0, seed in any::<u64>()) {
        let cfg = SimConfig::new(pop, Kernel::Identity { m }, Base::PointMass(0.0), 3.0, seed).unwrap();
        let log = run(&cfg).unwrap();
        let g = history_graph(&log, 0, t).unwrap();
        prop_assert_eq!(g.redundant_count() + g.tree_edge_count(), g.events.len());
        prop_assert!(g.events.windows(2).all(|w| w[0] > w[1]));
        prop_assert!(g.events.iter().all(|&i| log.times()[i] <= t));
        // a tree with k edges spans (m−1)k + 1 agents
        let mut agents: Vec<u32> = g.events.iter().zip(&g.redundant)
            .filter(|(_, r)| !**r)
            .flat_map(|(&i, _)| log.members(i).to_vec())
            .collect();
        agents.push(0);
        agents.sort_unstable();
        agents.dedup();
        prop_assert_eq!(agents.len(), (m - 1) * g.tree_edge_count() + 1);
    }

    #[test]
    fn ks_distance_is_a_bounded_symmetric_statistic(
        a in prop::collection::vec(-5.0f64..5.0, 1..50),
        b in prop::collection::vec(-5.0f64..5.0, 1..50),
    ) {
        let ea = SampleEnsemble::new(a).unwrap();
        let eb = SampleEnsemble::new(b).unwrap();
        let d = ks_distance(&ea, &eb).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, ks_distance(&eb, &ea).unwrap());
        prop_assert_eq!(ks_distance(&ea, &ea).unwrap(), 0.0);
    }
}
