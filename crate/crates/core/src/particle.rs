//! The finite `N`-agent system and the history graph of a tagged agent.
//!
//! Meetings arrive as a Poisson process of intensity `λN/m`; each picks a
//! uniform `m`-subset of agents and replaces their states with one draw of
//! the kernel. The tagged agent is always agent 0, which is no loss of
//! generality since agents are exchangeable.
//!
//! The history graph is built by a backward sweep from time `t`. The set `S`
//! holds the agents whose lines are connected to the tagged agent. An event
//! touching `S` is kept; it is redundant if two or more of its participants
//! are already in `S`, otherwise it is a tree edge and the other participants
//! join `S`. Because every kept event touches `S`, the connected component of
//! the tagged agent is the only one that matters, so a union-find over agents
//! reduces to a membership set (stamped with an epoch so it can be reused
//! across replicas without clearing).

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::check_time;
use crate::exec::Executor;
use crate::kernels::Kernel;
use crate::rng::{substream, Purpose};
use crate::stats::{ks_statistic, Estimate, MeanAccumulator};
use crate::wildsum::{Base, EnsembleMeta, SampleEnsemble};
use crate::{Error, Result};

/// The tagged agent.
pub const TAGGED: usize = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub population: usize,
    pub m: usize,
    /// Per-agent meeting rate.
    pub lambda: f64,
    pub horizon: f64,
    pub kernel: Kernel,
    pub initial: Base,
    pub seed: u64,
}

impl SimConfig {
    pub fn new(population: usize, kernel: Kernel, initial: Base, horizon: f64, seed: u64) -> Result<Self> {
        let cfg = SimConfig { population, m: kernel.arity(), lambda: 1.0, horizon, kernel, initial, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        crate::error::check_arity(self.m)?;
        if self.kernel.arity() != self.m {
            return Err(Error::ArityMismatch { expected: self.m, got: self.kernel.arity() });
        }
        if self.population < self.m || self.population > u32::MAX as usize {
            return Err(Error::PopulationTooSmall { branching: self.m as u64, population: self.population as u64 });
        }
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid("lambda", format!("must be positive, got {}", self.lambda)));
        }
        check_time("horizon", self.horizon)?;
        self.kernel.validate()?;
        self.initial.validate()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        check_time("time", t)?;
        if t > self.horizon {
            return Err(Error::invalid("time", format!("{t} exceeds the horizon {}", self.horizon)));
        }
        Ok(())
    }
}

/// Time-ordered meetings of one run plus the final agent states.
#[derive(Debug, Clone, PartialEq)]
pub struct EventLog {
    m: usize,
    population: usize,
    times: Vec<f64>,
    members: Vec<u32>,
    final_states: Vec<f64>,
}

impl EventLog {
    /// Builds a log by hand; tuples are sorted and checked.
    pub fn from_events(
        m: usize,
        population: usize,
        events: Vec<(f64, Vec<u32>)>,
        final_states: Vec<f64>,
    ) -> Result<Self> {
        crate::error::check_arity(m)?;
        let mut log = EventLog { m, population, times: Vec::new(), members: Vec::new(), final_states };
        let mut last = f64::NEG_INFINITY;
        for (time, mut tuple) in events {
            if !(time.is_finite() && time > last && time >= 0.0) {
                return Err(Error::invalid("event times", "must be non-negative and strictly increasing"));
            }
            if tuple.len() != m {
                return Err(Error::ArityMismatch { expected: m, got: tuple.len() });
            }
            tuple.sort_unstable();
            if tuple.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::invalid("event", "participants must be distinct"));
            }
            if let Some(&a) = tuple.iter().find(|&&a| a as usize >= population) {
                return Err(Error::UnknownAgent { agent: a as usize, population });
            }
            last = time;
            log.times.push(time);
            log.members.extend(tuple);
        }
        Ok(log)
    }

    pub fn arity(&self) -> usize {
        self.m
    }

    pub fn population(&self) -> usize {
        self.population
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    /// Sorted participants of event `i`.
    pub fn members(&self, i: usize) -> &[u32] {
        &self.members[i * self.m..(i + 1) * self.m]
    }

    pub fn events(&self) -> impl Iterator<Item = (f64, &[u32])> + '_ {
        self.times.iter().copied().zip(self.members.chunks_exact(self.m))
    }

    pub fn final_states(&self) -> &[f64] {
        &self.final_states
    }
}

/// Runs the system up to `horizon`, calling `on_event` for each meeting.
/// Without `with_states` the kernel is skipped and the states stay empty;
/// the event process has the same law either way.
fn simulate<R: Rng + ?Sized>(
    cfg: &SimConfig,
    horizon: f64,
    with_states: bool,
    rng: &mut R,
    mut on_event: impl FnMut(f64, &[u32]),
) -> Vec<f64> {
    let n = cfg.population;
    let m = cfg.m;
    let mut states: Vec<f64> = if with_states { (0..n).map(|_| cfg.initial.sample(rng)).collect() } else { Vec::new() };
    let mut perm: Vec<u32> = (0..n as u32).collect();
    let mut tuple = vec![0u32; m];
    let mut inputs = vec![0.0; m];
    let mut outputs = vec![0.0; m];
    let intensity = cfg.lambda * n as f64 / m as f64;
    let mut time = 0.0;
    loop {
        let gap: f64 = Exp1.sample(rng);
        time += gap / intensity;
        if time > horizon {
            break;
        }
        for j in 0..m {
            let k = rng.random_range(j..n);
            perm.swap(j, k);
        }
        tuple.copy_from_slice(&perm[..m]);
        tuple.sort_unstable();
        if with_states {
            for (x, &a) in inputs.iter_mut().zip(&tuple) {
                *x = states[a as usize];
            }
            cfg.kernel.apply(&inputs, &mut outputs, rng).expect("arity validated");
            for (&y, &a) in outputs.iter().zip(&tuple) {
                states[a as usize] = y;
            }
        }
        on_event(time, &tuple);
    }
    states
}

fn replica_log(cfg: &SimConfig, horizon: f64, with_states: bool, replica: u64) -> EventLog {
    let mut rng = substream(cfg.seed, Purpose::Replica, replica);
    let mut times = Vec::new();
    let mut members = Vec::new();
    let final_states = simulate(cfg, horizon, with_states, &mut rng, |t, tuple| {
        times.push(t);
        members.extend_from_slice(tuple);
    });
    EventLog { m: cfg.m, population: cfg.population, times, members, final_states }
}

/// One run to the horizon (replica 0 of the seed).
pub fn run(cfg: &SimConfig) -> Result<EventLog> {
    run_replica(cfg, 0)
}

pub fn run_replica(cfg: &SimConfig, replica: u64) -> Result<EventLog> {
    cfg.validate()?;
    Ok(replica_log(cfg, cfg.horizon, true, replica))
}

/// The tagged agent's state at time `t` over independent replicas.
pub fn tagged_law<E: Executor + ?Sized>(cfg: &SimConfig, t: f64, replicas: usize, exec: &E) -> Result<SampleEnsemble> {
    cfg.validate()?;
    cfg.check_time(t)?;
    if replicas == 0 {
        return Err(Error::invalid("replicas", "must be at least 1"));
    }
    // events after t cannot affect states at t, so the run stops there
    let values = exec.map_indexed(replicas, |r| {
        let mut rng = substream(cfg.seed, Purpose::Replica, r as u64);
        simulate(cfg, t, true, &mut rng, |_, _| {})[TAGGED]
    });
    let meta = EnsembleMeta { t: Some(t), kernel_id: Some(cfg.kernel.id()), seed: Some(cfg.seed) };
    Ok(SampleEnsemble::new(values)?.with_meta(meta))
}

/// Events connected to the tagged agent before time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionGraph {
    pub agent: usize,
    /// Indices into the log, in backward processing order.
    pub events: Vec<usize>,
    pub redundant: Vec<bool>,
}

impl InteractionGraph {
    pub fn redundant_count(&self) -> usize {
        self.redundant.iter().filter(|&&r| r).count()
    }

    pub fn tree_edge_count(&self) -> usize {
        self.events.len() - self.redundant_count()
    }

    pub fn is_tree(&self) -> bool {
        self.redundant_count() == 0
    }
}

/// Epoch-stamped membership set over agent ids.
#[derive(Debug, Clone)]
struct Membership {
    stamp: Vec<u32>,
    epoch: u32,
}

impl Membership {
    fn new(population: usize) -> Self {
        Membership { stamp: vec![0; population], epoch: 0 }
    }

    fn reset(&mut self) {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.stamp.iter_mut().for_each(|s| *s = 0);
            self.epoch = 1;
        }
    }

    fn contains(&self, a: u32) -> bool {
        self.stamp[a as usize] == self.epoch
    }

    fn insert(&mut self, a: u32) {
        self.stamp[a as usize] = self.epoch;
    }
}

fn sweep(log: &EventLog, agent: usize, t: f64, set: &mut Membership) -> InteractionGraph {
    set.reset();
    set.insert(agent as u32);
    let mut graph = InteractionGraph { agent, events: Vec::new(), redundant: Vec::new() };
    let end = log.times.partition_point(|&s| s <= t);
    for i in (0..end).rev() {
        let tuple = log.members(i);
        let inside = tuple.iter().filter(|&&a| set.contains(a)).count();
        if inside == 0 {
            continue;
        }
        graph.events.push(i);
        graph.redundant.push(inside >= 2);
        if inside == 1 {
            tuple.iter().for_each(|&a| set.insert(a));
        }
    }
    graph
}

/// Backward sweep from time `t` (events at times `≤ t`).
pub fn history_graph(log: &EventLog, agent: usize, t: f64) -> Result<InteractionGraph> {
    if agent >= log.population {
        return Err(Error::UnknownAgent { agent, population: log.population });
    }
    check_time("time", t)?;
    Ok(sweep(log, agent, t, &mut Membership::new(log.population)))
}

/// Per-replica summary of the tagged history graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HistoryStat {
    pub redundant: u32,
    pub tree_edges: u32,
}

/// History summaries of the tagged agent at time `t` over replicas.
pub fn history_stats<E: Executor + ?Sized>(
    cfg: &SimConfig,
    t: f64,
    replicas: usize,
    exec: &E,
) -> Result<Vec<HistoryStat>> {
    cfg.validate()?;
    cfg.check_time(t)?;
    if replicas == 0 {
        return Err(Error::invalid("replicas", "must be at least 1"));
    }
    Ok(exec.map_indexed(replicas, |r| {
        // states never enter the sweep
        let log = replica_log(cfg, t, false, r as u64);
        let g = sweep(&log, TAGGED, t, &mut Membership::new(cfg.population));
        HistoryStat { redundant: g.redundant_count() as u32, tree_edges: g.tree_edge_count() as u32 }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedundancyStats {
    pub mean: f64,
    pub se: f64,
    /// Fraction of replicas whose history is a tree.
    pub tree_fraction: f64,
    pub replicas: usize,
}

impl RedundancyStats {
    pub fn estimate(&self) -> Estimate {
        Estimate { mean: self.mean, se: self.se, n: self.replicas }
    }
}

pub fn summarize_redundancy(stats: &[HistoryStat]) -> RedundancyStats {
    let acc: MeanAccumulator = stats.iter().map(|s| s.redundant as f64).collect();
    let est = acc.estimate();
    let trees = stats.iter().filter(|s| s.redundant == 0).count();
    RedundancyStats {
        mean: est.mean,
        se: est.se,
        tree_fraction: trees as f64 / stats.len().max(1) as f64,
        replicas: stats.len(),
    }
}

/// Mean redundant-line count at time `t` with its standard error and the
/// fraction of tree-shaped histories.
pub fn redundant_stats<E: Executor + ?Sized>(
    cfg: &SimConfig,
    t: f64,
    replicas: usize,
    exec: &E,
) -> Result<RedundancyStats> {
    Ok(summarize_redundancy(&history_stats(cfg, t, replicas, exec)?))
}

/// Two-sample Kolmogorov–Smirnov distance between ensembles.
pub fn ks_distance(a: &SampleEnsemble, b: &SampleEnsemble) -> Result<f64> {
    ks_statistic(a.values(), a.weights(), b.values(), b.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::branching::p_finite_n;
    use crate::exec::Sequential;
    use crate::kernels::WeightSpec;
    use crate::stats::ks_p_value;

    fn cfg(n: usize, kernel: Kernel, initial: Base, horizon: f64, seed: u64) -> SimConfig {
        SimConfig::new(n, kernel, initial, horizon, seed).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::new(1, Kernel::Sum { m: 2 }, Base::PointMass(0.0), 1.0, 0).is_err());
        assert!(SimConfig::new(10, Kernel::Sum { m: 2 }, Base::PointMass(0.0), -1.0, 0).is_err());
        let mut c = cfg(10, Kernel::Sum { m: 2 }, Base::PointMass(0.0), 1.0, 0);
        c.lambda = 0.0;
        assert!(c.validate().is_err());
        c.lambda = 1.0;
        c.m = 3;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_horizon_keeps_initial_draws() {
        let c = cfg(50, Kernel::Sum { m: 2 }, Base::Normal { mean: 0.0, sd: 1.0 }, 0.0, 5);
        let log = run(&c).unwrap();
        assert!(log.is_empty());
        let mut rng = substream(5, Purpose::Replica, 0);
        let expect: Vec<f64> = (0..50).map(|_| c.initial.sample(&mut rng)).collect();
        assert_eq!(log.final_states(), expect.as_slice());
    }

    #[test]
    fn log_invariants() {
        let c = cfg(100, Kernel::Sum { m: 3 }, Base::PointMass(1.0), 2.0, 6);
        let log = run(&c).unwrap();
        assert!(log.times().windows(2).all(|w| w[0] < w[1]));
        for (time, tuple) in log.events() {
            assert!(time > 0.0 && time <= 2.0);
            assert!(tuple.windows(2).all(|w| w[0] < w[1]));
            assert!(tuple.iter().all(|&a| (a as usize) < 100));
        }
        assert!(log.final_states().iter().all(|&x| x >= 1.0));
    }

    #[test]
    fn event_count_is_poisson() {
        let c = cfg(1000, Kernel::Identity { m: 2 }, Base::PointMass(0.0), 1.0, 7);
        let k = run(&c).unwrap().len() as f64;
        assert!((k - 500.0).abs() < 3.0 * 500f64.sqrt(), "{k}");
    }

    #[test]
    fn per_agent_meeting_rate_is_lambda() {
        let mut c = cfg(200, Kernel::Identity { m: 3 }, Base::PointMass(0.0), 2.0, 8);
        c.lambda = 1.5;
        let acc: MeanAccumulator = (0..200)
            .map(|r| {
                let log = run_replica(&c, r).unwrap();
                log.events().filter(|(_, tup)| tup.contains(&0)).count() as f64
            })
            .collect();
        assert!(acc.estimate().z_score(3.0) < 4.0, "{:?}", acc.estimate());
    }

    #[test]
    fn runs_are_deterministic() {
        let spec = WeightSpec::uniform(2, 0.0, 1.0).unwrap();
        let c = cfg(300, Kernel::Wealth(spec), Base::Exponential { rate: 1.0 }, 1.0, 9);
        assert_eq!(run(&c).unwrap(), run(&c).unwrap());
        assert_ne!(run_replica(&c, 1).unwrap(), run(&c).unwrap());
    }

    #[test]
    fn tagged_state_matches_full_run() {
        let c = cfg(100, Kernel::Sum { m: 2 }, Base::Normal { mean: 0.0, sd: 1.0 }, 1.0, 10);
        let ens = tagged_law(&c, 1.0, 3, &Sequential).unwrap();
        for r in 0..3 {
            assert_eq!(ens.values()[r], run_replica(&c, r as u64).unwrap().final_states()[TAGGED]);
        }
    }

    #[test]
    fn event_times_are_uniform_order_statistics() {
        let c = cfg(40, Kernel::Identity { m: 2 }, Base::PointMass(0.0), 1.0, 11);
        let mut u = Vec::new();
        for r in 0..200 {
            u.extend_from_slice(run_replica(&c, r).unwrap().times());
        }
        let grid: Vec<f64> = (0..20_000).map(|i| (i as f64 + 0.5) / 20_000.0).collect();
        let d = ks_statistic(&u, None, &grid, None).unwrap();
        assert!(ks_p_value(d, u.len(), grid.len()) > 0.001, "d={d}");
    }

    #[test]
    fn empty_log_gives_empty_graph() {
        let log = EventLog::from_events(2, 5, vec![], vec![0.0; 5]).unwrap();
        let g = history_graph(&log, 0, 1.0).unwrap();
        assert!(g.events.is_empty() && g.is_tree());
    }

    #[test]
    fn unknown_agent_rejected() {
        let log = EventLog::from_events(2, 5, vec![], vec![]).unwrap();
        assert_eq!(history_graph(&log, 5, 1.0).unwrap_err(), Error::UnknownAgent { agent: 5, population: 5 });
        assert!(EventLog::from_events(2, 5, vec![(0.1, vec![1, 5])], vec![]).is_err());
        assert!(EventLog::from_events(2, 5, vec![(0.1, vec![1, 1])], vec![]).is_err());
        assert!(EventLog::from_events(2, 5, vec![(0.2, vec![0, 1]), (0.1, vec![2, 3])], vec![]).is_err());
    }

    #[test]
    fn three_distinct_meetings_form_a_tree() {
        // P meets A, then A meets B earlier, then P meets C
        let log = EventLog::from_events(
            2,
            6,
            vec![(0.2, vec![1, 2]), (0.5, vec![0, 1]), (0.8, vec![0, 3]), (0.9, vec![4, 5])],
            vec![],
        )
        .unwrap();
        let g = history_graph(&log, 0, 1.0).unwrap();
        assert_eq!(g.events, vec![2, 1, 0]);
        assert_eq!(g.redundant_count(), 0);
        assert_eq!(g.tree_edge_count(), 3);
    }

    #[test]
    fn rejoining_meeting_is_redundant() {
        // backward: P meets 1 (t=.9), P meets 2 (t=.7), then 1 and 2 meet (t=.3)
        let log = EventLog::from_events(
            2,
            4,
            vec![(0.3, vec![1, 2]), (0.7, vec![0, 2]), (0.9, vec![0, 1])],
            vec![],
        )
        .unwrap();
        let g = history_graph(&log, 0, 1.0).unwrap();
        assert_eq!(g.redundant, vec![false, false, true]);
        assert_eq!(g.redundant_count(), 1);
        // cut before the last meeting: only the older two are visible
        let g = history_graph(&log, 0, 0.8).unwrap();
        assert_eq!(g.events, vec![1, 0]);
        assert_eq!(g.redundant_count(), 0);
    }

    #[test]
    fn ternary_rejoin_counts_once() {
        let log = EventLog::from_events(
            3,
            7,
            vec![(0.1, vec![2, 4, 6]), (0.4, vec![3, 4, 5]), (0.6, vec![0, 1, 2])],
            vec![],
        )
        .unwrap();
        let g = history_graph(&log, 0, 1.0).unwrap();
        // 0.6 adds {1,2}; 0.4 touches nothing; 0.1 touches only 2 → tree
        assert_eq!(g.events, vec![2, 0]);
        assert!(g.is_tree());
        assert_eq!(g.tree_edge_count(), 2);
    }

    #[test]
    fn zero_time_has_no_redundancy() {
        let c = cfg(100, Kernel::Identity { m: 2 }, Base::PointMass(0.0), 1.0, 12);
        let s = redundant_stats(&c, 0.0, 20, &Sequential).unwrap();
        assert_eq!((s.mean, s.se, s.tree_fraction), (0.0, 0.0, 1.0));
    }

    #[test]
    fn tree_edge_count_follows_finite_population_law() {
        // edges touching one line of S arrive at rate λ_{N,n}
        let n_pop = 200;
        let c = cfg(n_pop, Kernel::Identity { m: 2 }, Base::PointMass(0.0), 1.0, 13);
        let stats = history_stats(&c, 1.0, 20_000, &Sequential).unwrap();
        let law = p_finite_n(2, n_pop as u64, 60, 1.0, 1e-3).unwrap();
        let mut observed = vec![0.0; 8];
        for s in &stats {
            observed[(s.tree_edges as usize).min(7)] += 1.0;
        }
        let mut expected: Vec<f64> = law.probs[..7].iter().map(|p| p * stats.len() as f64).collect();
        expected.push(stats.len() as f64 - expected.iter().sum::<f64>());
        let chi2: f64 = observed.iter().zip(&expected).map(|(o, e)| (o - e) * (o - e) / e).sum();
        // 7 degrees of freedom, 0.001 critical value
        assert!(chi2 < 24.32, "chi2={chi2} observed={observed:?} expected={expected:?}");
    }

    #[test]
    fn identity_kernel_tagged_law_is_initial() {
        let c = cfg(50, Kernel::Identity { m: 2 }, Base::Uniform { lo: 0.0, hi: 1.0 }, 1.0, 14);
        let ens = tagged_law(&c, 1.0, 4000, &Sequential).unwrap();
        let grid: Vec<f64> = (0..4000).map(|i| (i as f64 + 0.5) / 4000.0).collect();
        let d = ks_statistic(ens.values(), None, &grid, None).unwrap();
        assert!(ks_p_value(d, 4000, 4000) > 0.001);
    }

    #[test]
    fn ks_distance_extremes() {
        let a = SampleEnsemble::new(vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(ks_distance(&a, &a).unwrap(), 0.0);
        let z = SampleEnsemble::new(vec![0.0]).unwrap();
        let o = SampleEnsemble::new(vec![1.0]).unwrap();
        assert_eq!(ks_distance(&z, &o).unwrap(), 1.0);
    }
}
