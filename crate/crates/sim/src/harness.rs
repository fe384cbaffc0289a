//! The periodic decision loop: PoA assignment, critical-chain detection,
//! algorithm dispatch, state commitment, SLA accounting, and the capacity
//! sweep.
//!
//! The loop is strictly sequential — the state at `t` depends on `t - T` —
//! while independent repetitions run in parallel, each owning its state.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::str::FromStr;
use std::time::Instant;

use chainplace_core::allocation::gfa;
use chainplace_core::baselines::{baseline_decision, BaselineAlgo, BaselineDecision};
use chainplace_core::cost::{CostParams, MigPricing};
use chainplace_core::placement::aug_to_f64;
use chainplace_core::pushup::{bupu, DecisionInput, DecisionOutcome, DecisionOutput};
use chainplace_core::service::{Allocation, ChainId, ChainSpec};
use chainplace_core::topology::{DcId, NetworkTree};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::metrics::{DecisionRecord, RunSummary};
use crate::mobility::trace_events;
use crate::scenario::ScenarioConfig;
use crate::trace::{EventKind, TraceEvent};

/// RNG streams carved out of one seed: mobility uses stream 1 (see the
/// mobility module), service classes and handling order get their own, so
/// traces and decisions are independently reproducible.
const STREAM_CLASS: u64 = 2;
const STREAM_ORDER: u64 = 3;

/// Which placement algorithm drives the decision loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlgoChoice {
    /// The full pipeline: bottom-up placement with push-up and reshuffle.
    Bupu,
    /// Top-down first fit.
    FFit,
    /// Cheapest feasible host, largest chains first.
    Cpvnf,
    /// Exhaustive minimum-cost search (guarded).
    Oracle,
}

impl AlgoChoice {
    pub const ALL: [AlgoChoice; 4] =
        [AlgoChoice::Bupu, AlgoChoice::FFit, AlgoChoice::Cpvnf, AlgoChoice::Oracle];

    pub fn name(self) -> &'static str {
        match self {
            AlgoChoice::Bupu => "bupu",
            AlgoChoice::FFit => "ffit",
            AlgoChoice::Cpvnf => "cpvnf",
            AlgoChoice::Oracle => "oracle",
        }
    }

    /// The baseline-library counterpart; the main pipeline has none.
    fn baseline(self, oracle_guard: u64) -> Option<BaselineAlgo> {
        match self {
            AlgoChoice::Bupu => None,
            AlgoChoice::FFit => Some(BaselineAlgo::FFit),
            AlgoChoice::Cpvnf => Some(BaselineAlgo::Cpvnf),
            AlgoChoice::Oracle => {
                Some(BaselineAlgo::Oracle { budget_limit: u128::from(oracle_guard) })
            }
        }
    }
}

impl FromStr for AlgoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<AlgoChoice> {
        match s.to_ascii_lowercase().as_str() {
            "bupu" => Ok(AlgoChoice::Bupu),
            "ffit" | "f-fit" => Ok(AlgoChoice::FFit),
            "cpvnf" => Ok(AlgoChoice::Cpvnf),
            "oracle" => Ok(AlgoChoice::Oracle),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?}; expected bupu, ffit, cpvnf, or oracle"
            ))),
        }
    }
}

/// The leaf datacenter whose antenna is nearest to `(x, y)`; ties go to the
/// lower PoA id. Positions outside the service area are rejected.
pub fn assign_poa(tree: &NetworkTree, x: f64, y: f64) -> Result<DcId> {
    if let Some(area) = tree.area() {
        if !area.contains(x, y) {
            return Err(Error::OutsideArea { x, y });
        }
    }
    let mut best: Option<(f64, u64, DcId)> = None;
    for &leaf in tree.leaves() {
        let dc = tree.dc(leaf)?;
        let Some((ax, ay)) = dc.position else { continue };
        let d2 = (x - ax).powi(2) + (y - ay).powi(2);
        let poa_id = dc.poa_id.unwrap_or(u64::MAX);
        let closer = match &best {
            None => true,
            Some((bd, bp, _)) => d2 < *bd || (d2 == *bd && poa_id < *bp),
        };
        if closer {
            best = Some((d2, poa_id, leaf));
        }
    }
    best.map(|(_, _, leaf)| leaf)
        .ok_or_else(|| Error::Config("topology has no antenna-bearing leaves".into()))
}

/// Chains whose hosting datacenter is no longer in their feasible set once
/// their PoA moves to `new_poas`. Covers both off-path hosts and hosts whose
/// delay budget no longer works out.
pub fn detect_critical(
    tree: &NetworkTree,
    chains: &BTreeMap<ChainId, ChainSpec>,
    hosts: &BTreeMap<ChainId, DcId>,
    new_poas: &BTreeMap<ChainId, DcId>,
) -> Result<BTreeSet<ChainId>> {
    let mut out = BTreeSet::new();
    for (id, host) in hosts {
        let Some(spec) = chains.get(id) else { continue };
        let mut probe = spec.clone();
        if let Some(poa) = new_poas.get(id) {
            probe.poa = *poa;
        }
        let feas = gfa(tree, [&probe])?;
        if !feas[id].contains(*host) {
            out.insert(*id);
        }
    }
    Ok(out)
}

/// Per-run cache of feasible-set membership. All chains of a service class
/// share one demand profile, so the feasible set depends only on the PoA
/// and the class; this keeps the per-second violation scan O(1) per event.
struct FeasibleSetCache<'a> {
    tree: &'a NetworkTree,
    cfg: &'a ScenarioConfig,
    sets: HashMap<(DcId, bool), Vec<DcId>>,
}

impl<'a> FeasibleSetCache<'a> {
    fn new(tree: &'a NetworkTree, cfg: &'a ScenarioConfig) -> Self {
        FeasibleSetCache { tree, cfg, sets: HashMap::new() }
    }

    fn contains(&mut self, poa: DcId, rt: bool, host: DcId) -> Result<bool> {
        if !self.sets.contains_key(&(poa, rt)) {
            let template = self.cfg.make_chain(u64::MAX, poa, rt);
            let feas = gfa(self.tree, [&template])?;
            let dcs: Vec<DcId> = feas[&ChainId(u64::MAX)].dcs().collect();
            self.sets.insert((poa, rt), dcs);
        }
        Ok(self.sets[&(poa, rt)].contains(&host))
    }
}

/// The migration fee for moving a chain between two hosts, matching the
/// cost model's pricing.
fn migration_fee(
    tree: &NetworkTree,
    params: &CostParams,
    old: DcId,
    new: DcId,
) -> Result<f64> {
    Ok(match params.migration {
        MigPricing::Constant(c) => c,
        MigPricing::PerHop(p) => p * tree.path(old, new)?.len() as f64,
    })
}

/// One full simulation run.
#[derive(Debug)]
pub struct RunResult {
    pub records: Vec<DecisionRecord>,
    pub summary: RunSummary,
    /// Whether every decision instant had a feasible placement.
    pub fully_feasible: bool,
}

/// Replays `events` through the decision loop with the given algorithm.
/// `seed` drives service-class sampling and the per-round handling order;
/// the caller supplies the events so capacity probes can reuse one trace.
pub fn run(
    cfg: &ScenarioConfig,
    algo: AlgoChoice,
    seed: u64,
    events: &[TraceEvent],
) -> Result<RunResult> {
    cfg.validate()?;
    let tree = cfg.build_tree()?;
    let params = cfg.cost_params();
    let policy = cfg.policy()?;
    let mut rng_class = ChaCha8Rng::seed_from_u64(seed);
    rng_class.set_stream(STREAM_CLASS);
    let mut rng_order = ChaCha8Rng::seed_from_u64(seed);
    rng_order.set_stream(STREAM_ORDER);
    let mut cache = FeasibleSetCache::new(&tree, cfg);

    // Live state: one chain per present vehicle, the standing allocations
    // of the placed ones, and the ids still waiting after a failed round.
    let mut specs: BTreeMap<ChainId, ChainSpec> = BTreeMap::new();
    let mut standing: BTreeMap<ChainId, Allocation> = BTreeMap::new();
    let mut pending: BTreeSet<ChainId> = BTreeSet::new();
    // SLA accounting: the second each violation was first observed, and
    // the booked durations of finished ones.
    let mut onset: BTreeMap<ChainId, f64> = BTreeMap::new();
    let mut sla: Vec<f64> = Vec::new();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut positions: BTreeMap<u64, (f64, f64)> = BTreeMap::new();

    let horizon = events
        .last()
        .map(|e| e.time_s)
        .unwrap_or(0.0)
        .max(match cfg.trace.kind {
            crate::scenario::TraceKind::Synthetic => cfg.trace.duration_s.floor(),
            crate::scenario::TraceKind::File => 0.0,
        });
    let period = cfg.run.period_s;
    let rounds = (horizon / period + 1e-9).floor() as u64 + 1;
    let mut records: Vec<DecisionRecord> = Vec::with_capacity(rounds as usize);
    let mut ev_idx = 0usize;

    for k in 0..rounds {
        let t = k as f64 * period;

        // Ingest everything that happened in (t - T, t].
        let mut arrivals: Vec<u64> = Vec::new();
        let mut departures: Vec<u64> = Vec::new();
        while ev_idx < events.len() && events[ev_idx].time_s <= t + 1e-9 {
            let e = &events[ev_idx];
            ev_idx += 1;
            match e.kind {
                EventKind::Position { x, y } => {
                    positions.insert(e.vehicle, (x, y));
                    if seen.insert(e.vehicle) {
                        arrivals.push(e.vehicle);
                    }
                    // Violation scan: a placed chain whose host falls out of
                    // its feasible set starts violating now; one that comes
                    // back before a decision self-heals.
                    let id = ChainId(e.vehicle);
                    if let Some(spec) = specs.get(&id) {
                        if let Some(host) = spec.current {
                            let poa = assign_poa(&tree, x, y)?;
                            let rt = spec.service_class == "rt";
                            if !cache.contains(poa, rt, host)? {
                                onset.entry(id).or_insert(e.time_s);
                            } else if let Some(start) = onset.remove(&id) {
                                sla.push((e.time_s - start).max(0.0));
                            }
                        }
                    }
                }
                EventKind::Departed => departures.push(e.vehicle),
            }
        }

        // Departed vehicles release their resources at this instant.
        let mut n_departed = 0usize;
        for v in departures {
            positions.remove(&v);
            seen.remove(&v);
            let id = ChainId(v);
            if specs.remove(&id).is_some() {
                standing.remove(&id);
                pending.remove(&id);
                onset.remove(&id);
                n_departed += 1;
            }
        }

        // New vehicles draw a service class and enter the system.
        let mut new_ids: BTreeSet<ChainId> = BTreeSet::new();
        for v in arrivals {
            // A vehicle that left within the same window never gets a chain.
            let Some(&(x, y)) = positions.get(&v) else { continue };
            let rt = rng_class.gen::<f64>() < cfg.services.rt_ratio;
            let poa = assign_poa(&tree, x, y)?;
            specs.insert(ChainId(v), cfg.make_chain(v, poa, rt));
            new_ids.insert(ChainId(v));
        }

        // Predicted PoA for the coming period: the latest position.
        for (id, spec) in specs.iter_mut() {
            if let Some(&(x, y)) = positions.get(&id.0) {
                spec.poa = assign_poa(&tree, x, y)?;
            }
        }

        // Critical chains must be re-placed; fresh observations open their
        // violation window at this instant (sparse traces only — dense
        // traces already saw them in the scan).
        let hosts: BTreeMap<ChainId, DcId> =
            specs.iter().filter_map(|(id, s)| s.current.map(|d| (*id, d))).collect();
        let new_poas: BTreeMap<ChainId, DcId> = specs.iter().map(|(id, s)| (*id, s.poa)).collect();
        let critical = detect_critical(&tree, &specs, &hosts, &new_poas)?;
        for &id in &critical {
            onset.entry(id).or_insert(t);
        }

        let mut changed: BTreeSet<ChainId> = new_ids.clone();
        changed.extend(pending.iter().copied());
        changed.extend(critical.iter().copied());

        let pre_hosts: BTreeMap<ChainId, Option<DcId>> =
            specs.iter().map(|(id, s)| (*id, s.current)).collect();

        let (outcome, runtime_ms) = {
            let standing_in: BTreeMap<ChainId, Allocation> = standing
                .iter()
                .filter(|(id, _)| !changed.contains(id))
                .map(|(id, a)| (*id, a.clone()))
                .collect();
            let mut order: Vec<&ChainSpec> = specs.values().collect();
            order.shuffle(&mut rng_order);
            let input = DecisionInput {
                tree: &tree,
                params,
                chains: order,
                changed: changed.clone(),
                standing: standing_in,
                policy,
                pu_literal_order: false,
            };
            let started = Instant::now();
            let outcome: Option<Box<DecisionOutput>> = match algo.baseline(cfg.run.oracle_guard)
            {
                None => match bupu(&input)? {
                    DecisionOutcome::Feasible(out) => Some(out),
                    DecisionOutcome::Infeasible(_) => None,
                },
                Some(b) => match baseline_decision(&input, b)? {
                    BaselineDecision::Feasible(out) => Some(out),
                    BaselineDecision::Failed(_) => None,
                },
            };
            (outcome, started.elapsed().as_secs_f64() * 1000.0)
        };

        let feasible = outcome.is_some();
        let mut record = DecisionRecord {
            t,
            algo: algo.name(),
            n_chains: specs.len(),
            n_changed: changed.len(),
            n_new: new_ids.len(),
            n_critical: critical.len(),
            n_departed,
            feasible,
            reshuffled: false,
            achieved_r: None,
            migration: 0.0,
            compulsory_migration: 0.0,
            noncompulsory_migration: 0.0,
            n_migrations: 0,
            computation: 0.0,
            bandwidth: 0.0,
            runtime_ms,
        };

        match outcome {
            Some(out) => {
                let assignments = out.placement.assignments().clone();
                debug_assert_eq!(assignments.len(), specs.len(), "a feasible round places all");
                for (id, alloc) in &assignments {
                    if let Some(spec) = specs.get_mut(id) {
                        spec.current = Some(alloc.dc);
                    }
                }
                // Migration fees relative to pre-round hosts, split into the
                // forced share (changed chains) and the voluntary one
                // (standing chains relocated by reshuffle or push-up).
                for (id, alloc) in &assignments {
                    if let Some(Some(old)) = pre_hosts.get(id) {
                        if *old != alloc.dc {
                            let fee = migration_fee(&tree, &params, *old, alloc.dc)?;
                            record.n_migrations += 1;
                            if changed.contains(id) {
                                record.compulsory_migration += fee;
                            } else {
                                record.noncompulsory_migration += fee;
                            }
                        }
                    }
                }
                record.migration = out.cost.migration;
                debug_assert!(
                    (record.compulsory_migration + record.noncompulsory_migration
                        - record.migration)
                        .abs()
                        < 1e-6,
                    "the migration split must add up to the round's migration cost"
                );
                record.computation = out.cost.computation;
                record.bandwidth = out.cost.bandwidth;
                record.reshuffled = out.reshuffled;
                record.achieved_r = Some(aug_to_f64(out.achieved_r));
                standing = assignments;
                pending.clear();
                // Every changed chain is served correctly from here on;
                // critical ones book their violation.
                for &id in &changed {
                    if let Some(start) = onset.remove(&id) {
                        sla.push((t - start).max(0.0) + 0.5);
                    }
                }
                debug_assert!(state_is_consistent(&tree, cfg, &specs, &standing));
            }
            None => {
                // Roll back: standing chains keep their hosts (critical ones
                // included — nothing was committed), unplaced ones retry.
                pending = changed
                    .iter()
                    .copied()
                    .filter(|id| specs.get(id).is_some_and(|s| s.current.is_none()))
                    .collect();
            }
        }
        records.push(record);
        if !feasible && cfg.run.halt_on_infeasible {
            break;
        }
    }

    let fully_feasible = records.iter().all(|r| r.feasible);
    let summary = RunSummary::from_records(
        algo.name(),
        seed,
        period,
        cfg.services.rt_ratio,
        cfg.run.augmentation.clone(),
        &records,
        &sla,
        horizon,
    );
    Ok(RunResult { records, summary, fully_feasible })
}

/// Debug-build invariant: standing allocations and chain specs agree, no
/// datacenter is over its capacity, and every host serves its chain's PoA.
fn state_is_consistent(
    tree: &NetworkTree,
    cfg: &ScenarioConfig,
    specs: &BTreeMap<ChainId, ChainSpec>,
    standing: &BTreeMap<ChainId, Allocation>,
) -> bool {
    let mut used: BTreeMap<DcId, u64> = BTreeMap::new();
    for (id, alloc) in standing {
        let Some(spec) = specs.get(id) else { return false };
        if spec.current != Some(alloc.dc) || !tree.is_ancestor_or_self(alloc.dc, spec.poa) {
            return false;
        }
        *used.entry(alloc.dc).or_default() += alloc.total();
    }
    // Commits may use augmented capacity; verify against the largest factor
    // any policy could have granted this scenario.
    let max_r = match cfg.policy() {
        Ok(chainplace_core::pushup::AugPolicy::Fixed(r)) => r,
        _ => chainplace_core::placement::Aug::new(8, 1),
    };
    used.iter().all(|(dc, total)| {
        *total <= chainplace_core::placement::effective_capacity(max_r, tree.capacity(*dc))
    })
}

/// The chain population of the first decision instant, with the same class
/// draws `run` would make on this seed. Feeds the LP export.
pub fn initial_chains(
    cfg: &ScenarioConfig,
    seed: u64,
    events: &[TraceEvent],
) -> Result<Vec<ChainSpec>> {
    cfg.validate()?;
    let tree = cfg.build_tree()?;
    let mut rng_class = ChaCha8Rng::seed_from_u64(seed);
    rng_class.set_stream(STREAM_CLASS);
    let mut positions: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut seen: BTreeSet<u64> = BTreeSet::new();
    let mut arrivals: Vec<u64> = Vec::new();
    for e in events.iter().take_while(|e| e.time_s <= 1e-9) {
        match e.kind {
            EventKind::Position { x, y } => {
                positions.insert(e.vehicle, (x, y));
                if seen.insert(e.vehicle) {
                    arrivals.push(e.vehicle);
                }
            }
            EventKind::Departed => {
                positions.remove(&e.vehicle);
            }
        }
    }
    let mut chains = Vec::with_capacity(arrivals.len());
    for v in arrivals {
        let Some(&(x, y)) = positions.get(&v) else { continue };
        let rt = rng_class.gen::<f64>() < cfg.services.rt_ratio;
        let poa = assign_poa(&tree, x, y)?;
        chains.push(cfg.make_chain(v, poa, rt));
    }
    Ok(chains)
}

/// Runs one scenario end to end: the trace comes from the scenario itself.
pub fn run_scenario(cfg: &ScenarioConfig, algo: AlgoChoice) -> Result<RunResult> {
    let events = trace_events(cfg, cfg.run.seed)?;
    run(cfg, algo, cfg.run.seed, &events)
}

/// Independent repetitions over several seeds, in parallel. Synthetic
/// scenarios regenerate their trace per seed.
pub fn run_seeds(cfg: &ScenarioConfig, algo: AlgoChoice, seeds: &[u64]) -> Result<Vec<RunResult>> {
    seeds
        .par_iter()
        .map(|&s| {
            let events = trace_events(cfg, s)?;
            run(cfg, algo, s, &events)
        })
        .collect()
}

/// Outcome of a capacity sweep.
#[derive(Debug, Clone)]
pub struct SweepResult {
    pub algo: &'static str,
    pub seed: u64,
    /// Smallest base capacity whose run had every decision feasible.
    pub min_cpu_base: u64,
    /// Every probed capacity with its verdict, in probe order.
    pub probes: Vec<(u64, bool)>,
}

/// Binary-searches the smallest `cpu_base` the algorithm can serve the
/// whole trace with, at augmentation one. One trace is generated per seed
/// and replayed at every probed capacity.
pub fn sweep_capacity(base: &ScenarioConfig, algo: AlgoChoice, seed: u64) -> Result<SweepResult> {
    base.validate()?;
    let mut cfg = base.clone();
    cfg.run.augmentation = "1".into();
    cfg.run.halt_on_infeasible = true;
    let events = trace_events(&cfg, seed)?;

    let mut probes: Vec<(u64, bool)> = Vec::new();
    let probe = |c: u64, probes: &mut Vec<(u64, bool)>| -> Result<bool> {
        let mut probe_cfg = cfg.clone();
        probe_cfg.topology.cpu_base = c;
        let result = run(&probe_cfg, algo, seed, &events)?;
        probes.push((c, result.fully_feasible));
        Ok(result.fully_feasible)
    };

    const LIMIT: u64 = 1 << 20;
    let mut hi = base.topology.cpu_base.max(1);
    while !probe(hi, &mut probes)? {
        if hi >= LIMIT {
            return Err(Error::SweepExhausted { limit: LIMIT });
        }
        hi = (hi * 2).min(LIMIT);
    }
    let mut lo = 0u64;
    if probe(lo, &mut probes)? {
        // An empty system is served by zero capacity.
        return Ok(SweepResult { algo: algo.name(), seed, min_cpu_base: 0, probes });
    }
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if probe(mid, &mut probes)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(SweepResult { algo: algo.name(), seed, min_cpu_base: hi, probes })
}
