//! Benchmark placement algorithms, an exact enumeration oracle, an LP
//! exporter, and a number-partitioning reduction used to stress them.
//!
//! All algorithms here reuse the gradient allocator's per-datacenter
//! allocations, so their outputs satisfy the same delay and CPU constraints
//! as the main pipeline; they differ only in where they put each chain.

use std::collections::BTreeSet;
use std::io::Write;

use crate::allocation::FeasibleMap;
use crate::cost::{per_chain_cost, total_cost, CostParams};
use crate::error::Error;
use crate::placement::{Aug, Placement, StandingUsage};
use crate::pushup::{AugPolicy, DecisionInput, DecisionOutput};
use crate::service::{ChainId, ChainSpec, VmDemand};
use crate::topology::{LinkParams, NetworkTree, TreeBuilder};

use num_rational::Ratio;

/// Outcome of a baseline placement: either every chain is hosted or the
/// first chain that fits nowhere (None when the verdict comes from an
/// exhaustive search rather than one chain's failure).
#[derive(Debug)]
pub enum BaselineOutcome {
    Placed(Placement),
    Failed(Option<ChainId>),
}

fn seed_placement(
    tree: &NetworkTree,
    to_place: &[&ChainSpec],
    feas: &FeasibleMap,
    standing: &StandingUsage,
    aug: Aug,
) -> Result<Placement, Error> {
    let mut placement = Placement::new(tree, aug);
    for &(chain, dc, units) in standing {
        if to_place.iter().any(|c| c.id == chain) {
            return Err(Error::InvalidChain(format!(
                "chain {chain} is both standing and scheduled for placement"
            )));
        }
        placement.charge_external(dc, units)?;
    }
    for spec in to_place {
        if !feas.contains_key(&spec.id) {
            return Err(Error::InvalidChain(format!("chain {} has no feasible set", spec.id)));
        }
    }
    Ok(placement)
}

/// First-fit from the top: each chain, in input order, takes the highest
/// delay-feasible datacenter on its path with room for its allocation.
pub fn f_fit(
    tree: &NetworkTree,
    to_place: &[&ChainSpec],
    feas: &FeasibleMap,
    standing: &StandingUsage,
    aug: Aug,
) -> Result<BaselineOutcome, Error> {
    let mut placement = seed_placement(tree, to_place, feas, standing, aug)?;
    for spec in to_place {
        let fs = &feas[&spec.id];
        let slot = fs
            .entries()
            .iter()
            .rev()
            .find(|(dc, alloc)| placement.avail(*dc) >= alloc.total());
        match slot {
            Some((_, alloc)) => placement.place(alloc.clone()),
            None => return Ok(BaselineOutcome::Failed(Some(spec.id))),
        }
    }
    Ok(BaselineOutcome::Placed(placement))
}

/// Greedy cost-first placement: chains ordered by the CPU their allocation
/// needs at their lowest feasible (edge) datacenter, largest first with ties
/// by chain id; each takes the feasible datacenter with room where its cost
/// is lowest, the lowest such datacenter winning ties.
pub fn cpvnf(
    tree: &NetworkTree,
    to_place: &[&ChainSpec],
    feas: &FeasibleMap,
    standing: &StandingUsage,
    params: &CostParams,
    aug: Aug,
) -> Result<BaselineOutcome, Error> {
    let mut placement = seed_placement(tree, to_place, feas, standing, aug)?;
    let mut order: Vec<&ChainSpec> = to_place.to_vec();
    order.sort_by_key(|c| {
        let edge_units = feas[&c.id].entries().first().map_or(0, |(_, a)| a.total());
        (std::cmp::Reverse(edge_units), c.id)
    });
    for spec in order {
        let mut best: Option<(f64, &crate::service::Allocation)> = None;
        for (dc, alloc) in feas[&spec.id].entries() {
            if placement.avail(*dc) < alloc.total() {
                continue;
            }
            let cost = per_chain_cost(tree, params, spec, *dc, alloc.total())?.total();
            if best.as_ref().is_none_or(|(b, _)| cost < *b) {
                best = Some((cost, alloc));
            }
        }
        match best {
            Some((_, alloc)) => placement.place(alloc.clone()),
            None => return Ok(BaselineOutcome::Failed(Some(spec.id))),
        }
    }
    Ok(BaselineOutcome::Placed(placement))
}

/// Result of the exhaustive search over all feasible assignments.
#[derive(Debug)]
pub struct OracleResult {
    /// Whether any capacity-respecting assignment exists.
    pub feasible: bool,
    /// Cost of the optimal assignment, when one exists.
    pub min_cost: Option<f64>,
    /// The optimal assignment, when one exists.
    pub placement: Option<Placement>,
    /// Complete assignments evaluated (cost pruning skips the rest).
    pub explored: u64,
}

/// Default cap on the assignment space the oracle will enumerate.
pub const DEFAULT_SEARCH_LIMIT: u128 = 1_000_000;

/// Exact minimum-cost placement by enumerating every combination of
/// delay-feasible hosts, respecting capacities under `aug` and around
/// `standing` usage. Ground truth for small instances.
///
/// Errors when the assignment space (product of feasible-set sizes) exceeds
/// `budget_limit`.
pub fn exhaustive_oracle(
    tree: &NetworkTree,
    to_place: &[&ChainSpec],
    feas: &FeasibleMap,
    standing: &StandingUsage,
    params: &CostParams,
    aug: Aug,
    budget_limit: u128,
) -> Result<OracleResult, Error> {
    let base = seed_placement(tree, to_place, feas, standing, aug)?;
    let space = to_place
        .iter()
        .fold(1u128, |acc, spec| acc.saturating_mul(feas[&spec.id].len() as u128));
    if space > budget_limit {
        return Err(Error::SearchSpaceExceeded { size: space, limit: budget_limit });
    }
    if to_place.iter().any(|c| feas[&c.id].is_empty()) {
        return Ok(OracleResult { feasible: false, min_cost: None, placement: None, explored: 0 });
    }

    // Pre-compute each chain's cost and demand at each candidate host.
    let mut tables: Vec<Vec<(f64, u64)>> = Vec::with_capacity(to_place.len());
    for spec in to_place {
        let mut row = Vec::new();
        for (dc, alloc) in feas[&spec.id].entries() {
            row.push((per_chain_cost(tree, params, spec, *dc, alloc.total())?.total(), alloc.total()));
        }
        tables.push(row);
    }

    struct Search<'a> {
        to_place: &'a [&'a ChainSpec],
        feas: &'a FeasibleMap,
        tables: &'a [Vec<(f64, u64)>],
        avail: Vec<u64>,
        choice: Vec<usize>,
        best: Option<(f64, Vec<usize>)>,
        explored: u64,
    }
    impl Search<'_> {
        fn run(&mut self, k: usize, cost: f64) {
            if let Some((best, _)) = &self.best {
                if cost >= *best {
                    return;
                }
            }
            if k == self.to_place.len() {
                self.explored += 1;
                self.best = Some((cost, self.choice.clone()));
                return;
            }
            let entries = self.feas[&self.to_place[k].id].entries();
            for (j, (dc, _)) in entries.iter().enumerate() {
                let (c, units) = self.tables[k][j];
                if self.avail[dc.index()] < units {
                    continue;
                }
                self.avail[dc.index()] -= units;
                self.choice[k] = j;
                self.run(k + 1, cost + c);
                self.avail[dc.index()] += units;
            }
        }
    }

    let mut search = Search {
        to_place,
        feas,
        tables: &tables,
        avail: base.avail_all().to_vec(),
        choice: vec![0; to_place.len()],
        best: None,
        explored: 0,
    };
    search.run(0, 0.0);
    let explored = search.explored;
    match search.best {
        None => Ok(OracleResult { feasible: false, min_cost: None, placement: None, explored }),
        Some((cost, choice)) => {
            let mut placement = base;
            for (k, spec) in to_place.iter().enumerate() {
                let (_, alloc) = &feas[&spec.id].entries()[choice[k]];
                placement.place(alloc.clone());
            }
            Ok(OracleResult {
                feasible: true,
                min_cost: Some(cost),
                placement: Some(placement),
                explored,
            })
        }
    }
}

/// Which baseline a decision round should run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BaselineAlgo {
    FFit,
    Cpvnf,
    /// Exhaustive search with this assignment-space guard.
    Oracle { budget_limit: u128 },
}

/// A baseline's decision-round outcome; mirrors the main pipeline's shape
/// but carries no overload certificate.
#[derive(Debug)]
pub enum BaselineDecision {
    Feasible(Box<DecisionOutput>),
    Failed(Option<ChainId>),
}

/// Runs one decision round with a baseline algorithm under the main
/// pipeline's two-branch contract: place only the changed chains around the
/// standing usage first; if that fails, release everything and retry over
/// all chains. Baselines never search for extra capacity: a fixed policy
/// pins both branches to its factor, and the automatic policy retries at
/// factor one.
pub fn baseline_decision(
    input: &DecisionInput,
    algo: BaselineAlgo,
) -> Result<BaselineDecision, Error> {
    input.validate()?;
    let changed: Vec<&ChainSpec> =
        input.chains.iter().filter(|c| input.changed.contains(&c.id)).copied().collect();
    let standing_rows: Vec<(ChainId, crate::topology::DcId, u64)> =
        input.standing.values().map(|a| (a.chain, a.dc, a.total())).collect();
    let (base_r, retry_r) = match input.policy {
        AugPolicy::Fixed(r) => (r, r),
        AugPolicy::Auto => (fit_factor(input)?, Ratio::from_integer(1)),
    };

    let feas_changed = crate::allocation::gfa(input.tree, changed.iter().copied())?;
    let run = |to_place: &[&ChainSpec],
               feas: &FeasibleMap,
               standing: &StandingUsage,
               aug: Aug|
     -> Result<BaselineOutcome, Error> {
        match algo {
            BaselineAlgo::FFit => f_fit(input.tree, to_place, feas, standing, aug),
            BaselineAlgo::Cpvnf => {
                cpvnf(input.tree, to_place, feas, standing, &input.params, aug)
            }
            BaselineAlgo::Oracle { budget_limit } => {
                match exhaustive_oracle(
                    input.tree,
                    to_place,
                    feas,
                    standing,
                    &input.params,
                    aug,
                    budget_limit,
                )? {
                    OracleResult { placement: Some(p), .. } => Ok(BaselineOutcome::Placed(p)),
                    _ => Ok(BaselineOutcome::Failed(None)),
                }
            }
        }
    };

    if let BaselineOutcome::Placed(mut placement) =
        run(&changed, &feas_changed, &standing_rows, base_r)?
    {
        for alloc in input.standing.values() {
            placement.adopt(alloc.clone());
        }
        let cost = decision_cost(input, &placement)?;
        return Ok(BaselineDecision::Feasible(Box::new(DecisionOutput {
            placement,
            cost,
            reshuffled: false,
            achieved_r: base_r,
            pu_moves: 0,
        })));
    }

    let feas_all = crate::allocation::gfa(input.tree, input.chains.iter().copied())?;
    match run(&input.chains, &feas_all, &[], retry_r)? {
        BaselineOutcome::Placed(placement) => {
            let cost = decision_cost(input, &placement)?;
            Ok(BaselineDecision::Feasible(Box::new(DecisionOutput {
                placement,
                cost,
                reshuffled: true,
                achieved_r: retry_r,
                pu_moves: 0,
            })))
        }
        BaselineOutcome::Failed(chain) => Ok(BaselineDecision::Failed(chain)),
    }
}

/// Smallest factor whose floored capacities admit the standing usage.
fn fit_factor(input: &DecisionInput) -> Result<Aug, Error> {
    let mut need = Ratio::from_integer(1);
    let mut used: std::collections::BTreeMap<crate::topology::DcId, u64> = Default::default();
    for alloc in input.standing.values() {
        *used.entry(alloc.dc).or_default() += alloc.total();
    }
    for (dc, units) in used {
        if units == 0 {
            continue;
        }
        let cap = input.tree.capacity(dc);
        if cap == 0 {
            return Err(Error::StandingExceedsCapacity { dc });
        }
        need = need.max(Ratio::new(units, cap));
    }
    Ok(need)
}

fn decision_cost(
    input: &DecisionInput,
    placement: &Placement,
) -> Result<crate::cost::CostBreakdown, Error> {
    let rows = input.chains.iter().map(|c| {
        let alloc = placement.allocation(c.id).expect("every chain is placed");
        (*c, alloc.dc, alloc.total())
    });
    total_cost(input.tree, &input.params, rows)
}

/// Writes the assignment relaxation in LP format: one `y_<chain>_<dc>`
/// variable per delay-feasible pair with its fixed allocation, the chain
/// cost as objective coefficient, one assignment equality per chain,
/// per-datacenter capacity rows at unit augmentation, and `[0, 1]` bounds.
/// Solving it (or its integral version) externally bounds every placement's
/// cost from below.
pub fn lp_export(
    tree: &NetworkTree,
    chains: &[&ChainSpec],
    feas: &FeasibleMap,
    params: &CostParams,
    out: &mut dyn Write,
) -> Result<(), Error> {
    let var = |c: ChainId, dc: crate::topology::DcId| format!("y_{c}_{dc}");
    writeln!(out, "Minimize")?;
    let mut terms = Vec::new();
    for spec in chains {
        for (dc, alloc) in feas[&spec.id].entries() {
            let cost = per_chain_cost(tree, params, spec, *dc, alloc.total())?.total();
            terms.push(format!("{} {}", cost, var(spec.id, *dc)));
        }
    }
    writeln!(out, " obj: {}", terms.join(" + "))?;
    writeln!(out, "Subject To")?;
    for spec in chains {
        let row: Vec<String> =
            feas[&spec.id].dcs().map(|dc| var(spec.id, dc)).collect();
        writeln!(out, " assign_{}: {} = 1", spec.id, row.join(" + "))?;
    }
    let hosts: BTreeSet<crate::topology::DcId> =
        chains.iter().flat_map(|c| feas[&c.id].dcs()).collect();
    for dc in hosts {
        let mut row = Vec::new();
        for spec in chains {
            if let Some(units) = feas[&spec.id].units(dc) {
                row.push(format!("{} {}", units, var(spec.id, dc)));
            }
        }
        writeln!(out, " cap_{}: {} <= {}", dc, row.join(" + "), tree.capacity(dc))?;
    }
    writeln!(out, "Bounds")?;
    for spec in chains {
        for dc in feas[&spec.id].dcs() {
            writeln!(out, " 0 <= {} <= 1", var(spec.id, dc))?;
        }
    }
    writeln!(out, "End")?;
    Ok(())
}

/// A two-datacenter instance whose feasibility is exactly number
/// partitioning: each value becomes a single-VM chain that needs that many
/// units on either datacenter, and both datacenters hold half the total.
pub struct PartitionInstance {
    pub tree: NetworkTree,
    pub chains: Vec<ChainSpec>,
    /// Values after normalization (doubled once if any value is below 2 or
    /// the total is odd; doubling preserves partition solvability).
    pub values: Vec<u64>,
    /// Capacity of each of the two datacenters: half the normalized total.
    pub half: u64,
}

/// Builds the partition reduction for `values` (all positive).
///
/// The link between the two datacenters carries a delay far below the
/// comparison tolerance, so a chain meets its target on either host exactly
/// when it receives its value in units; capacities then force the chains to
/// split the total in half.
pub fn partition_instance(values: &[u64]) -> Result<PartitionInstance, Error> {
    if values.is_empty() || values.contains(&0) {
        return Err(Error::InvalidChain("partition values must be positive".into()));
    }
    let total: u64 = values.iter().sum();
    let values: Vec<u64> = if values.iter().any(|&v| v < 2) || total % 2 == 1 {
        values.iter().map(|&v| v * 2).collect()
    } else {
        values.to_vec()
    };
    let half = values.iter().sum::<u64>() / 2;
    let mut b = TreeBuilder::new();
    let root = b.add_root(half, 1.0);
    let negligible = LinkParams {
        prop_delay_s: 1e-15,
        bandwidth: 1e9,
        sched_const: 0.0,
        bw_cost: 3.0,
    };
    let leaf = b.add_child(root, half, 1.0, negligible);
    let tree = b.build().unwrap();
    let chains: Vec<ChainSpec> = values
        .iter()
        .enumerate()
        .map(|(i, &m)| ChainSpec {
            id: ChainId(i as u64 + 1),
            vms: vec![VmDemand { theta_lambda: 1.0, gamma_theta: 1.0 }],
            ingress_rate: 1.0,
            egress_rate: 1.0,
            burstiness: 0.0,
            // One unit of slack per unit above stability: exactly m units do.
            target_delay: 1.0 / (m - 1) as f64,
            cpu_cap: m.min(half.max(1)),
            poa: leaf,
            current: None,
            service_class: "partition".into(),
        })
        .collect();
    Ok(PartitionInstance { tree, chains, values, half })
}

/// Whether `values` splits into two subsets of equal sum. Independent
/// dynamic-programming reference for the reduction above.
pub fn partition_solvable(values: &[u64]) -> bool {
    let total: u64 = values.iter().sum();
    if total % 2 == 1 {
        return false;
    }
    let target = (total / 2) as usize;
    let mut reach = vec![false; target + 1];
    reach[0] = true;
    for &v in values {
        let v = v as usize;
        if v > target {
            return false;
        }
        for s in (v..=target).rev() {
            reach[s] = reach[s] || reach[s - v];
        }
    }
    reach[target]
}
