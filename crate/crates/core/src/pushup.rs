//! Greedy cost reduction by pushing chains up, and the full decision round.
//!
//! [`pu`] takes a feasible placement and repeatedly relocates chains toward
//! the root: for each chain it scans the feasible datacenters strictly above
//! its host from the top down and takes the highest one with room that
//! strictly lowers the chain's cost. Upward moves free edge capacity for
//! other chains, so the scan loops until a full pass moves nothing. Cost
//! never increases and feasibility is preserved.
//!
//! [`bupu`] is one decision round: allocate and place only the changed
//! chains around the standing ones, then push up. If the changed chains do
//! not fit, every chain is released and re-placed under the smallest
//! capacity augmentation (found by [`binary_search_r`]) that admits a
//! bottom-up placement, and the push-up runs over all chains. Migration is
//! charged against each chain's pre-round host either way.

use std::collections::{BTreeMap, BTreeSet};

use num_rational::Ratio;

use crate::allocation::{gfa, FeasibleMap};
use crate::cost::{per_chain_cost, total_cost, CostBreakdown, CostParams};
use crate::error::Error;
use crate::placement::{bu, r_max, Aug, BuOutcome, InfeasibilityWitness, Placement};
use crate::service::{Allocation, ChainId, ChainSpec};
use crate::topology::{DcId, NetworkTree};

/// How the decision round chooses its augmentation factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AugPolicy {
    /// Operate at exactly this factor; the reshuffle branch probes it once.
    Fixed(Aug),
    /// Start from the smallest factor the standing chains fit under and
    /// binary-search the minimal feasible factor when reshuffling.
    Auto,
}

/// One decision round's input: the full chain population, which of them
/// must be (re)placed, and where the rest currently stand.
#[derive(Debug)]
pub struct DecisionInput<'a> {
    pub tree: &'a NetworkTree,
    pub params: CostParams,
    /// Every chain in the system, in input order (the order seeds placement
    /// tie-breaking).
    pub chains: Vec<&'a ChainSpec>,
    /// Chains that must be placed this round: new arrivals and chains whose
    /// current host is no longer feasible.
    pub changed: BTreeSet<ChainId>,
    /// Current allocations of all other chains; their capacity stays
    /// reserved unless the round reshuffles.
    pub standing: BTreeMap<ChainId, Allocation>,
    pub policy: AugPolicy,
    /// Push chains in ascending order of allocated units instead of the
    /// default descending order.
    pub pu_literal_order: bool,
}

impl DecisionInput<'_> {
    /// Structural consistency: ids unique, changed ⊆ chains, standing
    /// covers exactly the unchanged chains and matches their current hosts.
    pub fn validate(&self) -> Result<(), Error> {
        let mut ids = BTreeSet::new();
        for c in &self.chains {
            if !ids.insert(c.id) {
                return Err(Error::InvalidChain(format!("duplicate chain id {}", c.id)));
            }
        }
        for id in &self.changed {
            if !ids.contains(id) {
                return Err(Error::InvalidChain(format!("changed chain {id} is not in the input")));
            }
        }
        for c in &self.chains {
            if self.changed.contains(&c.id) {
                if self.standing.contains_key(&c.id) {
                    return Err(Error::InvalidChain(format!(
                        "chain {} is both changed and standing",
                        c.id
                    )));
                }
                continue;
            }
            let alloc = self.standing.get(&c.id).ok_or_else(|| {
                Error::InvalidChain(format!("unchanged chain {} has no standing allocation", c.id))
            })?;
            if alloc.chain != c.id {
                return Err(Error::InvalidChain(format!(
                    "standing allocation for chain {} carries id {}",
                    c.id, alloc.chain
                )));
            }
            if c.current != Some(alloc.dc) {
                return Err(Error::InvalidChain(format!(
                    "standing chain {} host disagrees with its spec",
                    c.id
                )));
            }
            if !self.tree.is_ancestor_or_self(alloc.dc, c.poa) {
                return Err(Error::OffPath { dc: alloc.dc, poa: c.poa });
            }
        }
        for id in self.standing.keys() {
            if !ids.contains(id) {
                return Err(Error::InvalidChain(format!("standing chain {id} is not in the input")));
            }
        }
        if let AugPolicy::Fixed(r) = self.policy {
            if r < Ratio::from_integer(1) {
                return Err(Error::InvalidAugmentation(format!("{r}")));
            }
        }
        Ok(())
    }
}

/// One decision round's result when a feasible placement exists.
#[derive(Debug)]
pub struct DecisionOutput {
    /// Final hosts and allocations for every chain, with residual capacity.
    pub placement: Placement,
    /// Total cost over all chains; migration is relative to pre-round hosts.
    pub cost: CostBreakdown,
    /// Whether every chain was released and re-placed.
    pub reshuffled: bool,
    /// The augmentation factor the round ran at.
    pub achieved_r: Aug,
    /// Number of push-up relocations performed.
    pub pu_moves: usize,
}

/// Outcome of a decision round.
#[derive(Debug)]
pub enum DecisionOutcome {
    Feasible(Box<DecisionOutput>),
    /// No placement exists even at the policy's largest augmentation; the
    /// witness certifies the overload.
    Infeasible(InfeasibilityWitness),
}

/// Pushes `movable` chains upward until no single move lowers any chain's
/// cost. Returns the number of relocations.
///
/// Chains are revisited in order of currently allocated units — largest
/// first by default (`ascending` flips it) — with input order breaking ties.
pub fn pu(
    tree: &NetworkTree,
    params: &CostParams,
    specs: &BTreeMap<ChainId, &ChainSpec>,
    movable: &[ChainId],
    feas: &FeasibleMap,
    placement: &mut Placement,
    ascending: bool,
) -> Result<usize, Error> {
    let mut moves = 0;
    loop {
        let mut order: Vec<(u64, usize)> = movable
            .iter()
            .enumerate()
            .filter_map(|(i, &id)| placement.allocation(id).map(|a| (a.total(), i)))
            .collect();
        if ascending {
            order.sort_unstable();
        } else {
            order.sort_unstable_by_key(|&(units, i)| (std::cmp::Reverse(units), i));
        }
        let mut moved = false;
        for (_, i) in order {
            let id = movable[i];
            let spec = *specs
                .get(&id)
                .ok_or_else(|| Error::InvalidChain(format!("no spec for movable chain {id}")))?;
            let fs = feas
                .get(&id)
                .ok_or_else(|| Error::InvalidChain(format!("no feasible set for chain {id}")))?;
            let (cur_dc, cur_units) = {
                let a = placement.allocation(id).expect("movable chains are placed");
                (a.dc, a.total())
            };
            let cur_cost = per_chain_cost(tree, params, spec, cur_dc, cur_units)?.total();
            for (dc, alloc) in fs.above(cur_dc).iter().rev() {
                let units = alloc.total();
                if placement.avail(*dc) < units {
                    continue;
                }
                let candidate = per_chain_cost(tree, params, spec, *dc, units)?.total();
                if candidate < cur_cost {
                    placement.relocate(alloc.clone());
                    moves += 1;
                    moved = true;
                    break;
                }
            }
        }
        if !moved {
            return Ok(moves);
        }
    }
}

/// Augmentation grid: capacities only change at factors `1 + k / c_min`
/// where `c_min` is the smallest positive capacity, so the search walks
/// exactly those points.
fn grid_point(c_min: u64, k: u64) -> Aug {
    Ratio::from_integer(1) + Ratio::new(k, c_min)
}

/// Smallest grid index whose factor is at least `r`.
fn grid_ceil(c_min: u64, r: Aug) -> u64 {
    ((r - Ratio::from_integer(1)) * Ratio::from_integer(c_min)).ceil().to_integer()
}

fn smallest_capacity(tree: &NetworkTree) -> Result<u64, Error> {
    tree.min_positive_capacity()
        .ok_or_else(|| Error::InvalidTopology("no datacenter has positive capacity".into()))
}

/// Result of the minimal-augmentation search.
#[derive(Debug)]
pub enum SearchOutcome {
    Found { augmentation: Aug, placement: Placement },
    /// The bottom-up pass fails even at the upper bound.
    Infeasible(InfeasibilityWitness),
}

/// Finds the smallest grid augmentation under which the bottom-up pass
/// places all of `chains` (released, no standing usage), by bisecting
/// between 1 and `r_hi`. Success at a factor is treated as monotone in the
/// factor; every probe runs on a fresh capacity snapshot.
pub fn binary_search_r(
    tree: &NetworkTree,
    chains: &[&ChainSpec],
    feas: &FeasibleMap,
    r_hi: Aug,
) -> Result<SearchOutcome, Error> {
    let c_min = smallest_capacity(tree)?;
    let k_hi = grid_ceil(c_min, r_hi);
    let mut best = match bu(tree, chains, feas, &[], grid_point(c_min, k_hi))? {
        BuOutcome::Placed(p) => p,
        BuOutcome::Infeasible { witness, .. } => return Ok(SearchOutcome::Infeasible(witness)),
    };
    if k_hi == 0 {
        return Ok(SearchOutcome::Found { augmentation: grid_point(c_min, 0), placement: best });
    }
    match bu(tree, chains, feas, &[], grid_point(c_min, 0))? {
        BuOutcome::Placed(p) => {
            return Ok(SearchOutcome::Found { augmentation: grid_point(c_min, 0), placement: p })
        }
        BuOutcome::Infeasible { .. } => {}
    }
    let (mut lo, mut hi) = (0u64, k_hi);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        match bu(tree, chains, feas, &[], grid_point(c_min, mid))? {
            BuOutcome::Placed(p) => {
                hi = mid;
                best = p;
            }
            BuOutcome::Infeasible { .. } => lo = mid,
        }
    }
    Ok(SearchOutcome::Found { augmentation: grid_point(c_min, hi), placement: best })
}

/// Smallest grid factor under which every standing allocation fits its
/// datacenter's augmented capacity.
fn fit_standing(tree: &NetworkTree, standing: &BTreeMap<ChainId, Allocation>) -> Result<Aug, Error> {
    let c_min = smallest_capacity(tree)?;
    let mut used: BTreeMap<DcId, u64> = BTreeMap::new();
    for alloc in standing.values() {
        *used.entry(alloc.dc).or_default() += alloc.total();
    }
    let mut need = Ratio::from_integer(1);
    for (dc, units) in used {
        if units == 0 {
            continue;
        }
        let cap = tree.capacity(dc);
        if cap == 0 {
            return Err(Error::StandingExceedsCapacity { dc });
        }
        need = need.max(Ratio::new(units, cap));
    }
    Ok(grid_point(c_min, grid_ceil(c_min, need)))
}

/// Runs one decision round.
///
/// Branch one allocates and places only the changed chains around the
/// standing usage at the policy's base factor. When that fails — and the
/// failing chain is servable at all — every chain is released and re-placed
/// at the smallest feasible augmentation (`reshuffled` is set). The output
/// covers every chain either way. A chain with no delay-feasible datacenter,
/// or an overload that persists at the policy's largest factor, yields the
/// infeasibility witness instead.
pub fn bupu(input: &DecisionInput) -> Result<DecisionOutcome, Error> {
    input.validate()?;
    let specs: BTreeMap<ChainId, &ChainSpec> = input.chains.iter().map(|c| (c.id, *c)).collect();
    let changed: Vec<&ChainSpec> =
        input.chains.iter().filter(|c| input.changed.contains(&c.id)).copied().collect();
    let standing_rows: Vec<(ChainId, DcId, u64)> =
        input.standing.values().map(|a| (a.chain, a.dc, a.total())).collect();

    let feas_changed = gfa(input.tree, changed.iter().copied())?;
    let base_r = match input.policy {
        AugPolicy::Fixed(r) => r,
        AugPolicy::Auto => fit_standing(input.tree, &input.standing)?,
    };
    match bu(input.tree, &changed, &feas_changed, &standing_rows, base_r)? {
        BuOutcome::Placed(mut placement) => {
            for alloc in input.standing.values() {
                placement.adopt(alloc.clone());
            }
            let movable: Vec<ChainId> = changed.iter().map(|c| c.id).collect();
            let pu_moves = pu(
                input.tree,
                &input.params,
                &specs,
                &movable,
                &feas_changed,
                &mut placement,
                input.pu_literal_order,
            )?;
            let cost = round_cost(input, &placement)?;
            return Ok(DecisionOutcome::Feasible(Box::new(DecisionOutput {
                placement,
                cost,
                reshuffled: false,
                achieved_r: base_r,
                pu_moves,
            })));
        }
        BuOutcome::Infeasible { witness, .. } => {
            // A chain that is delay-feasible nowhere cannot be helped by
            // releasing others or adding capacity.
            if feas_changed.get(&witness.failing()).is_some_and(|fs| fs.is_empty()) {
                return Ok(DecisionOutcome::Infeasible(witness));
            }
        }
    }

    // Reshuffle: release everything and search the smallest workable factor.
    let feas_all = gfa(input.tree, input.chains.iter().copied())?;
    let search = match input.policy {
        AugPolicy::Fixed(r) => match bu(input.tree, &input.chains, &feas_all, &[], r)? {
            BuOutcome::Placed(p) => SearchOutcome::Found { augmentation: r, placement: p },
            BuOutcome::Infeasible { witness, .. } => SearchOutcome::Infeasible(witness),
        },
        AugPolicy::Auto => {
            if let Some(unservable) =
                input.chains.iter().find(|c| feas_all[&c.id].is_empty())
            {
                // Surface the singleton witness without probing capacities.
                match bu(input.tree, &input.chains, &feas_all, &[], Ratio::from_integer(1))? {
                    BuOutcome::Infeasible { witness, .. } => {
                        debug_assert_eq!(witness.failing(), unservable.id);
                        SearchOutcome::Infeasible(witness)
                    }
                    BuOutcome::Placed(_) => unreachable!("empty feasible set cannot be placed"),
                }
            } else {
                let c_min = smallest_capacity(input.tree)?;
                let hi = r_max(input.chains.iter().copied(), &feas_all)?;
                let hi = grid_point(c_min, grid_ceil(c_min, hi));
                binary_search_r(input.tree, &input.chains, &feas_all, hi)?
            }
        }
    };
    match search {
        SearchOutcome::Infeasible(witness) => Ok(DecisionOutcome::Infeasible(witness)),
        SearchOutcome::Found { augmentation, mut placement } => {
            let movable: Vec<ChainId> = input.chains.iter().map(|c| c.id).collect();
            let pu_moves = pu(
                input.tree,
                &input.params,
                &specs,
                &movable,
                &feas_all,
                &mut placement,
                input.pu_literal_order,
            )?;
            let cost = round_cost(input, &placement)?;
            Ok(DecisionOutcome::Feasible(Box::new(DecisionOutput {
                placement,
                cost,
                reshuffled: true,
                achieved_r: augmentation,
                pu_moves,
            })))
        }
    }
}

/// Total cost of the round's final placement over every chain, migration
/// priced against pre-round hosts.
fn round_cost(input: &DecisionInput, placement: &Placement) -> Result<CostBreakdown, Error> {
    let rows = input.chains.iter().map(|c| {
        let alloc = placement.allocation(c.id).expect("every chain is placed");
        (*c, alloc.dc, alloc.total())
    });
    total_cost(input.tree, &input.params, rows)
}
