//! Bottom-up placement under capacity augmentation, with an infeasibility
//! certificate on failure.
//!
//! [`bu`] walks the datacenters in post-order from the root — leaves first —
//! and hosts every chain as low as possible: at each datacenter it considers
//! the unplaced chains whose PoA is in the subtree and for which the
//! datacenter is delay-feasible, preferring chains with the fewest remaining
//! options above. Capacities are scaled by a rational augmentation factor
//! `R ≥ 1` and materialized as integers, so all bookkeeping is exact.
//!
//! When a chain cannot be hosted anywhere on its feasible path, [`bu`] emits
//! an [`InfeasibilityWitness`]: a set of chains `H'` and the union `T` of
//! their feasible datacenters such that `|H'|` exceeds the total number of
//! chains that could ever fit on `T` — an operator-readable certificate that
//! the region is overloaded, not that the solver gave up.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;

use num_rational::Ratio;

use crate::allocation::FeasibleMap;
use crate::error::Error;
use crate::service::{Allocation, ChainId, ChainSpec};
use crate::topology::{DcId, NetworkTree};

/// Capacity augmentation factor, kept rational so grid searches and
/// capacity floors are exact.
pub type Aug = Ratio<u64>;

/// Parses an augmentation factor from `"2"`, `"1.5"`, or `"3/2"` forms.
/// Decimal strings convert exactly (no float round-trip). Factors below one
/// are rejected.
pub fn parse_aug(s: &str) -> Result<Aug, Error> {
    let bad = |_| Error::InvalidAugmentation(s.to_string());
    let text = s.trim();
    let r = if let Some((n, d)) = text.split_once('/') {
        let numer: u64 = n.trim().parse().map_err(bad)?;
        let denom: u64 = d.trim().parse().map_err(bad)?;
        if denom == 0 {
            return Err(Error::InvalidAugmentation(s.to_string()));
        }
        Ratio::new(numer, denom)
    } else if let Some((int, frac)) = text.split_once('.') {
        if frac.is_empty() || frac.len() > 18 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(Error::InvalidAugmentation(s.to_string()));
        }
        let whole: u64 = if int.is_empty() { 0 } else { int.parse().map_err(bad)? };
        let denom = 10u64.pow(frac.len() as u32);
        let numer = whole
            .checked_mul(denom)
            .and_then(|w| w.checked_add(frac.parse::<u64>().map_err(bad).ok()?))
            .ok_or_else(|| Error::InvalidAugmentation(s.to_string()))?;
        Ratio::new(numer, denom)
    } else {
        Ratio::from_integer(text.parse().map_err(bad)?)
    };
    if r < Ratio::from_integer(1) {
        return Err(Error::InvalidAugmentation(format!("{s}: must be at least 1")));
    }
    Ok(r)
}

/// Float view of an augmentation factor, for reporting only.
pub fn aug_to_f64(aug: Aug) -> f64 {
    *aug.numer() as f64 / *aug.denom() as f64
}

/// Integer capacity available under augmentation: `floor(R * capacity)`,
/// computed exactly. Saturates at `u64::MAX` (unreachable for realistic
/// capacities).
pub fn effective_capacity(aug: Aug, capacity: u64) -> u64 {
    let scaled = u128::from(*aug.numer()) * u128::from(capacity) / u128::from(*aug.denom());
    u64::try_from(scaled).unwrap_or(u64::MAX)
}

/// Augmented capacity of every datacenter, indexed by datacenter id.
pub fn augmented_avail(tree: &NetworkTree, aug: Aug) -> Vec<u64> {
    tree.datacenters().map(|dc| effective_capacity(aug, dc.capacity)).collect()
}

/// Datacenters in post-order from the root: every subtree before its parent,
/// children in topology order, so leaves come first on each branch.
pub fn placement_order(tree: &NetworkTree) -> Vec<DcId> {
    let mut out = Vec::with_capacity(tree.len());
    if tree.is_empty() {
        return out;
    }
    let mut stack = vec![(tree.root(), false)];
    while let Some((id, expanded)) = stack.pop() {
        if expanded {
            out.push(id);
            continue;
        }
        stack.push((id, true));
        let dc = tree.dc(id).expect("tree ids are internally consistent");
        for &child in dc.children.iter().rev() {
            stack.push((child, false));
        }
    }
    out
}

/// A (partial) assignment of chains to datacenters with exact residual
/// capacities under one augmentation factor.
#[derive(Debug, Clone)]
pub struct Placement {
    augmentation: Aug,
    assign: BTreeMap<ChainId, Allocation>,
    /// Chains placed by the bottom-up pass this run, in placement order.
    order: Vec<ChainId>,
    /// Residual CPU units per datacenter id.
    avail: Vec<u64>,
}

impl Placement {
    /// Empty placement with full augmented capacities.
    pub fn new(tree: &NetworkTree, aug: Aug) -> Placement {
        Placement {
            augmentation: aug,
            assign: BTreeMap::new(),
            order: Vec::new(),
            avail: augmented_avail(tree, aug),
        }
    }

    pub fn augmentation(&self) -> Aug {
        self.augmentation
    }

    /// All assignments, keyed by chain id.
    pub fn assignments(&self) -> &BTreeMap<ChainId, Allocation> {
        &self.assign
    }

    pub fn allocation(&self, chain: ChainId) -> Option<&Allocation> {
        self.assign.get(&chain)
    }

    pub fn dc_of(&self, chain: ChainId) -> Option<DcId> {
        self.assign.get(&chain).map(|a| a.dc)
    }

    /// Residual units on a datacenter.
    pub fn avail(&self, dc: DcId) -> u64 {
        self.avail[dc.index()]
    }

    pub fn avail_all(&self) -> &[u64] {
        &self.avail
    }

    /// Chains placed by the bottom-up pass this run, oldest first.
    pub fn placed_order(&self) -> &[ChainId] {
        &self.order
    }

    /// Units currently hosted on `dc` by assignments this placement tracks.
    pub fn used(&self, dc: DcId) -> u64 {
        self.assign.values().filter(|a| a.dc == dc).map(Allocation::total).sum()
    }

    /// Charges capacity that is occupied by chains outside this placement's
    /// assignment map (standing chains of a partial decision round).
    pub(crate) fn charge_external(&mut self, dc: DcId, units: u64) -> Result<(), Error> {
        let slot = self
            .avail
            .get_mut(dc.index())
            .ok_or(Error::UnknownDatacenter(dc))?;
        *slot = slot.checked_sub(units).ok_or(Error::StandingExceedsCapacity { dc })?;
        Ok(())
    }

    /// Hosts a chain, consuming capacity and recording placement order.
    pub(crate) fn place(&mut self, alloc: Allocation) {
        let units = alloc.total();
        debug_assert!(self.avail[alloc.dc.index()] >= units);
        self.avail[alloc.dc.index()] -= units;
        self.order.push(alloc.chain);
        self.assign.insert(alloc.chain, alloc);
    }

    /// Adopts an assignment whose capacity is already charged (standing
    /// chains merged into a decision round's output).
    pub(crate) fn adopt(&mut self, alloc: Allocation) {
        debug_assert!(!self.assign.contains_key(&alloc.chain));
        self.assign.insert(alloc.chain, alloc);
    }

    /// Moves a chain to a new allocation, releasing its old capacity.
    pub(crate) fn relocate(&mut self, alloc: Allocation) {
        let old = self.assign.remove(&alloc.chain).expect("relocating an unplaced chain");
        self.avail[old.dc.index()] += old.total();
        let units = alloc.total();
        debug_assert!(self.avail[alloc.dc.index()] >= units);
        self.avail[alloc.dc.index()] -= units;
        self.assign.insert(alloc.chain, alloc);
    }
}

/// Certificate that a set of chains overloads the union of their feasible
/// datacenters: `|chains|` exceeds `Σ ⌊R·C_s⌋ / max cap`, the most chains
/// those datacenters could ever host under the augmented capacities the
/// placement enforces.
#[derive(Debug, Clone)]
pub struct InfeasibilityWitness {
    /// The overloading chains, in discovery order; the chain the bottom-up
    /// pass failed to place comes first.
    pub chains: Vec<ChainId>,
    /// Union of the chains' feasible datacenters.
    pub tree_ids: BTreeSet<DcId>,
    /// `|chains|`.
    pub lhs: u64,
    /// `Σ_{s in tree_ids} ⌊R·C_s⌋ / max_u cap_u`, exact.
    pub rhs: Ratio<u128>,
}

impl InfeasibilityWitness {
    /// The chain the bottom-up pass could not host.
    pub fn failing(&self) -> ChainId {
        self.chains[0]
    }

    /// Whether the certificate inequality `lhs > rhs` holds, exactly.
    pub fn holds(&self) -> bool {
        Ratio::from_integer(u128::from(self.lhs)) > self.rhs
    }
}

impl fmt::Display for InfeasibilityWitness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "infeasible: no capacity for chain {}", self.failing())?;
        write!(f, "overloading chains ({}):", self.chains.len())?;
        for c in &self.chains {
            write!(f, " {c}")?;
        }
        writeln!(f)?;
        write!(f, "feasible datacenters ({}):", self.tree_ids.len())?;
        for dc in &self.tree_ids {
            write!(f, " {dc}")?;
        }
        writeln!(f)?;
        writeln!(
            f,
            "certificate: {} chains > {}/{} supportable ({:.4})",
            self.lhs,
            self.rhs.numer(),
            self.rhs.denom(),
            *self.rhs.numer() as f64 / *self.rhs.denom() as f64,
        )
    }
}

/// Result of the bottom-up pass.
#[derive(Debug)]
pub enum BuOutcome {
    /// Every chain hosted.
    Placed(Placement),
    /// Some chain exhausted its feasible path; the partial placement shows
    /// the state at failure.
    Infeasible { witness: InfeasibilityWitness, partial: Placement },
}

/// Capacity already used by chains that are not being (re)placed this run.
pub type StandingUsage = [(ChainId, DcId, u64)];

/// Bottom-up placement of `to_place` (in input order) under augmentation
/// `aug`, around the capacity held by `standing` chains.
///
/// `feas` must hold a feasible set for every chain in `to_place`; a chain
/// with an empty feasible set yields an immediate witness, since no capacity
/// or augmentation can serve it.
pub fn bu(
    tree: &NetworkTree,
    to_place: &[&ChainSpec],
    feas: &FeasibleMap,
    standing: &StandingUsage,
    aug: Aug,
) -> Result<BuOutcome, Error> {
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
        let fs = feas
            .get(&spec.id)
            .ok_or_else(|| Error::InvalidChain(format!("chain {} has no feasible set", spec.id)))?;
        if fs.is_empty() {
            let witness = build_witness(tree, spec.id, to_place, feas, &placement, standing);
            return Ok(BuOutcome::Infeasible { witness, partial: placement });
        }
    }

    let mut unplaced: Vec<usize> = (0..to_place.len()).collect();
    for s in placement_order(tree) {
        // Candidates: unplaced chains whose PoA lies under s and for which s
        // is delay-feasible, ordered by fewest options above s, then by
        // smallest demand at s, then by input position.
        let mut candidates: Vec<(usize, u64, usize)> = Vec::new();
        for &idx in &unplaced {
            let spec = to_place[idx];
            if !tree.is_ancestor_or_self(s, spec.poa) {
                continue;
            }
            let fs = &feas[&spec.id];
            let Some(pos) = fs.position(s) else { continue };
            let above = fs.len() - pos - 1;
            let units = fs.entries()[pos].1.total();
            candidates.push((above, units, idx));
        }
        candidates.sort_unstable();
        for (above, units, idx) in candidates {
            let spec = to_place[idx];
            if placement.avail(s) >= units {
                placement.place(feas[&spec.id].allocation(s).unwrap().clone());
                unplaced.retain(|&i| i != idx);
            } else if above == 0 {
                // Top of the chain's feasible path reached with no room.
                let witness = build_witness(tree, spec.id, to_place, feas, &placement, standing);
                return Ok(BuOutcome::Infeasible { witness, partial: placement });
            }
        }
    }
    debug_assert!(unplaced.is_empty(), "every chain's feasible top is on its path");
    Ok(BuOutcome::Placed(placement))
}

/// Builds the overload certificate after a failure on `failing`: starting
/// from the failing chain, repeatedly visit every feasible datacenter of a
/// discovered chain from the top down and absorb all its occupants — chains
/// placed this run in reverse placement order, then standing chains by
/// descending id. The visited set is the union of feasible datacenters of
/// the result.
fn build_witness(
    tree: &NetworkTree,
    failing: ChainId,
    to_place: &[&ChainSpec],
    feas: &FeasibleMap,
    placement: &Placement,
    standing: &StandingUsage,
) -> InfeasibilityWitness {
    let mut chains = vec![failing];
    let mut members: BTreeSet<ChainId> = [failing].into();
    let mut visited: BTreeSet<DcId> = BTreeSet::new();
    let mut queue: VecDeque<ChainId> = [failing].into();
    while let Some(u) = queue.pop_front() {
        // Standing chains carry no feasible set here; they count toward the
        // overload but contribute no further datacenters.
        let Some(fs) = feas.get(&u) else { continue };
        for (s, _) in fs.entries().iter().rev() {
            if !visited.insert(*s) {
                continue;
            }
            let mut occupants: Vec<ChainId> = placement
                .placed_order()
                .iter()
                .rev()
                .copied()
                .filter(|&c| placement.dc_of(c) == Some(*s))
                .collect();
            let mut parked: Vec<ChainId> =
                standing.iter().filter(|&&(_, dc, _)| dc == *s).map(|&(c, _, _)| c).collect();
            parked.sort_unstable_by(|a, b| b.cmp(a));
            occupants.extend(parked);
            for occ in occupants {
                if members.insert(occ) {
                    chains.push(occ);
                    queue.push_back(occ);
                }
            }
        }
    }
    let aug = placement.augmentation();
    let cap_sum: u128 = visited
        .iter()
        .map(|dc| u128::from(effective_capacity(aug, tree.capacity(*dc))))
        .sum();
    let max_cap = to_place.iter().map(|c| c.cpu_cap).max().unwrap_or(1).max(1);
    let rhs = Ratio::new(cap_sum, u128::from(max_cap));
    let lhs = chains.len() as u64;
    InfeasibilityWitness { chains, tree_ids: visited, lhs, rhs }
}

/// Fewest CPU units that serve any chain anywhere: the minimum, over all
/// feasible (chain, datacenter) pairs, of the minimal allocation's total.
pub fn mu_tilde(feas: &FeasibleMap) -> Result<u64, Error> {
    feas.values()
        .flat_map(|fs| fs.entries().iter().map(|(_, a)| a.total()))
        .min()
        .ok_or(Error::NoFeasiblePair)
}

/// Augmentation that guarantees the bottom-up pass succeeds whenever the
/// instance is feasible at all: the largest per-chain CPU cap over the
/// smallest allocation that serves any chain.
pub fn r_max<'a>(
    chains: impl IntoIterator<Item = &'a ChainSpec>,
    feas: &FeasibleMap,
) -> Result<Aug, Error> {
    let mu = mu_tilde(feas)?;
    let max_cap = chains.into_iter().map(|c| c.cpu_cap).max().ok_or(Error::NoFeasiblePair)?;
    Ok(Ratio::new(max_cap, mu))
}

/// Whether `dc` can no longer host the biggest possible chain: its residual
/// capacity is strictly below the largest per-chain CPU cap.
pub fn almost_full<'a>(
    dc: DcId,
    placement: &Placement,
    chains: impl IntoIterator<Item = &'a ChainSpec>,
) -> bool {
    let max_cap = chains.into_iter().map(|c| c.cpu_cap).max().unwrap_or(0);
    placement.avail(dc) < max_cap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::allocation::gfa;
    use crate::service::VmDemand;
    use crate::topology::{LinkParams, TreeBuilder};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn one(x: u64) -> Aug {
        Ratio::from_integer(x)
    }

    #[test]
    fn parse_aug_accepts_integers_decimals_and_ratios() {
        assert_eq!(parse_aug("1").unwrap(), one(1));
        assert_eq!(parse_aug("2").unwrap(), one(2));
        assert_eq!(parse_aug("1.5").unwrap(), Ratio::new(3, 2));
        assert_eq!(parse_aug("1.50").unwrap(), Ratio::new(3, 2));
        assert_eq!(parse_aug("2.0").unwrap(), one(2));
        assert_eq!(parse_aug("7/4").unwrap(), Ratio::new(7, 4));
        assert_eq!(parse_aug(" 1.25 ").unwrap(), Ratio::new(5, 4));
        for bad in ["0.5", "0", "-1", "x", "1.", "1/0", "3/4", ""] {
            assert!(parse_aug(bad).is_err(), "{bad:?} should be rejected");
        }
    }

    #[test]
    fn effective_capacity_floors_exactly() {
        assert_eq!(effective_capacity(Ratio::new(3, 2), 5), 7);
        assert_eq!(effective_capacity(one(1), 41), 41);
        assert_eq!(effective_capacity(Ratio::new(11, 10), 10), 11);
        assert_eq!(effective_capacity(Ratio::new(11, 10), 9), 9);
        // Exact at large scales where floats would round.
        assert_eq!(
            effective_capacity(Ratio::new(1_000_001, 1_000_000), 1_000_000_000_000),
            1_000_001_000_000
        );
    }

    fn vm(load: f64) -> VmDemand {
        VmDemand { theta_lambda: load, gamma_theta: 1e-4 }
    }

    fn chain(id: u64, poa: DcId, cap: u64) -> ChainSpec {
        ChainSpec {
            id: ChainId(id),
            vms: vec![vm(0.1)],
            ingress_rate: 1.0,
            egress_rate: 1.0,
            burstiness: 0.0,
            target_delay: 1.0,
            cpu_cap: cap,
            poa,
            current: None,
            service_class: "test".into(),
        }
    }

    /// Root - mid - leaf path with the given capacities.
    fn path3(caps: [u64; 3]) -> (NetworkTree, DcId) {
        let mut b = TreeBuilder::new();
        let root = b.add_root(caps[0], 1.0);
        let mid = b.add_child(root, caps[1], 2.0, LinkParams::default());
        let leaf = b.add_child(mid, caps[2], 4.0, LinkParams::default());
        (b.build().unwrap(), leaf)
    }

    #[test]
    fn single_chain_lands_at_its_poa() {
        let (tree, leaf) = path3([5, 5, 5]);
        let c = chain(1, leaf, 5);
        let feas = gfa(&tree, [&c]).unwrap();
        match bu(&tree, &[&c], &feas, &[], one(1)).unwrap() {
            BuOutcome::Placed(p) => {
                assert_eq!(p.dc_of(ChainId(1)), Some(leaf));
                assert_eq!(p.avail(leaf), 4);
            }
            BuOutcome::Infeasible { .. } => panic!("must place"),
        }
    }

    #[test]
    fn chains_fill_upward_in_order() {
        let (tree, leaf) = path3([1, 1, 1]);
        let chains: Vec<ChainSpec> = (1..=3).map(|i| chain(i, leaf, 1)).collect();
        let refs: Vec<&ChainSpec> = chains.iter().collect();
        let feas = gfa(&tree, refs.iter().copied()).unwrap();
        match bu(&tree, &refs, &feas, &[], one(1)).unwrap() {
            BuOutcome::Placed(p) => {
                assert_eq!(p.dc_of(ChainId(1)), Some(DcId(2)));
                assert_eq!(p.dc_of(ChainId(2)), Some(DcId(1)));
                assert_eq!(p.dc_of(ChainId(3)), Some(DcId(0)));
                assert_eq!(p.placed_order(), [ChainId(1), ChainId(2), ChainId(3)]);
                assert!(p.avail_all().iter().all(|&a| a == 0));
            }
            BuOutcome::Infeasible { .. } => panic!("must place"),
        }
    }

    #[test]
    fn augmentation_makes_room() {
        let (tree, leaf) = path3([1, 1, 1]);
        let chains: Vec<ChainSpec> = (1..=4).map(|i| chain(i, leaf, 1)).collect();
        let refs: Vec<&ChainSpec> = chains.iter().collect();
        let feas = gfa(&tree, refs.iter().copied()).unwrap();
        assert!(matches!(
            bu(&tree, &refs, &feas, &[], one(1)).unwrap(),
            BuOutcome::Infeasible { .. }
        ));
        match bu(&tree, &refs, &feas, &[], one(2)).unwrap() {
            BuOutcome::Placed(p) => {
                // Doubled leaf hosts two chains; the rest climb.
                assert_eq!(p.dc_of(ChainId(1)), Some(DcId(2)));
                assert_eq!(p.dc_of(ChainId(2)), Some(DcId(2)));
                assert_eq!(p.dc_of(ChainId(3)), Some(DcId(1)));
                assert_eq!(p.dc_of(ChainId(4)), Some(DcId(1)));
            }
            BuOutcome::Infeasible { .. } => panic!("R=2 must fit"),
        }
    }

    #[test]
    fn standing_usage_blocks_capacity() {
        let (tree, leaf) = path3([1, 1, 1]);
        let a = chain(1, leaf, 1);
        let feas = gfa(&tree, [&a]).unwrap();
        let standing = [(ChainId(99), DcId(2), 1)];
        match bu(&tree, &[&a], &feas, &standing, one(1)).unwrap() {
            BuOutcome::Placed(p) => {
                assert_eq!(p.dc_of(ChainId(1)), Some(DcId(1)), "leaf is occupied");
            }
            BuOutcome::Infeasible { .. } => panic!("mid level is free"),
        }
        // Standing rows beyond capacity are a caller bug, reported as such.
        let too_much = [(ChainId(99), DcId(2), 2)];
        assert!(matches!(
            bu(&tree, &[&a], &feas, &too_much, one(1)),
            Err(Error::StandingExceedsCapacity { dc: DcId(2) })
        ));
    }

    #[test]
    fn witness_includes_standing_occupants() {
        // One-datacenter feasible path, fully occupied by a standing chain.
        let mut b = TreeBuilder::new();
        let root = b.add_root(5, 1.0);
        let leaf = b.add_child(root, 1, 1.0, LinkParams::default());
        let tree = b.build().unwrap();
        let mut c = chain(1, leaf, 1);
        c.target_delay = 0.0041; // round trip to the root is 4 ms
        let feas = gfa(&tree, [&c]).unwrap();
        assert_eq!(feas[&ChainId(1)].len(), 1, "only the leaf is delay-feasible");
        let standing = [(ChainId(99), leaf, 1)];
        match bu(&tree, &[&c], &feas, &standing, one(1)).unwrap() {
            BuOutcome::Infeasible { witness, .. } => {
                assert_eq!(witness.chains, vec![ChainId(1), ChainId(99)]);
                assert_eq!(witness.tree_ids.iter().copied().collect::<Vec<_>>(), vec![leaf]);
                assert_eq!(witness.lhs, 2);
                assert_eq!(witness.rhs, Ratio::from_integer(1u128));
                assert!(witness.holds());
            }
            BuOutcome::Placed(_) => panic!("leaf is full"),
        }
    }

    #[test]
    fn unservable_chain_yields_a_singleton_witness() {
        let (tree, leaf) = path3([5, 5, 5]);
        let mut c = chain(1, leaf, 5);
        c.vms = vec![vm(50.0)]; // needs 51 units, cap is 5: feasible nowhere
        let feas = gfa(&tree, [&c]).unwrap();
        match bu(&tree, &[&c], &feas, &[], one(1)).unwrap() {
            BuOutcome::Infeasible { witness, .. } => {
                assert_eq!(witness.chains, vec![ChainId(1)]);
                assert!(witness.tree_ids.is_empty());
                assert_eq!(witness.lhs, 1);
                assert_eq!(witness.rhs, Ratio::from_integer(0u128));
                assert!(witness.holds());
            }
            BuOutcome::Placed(_) => panic!("chain is unservable"),
        }
    }

    /// The six-chain overload: two leaf PoAs under different branches, unit
    /// capacities everywhere, every chain needing one unit anywhere on its
    /// path. Three chains per PoA fit; the sixth chain finds the whole
    /// region full.
    fn overload_instance() -> (NetworkTree, Vec<ChainSpec>) {
        let mut b = TreeBuilder::new();
        let s0 = b.add_root(1, 1.0);
        let s1 = b.add_child(s0, 1, 1.0, LinkParams::default());
        let s2 = b.add_child(s0, 1, 1.0, LinkParams::default());
        let s3 = b.add_child(s1, 1, 1.0, LinkParams::default());
        let _s4 = b.add_child(s1, 1, 1.0, LinkParams::default());
        let s5 = b.add_child(s2, 1, 1.0, LinkParams::default());
        let tree = b.build().unwrap();
        let chains: Vec<ChainSpec> = (1..=6)
            .map(|i| chain(i, if i <= 3 { s5 } else { s3 }, 1))
            .collect();
        (tree, chains)
    }

    #[test]
    fn overload_reproduces_the_six_chain_witness() {
        let (tree, chains) = overload_instance();
        let refs: Vec<&ChainSpec> = chains.iter().collect();
        let feas = gfa(&tree, refs.iter().copied()).unwrap();
        for c in &chains {
            assert_eq!(feas[&c.id].len(), 3, "full path must be delay-feasible");
        }
        let (s0, s1, s2, s3, s5) = (DcId(0), DcId(1), DcId(2), DcId(3), DcId(5));
        match bu(&tree, &refs, &feas, &[], one(1)).unwrap() {
            BuOutcome::Infeasible { witness, partial } => {
                // Placement before the failure, in order.
                assert_eq!(
                    partial.placed_order(),
                    [ChainId(4), ChainId(5), ChainId(1), ChainId(2), ChainId(3)]
                );
                assert_eq!(partial.dc_of(ChainId(4)), Some(s3));
                assert_eq!(partial.dc_of(ChainId(5)), Some(s1));
                assert_eq!(partial.dc_of(ChainId(1)), Some(s5));
                assert_eq!(partial.dc_of(ChainId(2)), Some(s2));
                assert_eq!(partial.dc_of(ChainId(3)), Some(s0));
                // The witness absorbs all six chains, discovering them from
                // the failing chain's path outward.
                assert_eq!(
                    witness.chains,
                    [6, 3, 5, 4, 2, 1].map(ChainId).to_vec()
                );
                assert_eq!(
                    witness.tree_ids.iter().copied().collect::<Vec<_>>(),
                    vec![s0, s1, s2, s3, s5],
                    "the unused sibling leaf is not part of any feasible set"
                );
                assert_eq!(witness.lhs, 6);
                assert_eq!(witness.rhs, Ratio::from_integer(5u128));
                assert!(witness.holds());
                // Every datacenter in the certificate is almost-full.
                for dc in &witness.tree_ids {
                    assert!(almost_full(*dc, &partial, refs.iter().copied()));
                }
                let text = witness.to_string();
                assert!(text.contains("chain 6"));
                assert!(text.contains("6 chains > 5/1"));
            }
            BuOutcome::Placed(_) => panic!("instance is overloaded"),
        }
    }

    #[test]
    fn mu_tilde_and_r_max_follow_definitions() {
        let (tree, leaf) = path3([30, 30, 30]);
        let mut a = chain(1, leaf, 30);
        a.vms = vec![vm(3.2)]; // needs 4 units minimum
        let mut b = chain(2, leaf, 7);
        b.vms = vec![vm(1.1)]; // needs 2 units minimum
        let feas = gfa(&tree, [&a, &b]).unwrap();
        assert_eq!(mu_tilde(&feas).unwrap(), 2);
        assert_eq!(r_max([&a, &b], &feas).unwrap(), Ratio::new(15, 1));
        let empty: FeasibleMap = BTreeMap::new();
        assert!(matches!(mu_tilde(&empty), Err(Error::NoFeasiblePair)));
    }

    #[test]
    fn almost_full_is_a_strict_threshold() {
        let (tree, leaf) = path3([5, 5, 3]);
        let c = chain(1, leaf, 3);
        let p = Placement::new(&tree, one(1));
        // Leaf residual 3 equals the max cap: not almost-full (strict).
        assert!(!almost_full(DcId(2), &p, [&c]));
        assert!(almost_full(DcId(2), &p, [&chain(2, leaf, 4)]));
    }

    /// Random small instances: the bottom-up pass either places everything
    /// consistently or emits a witness that holds exactly.
    #[test]
    fn random_instances_keep_invariants() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..300 {
            let caps: [u64; 3] = [rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4)];
            let (tree, leaf) = path3(caps);
            let n = rng.gen_range(1..=6);
            let chains: Vec<ChainSpec> = (1..=n)
                .map(|i| {
                    let mut c = chain(i, leaf, rng.gen_range(1..=3));
                    c.vms = vec![VmDemand {
                        theta_lambda: rng.gen_range(0.05..2.0),
                        gamma_theta: rng.gen_range(1e-5..1e-3),
                    }];
                    c.target_delay = rng.gen_range(0.002..0.05);
                    c
                })
                .collect();
            let refs: Vec<&ChainSpec> = chains.iter().collect();
            let feas = gfa(&tree, refs.iter().copied()).unwrap();
            let aug = Ratio::new(rng.gen_range(2..=4u64), 2); // 1, 3/2, or 2
            let max_cap = chains.iter().map(|c| c.cpu_cap).max().unwrap();
            match bu(&tree, &refs, &feas, &[], aug).unwrap() {
                BuOutcome::Placed(p) => {
                    for c in &chains {
                        let alloc = p.allocation(c.id).unwrap_or_else(|| panic!("{trial}: unplaced"));
                        assert!(feas[&c.id].contains(alloc.dc), "host must be delay-feasible");
                        assert_eq!(feas[&c.id].allocation(alloc.dc).unwrap(), alloc);
                    }
                    for dc in tree.datacenters() {
                        let cap = effective_capacity(aug, dc.capacity);
                        assert_eq!(p.used(dc.id) + p.avail(dc.id), cap, "capacity bookkeeping");
                        // An almost-full datacenter hosts at least
                        // floor(cap / max_cap) chains.
                        if p.avail(dc.id) < max_cap {
                            let hosted =
                                p.assignments().values().filter(|a| a.dc == dc.id).count() as u64;
                            assert!(hosted >= cap / max_cap, "{trial}: count bound violated");
                        }
                    }
                }
                BuOutcome::Infeasible { witness, partial } => {
                    // The failing chain heads the witness and was rejected at
                    // every datacenter of its feasible set, so each of those
                    // is almost-full and inside the witnessed region.
                    let failing = witness.failing();
                    let fs = &feas[&failing];
                    assert!(fs.dcs().all(|dc| witness.tree_ids.contains(&dc)));
                    for (dc, alloc) in fs.entries() {
                        assert!(
                            partial.avail(*dc) < alloc.total(),
                            "{trial}: datacenter {dc} had room for the failing chain"
                        );
                        assert!(almost_full(*dc, &partial, refs.iter().copied()));
                    }
                    // Every chain placed inside the witnessed region counts
                    // toward the overload.
                    for (id, alloc) in partial.assignments() {
                        if witness.tree_ids.contains(&alloc.dc) {
                            assert!(witness.chains.contains(id), "{trial}: occupant missing");
                        }
                    }
                    assert_eq!(witness.lhs, witness.chains.len() as u64);
                }
            }
        }
    }

    /// Random overloads where every chain needs exactly one CPU unit. In
    /// this regime the certificate is guaranteed: a rejection means zero
    /// residual capacity, so every witnessed datacenter is completely full
    /// and its effective capacity counts its hosted chains exactly.
    #[test]
    fn random_unit_demand_witnesses_hold_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut failures = 0;
        for trial in 0..400 {
            let mut b = TreeBuilder::new();
            let s0 = b.add_root(rng.gen_range(1..=2), 1.0);
            let s1 = b.add_child(s0, rng.gen_range(1..=2), 1.0, LinkParams::default());
            let s2 = b.add_child(s0, rng.gen_range(1..=2), 1.0, LinkParams::default());
            let s3 = b.add_child(s1, rng.gen_range(1..=2), 1.0, LinkParams::default());
            let _s4 = b.add_child(s1, rng.gen_range(1..=2), 1.0, LinkParams::default());
            let s5 = b.add_child(s2, rng.gen_range(1..=2), 1.0, LinkParams::default());
            let tree = b.build().unwrap();
            let leaves = [s3, _s4, s5];
            let n = rng.gen_range(1..=10);
            let chains: Vec<ChainSpec> = (1..=n)
                .map(|i| {
                    let mut c = chain(i, leaves[rng.gen_range(0..3)], 1);
                    c.vms = vec![vm(0.5)];
                    // Reaches the point of attachment only, one level up, or
                    // the whole path (each level adds 4 ms both ways).
                    c.target_delay = [0.001, 0.006, 0.02][rng.gen_range(0..3)];
                    c
                })
                .collect();
            let refs: Vec<&ChainSpec> = chains.iter().collect();
            let feas = gfa(&tree, refs.iter().copied()).unwrap();
            let aug = Ratio::new(rng.gen_range(2..=4u64), 2); // 1, 3/2, or 2
            if let BuOutcome::Infeasible { witness, partial } =
                bu(&tree, &refs, &feas, &[], aug).unwrap()
            {
                failures += 1;
                assert!(witness.holds(), "{trial}: witness must hold exactly");
                for dc in &witness.tree_ids {
                    assert!(
                        almost_full(*dc, &partial, refs.iter().copied()),
                        "{trial}: witnessed datacenter {dc} has room"
                    );
                }
            }
        }
        assert!(failures >= 25, "suite must exercise failures, saw {failures}");
    }
}
