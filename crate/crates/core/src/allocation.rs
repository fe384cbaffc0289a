//! Gradient CPU allocation and per-chain feasible sets.
//!
//! [`gfa_single`] answers: hosted on a given datacenter, how many CPU units
//! does each VM of a chain need so the end-to-end delay meets the target,
//! using as few total units as possible? It starts every VM at the smallest
//! stable allocation and repeatedly gives one more unit to the VM whose delay
//! drops the most, stopping at the target or at the chain's CPU cap. Every
//! intermediate allocation spends its running budget optimally, so the first
//! allocation that meets the target is also the cheapest one that does.
//!
//! [`gfa`] runs the scan over the whole PoA-to-root path of each chain,
//! bottom-up. Network delay only grows with height, so once a datacenter is
//! infeasible every ancestor is too and the rest of the path is pruned; the
//! result is the chain's feasible set.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::service::{net_delay, vm_delay, Allocation, ChainId, ChainSpec, VmDemand};
use crate::topology::{DcId, NetworkTree};
use crate::delay_exceeds;

/// Drop in a VM's delay from granting one extra unit: `D(mu) - D(mu + 1)`.
///
/// Errors when `mu` is at or below the VM's finiteness threshold.
pub fn delay_reduction(vm: &VmDemand, mu: u32) -> Result<f64, Error> {
    let here = vm_delay(vm.theta_lambda, vm.gamma_theta, mu)?;
    let next = vm_delay(vm.theta_lambda, vm.gamma_theta, mu + 1)?;
    Ok(here - next)
}

/// One intermediate allocation of the gradient scan.
#[derive(Debug, Clone)]
pub struct GfaIterate {
    /// Total units allocated at this step.
    pub budget: u64,
    /// Computation delay of the allocation.
    pub comp_delay: f64,
    /// Units per VM.
    pub units: Vec<u32>,
}

/// Core gradient allocation against a delay slack (target minus network
/// delay). Returns the per-VM units, or None when no allocation within
/// `cpu_cap` meets the slack. When `trace` is given, every iterate is
/// recorded, including a final over-cap one if the budget runs out.
fn allocate(
    vms: &[VmDemand],
    cpu_cap: u64,
    slack: f64,
    mut trace: Option<&mut Vec<GfaIterate>>,
) -> Option<Vec<u32>> {
    let mut units: Vec<u32> = vms.iter().map(VmDemand::min_units).collect();
    let mut total: u64 = units.iter().map(|&u| u64::from(u)).sum();
    if total > cpu_cap {
        return None;
    }
    let comp = |units: &[u32]| -> f64 {
        vms.iter()
            .zip(units)
            .map(|(vm, &mu)| vm.gamma_theta / (f64::from(mu) - vm.theta_lambda))
            .sum()
    };
    let mut d = comp(&units);
    if let Some(t) = trace.as_deref_mut() {
        t.push(GfaIterate { budget: total, comp_delay: d, units: units.clone() });
    }
    if slack <= 0.0 {
        // No positive computation delay can fit; don't touch the CPU.
        return None;
    }
    while delay_exceeds(d, slack) && total <= cpu_cap {
        let mut best = 0usize;
        let mut best_gain = f64::NEG_INFINITY;
        for (k, vm) in vms.iter().enumerate() {
            let gain = vm.gamma_theta / (f64::from(units[k]) - vm.theta_lambda)
                - vm.gamma_theta / (f64::from(units[k] + 1) - vm.theta_lambda);
            if gain > best_gain {
                best_gain = gain;
                best = k;
            }
        }
        units[best] += 1;
        total += 1;
        d = comp(&units);
        if let Some(t) = trace.as_deref_mut() {
            t.push(GfaIterate { budget: total, comp_delay: d, units: units.clone() });
        }
    }
    if total > cpu_cap {
        None
    } else {
        Some(units)
    }
}

/// Minimal allocation of `chain` on `dc`, or None when infeasible there.
///
/// Errors when `dc` is off the chain's PoA-to-root path.
pub fn gfa_single(tree: &NetworkTree, chain: &ChainSpec, dc: DcId) -> Result<Option<Allocation>, Error> {
    let slack = chain.target_delay - net_delay(tree, chain, dc)?;
    Ok(allocate(&chain.vms, chain.cpu_cap, slack, None)
        .map(|units| Allocation { chain: chain.id, dc, units }))
}

/// Gradient-scan iterates of `chain` against an explicit delay slack,
/// exposed for budget-optimality diagnostics.
pub fn gfa_iterates(chain: &ChainSpec, slack: f64) -> Vec<GfaIterate> {
    let mut trace = Vec::new();
    let _ = allocate(&chain.vms, chain.cpu_cap, slack, Some(&mut trace));
    trace
}

/// The delay-feasible datacenters of one chain, bottom-up from its PoA, with
/// the minimal allocation at each.
#[derive(Debug, Clone)]
pub struct FeasibleSet {
    pub chain: ChainId,
    entries: Vec<(DcId, Allocation)>,
}

impl FeasibleSet {
    /// Feasible datacenters bottom-up from the PoA.
    pub fn dcs(&self) -> impl Iterator<Item = DcId> + '_ {
        self.entries.iter().map(|(dc, _)| *dc)
    }

    pub fn entries(&self) -> &[(DcId, Allocation)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, dc: DcId) -> bool {
        self.entries.iter().any(|(d, _)| *d == dc)
    }

    /// Position of `dc` in the bottom-up order.
    pub fn position(&self, dc: DcId) -> Option<usize> {
        self.entries.iter().position(|(d, _)| *d == dc)
    }

    pub fn allocation(&self, dc: DcId) -> Option<&Allocation> {
        self.entries.iter().find(|(d, _)| *d == dc).map(|(_, a)| a)
    }

    /// Total CPU units of the minimal allocation at `dc`.
    pub fn units(&self, dc: DcId) -> Option<u64> {
        self.allocation(dc).map(Allocation::total)
    }

    /// The highest feasible datacenter, if any.
    pub fn top(&self) -> Option<DcId> {
        self.entries.last().map(|(d, _)| *d)
    }

    /// Feasible datacenters strictly above `dc` (which must be a member).
    pub fn above(&self, dc: DcId) -> &[(DcId, Allocation)] {
        match self.position(dc) {
            Some(i) => &self.entries[i + 1..],
            None => &[],
        }
    }
}

/// Map from chain id to its feasible set.
pub type FeasibleMap = BTreeMap<ChainId, FeasibleSet>;

/// Runs the gradient scan for every chain over its PoA-to-root path.
pub fn gfa<'a>(
    tree: &NetworkTree,
    chains: impl IntoIterator<Item = &'a ChainSpec>,
) -> Result<FeasibleMap, Error> {
    let mut out = BTreeMap::new();
    for chain in chains {
        chain.validate()?;
        let mut entries = Vec::new();
        for dc in tree.root_path(chain.poa)? {
            match gfa_single(tree, chain, dc)? {
                Some(alloc) => entries.push((dc, alloc)),
                // Network delay grows with height, so every ancestor is
                // infeasible too: prune the rest of the path.
                None => break,
            }
        }
        out.insert(chain.id, FeasibleSet { chain: chain.id, entries });
    }
    Ok(out)
}

/// Exhaustive reference: the minimum-delay allocation of exactly `budget`
/// units, by enumerating every composition above the finiteness threshold.
/// Returns the best units and their computation delay; ties resolve to the
/// lexicographically smallest composition.
///
/// Errors when `budget` is below the chain's finiteness threshold.
pub fn b_minimal_oracle(chain: &ChainSpec, budget: u64) -> Result<(Vec<u32>, f64), Error> {
    let threshold = chain.finiteness_threshold();
    if budget < threshold {
        return Err(Error::BudgetBelowThreshold { budget, threshold });
    }
    let mins: Vec<u32> = chain.vms.iter().map(VmDemand::min_units).collect();
    let min_tail: Vec<u64> = {
        // min_tail[k] = sum of minimum units for VMs k..end.
        let mut v = vec![0u64; chain.vms.len() + 1];
        for k in (0..chain.vms.len()).rev() {
            v[k] = v[k + 1] + u64::from(mins[k]);
        }
        v
    };
    struct Enumerate<'a> {
        chain: &'a ChainSpec,
        mins: &'a [u32],
        min_tail: &'a [u64],
        units: Vec<u32>,
        best: Option<(Vec<u32>, f64)>,
    }

    impl Enumerate<'_> {
        fn run(&mut self, k: usize, remaining: u64, partial_delay: f64) {
            if k == self.chain.vms.len() - 1 {
                // Last VM takes everything left.
                let mu = remaining as u32;
                self.units[k] = mu;
                let vm = &self.chain.vms[k];
                let d = partial_delay + vm.gamma_theta / (f64::from(mu) - vm.theta_lambda);
                if self.best.as_ref().is_none_or(|(_, bd)| d < *bd) {
                    self.best = Some((self.units.clone(), d));
                }
                return;
            }
            let hi = remaining - self.min_tail[k + 1];
            for mu in u64::from(self.mins[k])..=hi {
                self.units[k] = mu as u32;
                let vm = &self.chain.vms[k];
                let d = partial_delay + vm.gamma_theta / (mu as f64 - vm.theta_lambda);
                self.run(k + 1, remaining - mu, d);
            }
        }
    }

    let mut search = Enumerate {
        chain,
        mins: &mins,
        min_tail: &min_tail,
        units: mins.clone(),
        best: None,
    };
    search.run(0, budget, 0.0);
    Ok(search.best.expect("at least the threshold composition exists"))
}
