//! Service chains and end-to-end delay evaluation.
//!
//! A chain is an ordered sequence of VMs traversed by a request flow that
//! enters at the chain's PoA, climbs to the hosting datacenter, crosses the
//! VMs, and returns to the PoA. Each VM is an M/M/1 queue: with `mu` CPU
//! units allocated against a load of `theta_lambda` units, one data unit
//! spends `gamma_theta / (mu - theta_lambda)` seconds in it. The network
//! contribution is the token-bucket burst drain at both ends plus the latency
//! of every link crossed in each direction.

use std::fmt;

use crate::error::Error;
use crate::topology::{DcId, NetworkTree};
use crate::{delay_exceeds, DELAY_TOL};

/// Chain identifier (the harness uses the vehicle id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ChainId(pub u64);

impl fmt::Display for ChainId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Processing demand of one VM.
#[derive(Debug, Clone, Copy)]
pub struct VmDemand {
    /// Load in CPU units: input rate times processing density.
    pub theta_lambda: f64,
    /// Delay numerator in CPU-unit-seconds: per-data-unit work, scaled so
    /// that `gamma_theta / (mu - theta_lambda)` is in seconds.
    pub gamma_theta: f64,
}

impl VmDemand {
    /// Smallest integer allocation with finite delay: `floor(theta_lambda) + 1`.
    #[inline]
    pub fn min_units(&self) -> u32 {
        self.theta_lambda as u32 + 1
    }
}

/// A service chain request.
#[derive(Debug, Clone)]
pub struct ChainSpec {
    pub id: ChainId,
    /// VM demands in traversal order; at least one.
    pub vms: Vec<VmDemand>,
    /// Uplink traffic rate from the PoA to the first VM.
    pub ingress_rate: f64,
    /// Downlink traffic rate from the last VM back to the PoA.
    pub egress_rate: f64,
    /// Token-bucket burst size at both ends; zero for fluid traffic.
    pub burstiness: f64,
    /// End-to-end delay target in seconds.
    pub target_delay: f64,
    /// Per-chain CPU cap: the SLA bounds the chain's total allocation.
    pub cpu_cap: u64,
    /// Leaf datacenter co-located with the chain's PoA.
    pub poa: DcId,
    /// Current hosting datacenter, if deployed.
    pub current: Option<DcId>,
    /// Service-class label for reporting (e.g. a real-time tier).
    pub service_class: String,
}

impl ChainSpec {
    /// Number of VMs in the chain.
    pub fn len(&self) -> usize {
        self.vms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vms.is_empty()
    }

    /// Total CPU units below which some VM has infinite delay.
    pub fn finiteness_threshold(&self) -> u64 {
        self.vms.iter().map(|v| u64::from(v.min_units())).sum()
    }

    /// Validates rates, delays, and shape.
    pub fn validate(&self) -> Result<(), Error> {
        if self.vms.is_empty() {
            return Err(Error::InvalidChain(format!("chain {} has no VMs", self.id)));
        }
        for (k, vm) in self.vms.iter().enumerate() {
            if !(vm.theta_lambda > 0.0 && vm.theta_lambda.is_finite()) {
                return Err(Error::InvalidChain(format!(
                    "chain {} VM {k}: load must be positive and finite",
                    self.id
                )));
            }
            if !(vm.gamma_theta > 0.0 && vm.gamma_theta.is_finite()) {
                return Err(Error::InvalidChain(format!(
                    "chain {} VM {k}: delay numerator must be positive and finite",
                    self.id
                )));
            }
        }
        // NaN rates must fail too, hence the explicit `is_nan` arms.
        if self.ingress_rate <= 0.0
            || self.ingress_rate.is_nan()
            || self.egress_rate <= 0.0
            || self.egress_rate.is_nan()
        {
            return Err(Error::InvalidChain(format!(
                "chain {} traffic rates must be positive",
                self.id
            )));
        }
        if self.burstiness < 0.0 {
            return Err(Error::InvalidChain(format!(
                "chain {} burstiness must be non-negative",
                self.id
            )));
        }
        if self.target_delay <= 0.0 || self.target_delay.is_nan() {
            return Err(Error::InvalidChain(format!(
                "chain {} delay target must be positive",
                self.id
            )));
        }
        if self.cpu_cap == 0 {
            return Err(Error::InvalidChain(format!("chain {} CPU cap must be positive", self.id)));
        }
        Ok(())
    }
}

/// An integral CPU allocation for one chain hosted at one datacenter.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Allocation {
    pub chain: ChainId,
    pub dc: DcId,
    /// CPU units per VM, in chain order.
    pub units: Vec<u32>,
}

impl Allocation {
    /// Total CPU units of the chain.
    pub fn total(&self) -> u64 {
        self.units.iter().map(|&u| u64::from(u)).sum()
    }
}

/// M/M/1 sojourn time of one VM: `gamma_theta / (mu - theta_lambda)`.
///
/// Errors when `mu <= theta_lambda`, where the queue is unstable.
pub fn vm_delay(theta_lambda: f64, gamma_theta: f64, mu: u32) -> Result<f64, Error> {
    let slack = f64::from(mu) - theta_lambda;
    if slack <= 0.0 {
        return Err(Error::InfiniteDelay { mu, theta_lambda });
    }
    Ok(gamma_theta / slack)
}

/// Computation delay of a chain: the sum of its VM delays under `units`.
pub fn chain_comp_delay(chain: &ChainSpec, units: &[u32]) -> Result<f64, Error> {
    assert_eq!(chain.vms.len(), units.len(), "allocation length mismatch");
    let mut total = 0.0;
    for (vm, &mu) in chain.vms.iter().zip(units) {
        total += vm_delay(vm.theta_lambda, vm.gamma_theta, mu)?;
    }
    Ok(total)
}

/// Network delay of hosting `chain` on `dc`: burst drain at both ends plus
/// the latency of every link on the PoA-to-host path, each way.
///
/// Errors when `dc` is not on the chain's PoA-to-root path.
pub fn net_delay(tree: &NetworkTree, chain: &ChainSpec, dc: DcId) -> Result<f64, Error> {
    tree.dc(dc)?;
    tree.dc(chain.poa)?;
    if !tree.is_ancestor_or_self(dc, chain.poa) {
        return Err(Error::OffPath { dc, poa: chain.poa });
    }
    let burst = if chain.burstiness > 0.0 {
        chain.burstiness / chain.ingress_rate + chain.burstiness / chain.egress_rate
    } else {
        0.0
    };
    Ok(burst + tree.tau_up_between(chain.poa, dc) + tree.tau_down_between(dc, chain.poa))
}

/// End-to-end delay: computation plus network.
pub fn total_delay(
    tree: &NetworkTree,
    chain: &ChainSpec,
    dc: DcId,
    units: &[u32],
) -> Result<f64, Error> {
    Ok(chain_comp_delay(chain, units)? + net_delay(tree, chain, dc)?)
}

/// True when `delay` meets `target` within the global delay tolerance.
#[inline]
pub fn meets_target(delay: f64, target: f64) -> bool {
    !delay_exceeds(delay, target)
}

/// Convenience check used by tests: absolute closeness at [`DELAY_TOL`].
#[inline]
pub fn delay_close(a: f64, b: f64) -> bool {
    (a - b).abs() <= DELAY_TOL
}
