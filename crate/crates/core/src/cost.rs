//! The objective: migration, computation, and bandwidth cost of a placement.
//!
//! Each placed chain contributes three terms. Migration is charged once when
//! the hosting datacenter differs from where the chain currently runs — either
//! a flat price or a per-hop price times the path length between the two.
//! Computation is the allocated CPU units times the host's per-unit price.
//! Bandwidth prices the chain's traffic over every link between PoA and host:
//! ingress rate over the uplinks, egress rate over the downlinks.

use std::collections::BTreeMap;

use crate::error::Error;
use crate::service::ChainSpec;
use crate::topology::{DcId, NetworkTree};

/// How a migration is priced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MigPricing {
    /// Flat price per migration, regardless of distance.
    Constant(f64),
    /// Price per link on the path between the old and new host.
    PerHop(f64),
}

impl Default for MigPricing {
    fn default() -> Self {
        MigPricing::Constant(600.0)
    }
}

/// Pricing knobs that are not part of the topology. Per-unit CPU prices live
/// on each datacenter and per-unit bandwidth prices on each link.
#[derive(Debug, Clone, Copy, Default)]
pub struct CostParams {
    pub migration: MigPricing,
}

/// Cost of one chain or one whole placement, split by term.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CostBreakdown {
    pub migration: f64,
    pub computation: f64,
    pub bandwidth: f64,
}

impl CostBreakdown {
    pub fn total(&self) -> f64 {
        self.migration + self.computation + self.bandwidth
    }
}

impl std::ops::Add for CostBreakdown {
    type Output = CostBreakdown;
    fn add(self, rhs: CostBreakdown) -> CostBreakdown {
        CostBreakdown {
            migration: self.migration + rhs.migration,
            computation: self.computation + rhs.computation,
            bandwidth: self.bandwidth + rhs.bandwidth,
        }
    }
}

impl std::ops::AddAssign for CostBreakdown {
    fn add_assign(&mut self, rhs: CostBreakdown) {
        *self = *self + rhs;
    }
}

/// Cost of hosting `chain` on `dc` with `units` total CPU units. Migration is
/// charged against the chain's current host, so candidate placements compared
/// during one decision round all price the move from the same starting point.
///
/// Errors when `dc` is not on the chain's PoA-to-root path.
pub fn per_chain_cost(
    tree: &NetworkTree,
    params: &CostParams,
    chain: &ChainSpec,
    dc: DcId,
    units: u64,
) -> Result<CostBreakdown, Error> {
    if !tree.is_ancestor_or_self(dc, chain.poa) {
        return Err(Error::OffPath { dc, poa: chain.poa });
    }
    let migration = match chain.current {
        Some(cur) if cur != dc => match params.migration {
            MigPricing::Constant(price) => price,
            MigPricing::PerHop(rate) => rate * tree.path(cur, dc)?.len() as f64,
        },
        _ => 0.0,
    };
    let computation = units as f64 * tree.dc(dc)?.cpu_cost;
    let bandwidth = chain.ingress_rate * tree.bw_cost_up_between(chain.poa, dc)
        + chain.egress_rate * tree.bw_cost_down_between(dc, chain.poa);
    Ok(CostBreakdown { migration, computation, bandwidth })
}

/// Total cost of a set of assignments `(chain, host, total units)`.
pub fn total_cost<'a>(
    tree: &NetworkTree,
    params: &CostParams,
    assignments: impl IntoIterator<Item = (&'a ChainSpec, DcId, u64)>,
) -> Result<CostBreakdown, Error> {
    let mut sum = CostBreakdown::default();
    for (chain, dc, units) in assignments {
        sum += per_chain_cost(tree, params, chain, dc, units)?;
    }
    Ok(sum)
}

/// Aggregate traffic per directed link `(from, to)` induced by the given
/// assignments: ingress rates over uplinks, egress rates over downlinks.
pub fn link_traffic<'a>(
    tree: &NetworkTree,
    assignments: impl IntoIterator<Item = (&'a ChainSpec, DcId)>,
) -> Result<BTreeMap<(DcId, DcId), f64>, Error> {
    let mut load: BTreeMap<(DcId, DcId), f64> = BTreeMap::new();
    for (chain, dc) in assignments {
        if !tree.is_ancestor_or_self(dc, chain.poa) {
            return Err(Error::OffPath { dc, poa: chain.poa });
        }
        for link in tree.path(chain.poa, dc)? {
            *load.entry((link.from, link.to)).or_default() += chain.ingress_rate;
        }
        for link in tree.path(dc, chain.poa)? {
            *load.entry((link.from, link.to)).or_default() += chain.egress_rate;
        }
    }
    Ok(load)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::service::{ChainId, VmDemand};
    use crate::topology::{Antenna, Rect, TreeParams};

    /// Six-level tree over the default grid, unit CPU base.
    fn six_level_tree() -> NetworkTree {
        let params = TreeParams::uniform(5, 100);
        let area = Rect { x_min: 0.0, y_min: 0.0, x_max: 1024.0, y_max: 1024.0 };
        let antennas: Vec<Antenna> = (0..256)
            .map(|i| Antenna {
                poa_id: i,
                x: 32.0 + 64.0 * (i % 16) as f64,
                y: 32.0 + 64.0 * (i / 16) as f64,
            })
            .collect();
        crate::topology::build_tree(&params, area, &antennas).unwrap()
    }

    fn chain_at(poa: DcId, current: Option<DcId>) -> ChainSpec {
        ChainSpec {
            id: ChainId(7),
            vms: vec![
                VmDemand { theta_lambda: 2.0, gamma_theta: 1e-4 },
                VmDemand { theta_lambda: 10.0, gamma_theta: 1e-4 },
                VmDemand { theta_lambda: 2.0, gamma_theta: 1e-4 },
            ],
            ingress_rate: 1.0,
            egress_rate: 1.0,
            burstiness: 0.0,
            target_delay: 0.1,
            cpu_cap: 25,
            poa,
            current,
            service_class: "nav".into(),
        }
    }

    #[test]
    fn computation_cost_doubles_per_level_toward_the_edge() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let chain = chain_at(poa, None);
        let params = CostParams::default();
        let path = tree.root_path(poa).unwrap();
        assert_eq!(path.len(), 6);
        // 14 units placed at levels 0..=5 cost 448, 224, 112, 56, 28, 14.
        let mut expected = [448.0, 224.0, 112.0, 56.0, 28.0, 14.0].into_iter();
        for dc in &path {
            let c = per_chain_cost(&tree, &params, &chain, *dc, 14).unwrap();
            assert_eq!(c.computation, expected.next().unwrap());
            assert_eq!(c.migration, 0.0);
        }
    }

    #[test]
    fn bandwidth_cost_grows_linearly_with_hops() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let chain = chain_at(poa, None);
        let params = CostParams::default();
        for (hops, dc) in tree.root_path(poa).unwrap().into_iter().enumerate() {
            let c = per_chain_cost(&tree, &params, &chain, dc, 14).unwrap();
            // Unit rates in both directions over links priced 3 each.
            assert_eq!(c.bandwidth, 6.0 * hops as f64);
        }
    }

    #[test]
    fn root_placement_costs_forty_four_plus_bandwidth() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let chain = chain_at(poa, None);
        let c = per_chain_cost(&tree, &CostParams::default(), &chain, tree.root(), 14).unwrap();
        assert_eq!(c.computation + c.bandwidth, 44.0);
        assert_eq!(c.total(), 44.0);
    }

    #[test]
    fn migration_is_charged_only_on_a_move() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let path = tree.root_path(poa).unwrap();
        let params = CostParams::default();
        let staying = chain_at(poa, Some(path[2]));
        let c = per_chain_cost(&tree, &params, &staying, path[2], 14).unwrap();
        assert_eq!(c.migration, 0.0);
        let moving = per_chain_cost(&tree, &params, &staying, path[3], 14).unwrap();
        assert_eq!(moving.migration, 600.0);
        let fresh = chain_at(poa, None);
        let c = per_chain_cost(&tree, &params, &fresh, path[3], 14).unwrap();
        assert_eq!(c.migration, 0.0, "first placement is not a migration");
    }

    #[test]
    fn per_hop_migration_prices_the_path_length() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let path = tree.root_path(poa).unwrap();
        let params = CostParams { migration: MigPricing::PerHop(10.0) };
        let chain = chain_at(poa, Some(path[1]));
        // One hop up.
        let c = per_chain_cost(&tree, &params, &chain, path[2], 14).unwrap();
        assert_eq!(c.migration, 10.0);
        // Moving from a remote current host prices the full path through the
        // lowest common ancestor: straight up to the root, or V-shaped into
        // the chain's own subtree.
        let other_poa = *tree.leaves().last().unwrap();
        let remote = chain_at(poa, Some(other_poa));
        let c = per_chain_cost(&tree, &params, &remote, tree.root(), 14).unwrap();
        assert_eq!(c.migration, 10.0 * 5.0);
        let c = per_chain_cost(&tree, &params, &remote, path[1], 14).unwrap();
        assert_eq!(c.migration, 10.0 * (5.0 + 4.0));
    }

    #[test]
    fn off_path_host_is_rejected() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let other = *tree.leaves().last().unwrap();
        let chain = chain_at(poa, None);
        assert!(matches!(
            per_chain_cost(&tree, &CostParams::default(), &chain, other, 14),
            Err(Error::OffPath { .. })
        ));
    }

    #[test]
    fn total_cost_sums_over_chains() {
        let tree = six_level_tree();
        let params = CostParams::default();
        let a = chain_at(tree.leaves()[0], None);
        let b = chain_at(tree.leaves()[1], None);
        let total = total_cost(
            &tree,
            &params,
            [(&a, tree.root(), 14), (&b, b.poa, 14)],
        )
        .unwrap();
        assert_eq!(total.total(), 44.0 + 448.0);
    }

    #[test]
    fn link_traffic_accumulates_bidirectional_rates() {
        let tree = six_level_tree();
        let poa = tree.leaves()[0];
        let path = tree.root_path(poa).unwrap();
        let mut a = chain_at(poa, None);
        a.ingress_rate = 2.0;
        a.egress_rate = 0.5;
        let b = chain_at(poa, None);
        let load = link_traffic(&tree, [(&a, path[2]), (&b, path[1])]).unwrap();
        // First uplink carries both chains' ingress.
        assert_eq!(load[&(path[0], path[1])], 3.0);
        // Second uplink carries only chain a.
        assert_eq!(load[&(path[1], path[2])], 2.0);
        // Downlinks carry egress.
        assert_eq!(load[&(path[1], path[0])], 1.5);
        assert_eq!(load[&(path[2], path[1])], 0.5);
        // A chain placed at its PoA adds no traffic anywhere.
        let c = chain_at(poa, None);
        let load = link_traffic(&tree, [(&c, poa)]).unwrap();
        assert!(load.is_empty());
    }
}
