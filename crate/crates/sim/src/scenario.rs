//! Scenario configuration: service area, topology shape, antenna layout,
//! service catalog, prices, run settings, and trace source, loaded from TOML.
//!
//! Every field has a default, so an empty file is a valid scenario: a
//! 4000 m x 4000 m area served by an 8 x 8 antenna grid under a height-4
//! tree, 300 vehicles at city speed for one minute, two service classes
//! (10 ms and 100 ms targets) mixed at a 0.3 real-time ratio.

use std::fs;
use std::path::Path;

use chainplace_core::cost::{CostParams, MigPricing};
use chainplace_core::placement::parse_aug;
use chainplace_core::pushup::AugPolicy;
use chainplace_core::service::{ChainId, ChainSpec, VmDemand};
use chainplace_core::topology::{
    build_tree, Antenna, DcId, LinkParams, NetworkTree, Rect, TreeParams,
};
use serde::Deserialize;

use crate::error::{Error, Result};

/// Axis-aligned service area in meters.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AreaConfig {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl Default for AreaConfig {
    fn default() -> Self {
        AreaConfig { x_min: 0.0, y_min: 0.0, x_max: 4000.0, y_max: 4000.0 }
    }
}

/// Shape and pricing of the datacenter tree. Levels run from `height` at
/// the root down to 0 at the antenna-co-located leaves; each level splits
/// its rectangle into quadrants. A level-l datacenter holds
/// `(l + 1) * cpu_base` CPU units priced at `2^(height - l)` per unit, so
/// computation is cheapest at the root.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopologyConfig {
    /// Root level; the tree has `height + 1` levels. At least 2.
    pub height: u32,
    /// Base CPU capacity unit; the leaf capacity. The capacity sweep probes
    /// this value.
    pub cpu_base: u64,
    /// One-way per-link propagation delay in milliseconds.
    pub link_delay_ms: f64,
    /// Link capacity in bits per second.
    pub bandwidth_bps: f64,
    /// Price per traffic unit per link direction.
    pub bw_cost: f64,
}

impl Default for TopologyConfig {
    fn default() -> Self {
        TopologyConfig {
            height: 4,
            cpu_base: 20,
            link_delay_ms: 2.0,
            bandwidth_bps: 1e9,
            bw_cost: 3.0,
        }
    }
}

/// Where the antenna layout comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntennaKind {
    /// Evenly spaced grid of cell centers over the area.
    Grid,
    /// CSV file with header `poa_id,x_m,y_m`.
    File,
}

/// Antenna layout: a synthetic grid or an external CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AntennaConfig {
    pub kind: AntennaKind,
    pub rows: u32,
    pub cols: u32,
    /// CSV path; required when `kind = "file"`.
    pub path: Option<String>,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        AntennaConfig { kind: AntennaKind::Grid, rows: 8, cols: 8, path: None }
    }
}

/// The service catalog: every chain has the same three-VM demand profile
/// and belongs to one of two delay classes.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServicesConfig {
    /// Probability that an arriving vehicle requests the real-time class.
    pub rt_ratio: f64,
    /// Per-VM load in CPU units, in chain order.
    pub theta_lambda: Vec<f64>,
    /// Per-VM delay numerator in CPU-unit-seconds.
    pub gamma_theta: f64,
    /// SLA cap on a chain's total CPU units.
    pub cpu_cap: u64,
    /// Uplink traffic rate.
    pub ingress_rate: f64,
    /// Downlink traffic rate.
    pub egress_rate: f64,
    /// Token-bucket burst size at both ends.
    pub burstiness: f64,
    /// Real-time class delay target in milliseconds.
    pub rt_target_ms: f64,
    /// Relaxed class delay target in milliseconds.
    pub standard_target_ms: f64,
}

impl Default for ServicesConfig {
    fn default() -> Self {
        ServicesConfig {
            rt_ratio: 0.3,
            theta_lambda: vec![2.0, 10.0, 2.0],
            gamma_theta: 1e-4,
            cpu_cap: 25,
            ingress_rate: 1.0,
            egress_rate: 1.0,
            burstiness: 0.0,
            rt_target_ms: 10.0,
            standard_target_ms: 100.0,
        }
    }
}

/// Migration pricing. CPU and bandwidth prices live on the topology.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CostConfig {
    /// Migration fee; flat by default.
    pub migration: f64,
    /// Price per path link instead of a flat fee.
    pub per_hop: bool,
}

impl Default for CostConfig {
    fn default() -> Self {
        CostConfig { migration: 600.0, per_hop: false }
    }
}

/// Decision-loop settings.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Decision period T in seconds.
    pub period_s: f64,
    /// Seed for arrival classes, handling order, and synthetic traces.
    pub seed: u64,
    /// `"auto"` or a fixed factor such as `"1"`, `"1.5"`, `"3/2"`.
    pub augmentation: String,
    /// Abort the run at the first infeasible decision instead of carrying
    /// unplaced chains forward.
    pub halt_on_infeasible: bool,
    /// Assignment-space guard for the exhaustive-search algorithm.
    pub oracle_guard: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            period_s: 1.0,
            seed: 1,
            augmentation: "auto".into(),
            halt_on_infeasible: false,
            oracle_guard: 1_000_000,
        }
    }
}

/// Where vehicle movement comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TraceKind {
    /// Seeded random-waypoint generator.
    Synthetic,
    /// CSV file with header `time_sec,vehicle_id,x_m,y_m`.
    File,
}

/// Trace source: a synthetic random-waypoint population or an external CSV.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub kind: TraceKind,
    /// Vehicles present at time zero.
    pub vehicles: u64,
    /// Mean speed; each vehicle draws its own speed uniformly from
    /// `[0.5, 1.5] * mean`.
    pub mean_speed_mps: f64,
    /// Trace length in seconds.
    pub duration_s: f64,
    /// New vehicles per second (Poisson), on top of the initial population.
    pub arrivals_per_s: f64,
    /// Mean sojourn of late arrivals in seconds (exponential); zero keeps
    /// every vehicle until the end.
    pub mean_dwell_s: f64,
    /// CSV path; required when `kind = "file"`.
    pub path: Option<String>,
}

impl Default for TraceConfig {
    fn default() -> Self {
        TraceConfig {
            kind: TraceKind::Synthetic,
            vehicles: 300,
            mean_speed_mps: 4.28,
            duration_s: 60.0,
            arrivals_per_s: 0.0,
            mean_dwell_s: 0.0,
            path: None,
        }
    }
}

/// A complete scenario. Every section is optional in the TOML.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub area: AreaConfig,
    pub topology: TopologyConfig,
    pub antennas: AntennaConfig,
    pub services: ServicesConfig,
    pub costs: CostConfig,
    pub run: RunConfig,
    pub trace: TraceConfig,
}

impl ScenarioConfig {
    /// Parses and validates a scenario from TOML text.
    pub fn from_toml_str(text: &str) -> Result<ScenarioConfig> {
        let cfg: ScenarioConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads and validates a scenario file.
    pub fn load(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
        let text = fs::read_to_string(path)?;
        ScenarioConfig::from_toml_str(&text)
    }

    /// Checks every cross-field constraint the types cannot express.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        let a = &self.area;
        if !(a.x_max > a.x_min && a.y_max > a.y_min)
            || ![a.x_min, a.x_max, a.y_min, a.y_max].iter().all(|v| v.is_finite())
        {
            return fail(format!(
                "degenerate area ({}, {}) .. ({}, {})",
                a.x_min, a.y_min, a.x_max, a.y_max
            ));
        }
        if self.topology.height < 2 {
            return fail(format!("tree height {} is below 2", self.topology.height));
        }
        if self.topology.link_delay_ms < 0.0 || !self.topology.link_delay_ms.is_finite() {
            return fail(format!("negative link delay {} ms", self.topology.link_delay_ms));
        }
        if self.topology.bandwidth_bps <= 0.0 {
            return fail(format!("non-positive bandwidth {}", self.topology.bandwidth_bps));
        }
        match self.antennas.kind {
            AntennaKind::Grid => {
                if self.antennas.rows == 0 || self.antennas.cols == 0 {
                    return fail("antenna grid needs at least one row and column".into());
                }
            }
            AntennaKind::File => {
                if self.antennas.path.is_none() {
                    return fail("antennas.kind = \"file\" requires antennas.path".into());
                }
            }
        }
        let s = &self.services;
        if !(0.0..=1.0).contains(&s.rt_ratio) {
            return fail(format!("rt_ratio {} is outside [0, 1]", s.rt_ratio));
        }
        if s.theta_lambda.is_empty() || s.theta_lambda.iter().any(|&v| v <= 0.0 || v.is_nan()) {
            return fail("theta_lambda must list a positive load per VM".into());
        }
        if s.gamma_theta <= 0.0 || s.gamma_theta.is_nan() {
            return fail(format!("non-positive gamma_theta {}", s.gamma_theta));
        }
        if s.rt_target_ms <= 0.0 || s.standard_target_ms <= 0.0 {
            return fail("delay targets must be positive".into());
        }
        if s.cpu_cap == 0 {
            return fail("cpu_cap must be positive".into());
        }
        if s.ingress_rate <= 0.0 || s.egress_rate <= 0.0 || s.burstiness < 0.0 {
            return fail("traffic rates must be positive and burstiness non-negative".into());
        }
        if self.costs.migration < 0.0 || !self.costs.migration.is_finite() {
            return fail(format!("negative migration fee {}", self.costs.migration));
        }
        if self.run.period_s <= 0.0 || !self.run.period_s.is_finite() {
            return fail(format!("non-positive decision period {}", self.run.period_s));
        }
        self.policy()?;
        let t = &self.trace;
        match t.kind {
            TraceKind::Synthetic => {
                if t.mean_speed_mps < 0.0 || !t.mean_speed_mps.is_finite() {
                    return fail(format!("negative mean speed {}", t.mean_speed_mps));
                }
                if t.duration_s < 0.0 || !t.duration_s.is_finite() {
                    return fail(format!("negative duration {}", t.duration_s));
                }
                if t.arrivals_per_s < 0.0 || t.mean_dwell_s < 0.0 {
                    return fail("arrival and dwell rates must be non-negative".into());
                }
            }
            TraceKind::File => {
                if t.path.is_none() {
                    return fail("trace.kind = \"file\" requires trace.path".into());
                }
            }
        }
        Ok(())
    }

    /// The service area as a rectangle.
    pub fn area_rect(&self) -> Rect {
        Rect::new(self.area.x_min, self.area.y_min, self.area.x_max, self.area.y_max)
    }

    /// The antenna layout: grid cell centers in row-major order, or the
    /// rows of the configured CSV.
    pub fn antenna_list(&self) -> Result<Vec<Antenna>> {
        match self.antennas.kind {
            AntennaKind::Grid => {
                let (rows, cols) = (self.antennas.rows, self.antennas.cols);
                let w = (self.area.x_max - self.area.x_min) / f64::from(cols);
                let h = (self.area.y_max - self.area.y_min) / f64::from(rows);
                let mut out = Vec::with_capacity((rows * cols) as usize);
                for r in 0..rows {
                    for c in 0..cols {
                        out.push(Antenna {
                            poa_id: u64::from(r * cols + c),
                            x: self.area.x_min + (f64::from(c) + 0.5) * w,
                            y: self.area.y_min + (f64::from(r) + 0.5) * h,
                        });
                    }
                }
                Ok(out)
            }
            AntennaKind::File => {
                read_antennas(self.antennas.path.as_ref().expect("validated"))
            }
        }
    }

    /// Tree shape and pricing derived from the topology section.
    pub fn tree_params(&self) -> TreeParams {
        let mut p = TreeParams::uniform(self.topology.height, self.topology.cpu_base);
        for level in &mut p.levels {
            level.link = LinkParams {
                prop_delay_s: self.topology.link_delay_ms / 1000.0,
                bandwidth: self.topology.bandwidth_bps,
                sched_const: 0.0,
                bw_cost: self.topology.bw_cost,
            };
        }
        p
    }

    /// Builds the datacenter tree over the configured antennas.
    pub fn build_tree(&self) -> Result<NetworkTree> {
        let antennas = self.antenna_list()?;
        Ok(build_tree(&self.tree_params(), self.area_rect(), &antennas)?)
    }

    /// Migration pricing for the cost model.
    pub fn cost_params(&self) -> CostParams {
        let migration = if self.costs.per_hop {
            MigPricing::PerHop(self.costs.migration)
        } else {
            MigPricing::Constant(self.costs.migration)
        };
        CostParams { migration }
    }

    /// The augmentation policy: `"auto"` searches, anything else is a
    /// fixed factor.
    pub fn policy(&self) -> Result<AugPolicy> {
        let text = self.run.augmentation.trim();
        if text.eq_ignore_ascii_case("auto") {
            Ok(AugPolicy::Auto)
        } else {
            Ok(AugPolicy::Fixed(parse_aug(text)?))
        }
    }

    /// Instantiates a chain for one vehicle at one PoA. `rt` selects the
    /// tight delay class.
    pub fn make_chain(&self, vehicle: u64, poa: DcId, rt: bool) -> ChainSpec {
        let s = &self.services;
        let (target_ms, class) =
            if rt { (s.rt_target_ms, "rt") } else { (s.standard_target_ms, "standard") };
        ChainSpec {
            id: ChainId(vehicle),
            vms: s
                .theta_lambda
                .iter()
                .map(|&tl| VmDemand { theta_lambda: tl, gamma_theta: s.gamma_theta })
                .collect(),
            ingress_rate: s.ingress_rate,
            egress_rate: s.egress_rate,
            burstiness: s.burstiness,
            target_delay: target_ms / 1000.0,
            cpu_cap: s.cpu_cap,
            poa,
            current: None,
            service_class: class.into(),
        }
    }
}

/// Reads an antenna CSV with header `poa_id,x_m,y_m`.
pub fn read_antennas(path: impl AsRef<Path>) -> Result<Vec<Antenna>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let line = i as u64 + 2; // 1-based, after the header
        let record = record?;
        let field = |idx: usize, name: &str| -> Result<&str> {
            record.get(idx).ok_or_else(|| Error::BadRow {
                line,
                reason: format!("missing column {name}"),
            })
        };
        let poa_id: u64 = field(0, "poa_id")?.trim().parse().map_err(|e| Error::BadRow {
            line,
            reason: format!("poa_id: {e}"),
        })?;
        let x: f64 = field(1, "x_m")?.trim().parse().map_err(|e| Error::BadRow {
            line,
            reason: format!("x_m: {e}"),
        })?;
        let y: f64 = field(2, "y_m")?.trim().parse().map_err(|e| Error::BadRow {
            line,
            reason: format!("y_m: {e}"),
        })?;
        out.push(Antenna { poa_id, x, y });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_toml_is_the_default_scenario() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        assert_eq!(cfg.topology.height, 4);
        assert_eq!(cfg.topology.cpu_base, 20);
        assert_eq!(cfg.antennas.rows * cfg.antennas.cols, 64);
        assert_eq!(cfg.services.rt_ratio, 0.3);
        assert_eq!(cfg.run.period_s, 1.0);
        assert_eq!(cfg.trace.vehicles, 300);
        assert!(matches!(cfg.policy().unwrap(), AugPolicy::Auto));
    }

    #[test]
    fn sections_override_the_defaults() {
        let text = r#"
            [topology]
            height = 5
            cpu_base = 7

            [services]
            rt_ratio = 0.6

            [run]
            period_s = 2.0
            augmentation = "3/2"

            [trace]
            kind = "synthetic"
            vehicles = 10
            duration_s = 5.0
        "#;
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.topology.height, 5);
        assert_eq!(cfg.topology.cpu_base, 7);
        assert_eq!(cfg.services.rt_ratio, 0.6);
        assert_eq!(cfg.trace.vehicles, 10);
        match cfg.policy().unwrap() {
            AugPolicy::Fixed(r) => assert_eq!(r, num_ratio(3, 2)),
            other => panic!("expected a fixed factor, got {other:?}"),
        }
    }

    fn num_ratio(n: u64, d: u64) -> chainplace_core::placement::Aug {
        chainplace_core::placement::Aug::new(n, d)
    }

    #[test]
    fn bad_values_are_rejected() {
        for text in [
            "[services]\nrt_ratio = 1.5",
            "[run]\nperiod_s = 0.0",
            "[topology]\nheight = 1",
            "[run]\naugmentation = \"0.5\"",
            "[trace]\nkind = \"file\"",
            "[area]\nx_min = 10.0\nx_max = 10.0",
        ] {
            assert!(
                ScenarioConfig::from_toml_str(text).is_err(),
                "accepted invalid scenario: {text}"
            );
        }
        // Unknown keys are typos, not extensions.
        assert!(ScenarioConfig::from_toml_str("[run]\nperiod = 1.0").is_err());
    }

    #[test]
    fn grid_antennas_sit_at_cell_centers() {
        let text = "[antennas]\nrows = 2\ncols = 2";
        let cfg = ScenarioConfig::from_toml_str(text).unwrap();
        let ants = cfg.antenna_list().unwrap();
        assert_eq!(ants.len(), 4);
        assert_eq!(ants[0].poa_id, 0);
        assert_eq!((ants[0].x, ants[0].y), (1000.0, 1000.0));
        assert_eq!((ants[3].x, ants[3].y), (3000.0, 3000.0));
    }

    #[test]
    fn default_tree_has_the_advertised_shape() {
        let cfg = ScenarioConfig::from_toml_str("").unwrap();
        let tree = cfg.build_tree().unwrap();
        // 64 leaves under 64 level-1 cells, 16 + 4 + 1 above them.
        assert_eq!(tree.leaves().len(), 64);
        assert_eq!(tree.len(), 64 + 64 + 16 + 4 + 1);
        assert_eq!(tree.height(), 4);
        let root = tree.dc(tree.root()).unwrap();
        assert_eq!(root.capacity, 5 * 20);
        assert_eq!(root.cpu_cost, 1.0);
        let leaf = tree.dc(tree.leaves()[0]).unwrap();
        assert_eq!(leaf.capacity, 20);
        assert_eq!(leaf.cpu_cost, 16.0);
    }
}
