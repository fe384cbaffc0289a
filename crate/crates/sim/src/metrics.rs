//! Per-decision records, per-run aggregates, and their CSV forms.

use std::io::Write;

use crate::error::Result;

/// Everything one decision round produced.
#[derive(Debug, Clone)]
pub struct DecisionRecord {
    /// Decision instant in seconds.
    pub t: f64,
    /// Algorithm name: `bupu`, `ffit`, `cpvnf`, or `oracle`.
    pub algo: &'static str,
    /// Chains alive this round.
    pub n_chains: usize,
    /// Chains that had to be (re)placed: new, critical, and retries.
    pub n_changed: usize,
    /// New arrivals among the changed.
    pub n_new: usize,
    /// Critical chains among the changed.
    pub n_critical: usize,
    /// Vehicles that left during the ingested window.
    pub n_departed: usize,
    /// Whether a feasible placement was found.
    pub feasible: bool,
    /// Whether the round released and re-placed every chain.
    pub reshuffled: bool,
    /// Capacity augmentation the round ran at; absent when infeasible.
    pub achieved_r: Option<f64>,
    /// Migration fees charged this round.
    pub migration: f64,
    /// Share of `migration` paid for changed (critical) chains.
    pub compulsory_migration: f64,
    /// Share of `migration` paid for standing chains moved by reshuffle or
    /// push-up.
    pub noncompulsory_migration: f64,
    /// Chains charged a migration fee this round.
    pub n_migrations: u64,
    /// Computation cost of all hosted chains.
    pub computation: f64,
    /// Bandwidth cost of all hosted chains.
    pub bandwidth: f64,
    /// Algorithm wall-clock for the round.
    pub runtime_ms: f64,
}

impl DecisionRecord {
    /// Objective value of the round.
    pub fn total(&self) -> f64 {
        self.migration + self.computation + self.bandwidth
    }
}

/// Writes `decisions.csv`: one row per decision round.
pub fn write_decisions(records: &[DecisionRecord], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "t",
        "algo",
        "n_chains",
        "n_changed",
        "reshuffled",
        "achieved_R",
        "mig_cost",
        "comp_cost",
        "bw_cost",
        "total_cost",
        "runtime_ms",
        "feasible",
    ])?;
    for r in records {
        w.write_record([
            r.t.to_string(),
            r.algo.to_string(),
            r.n_chains.to_string(),
            r.n_changed.to_string(),
            r.reshuffled.to_string(),
            r.achieved_r.map(|v| v.to_string()).unwrap_or_default(),
            r.migration.to_string(),
            r.computation.to_string(),
            r.bandwidth.to_string(),
            r.total().to_string(),
            r.runtime_ms.to_string(),
            r.feasible.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Aggregates of one run, for `summary.csv`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub algo: &'static str,
    pub seed: u64,
    pub period_s: f64,
    pub rt_ratio: f64,
    /// The configured policy as text: `auto` or a factor.
    pub augmentation: String,
    pub decisions: usize,
    pub infeasible_decisions: usize,
    pub migrations: u64,
    pub migration: f64,
    pub compulsory_migration: f64,
    pub noncompulsory_migration: f64,
    pub computation: f64,
    pub bandwidth: f64,
    /// Mean violation seconds experienced by fixed critical chains; absent
    /// when nothing went critical.
    pub mean_sla_violation_s: Option<f64>,
    /// Empirical criticality rate: critical detections per trace second.
    pub criticals_per_s: f64,
    pub runtime_ms: f64,
}

impl RunSummary {
    /// Folds per-decision records and booked violation durations into the
    /// run aggregate. `horizon_s` is the trace length the rate is over.
    #[allow(clippy::too_many_arguments)]
    pub fn from_records(
        algo: &'static str,
        seed: u64,
        period_s: f64,
        rt_ratio: f64,
        augmentation: String,
        records: &[DecisionRecord],
        sla_violations: &[f64],
        horizon_s: f64,
    ) -> RunSummary {
        let mut s = RunSummary {
            algo,
            seed,
            period_s,
            rt_ratio,
            augmentation,
            decisions: records.len(),
            infeasible_decisions: records.iter().filter(|r| !r.feasible).count(),
            migrations: records.iter().map(|r| r.n_migrations).sum(),
            migration: 0.0,
            compulsory_migration: 0.0,
            noncompulsory_migration: 0.0,
            computation: 0.0,
            bandwidth: 0.0,
            mean_sla_violation_s: None,
            criticals_per_s: 0.0,
            runtime_ms: records.iter().map(|r| r.runtime_ms).sum(),
        };
        for r in records {
            s.migration += r.migration;
            s.compulsory_migration += r.compulsory_migration;
            s.noncompulsory_migration += r.noncompulsory_migration;
            s.computation += r.computation;
            s.bandwidth += r.bandwidth;
        }
        if !sla_violations.is_empty() {
            s.mean_sla_violation_s =
                Some(sla_violations.iter().sum::<f64>() / sla_violations.len() as f64);
        }
        if horizon_s > 0.0 {
            let criticals: usize = records.iter().map(|r| r.n_critical).sum();
            s.criticals_per_s = criticals as f64 / horizon_s;
        }
        s
    }

    /// Objective total over the run.
    pub fn total(&self) -> f64 {
        self.migration + self.computation + self.bandwidth
    }
}

/// Writes `summary.csv`: one row per run.
pub fn write_summary(rows: &[RunSummary], out: &mut dyn Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "algo",
        "seed",
        "period_s",
        "rt_ratio",
        "augmentation",
        "decisions",
        "infeasible_decisions",
        "migrations",
        "compulsory_mig_cost",
        "noncompulsory_mig_cost",
        "mig_cost",
        "comp_cost",
        "bw_cost",
        "total_cost",
        "mean_sla_violation_s",
        "criticals_per_s",
        "runtime_ms",
    ])?;
    for s in rows {
        w.write_record([
            s.algo.to_string(),
            s.seed.to_string(),
            s.period_s.to_string(),
            s.rt_ratio.to_string(),
            s.augmentation.clone(),
            s.decisions.to_string(),
            s.infeasible_decisions.to_string(),
            s.migrations.to_string(),
            s.compulsory_migration.to_string(),
            s.noncompulsory_migration.to_string(),
            s.migration.to_string(),
            s.computation.to_string(),
            s.bandwidth.to_string(),
            s.total().to_string(),
            s.mean_sla_violation_s.map(|v| v.to_string()).unwrap_or_default(),
            s.criticals_per_s.to_string(),
            s.runtime_ms.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
