//! Command-line front end: builds topologies, generates traces, replays
//! scenarios through the decision loop, sweeps capacity, and exports LP
//! instances. Exit code 0 means every decision was feasible, 2 means at
//! least one was not, 1 means the configuration or environment was bad.

use std::fs::{self, File};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use chainplace_core::allocation::gfa;
use chainplace_core::baselines::lp_export;
use chainplace_core::service::ChainSpec;
use chainplace_sim::harness::initial_chains;
use chainplace_sim::{
    run_scenario, sweep_capacity, trace_events, write_decisions, write_summary, write_trace_file,
    AlgoChoice, Error, Result, ScenarioConfig,
};

#[derive(Parser)]
#[command(
    name = "chainplace",
    version,
    about = "Service-chain placement simulator for hierarchical edge-cloud networks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand. Command-line values override the
/// scenario file, which overrides built-in defaults.
#[derive(Args, Clone)]
struct CommonOpts {
    /// Scenario configuration file (TOML); built-in defaults when omitted.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Override the run seed.
    #[arg(long, value_name = "INT")]
    seed: Option<u64>,
    /// Override the decision period in seconds.
    #[arg(long, value_name = "SEC")]
    period: Option<f64>,
    /// Override the fraction of arrivals requesting the low-latency class.
    #[arg(long, value_name = "RATIO")]
    rt_ratio: Option<f64>,
    /// Override the augmentation policy: a factor such as 1.5 or 3/2, or "auto".
    #[arg(long, value_name = "R|auto")]
    aug: Option<String>,
    /// Output directory, created if missing.
    #[arg(long, value_name = "DIR", default_value = "out")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Build the datacenter tree and write a readable dump.
    BuildTopology(CommonOpts),
    /// Generate the scenario's mobility trace as CSV.
    GenTraces(CommonOpts),
    /// Replay the scenario through the periodic decision loop.
    Run {
        #[command(flatten)]
        common: CommonOpts,
        /// Placement algorithm: bupu, ffit, cpvnf, or oracle.
        #[arg(long, value_name = "NAME")]
        algo: String,
    },
    /// Find the smallest base capacity that serves the whole trace.
    SweepCapacity {
        #[command(flatten)]
        common: CommonOpts,
        /// Placement algorithm: bupu, ffit, cpvnf, or oracle.
        #[arg(long, value_name = "NAME")]
        algo: String,
    },
    /// Write the first decision instant as an LP file.
    ExportLp(CommonOpts),
}

fn load_config(common: &CommonOpts) -> Result<ScenarioConfig> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.run.seed = seed;
    }
    if let Some(period) = common.period {
        cfg.run.period_s = period;
    }
    if let Some(rt) = common.rt_ratio {
        cfg.services.rt_ratio = rt;
    }
    if let Some(aug) = &common.aug {
        cfg.run.augmentation = aug.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn out_file(dir: &Path, name: &str) -> Result<(File, PathBuf)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    Ok((File::create(&path)?, path))
}

fn build_topology(common: &CommonOpts) -> Result<ExitCode> {
    let cfg = load_config(common)?;
    let tree = cfg.build_tree()?;
    let (mut file, path) = out_file(&common.out, "topology.txt")?;
    tree.write_dump(&mut file)?;
    println!("wrote {} datacenters to {}", tree.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn gen_traces(common: &CommonOpts) -> Result<ExitCode> {
    let cfg = load_config(common)?;
    let events = trace_events(&cfg, cfg.run.seed)?;
    fs::create_dir_all(&common.out)?;
    let path = common.out.join("trace.csv");
    write_trace_file(&events, &path)?;
    println!("wrote {} trace events to {}", events.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn run_cmd(common: &CommonOpts, algo: &str) -> Result<ExitCode> {
    let algo: AlgoChoice = algo.parse()?;
    let cfg = load_config(common)?;
    let result = run_scenario(&cfg, algo)?;
    let (mut decisions, dpath) = out_file(&common.out, "decisions.csv")?;
    write_decisions(&result.records, &mut decisions)?;
    let (mut summary, spath) = out_file(&common.out, "summary.csv")?;
    write_summary(std::slice::from_ref(&result.summary), &mut summary)?;
    println!("wrote {} and {}", dpath.display(), spath.display());
    let infeasible = result.records.iter().filter(|r| !r.feasible).count();
    println!(
        "{}: {} decisions, {} infeasible, total cost {:.1}",
        algo.name(),
        result.records.len(),
        infeasible,
        result.summary.total(),
    );
    if result.fully_feasible {
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(2))
    }
}

fn sweep_cmd(common: &CommonOpts, algo: &str) -> Result<ExitCode> {
    let algo: AlgoChoice = algo.parse()?;
    let cfg = load_config(common)?;
    let sweep = sweep_capacity(&cfg, algo, cfg.run.seed)?;
    let (file, path) = out_file(&common.out, "sweep.csv")?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(["algo", "seed", "cpu_base", "fully_feasible", "minimal"])?;
    for &(c, ok) in &sweep.probes {
        w.write_record([
            sweep.algo.to_string(),
            sweep.seed.to_string(),
            c.to_string(),
            ok.to_string(),
            (ok && c == sweep.min_cpu_base).to_string(),
        ])?;
    }
    w.flush()?;
    println!(
        "{}: smallest fully feasible cpu_base = {} ({} probes); wrote {}",
        sweep.algo,
        sweep.min_cpu_base,
        sweep.probes.len(),
        path.display(),
    );
    Ok(ExitCode::SUCCESS)
}

fn export_lp(common: &CommonOpts) -> Result<ExitCode> {
    let cfg = load_config(common)?;
    let tree = cfg.build_tree()?;
    let events = trace_events(&cfg, cfg.run.seed)?;
    let chains = initial_chains(&cfg, cfg.run.seed, &events)?;
    let refs: Vec<&ChainSpec> = chains.iter().collect();
    let feas = gfa(&tree, refs.iter().copied())?;
    let params = cfg.cost_params();
    let (mut file, path) = out_file(&common.out, "instance.lp")?;
    lp_export(&tree, &refs, &feas, &params, &mut file)?;
    println!("wrote an instance with {} chains to {}", chains.len(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn dispatch(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::BuildTopology(common) => build_topology(common),
        Command::GenTraces(common) => gen_traces(common),
        Command::Run { common, algo } => run_cmd(common, algo),
        Command::SweepCapacity { common, algo } => sweep_cmd(common, algo),
        Command::ExportLp(common) => export_lp(common),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version print on stdout and succeed; everything else
            // is a usage problem and lands on the config-error exit code.
            let usage_error = e.use_stderr();
            let _ = e.print();
            return if usage_error { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match dispatch(&cli) {
        Ok(code) => code,
        Err(Error::Core(chainplace_core::Error::SearchSpaceExceeded { .. })) => {
            eprintln!(
                "error: the exhaustive search exceeded its guard; raise run.oracle_guard \
                 or shrink the scenario"
            );
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
