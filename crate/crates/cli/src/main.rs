use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use intergrid_core::mitigation::{FlowFormulation, Policy};
use intergrid_core::scenario::{generate_scenario, ScenarioParams};
use intergrid_cli::experiment::{
    dump_load_control_lp, format_table, print, write_summary, write_trace,
};
use intergrid_cli::{aggregate, run_experiment, Axis, ExperimentConfig, ResultWriter, ScenarioFile, ScenarioSource};

#[derive(Parser)]
#[command(name = "intergrid", version, about = "Cascades and load control in interdependent power and communication networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated scenario as JSON.
    Generate {
        #[command(flatten)]
        network: NetworkArgs,
        /// Output file (stdout when absent).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run policies on one seed.
    Run {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        batch: BatchArgs,
        /// JSON lines of the uncontrolled cascade rounds.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Load-control program for the first removal fraction, in LP format.
        #[arg(long)]
        dump_lp: Option<PathBuf>,
    },
    /// Sweep one parameter over several seeds.
    Sweep {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        batch: BatchArgs,
        #[command(flatten)]
        seeds: SeedArgs,
        #[arg(long, value_parser = parse_axis)]
        axis: Axis,
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Mean yield per policy and removal fraction over several seeds.
    Compare {
        #[command(flatten)]
        network: NetworkArgs,
        #[command(flatten)]
        batch: BatchArgs,
        #[command(flatten)]
        seeds: SeedArgs,
    },
}

#[derive(Args)]
struct NetworkArgs {
    /// Scenario seed (first seed for batches).
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Power nodes (default 100, or 500 with --paper-scale).
    #[arg(long)]
    n: Option<usize>,
    /// Communication nodes (default: same as --n).
    #[arg(long)]
    n_comm: Option<usize>,
    /// Mean degree of both random graphs.
    #[arg(long, default_value_t = 4.0)]
    degree: f64,
    /// Load factor: total communication demand over total load.
    #[arg(long, default_value_t = 1e-4)]
    lf: f64,
    /// Factor of safety on base-case line flows.
    #[arg(long, default_value_t = 1.2)]
    fos: f64,
    /// Mean number of loads supplying a communication node.
    #[arg(long, default_value_t = 1.0)]
    comm_degree: f64,
    /// Mean number of communication nodes controlling a power node.
    #[arg(long, default_value_t = 1.0)]
    power_degree: f64,
    /// Fail when communication nodes outnumber loads instead of reusing loads.
    #[arg(long)]
    strict_pairing: bool,
    /// Keep disconnected random graphs as drawn.
    #[arg(long)]
    allow_disconnected: bool,
    /// 500 nodes and 30 seeds.
    #[arg(long)]
    paper_scale: bool,
    /// Saved scenario instead of a generated one.
    #[arg(long)]
    scenario: Option<PathBuf>,
}

impl NetworkArgs {
    fn params(&self) -> ScenarioParams {
        let n = self.n.unwrap_or(if self.paper_scale { 500 } else { 100 });
        ScenarioParams {
            n_power: n,
            n_comm: self.n_comm.unwrap_or(n),
            expected_degree: self.degree,
            fos: self.fos,
            load_factor: self.lf,
            comm_interdep_degree: self.comm_degree,
            power_interdep_degree: self.power_degree,
            strict_pairing: self.strict_pairing,
            ensure_connected: !self.allow_disconnected,
            seed: self.seed,
            ..ScenarioParams::default()
        }
    }

    fn source(&self) -> anyhow::Result<ScenarioSource> {
        Ok(match &self.scenario {
            Some(path) => ScenarioSource::File(Box::new(ScenarioFile::read(path)?)),
            None => ScenarioSource::Generate(self.params()),
        })
    }
}

#[derive(Args)]
struct BatchArgs {
    #[arg(long, value_delimiter = ',', default_value = "0.1")]
    removal_fraction: Vec<f64>,
    /// Policies: none, power_only, simple, load_control, isolated_bound,
    /// connectivity_only (default: all).
    #[arg(long, value_delimiter = ',', value_parser = parse_policy)]
    policy: Vec<Policy>,
    /// Remove the same fraction of communication nodes as well.
    #[arg(long)]
    joint_removal: bool,
    #[arg(long, value_parser = parse_formulation, default_value = "shift_factors")]
    formulation: FlowFormulation,
    /// Count infeasible rows as zero yield in the summary.
    #[arg(long)]
    infeasible_as_zero: bool,
    /// Results CSV (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Summary CSV (default: next to --out with a `.summary.csv` suffix).
    #[arg(long)]
    summary: Option<PathBuf>,
}

#[derive(Args)]
struct SeedArgs {
    /// Number of seeds, counted up from --seed (default 10, or 30 with
    /// --paper-scale).
    #[arg(long)]
    seeds: Option<u64>,
}

fn parse_policy(s: &str) -> Result<Policy, String> {
    s.parse().map_err(|e: intergrid_core::Error| e.to_string())
}

fn parse_axis(s: &str) -> Result<Axis, String> {
    s.parse().map_err(|e: anyhow::Error| e.to_string())
}

fn parse_formulation(s: &str) -> Result<FlowFormulation, String> {
    match s {
        "shift_factors" => Ok(FlowFormulation::ShiftFactors),
        "phase_angles" => Ok(FlowFormulation::PhaseAngles),
        _ => Err(format!("unknown formulation `{s}`; expected shift_factors or phase_angles")),
    }
}

fn config(network: &NetworkArgs, batch: &BatchArgs, seeds: Vec<u64>) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::new(network.params());
    cfg.source = network.source()?;
    cfg.removal_fractions = batch.removal_fraction.clone();
    if !batch.policy.is_empty() {
        cfg.policies = batch.policy.clone();
    }
    cfg.seeds = seeds;
    cfg.joint_removal = batch.joint_removal;
    cfg.formulation = batch.formulation;
    cfg.infeasible_as_zero = batch.infeasible_as_zero;
    Ok(cfg)
}

fn seed_list(network: &NetworkArgs, seeds: &SeedArgs) -> Vec<u64> {
    let count = seeds.seeds.unwrap_or(if network.paper_scale { 30 } else { 10 });
    (network.seed..network.seed + count).collect()
}

fn summary_path(batch: &BatchArgs) -> Option<PathBuf> {
    batch.summary.clone().or_else(|| {
        batch.out.as_ref().map(|out| {
            let stem = out.file_stem().map_or_else(|| "results".into(), |s| s.to_string_lossy().into_owned());
            out.with_file_name(format!("{stem}.summary.csv"))
        })
    })
}

/// Runs the batch, streaming rows to --out (or stdout) and writing the
/// summary when a path is known. Returns the summary rows.
fn execute(cfg: &ExperimentConfig, batch: &BatchArgs) -> anyhow::Result<Vec<intergrid_cli::Aggregate>> {
    let rows = match &batch.out {
        Some(path) => {
            let mut w = ResultWriter::create(path)?;
            run_experiment(cfg, |r| w.write(r))?
        }
        None => {
            let mut w = ResultWriter::new(io::stdout().lock())?;
            run_experiment(cfg, |r| w.write(r))?
        }
    };
    for r in rows.iter().filter(|r| r.error.is_some()) {
        eprintln!(
            "seed {} fraction {} policy {}: {}",
            r.seed,
            r.removal_fraction,
            r.policy,
            r.error.as_deref().unwrap_or_default()
        );
    }
    let aggregates = aggregate(&rows, cfg.infeasible_as_zero);
    if let Some(path) = summary_path(batch) {
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        write_summary(BufWriter::new(file), &aggregates)?;
    }
    Ok(aggregates)
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    ))
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { network, out } => {
            let params = network.params();
            let net = generate_scenario(&params)?;
            let file = ScenarioFile::from_network(&net, &params);
            match out {
                Some(path) => file.write(&path)?,
                None => print(&(serde_json::to_string_pretty(&file)? + "\n"))?,
            }
        }
        Command::Run {
            network,
            batch,
            trace,
            dump_lp,
        } => {
            let cfg = config(&network, &batch, vec![network.seed])?;
            cfg.validate()?;
            if trace.is_some() || dump_lp.is_some() {
                let net = cfg.network(network.seed, None)?;
                if let Some(path) = trace {
                    let mut w = create(&path)?;
                    write_trace(&mut w, &net, &cfg.removal_fractions, network.seed, cfg.joint_removal)?;
                }
                if let Some(path) = dump_lp {
                    let mut w = create(&path)?;
                    dump_load_control_lp(
                        &mut w,
                        &net,
                        cfg.removal_fractions[0],
                        network.seed,
                        cfg.joint_removal,
                        cfg.formulation,
                    )?;
                }
            }
            execute(&cfg, &batch)?;
        }
        Command::Sweep {
            network,
            batch,
            seeds,
            axis,
            values,
        } => {
            let mut cfg = config(&network, &batch, seed_list(&network, &seeds))?;
            cfg.sweep = Some((axis, values));
            let aggregates = execute(&cfg, &batch)?;
            if batch.out.is_some() {
                print(&format_table(&aggregates))?;
            }
        }
        Command::Compare {
            network,
            batch,
            seeds,
        } => {
            let cfg = config(&network, &batch, seed_list(&network, &seeds))?;
            let aggregates = execute(&cfg, &batch)?;
            if batch.out.is_some() {
                print(&format_table(&aggregates))?;
            } else {
                eprint!("{}", format_table(&aggregates));
            }
        }
    }
    io::stdout().flush()?;
    Ok(())
}
