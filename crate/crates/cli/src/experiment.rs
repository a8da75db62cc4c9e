//! Batches of scenario runs and their tables.

use std::fmt::{self, Write as _};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use anyhow::{bail, Context};
use intergrid_core::cascade::{assign_capacities, run_interdependent_cascade, CapacityRule};
use intergrid_core::mitigation::{run_policy, FlowFormulation, InjectionLp, Policy};
use intergrid_core::scenario::{generate_scenario, select_removals, ScenarioParams};
use intergrid_core::interdependency::prune_to_fixed_point;
use intergrid_core::InterdependentNetwork;
use rayon::prelude::*;
use serde::Serialize;

use crate::schema::ScenarioFile;

pub const RESULTS_HEADER: [&str; 10] = [
    "seed",
    "removal_fraction",
    "policy",
    "axis",
    "axis_value",
    "yield",
    "feasible",
    "lcc_ratio",
    "iterations",
    "wall_ms",
];

pub const SUMMARY_HEADER: [&str; 10] = [
    "axis",
    "axis_value",
    "removal_fraction",
    "policy",
    "rows",
    "feasible_rows",
    "error_rows",
    "mean_yield",
    "mean_lcc_ratio",
    "infeasible_as_zero",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    LoadFactor,
    NComm,
    CommInterdepDegree,
    PowerInterdepDegree,
    RemovalFraction,
}

impl Axis {
    pub const ALL: [Axis; 5] = [
        Axis::LoadFactor,
        Axis::NComm,
        Axis::CommInterdepDegree,
        Axis::PowerInterdepDegree,
        Axis::RemovalFraction,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Axis::LoadFactor => "load_factor",
            Axis::NComm => "n_comm",
            Axis::CommInterdepDegree => "comm_interdep_degree",
            Axis::PowerInterdepDegree => "power_interdep_degree",
            Axis::RemovalFraction => "removal_fraction",
        }
    }

    fn apply(self, params: &mut ScenarioParams, value: f64) -> anyhow::Result<()> {
        match self {
            Axis::LoadFactor => params.load_factor = value,
            Axis::CommInterdepDegree => params.comm_interdep_degree = value,
            Axis::PowerInterdepDegree => params.power_interdep_degree = value,
            Axis::NComm => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    bail!("n_comm values must be positive integers, got {value}");
                }
                params.n_comm = value as usize;
            }
            Axis::RemovalFraction => {}
        }
        Ok(())
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match Axis::ALL.into_iter().find(|a| a.name() == s) {
            Some(a) => Ok(a),
            None => bail!(
                "unknown axis `{s}`; expected one of {}",
                Axis::ALL.map(Axis::name).join(", ")
            ),
        }
    }
}

#[derive(Clone, Debug)]
pub enum ScenarioSource {
    /// Generate one network per seed; the seed field is overwritten.
    Generate(ScenarioParams),
    /// One saved network; seeds only drive the removals.
    File(Box<ScenarioFile>),
}

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub source: ScenarioSource,
    pub removal_fractions: Vec<f64>,
    pub policies: Vec<Policy>,
    pub seeds: Vec<u64>,
    pub sweep: Option<(Axis, Vec<f64>)>,
    /// Remove communication nodes too, with the same fraction.
    pub joint_removal: bool,
    pub formulation: FlowFormulation,
    /// Count infeasible rows as zero yield in aggregates.
    pub infeasible_as_zero: bool,
}

impl ExperimentConfig {
    pub fn new(params: ScenarioParams) -> Self {
        Self {
            source: ScenarioSource::Generate(params),
            removal_fractions: vec![0.1],
            policies: Policy::ALL.to_vec(),
            seeds: (0..10).collect(),
            sweep: None,
            joint_removal: false,
            formulation: FlowFormulation::default(),
            infeasible_as_zero: false,
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.policies.is_empty() {
            bail!("no policies selected");
        }
        if self.seeds.is_empty() {
            bail!("no seeds selected");
        }
        let fractions: Vec<f64> = match &self.sweep {
            Some((Axis::RemovalFraction, values)) => values.clone(),
            _ => self.removal_fractions.clone(),
        };
        if fractions.is_empty() {
            bail!("no removal fractions selected");
        }
        if let Some(f) = fractions.iter().find(|f| !(0.0..=1.0).contains(*f)) {
            bail!("removal fraction {f} not in [0, 1]");
        }
        if let Some((axis, values)) = &self.sweep {
            if values.is_empty() {
                bail!("axis {axis} has no values");
            }
            if matches!(self.source, ScenarioSource::File(_)) && *axis != Axis::RemovalFraction {
                bail!("axis {axis} regenerates networks and cannot be used with a saved scenario");
            }
        }
        Ok(())
    }

    fn points(&self) -> Vec<Option<(Axis, f64)>> {
        match &self.sweep {
            None => vec![None],
            Some((axis, values)) => values.iter().map(|&v| Some((*axis, v))).collect(),
        }
    }

    /// Network for one seed and axis point, with capacities assigned.
    pub fn network(&self, seed: u64, point: Option<(Axis, f64)>) -> anyhow::Result<InterdependentNetwork> {
        match &self.source {
            ScenarioSource::Generate(params) => {
                let mut params = params.clone();
                params.seed = seed;
                if let Some((axis, value)) = point {
                    axis.apply(&mut params, value)?;
                }
                Ok(generate_scenario(&params)?)
            }
            ScenarioSource::File(file) => {
                let mut net = file.to_network()?;
                if !file.has_capacities() {
                    assign_capacities(&mut net.grid, &CapacityRule::with_factor(file.fos))?;
                }
                Ok(net)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ScenarioResult {
    pub seed: u64,
    pub removal_fraction: f64,
    pub policy: Policy,
    pub axis: Option<Axis>,
    pub axis_value: Option<f64>,
    pub yield_value: f64,
    pub feasible: bool,
    pub lcc_ratio: f64,
    pub iterations: usize,
    pub wall_ms: f64,
    pub error: Option<String>,
}

impl ScenarioResult {
    fn record(&self) -> [String; 10] {
        [
            self.seed.to_string(),
            self.removal_fraction.to_string(),
            self.policy.to_string(),
            self.axis.map_or_else(|| "none".to_string(), |a| a.to_string()),
            self.axis_value.map_or_else(String::new, |v| v.to_string()),
            self.yield_value.to_string(),
            self.feasible.to_string(),
            self.lcc_ratio.to_string(),
            self.iterations.to_string(),
            format!("{:.3}", self.wall_ms),
        ]
    }
}

/// Rows for one network: every removal fraction times every policy.
/// Failures become rows with `NaN` yield instead of aborting.
pub fn run_scenario(cfg: &ExperimentConfig, seed: u64, point: Option<(Axis, f64)>) -> Vec<ScenarioResult> {
    let fractions = match point {
        Some((Axis::RemovalFraction, f)) => vec![f],
        _ => cfg.removal_fractions.clone(),
    };
    let row = |fraction: f64, policy: Policy| ScenarioResult {
        seed,
        removal_fraction: fraction,
        policy,
        axis: point.map(|p| p.0),
        axis_value: point.map(|p| p.1),
        yield_value: f64::NAN,
        feasible: false,
        lcc_ratio: f64::NAN,
        iterations: 0,
        wall_ms: 0.0,
        error: None,
    };
    let net = cfg.network(seed, point);
    let mut rows = Vec::new();
    for &fraction in &fractions {
        let removals = net.as_ref().map_err(|e| format!("{e:#}")).and_then(|net| {
            select_removals(
                net.grid.bus_count(),
                net.comm.node_count(),
                fraction,
                seed,
                cfg.joint_removal,
            )
            .map_err(|e| e.to_string())
        });
        for &policy in &cfg.policies {
            let mut r = row(fraction, policy);
            match (&net, &removals) {
                (Ok(net), Ok(removals)) => {
                    let start = Instant::now();
                    let outcome = run_policy(net, removals, policy, cfg.formulation);
                    r.wall_ms = start.elapsed().as_secs_f64() * 1e3;
                    match outcome {
                        Ok(o) => {
                            r.yield_value = o.yield_value;
                            r.feasible = o.feasible;
                            r.lcc_ratio = o.lcc_ratio;
                            r.iterations = o.iterations;
                        }
                        Err(e) => r.error = Some(e.to_string()),
                    }
                }
                (_, Err(e)) => r.error = Some(e.clone()),
                (Err(_), Ok(_)) => unreachable!("removals need a network"),
            }
            rows.push(r);
        }
    }
    rows
}

/// Runs every point of the configuration. Seeds run in parallel; each
/// point's rows reach `sink` in seed order before the next point starts.
pub fn run_experiment<F>(cfg: &ExperimentConfig, mut sink: F) -> anyhow::Result<Vec<ScenarioResult>>
where
    F: FnMut(&ScenarioResult) -> anyhow::Result<()>,
{
    cfg.validate()?;
    let mut all = Vec::new();
    for point in cfg.points() {
        let batches: Vec<Vec<ScenarioResult>> = cfg
            .seeds
            .par_iter()
            .map(|&seed| run_scenario(cfg, seed, point))
            .collect();
        for row in batches.into_iter().flatten() {
            sink(&row)?;
            all.push(row);
        }
    }
    Ok(all)
}

/// CSV writer that flushes after every row.
pub struct ResultWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl ResultWriter<BufWriter<File>> {
    pub fn create(path: &Path) -> anyhow::Result<Self> {
        let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
        Self::new(BufWriter::new(file))
    }
}

impl<W: Write> ResultWriter<W> {
    pub fn new(out: W) -> anyhow::Result<Self> {
        let mut inner = csv::Writer::from_writer(out);
        inner.write_record(RESULTS_HEADER)?;
        inner.flush()?;
        Ok(Self { inner })
    }

    pub fn write(&mut self, row: &ScenarioResult) -> anyhow::Result<()> {
        self.inner.write_record(row.record())?;
        self.inner.flush()?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Aggregate {
    pub axis: Option<Axis>,
    pub axis_value: Option<f64>,
    pub removal_fraction: f64,
    pub policy: Policy,
    pub rows: usize,
    pub feasible_rows: usize,
    pub error_rows: usize,
    /// `None` when no row contributes.
    pub mean_yield: Option<f64>,
    pub mean_lcc_ratio: Option<f64>,
    pub infeasible_as_zero: bool,
}

/// Mean yield per (axis value, removal fraction, policy), in first-seen
/// order. Rows with errors never count; infeasible rows count as zero only
/// when asked.
pub fn aggregate(rows: &[ScenarioResult], infeasible_as_zero: bool) -> Vec<Aggregate> {
    let mut out: Vec<(Aggregate, Vec<f64>, Vec<f64>)> = Vec::new();
    for r in rows {
        let key = |a: &Aggregate| {
            a.axis == r.axis
                && a.axis_value.map(f64::to_bits) == r.axis_value.map(f64::to_bits)
                && a.removal_fraction.to_bits() == r.removal_fraction.to_bits()
                && a.policy == r.policy
        };
        let k = match out.iter().position(|(a, _, _)| key(a)) {
            Some(k) => k,
            None => {
                out.push((
                    Aggregate {
                        axis: r.axis,
                        axis_value: r.axis_value,
                        removal_fraction: r.removal_fraction,
                        policy: r.policy,
                        rows: 0,
                        feasible_rows: 0,
                        error_rows: 0,
                        mean_yield: None,
                        mean_lcc_ratio: None,
                        infeasible_as_zero,
                    },
                    Vec::new(),
                    Vec::new(),
                ));
                out.len() - 1
            }
        };
        let (agg, yields, lccs) = &mut out[k];
        agg.rows += 1;
        if r.error.is_some() {
            agg.error_rows += 1;
            continue;
        }
        lccs.push(r.lcc_ratio);
        if r.feasible {
            agg.feasible_rows += 1;
            yields.push(r.yield_value);
        } else if infeasible_as_zero {
            yields.push(0.0);
        }
    }
    let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
    out.into_iter()
        .map(|(mut a, yields, lccs)| {
            a.mean_yield = mean(&yields);
            a.mean_lcc_ratio = mean(&lccs);
            a
        })
        .collect()
}

pub fn write_summary<W: Write>(out: W, aggregates: &[Aggregate]) -> anyhow::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(SUMMARY_HEADER)?;
    let opt = |v: Option<f64>| v.map_or_else(|| "no_data".to_string(), |x| x.to_string());
    for a in aggregates {
        w.write_record([
            a.axis.map_or_else(|| "none".to_string(), |x| x.to_string()),
            a.axis_value.map_or_else(String::new, |v| v.to_string()),
            a.removal_fraction.to_string(),
            a.policy.to_string(),
            a.rows.to_string(),
            a.feasible_rows.to_string(),
            a.error_rows.to_string(),
            opt(a.mean_yield),
            opt(a.mean_lcc_ratio),
            a.infeasible_as_zero.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Plain-text table of mean yields, one line per aggregate.
pub fn format_table(aggregates: &[Aggregate]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<22} {:>10} {:>9} {:<18} {:>8} {:>10} {:>10}",
        "axis", "value", "removal", "policy", "feasible", "yield", "lcc"
    );
    for a in aggregates {
        let num = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |x| format!("{x:.4}"));
        let _ = writeln!(
            s,
            "{:<22} {:>10} {:>9} {:<18} {:>8} {:>10} {:>10}",
            a.axis.map_or("none", Axis::name),
            a.axis_value.map_or_else(|| "-".to_string(), |v| v.to_string()),
            a.removal_fraction,
            a.policy.name(),
            format!("{}/{}", a.feasible_rows, a.rows),
            num(a.mean_yield),
            num(a.mean_lcc_ratio),
        );
    }
    s
}

/// One JSON line per cascade round of the uncontrolled cascade, for each
/// removal fraction.
pub fn write_trace<W: Write>(
    out: &mut W,
    net: &InterdependentNetwork,
    fractions: &[f64],
    seed: u64,
    joint: bool,
) -> anyhow::Result<()> {
    #[derive(Serialize)]
    struct Line<'a, T> {
        removal_fraction: f64,
        #[serde(flatten)]
        round: &'a T,
    }
    for &fraction in fractions {
        let removals = select_removals(net.grid.bus_count(), net.comm.node_count(), fraction, seed, joint)?;
        let mut state = net.clone();
        state.apply_removals(&removals)?;
        let trace = run_interdependent_cascade(&mut state)?;
        for round in &trace.rounds {
            serde_json::to_writer(&mut *out, &Line {
                removal_fraction: fraction,
                round,
            })?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Load-control program (after connectivity pruning) in LP text format.
pub fn dump_load_control_lp<W: Write>(
    out: &mut W,
    net: &InterdependentNetwork,
    fraction: f64,
    seed: u64,
    joint: bool,
    formulation: FlowFormulation,
) -> anyhow::Result<()> {
    let removals = select_removals(net.grid.bus_count(), net.comm.node_count(), fraction, seed, joint)?;
    let mut state = net.clone();
    state.apply_removals(&removals)?;
    prune_to_fixed_point(&mut state);
    let lp = InjectionLp::with_comm_supply(&state, formulation)?;
    out.write_all(lp.program().to_lp_format().as_bytes())?;
    out.flush()?;
    Ok(())
}

/// Writes to stdout and ignores a closed pipe.
pub fn print(text: &str) -> io::Result<()> {
    match io::stdout().write_all(text.as_bytes()) {
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        other => other,
    }
}
