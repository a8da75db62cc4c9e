use std::fs;

use intergrid_cli::experiment::{write_summary, RESULTS_HEADER, SUMMARY_HEADER};
use intergrid_cli::{aggregate, run_experiment, Axis, ExperimentConfig, ResultWriter, ScenarioFile};
use intergrid_core::mitigation::Policy;
use intergrid_core::scenario::{generate_scenario, ScenarioParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small() -> ScenarioParams {
    ScenarioParams {
        n_power: 40,
        n_comm: 40,
        ..Default::default()
    }
}

#[test]
fn scenario_file_round_trips() {
    let params = ScenarioParams { seed: 5, ..small() };
    let net = generate_scenario(&params).unwrap();
    let file = ScenarioFile::from_network(&net, &params);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.json");
    file.write(&path).unwrap();
    let back = ScenarioFile::read(&path).unwrap();
    assert_eq!(back, file);
    let rebuilt = back.to_network().unwrap();
    assert_eq!(rebuilt.grid.injections(), net.grid.injections());
    assert_eq!(rebuilt.coupling, net.coupling);
    assert_eq!(ScenarioFile::from_network(&rebuilt, &params), file);
}

#[test]
fn scenario_file_rejects_other_versions() {
    let net = generate_scenario(&small()).unwrap();
    let mut file = ScenarioFile::from_network(&net, &small());
    file.schema_version = 99;
    let err = file.to_network().unwrap_err().to_string();
    assert!(err.contains("schema_version 99"), "{err}");
}

#[test]
fn saved_scenario_runs_like_the_generated_one() {
    let params = ScenarioParams { seed: 2, ..small() };
    let net = generate_scenario(&params).unwrap();
    let mut from_params = ExperimentConfig::new(params.clone());
    from_params.seeds = vec![2];
    let mut from_file = from_params.clone();
    from_file.source = intergrid_cli::ScenarioSource::File(Box::new(ScenarioFile::from_network(&net, &params)));
    let strip = |rows: Vec<intergrid_cli::ScenarioResult>| {
        rows.into_iter()
            .map(|r| (r.policy, r.yield_value.to_bits(), r.feasible, r.iterations))
            .collect::<Vec<_>>()
    };
    let a = strip(run_experiment(&from_params, |_| Ok(())).unwrap());
    let b = strip(run_experiment(&from_file, |_| Ok(())).unwrap());
    assert_eq!(a, b);
}

#[test]
fn aggregates_are_feasible_means() {
    let mut cfg = ExperimentConfig::new(ScenarioParams {
        load_factor: 0.1,
        ..small()
    });
    cfg.removal_fractions = vec![0.05, 0.2];
    cfg.policies = vec![Policy::LoadControl, Policy::Simple];
    cfg.seeds = (0..6).collect();
    let rows = run_experiment(&cfg, |_| Ok(())).unwrap();
    for zero in [false, true] {
        for agg in aggregate(&rows, zero) {
            let members: Vec<_> = rows
                .iter()
                .filter(|r| r.policy == agg.policy && r.removal_fraction == agg.removal_fraction)
                .collect();
            assert_eq!(agg.rows, members.len());
            let counted: Vec<f64> = members
                .iter()
                .filter(|r| r.feasible || zero)
                .map(|r| if r.feasible { r.yield_value } else { 0.0 })
                .collect();
            let want = counted.iter().sum::<f64>() / counted.len() as f64;
            match agg.mean_yield {
                Some(m) => assert!((m - want).abs() <= 1e-12),
                None => assert!(counted.is_empty()),
            }
        }
    }
}

#[test]
fn aggregate_matches_random_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let rows: Vec<_> = (0..200)
        .map(|i| intergrid_cli::ScenarioResult {
            seed: i,
            removal_fraction: 0.1,
            policy: Policy::LoadControl,
            axis: None,
            axis_value: None,
            yield_value: rng.gen(),
            feasible: rng.gen_bool(0.7),
            lcc_ratio: rng.gen(),
            iterations: 1,
            wall_ms: 0.0,
            error: None,
        })
        .collect();
    let agg = &aggregate(&rows, false)[0];
    let feasible: Vec<f64> = rows.iter().filter(|r| r.feasible).map(|r| r.yield_value).collect();
    let want = feasible.iter().sum::<f64>() / feasible.len() as f64;
    assert!((agg.mean_yield.unwrap() - want).abs() <= 1e-12);
    assert_eq!(agg.feasible_rows, feasible.len());
}

#[test]
fn all_infeasible_point_has_no_data() {
    let mut cfg = ExperimentConfig::new(ScenarioParams {
        load_factor: 50.0,
        ..small()
    });
    cfg.policies = vec![Policy::LoadControl];
    cfg.seeds = vec![0, 1];
    let rows = run_experiment(&cfg, |_| Ok(())).unwrap();
    assert!(rows.iter().all(|r| !r.feasible));
    let aggs = aggregate(&rows, false);
    assert_eq!(aggs[0].mean_yield, None);
    let mut out = Vec::new();
    write_summary(&mut out, &aggs).unwrap();
    let text = String::from_utf8(out).unwrap();
    assert!(text.starts_with(&SUMMARY_HEADER.join(",")));
    assert!(text.contains("no_data"), "{text}");
}

#[test]
fn bad_points_become_error_rows() {
    let mut cfg = ExperimentConfig::new(small());
    cfg.policies = vec![Policy::None];
    cfg.seeds = vec![0];
    // Half a communication node cannot be generated; 30 can.
    cfg.sweep = Some((Axis::NComm, vec![30.0, 0.5]));
    let rows = run_experiment(&cfg, |_| Ok(())).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].error.is_none());
    assert!(rows[1].error.as_deref().unwrap().contains("n_comm"));
    assert!(rows[1].yield_value.is_nan());
    let agg = aggregate(&rows, false);
    assert_eq!(agg[1].error_rows, 1);
    assert_eq!(agg[1].mean_yield, None);
}

#[test]
fn rows_written_before_a_failure_survive() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.csv");
    let mut cfg = ExperimentConfig::new(small());
    cfg.policies = vec![Policy::None, Policy::PowerOnly];
    cfg.seeds = vec![0, 1, 2];
    let mut writer = ResultWriter::create(&path).unwrap();
    let mut written = 0;
    let result = run_experiment(&cfg, |row| {
        if written == 4 {
            anyhow::bail!("disk full");
        }
        writer.write(row)?;
        written += 1;
        Ok(())
    });
    assert!(result.is_err());
    // The writer is still open: every row must already be on disk.
    let text = fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], RESULTS_HEADER.join(","));
    assert_eq!(lines.len(), 5);
}
