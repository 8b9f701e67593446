//! `simulate`: macro trajectories, a summary and the supply symmetry report.

use std::collections::BTreeMap;

use detect_core::macro_dynamics::{simulate, MacroSetup, Trajectory};
use detect_core::seed::run_seed;
use detect_core::supply::{check_ensemble_expectation, check_time_translation, EnsembleSupplyReport, SupplyPath, TimeTranslationReport};
use detect_core::taxonomy::circulating_supply;
use rayon::prelude::*;
use serde::Serialize;

use super::require_macro;
use crate::output::{Csv, Field, OutputDir};
use crate::{CliError, Loaded, Outcome};

/// Tolerance of the conservation and discounting checks.
pub const SYMMETRY_TOL: f64 = 1e-9;
/// z-score limit of the ensemble check on stochastic supply.
pub const ENSEMBLE_Z_LIMIT: f64 = 4.0;

#[derive(Serialize)]
struct RunSummary {
    run: usize,
    seed: u64,
    final_supply: f64,
    final_wealth: BTreeMap<String, f64>,
    final_circulating_supply: f64,
    max_relative_drift: f64,
}

#[derive(Serialize)]
struct Summary {
    categories: Vec<String>,
    horizon: usize,
    dt: f64,
    runs: Vec<RunSummary>,
    mean_final_wealth: BTreeMap<String, f64>,
}

#[derive(Serialize)]
struct SymmetryRun {
    run: usize,
    seed: u64,
    #[serde(flatten)]
    report: TimeTranslationReport,
}

#[derive(Serialize)]
struct Symmetry {
    supply_variant: &'static str,
    passed: bool,
    runs: Vec<SymmetryRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    ensemble_expectation: Option<EnsembleSupplyReport>,
}

fn trajectory_name(run: usize, runs: usize) -> String {
    if runs == 1 {
        "trajectory.csv".into()
    } else {
        format!("trajectory_{run:04}.csv")
    }
}

/// Rows at every `every`-th step and at the last one.
pub fn trajectory_csv(ids: &[String], trajectory: &Trajectory, every: usize) -> Vec<u8> {
    let mut header = vec!["step", "time", "supply"];
    header.extend(ids.iter().map(String::as_str));
    let mut csv = Csv::new(&header);
    let last = trajectory.len() - 1;
    for (i, s) in trajectory.states.iter().enumerate() {
        if i % every != 0 && i != last {
            continue;
        }
        let mut row = vec![
            Field::Int(s.t as u64),
            Field::Float(s.t as f64 * trajectory.dt),
            Field::Float(s.supply),
        ];
        row.extend(s.f.values.iter().map(|&v| Field::Float(v)));
        csv.row(&row);
    }
    csv.into_bytes()
}

pub fn run(loaded: &Loaded, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scenario = &loaded.scenario;
    let m = require_macro(scenario)?;
    let setup = MacroSetup {
        taxonomy: &m.taxonomy,
        schedule: &m.rates,
        supply: &m.supply,
        allocation: &m.allocation,
        initial: &m.initial,
        horizon: scenario.horizon(),
        dt: scenario.dt(),
    };
    let runs = scenario.ensemble_size();
    let seeds: Vec<u64> = (0..runs as u64).map(|i| run_seed(scenario.seed(), i)).collect();
    let results: Vec<(Trajectory, SupplyPath)> = seeds
        .par_iter()
        .map(|&s| simulate(&setup, s))
        .collect::<Result<_, _>>()
        .map_err(CliError::core)?;

    let ids: Vec<String> = m.taxonomy.categories().iter().map(|c| c.id.clone()).collect();
    let by_id = |v: &[f64]| -> BTreeMap<String, f64> { ids.iter().cloned().zip(v.iter().copied()).collect() };

    let mut summaries = Vec::with_capacity(runs);
    let mut symmetry_runs = Vec::with_capacity(runs);
    let mut mean = vec![0.0; ids.len()];
    for (i, (tr, path)) in results.iter().enumerate() {
        out.write(&trajectory_name(i, runs), &trajectory_csv(&ids, tr, scenario.snapshot_every()))?;
        let last = tr.last();
        for (acc, v) in mean.iter_mut().zip(&last.f.values) {
            *acc += v / runs as f64;
        }
        summaries.push(RunSummary {
            run: i,
            seed: seeds[i],
            final_supply: last.supply,
            final_wealth: by_id(&last.f.values),
            final_circulating_supply: circulating_supply(&last.f, &m.taxonomy, last.supply),
            max_relative_drift: tr.max_relative_drift(),
        });
        let report = check_time_translation(&tr.wealth(), path, SYMMETRY_TOL).map_err(CliError::core)?;
        symmetry_runs.push(SymmetryRun {
            run: i,
            seed: seeds[i],
            report,
        });
    }
    let ensemble_expectation = if m.supply.is_stochastic() && runs >= 2 {
        let paths: Vec<SupplyPath> = results.iter().map(|(_, p)| p.clone()).collect();
        Some(
            check_ensemble_expectation(&m.supply, &paths, scenario.dt(), ENSEMBLE_Z_LIMIT)
                .map_err(CliError::core)?,
        )
    } else {
        None
    };
    let passed = symmetry_runs.iter().all(|r| r.report.passed)
        && ensemble_expectation.as_ref().is_none_or(|e| e.passed);

    out.write_json(
        "summary.json",
        &Summary {
            categories: ids.clone(),
            horizon: scenario.horizon(),
            dt: scenario.dt(),
            runs: summaries,
            mean_final_wealth: by_id(&mean),
        },
    )?;
    out.write_json(
        "symmetry.json",
        &Symmetry {
            supply_variant: m.supply.law.name(),
            passed,
            runs: symmetry_runs,
            ensemble_expectation,
        },
    )?;
    Ok(Outcome {
        seeds,
        not_converged: None,
    })
}
