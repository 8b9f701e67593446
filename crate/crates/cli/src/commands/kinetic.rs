//! `kinetic`: agent-level ensembles, snapshot export and equilibrium fits.

use detect_core::analysis::{
    default_tail_threshold, equilibrium_detect, fit_exponential, fit_gamma, fit_pareto_tail, gini,
    histogram, quantile, tail_stability, top_share, AnalysisError, ExponentialFit, GammaFit,
    GammaPrediction, ParetoFit, TailStability,
};
use detect_core::kinetic::{run_ensemble, KineticModel, KineticRun};
use detect_core::scenario::ScenarioError;
use serde::Serialize;
use statrs::distribution::{Continuous, Exp, Gamma, Pareto};

use crate::output::{Csv, Field, OutputDir};
use crate::{CliError, Loaded, Outcome};

pub const HISTOGRAM_BINS: usize = 50;
/// Upper histogram edge, as a quantile of the pooled sample.
pub const HISTOGRAM_UPPER_QUANTILE: f64 = 0.99;
pub const TAIL_QUANTILES: [f64; 3] = [0.7, 0.8, 0.9];

#[derive(Serialize)]
struct Equilibrium {
    run: usize,
    /// First snapshot index of the stable stretch; absent when there was none.
    #[serde(skip_serializing_if = "Option::is_none")]
    converged_at_snapshot: Option<usize>,
    status: &'static str,
}

#[derive(Serialize)]
struct NoSavingFit {
    expected_mean: f64,
    exponential: ExponentialFit,
    relative_mean_error: f64,
}

#[derive(Serialize)]
struct GlobalSavingFit {
    lambda: f64,
    gamma: GammaFit,
    prediction: GammaPrediction,
    relative_shape_error: f64,
    empirical_variance: f64,
}

#[derive(Serialize)]
struct IndividualSavingFit {
    #[serde(skip_serializing_if = "Option::is_none")]
    pareto: Option<ParetoFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    tail_stability: Option<TailStability>,
}

#[derive(Serialize)]
struct CondensationPoint {
    step: u64,
    driven_out_fraction: f64,
    max_share: f64,
}

#[derive(Serialize)]
struct MinInvestmentFit {
    /// Averaged over runs at each snapshot.
    condensation: Vec<CondensationPoint>,
    driven_out_nondecreasing: bool,
}

#[derive(Serialize)]
#[serde(rename_all = "snake_case")]
enum ModelFit {
    NoSaving(NoSavingFit),
    GlobalSaving(GlobalSavingFit),
    IndividualSaving(IndividualSavingFit),
    MinInvestment(MinInvestmentFit),
}

#[derive(Serialize)]
struct FitReport {
    model: &'static str,
    agents: usize,
    steps: u64,
    runs: usize,
    seeds: Vec<u64>,
    pooled_sample_size: usize,
    mean: f64,
    gini: f64,
    top_20_share: f64,
    fit: Option<ModelFit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit_error: Option<String>,
    equilibrium: Vec<Equilibrium>,
}

fn pooled_final(runs: &[KineticRun]) -> Vec<f64> {
    runs.iter().flat_map(|r| r.last().wealth.iter().copied()).collect()
}

fn condensation(runs: &[KineticRun], agents: usize) -> MinInvestmentFit {
    let n_snap = runs[0].snapshots.len();
    let r = runs.len() as f64;
    let condensation: Vec<CondensationPoint> = (0..n_snap)
        .map(|k| CondensationPoint {
            step: runs[0].snapshots[k].step,
            driven_out_fraction: runs
                .iter()
                .map(|run| run.snapshots[k].driven_out() as f64 / agents as f64)
                .sum::<f64>()
                / r,
            max_share: runs.iter().map(|run| run.snapshots[k].max_share()).sum::<f64>() / r,
        })
        .collect();
    let driven_out_nondecreasing = condensation
        .windows(2)
        .all(|w| w[1].driven_out_fraction >= w[0].driven_out_fraction);
    MinInvestmentFit {
        condensation,
        driven_out_nondecreasing,
    }
}

fn model_fit(model: &KineticModel, runs: &[KineticRun], sample: &[f64], mean_wealth: f64) -> Result<ModelFit, AnalysisError> {
    Ok(match model {
        KineticModel::NoSaving => {
            let exponential = fit_exponential(sample)?;
            ModelFit::NoSaving(NoSavingFit {
                expected_mean: mean_wealth,
                relative_mean_error: (exponential.mean - mean_wealth).abs() / mean_wealth,
                exponential,
            })
        }
        KineticModel::GlobalSaving { lambda } => {
            let gamma = fit_gamma(sample)?;
            let prediction = GammaPrediction::new(*lambda, mean_wealth)?;
            ModelFit::GlobalSaving(GlobalSavingFit {
                lambda: *lambda,
                relative_shape_error: (gamma.shape - prediction.d_half).abs() / prediction.d_half,
                empirical_variance: gamma.shape * gamma.scale * gamma.scale,
                gamma,
                prediction,
            })
        }
        KineticModel::IndividualSaving { .. } => ModelFit::IndividualSaving(IndividualSavingFit {
            pareto: fit_pareto_tail(sample, default_tail_threshold(sample)).ok(),
            tail_stability: tail_stability(sample, &TAIL_QUANTILES).ok(),
        }),
        KineticModel::MinInvestment => ModelFit::MinInvestment(condensation(runs, runs[0].last().wealth.len())),
    })
}

fn fitted_density(fit: &Option<ModelFit>, sample_len: usize) -> Box<dyn Fn(f64) -> Option<f64>> {
    match fit {
        Some(ModelFit::NoSaving(f)) => {
            let d = Exp::new(1.0 / f.exponential.mean).expect("positive mean");
            Box::new(move |x| Some(d.pdf(x)))
        }
        Some(ModelFit::GlobalSaving(f)) => {
            let d = Gamma::new(f.gamma.shape, 1.0 / f.gamma.scale).expect("positive moments");
            Box::new(move |x| Some(d.pdf(x)))
        }
        Some(ModelFit::IndividualSaving(IndividualSavingFit { pareto: Some(p), .. })) => {
            let d = Pareto::new(p.x_min, p.alpha).expect("positive tail fit");
            let weight = p.n_tail as f64 / sample_len as f64;
            let x_min = p.x_min;
            Box::new(move |x| (x >= x_min).then(|| weight * d.pdf(x)))
        }
        _ => Box::new(|_| None),
    }
}

pub fn run(loaded: &Loaded, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scenario = &loaded.scenario;
    let config = scenario.kinetic().ok_or_else(|| {
        CliError::Scenario(ScenarioError::Validation {
            field: "kinetic".into(),
            code: "scenario.missing_field".into(),
            message: "the kinetic command needs a kinetic block".into(),
        })
    })?;
    let n_runs = scenario.ensemble_size();
    let runs = run_ensemble(config, scenario.seed(), n_runs).map_err(CliError::core)?;
    let seeds: Vec<u64> = runs.iter().map(|r| r.seed).collect();

    let mut csv = Csv::new(&["run", "step", "agent", "wealth"]);
    for (i, run) in runs.iter().enumerate() {
        for snap in &run.snapshots {
            for (a, &w) in snap.wealth.iter().enumerate() {
                csv.row(&[Field::Int(i as u64), Field::Int(snap.step), Field::Int(a as u64), Field::Float(w)]);
            }
        }
    }
    out.write("snapshots.csv", &csv.into_bytes())?;

    let sample = pooled_final(&runs);
    let mean_wealth = config.total_wealth / config.agents as f64;
    let (fit, fit_error) = match model_fit(&config.model, &runs, &sample, mean_wealth) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };

    let hi = quantile(&sample, HISTOGRAM_UPPER_QUANTILE);
    let hi = if hi > 0.0 { hi } else { sample.iter().copied().fold(0.0, f64::max).max(f64::MIN_POSITIVE) };
    let hist = histogram(&sample, HISTOGRAM_BINS, 0.0, hi).map_err(CliError::core)?;
    let density = fitted_density(&fit, sample.len());
    let mut csv = Csv::new(&["bin_lo", "bin_hi", "count", "density", "fitted_density"]);
    for b in 0..HISTOGRAM_BINS {
        let (lo, up) = (hist.edges[b], hist.edges[b + 1]);
        let fitted = density(0.5 * (lo + up));
        csv.row(&[
            Field::Float(lo),
            Field::Float(up),
            Field::Int(hist.counts[b]),
            Field::Float(hist.density[b]),
            fitted.map_or(Field::Empty, Field::Float),
        ]);
    }
    out.write("histogram.csv", &csv.into_bytes())?;

    let eq = scenario.spec.equilibrium;
    let mut stuck = Vec::new();
    let equilibrium: Vec<Equilibrium> = runs
        .iter()
        .enumerate()
        .map(|(i, run)| {
            let snaps: Vec<Vec<f64>> = run.snapshots.iter().map(|s| s.wealth.clone()).collect();
            match equilibrium_detect(&snaps, eq.window, eq.tol) {
                Ok(k) => Equilibrium {
                    run: i,
                    converged_at_snapshot: Some(k),
                    status: "converged",
                },
                Err(AnalysisError::NotConverged { .. }) => {
                    stuck.push(i);
                    Equilibrium {
                        run: i,
                        converged_at_snapshot: None,
                        status: "not_converged",
                    }
                }
                Err(_) => Equilibrium {
                    run: i,
                    converged_at_snapshot: None,
                    status: "insufficient_snapshots",
                },
            }
        })
        .collect();

    let report = FitReport {
        model: config.model.name(),
        agents: config.agents,
        steps: config.steps,
        runs: n_runs,
        seeds: seeds.clone(),
        pooled_sample_size: sample.len(),
        mean: sample.iter().sum::<f64>() / sample.len() as f64,
        gini: gini(&sample).map_err(CliError::core)?,
        top_20_share: top_share(&sample, 0.2).map_err(CliError::core)?,
        fit,
        fit_error,
        equilibrium,
    };
    out.write_json("fit_report.json", &report)?;

    let not_converged = (!stuck.is_empty()).then(|| CliError::NotConverged {
        code: "analysis.not_converged".into(),
        message: format!("no stable snapshot window in runs {stuck:?}"),
    });
    Ok(Outcome { seeds, not_converged })
}
