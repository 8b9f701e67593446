//! `invert`: rates that make the target wealth stationary, emitted as a merge
//! patch for the scenario plus a forward verification.

use detect_core::inverse::{
    solve_equilibrium_rates, verify_solution, Entry, InverseError, InverseProblem, StructureMask,
    VerificationReport, RESIDUAL_TOL,
};
use detect_core::parametrization::{ExplicitRates, RateSampler};
use detect_core::scenario::{scenario_from_value, Hold, ScenarioError};
use detect_core::seed::run_seed;
use serde::Serialize;
use serde_json::json;

use super::require_macro;
use crate::output::OutputDir;
use crate::{CliError, Loaded, Outcome};

#[derive(Serialize)]
struct Verification {
    hold: Hold,
    free_parameters: usize,
    residual_norm: f64,
    relative_residual: f64,
    tolerance: f64,
    converged: bool,
    regularization: f64,
    perturbation: f64,
    horizon: usize,
    forward: VerificationReport,
}

fn invalid(field: &str, code: &str, message: &str) -> CliError {
    CliError::Scenario(ScenarioError::Validation {
        field: field.into(),
        code: code.into(),
        message: message.into(),
    })
}

pub fn run(loaded: &Loaded, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let scenario = &loaded.scenario;
    let m = require_macro(scenario)?;
    let (spec, target) = match (&scenario.spec.target, &scenario.target) {
        (Some(s), Some(t)) => (s, t.clone()),
        _ => {
            return Err(invalid(
                "target",
                "scenario.missing_field",
                "the invert command needs a target block",
            ))
        }
    };
    if !m.supply.is_constant() {
        return Err(invalid(
            "supply",
            "scenario.non_constant_supply",
            "stationary targets are defined for constant supply only",
        ));
    }
    let supply = m.supply.initial;
    let seed = run_seed(scenario.seed(), 0);

    // Rates currently in force, used for the held block.
    let current = RateSampler::new(&m.rates, &m.taxonomy, scenario.dt(), seed, &m.initial, supply)
        .and_then(|mut s| s.materialize(0, &m.initial, supply))
        .map_err(CliError::core)?;
    let mut mask = StructureMask::from_taxonomy(&m.taxonomy);
    match spec.hold {
        Hold::Rotations => mask = mask.fix_gamma(&current.gamma),
        Hold::Interactions => {
            let n = m.taxonomy.len();
            for i in 0..n {
                for j in i + 1..n {
                    let v = current.beta.get(i, j);
                    mask.beta[i][j] = if v == 0.0 { Entry::Zero } else { Entry::Fixed(v) };
                }
            }
        }
        Hold::None => {}
    }
    let free_parameters = mask
        .beta
        .iter()
        .enumerate()
        .flat_map(|(i, r)| r.iter().enumerate().filter(move |(j, _)| *j > i).map(|(_, e)| e))
        .chain(
            mask.gamma
                .iter()
                .enumerate()
                .flat_map(|(to, r)| r.iter().enumerate().filter(move |(from, _)| *from != to).map(|(_, e)| e)),
        )
        .filter(|e| matches!(e, Entry::Free))
        .count();

    let problem = InverseProblem {
        target,
        supply,
        mask,
        regularization: spec.regularization,
    };
    let solution = match solve_equilibrium_rates(&problem) {
        Ok(s) => s,
        Err(e @ InverseError::InfeasibleStructure { .. }) => {
            return Err(CliError::NotConverged {
                code: "inverse.infeasible_structure".into(),
                message: e.to_string(),
            })
        }
        Err(e) => return Err(CliError::core(e)),
    };
    let forward = verify_solution(&solution, &problem, spec.perturbation, spec.verify_horizon, scenario.dt())
        .map_err(CliError::core)?;

    let explicit = serde_json::to_value(ExplicitRates {
        beta: solution.beta.clone(),
        gamma: solution.gamma.clone(),
    })
    .expect("serializable matrices");
    let patch = json!({
        "rates": {
            "mode": "static_deterministic",
            "dynamic_kind": null,
            "interactions": null,
            "rotations": null,
            "reactive": null,
            "explicit": explicit,
        },
        "target": null,
    });
    let mut solved = loaded.document.clone();
    json_patch::merge(&mut solved, &patch);
    scenario_from_value(solved.clone())?;

    out.write_json("patch.json", &patch)?;
    out.write_json("solved_scenario.json", &solved)?;
    out.write_json(
        "verification.json",
        &Verification {
            hold: spec.hold,
            free_parameters,
            residual_norm: solution.residual_norm,
            relative_residual: solution.residual_norm / supply,
            tolerance: RESIDUAL_TOL,
            converged: solution.converged,
            regularization: spec.regularization,
            perturbation: spec.perturbation,
            horizon: spec.verify_horizon,
            forward,
        },
    )?;
    let not_converged = (!solution.converged).then(|| CliError::NotConverged {
        code: "inverse.not_converged".into(),
        message: format!(
            "residual {} exceeds {} of the supply",
            solution.residual_norm, RESIDUAL_TOL
        ),
    });
    Ok(Outcome {
        seeds: vec![seed],
        not_converged,
    })
}
