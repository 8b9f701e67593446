//! `check`: validation only.

use serde::Serialize;

use crate::output::OutputDir;
use crate::{CliError, Loaded, Outcome};

#[derive(Serialize)]
struct CheckReport {
    valid: bool,
    has_macro: bool,
    has_kinetic: bool,
    has_target: bool,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    categories: Vec<String>,
    horizon: usize,
    dt: f64,
    seed: u64,
    ensemble_size: usize,
}

pub fn run(loaded: &Loaded, out: &mut OutputDir) -> Result<Outcome, CliError> {
    let s = &loaded.scenario;
    let categories = s
        .macro_part
        .as_ref()
        .map(|m| m.taxonomy.categories().iter().map(|c| c.id.clone()).collect())
        .unwrap_or_default();
    out.write_json(
        "check.json",
        &CheckReport {
            valid: true,
            has_macro: s.macro_part.is_some(),
            has_kinetic: s.kinetic().is_some(),
            has_target: s.target.is_some(),
            categories,
            horizon: s.horizon(),
            dt: s.dt(),
            seed: s.seed(),
            ensemble_size: s.ensemble_size(),
        },
    )?;
    Ok(Outcome {
        seeds: Vec::new(),
        not_converged: None,
    })
}
