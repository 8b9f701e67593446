pub mod check;
pub mod invert;
pub mod kinetic;
pub mod simulate;

use detect_core::scenario::{MacroScenario, Scenario, ScenarioError};

use crate::CliError;

pub(crate) fn require_macro(scenario: &Scenario) -> Result<&MacroScenario, CliError> {
    scenario.macro_part.as_ref().ok_or_else(|| {
        CliError::Scenario(ScenarioError::Validation {
            field: "taxonomy".into(),
            code: "scenario.missing_field".into(),
            message: "this command needs the taxonomy, initial_wealth, rates and supply blocks".into(),
        })
    })
}
