//! Scenario files: JSON text in, validated [`Scenario`] out.
//!
//! The macro blocks (`taxonomy`, `initial_wealth`, `rates`, `supply`) go
//! together; `kinetic` and `target` are optional. A scenario needs at least
//! one of the macro group or the kinetic block.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kinetic::KineticConfig;
use crate::parametrization::RateSchedule;
use crate::supply::{validate_supply, MintBurnAllocation, SupplyLaw, SupplyModel};
use crate::taxonomy::{TaxonomySpec, TokenomicTaxonomy, WealthVector};
use crate::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScenarioError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("`{field}`: {message}")]
    Validation {
        field: String,
        code: String,
        message: String,
    },
}

impl ScenarioError {
    fn invalid(field: &str, err: impl Into<Error>) -> Self {
        let err = err.into();
        ScenarioError::Validation {
            field: field.to_string(),
            code: err.code(),
            message: err.to_string(),
        }
    }

    fn field(field: &str, code: &str, message: impl Into<String>) -> Self {
        ScenarioError::Validation {
            field: field.to_string(),
            code: format!("scenario.{code}"),
            message: message.into(),
        }
    }

    pub fn code(&self) -> String {
        match self {
            ScenarioError::Syntax { .. } => "scenario.syntax_error".into(),
            ScenarioError::Validation { code, .. } => code.clone(),
        }
    }
}

fn default_one() -> usize {
    1
}

fn default_dt() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplySpec {
    #[serde(flatten)]
    pub model: SupplyModel,
    /// Category id to weight; defaults to everything on the control mechanism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub allocation: Option<BTreeMap<String, f64>>,
}

/// Which matrices an inverse solve keeps from the scenario's own rates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Hold {
    #[default]
    Rotations,
    Interactions,
    None,
}

fn default_perturbation() -> f64 {
    0.05
}

fn default_verify_horizon() -> usize {
    2000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    pub wealth: BTreeMap<String, f64>,
    #[serde(default)]
    pub hold: Hold,
    #[serde(default)]
    pub regularization: f64,
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "default_verify_horizon")]
    pub verify_horizon: usize,
}

fn default_window() -> usize {
    3
}

fn default_equilibrium_tol() -> f64 {
    0.1
}

/// Settings of the snapshot-stability test applied to kinetic runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumSpec {
    #[serde(default = "default_window")]
    pub window: usize,
    /// Wasserstein-1 distance between windows, relative to mean wealth.
    #[serde(default = "default_equilibrium_tol")]
    pub tol: f64,
}

impl Default for EquilibriumSpec {
    fn default() -> Self {
        Self {
            window: default_window(),
            tol: default_equilibrium_tol(),
        }
    }
}

/// On-disk form of a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub taxonomy: Option<TaxonomySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial_wealth: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rates: Option<RateSchedule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supply: Option<SupplySpec>,
    #[serde(default = "default_one")]
    pub horizon: usize,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_one")]
    pub ensemble_size: usize,
    #[serde(default = "default_one")]
    pub snapshot_every: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kinetic: Option<KineticConfig>,
    #[serde(default)]
    pub equilibrium: EquilibriumSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<TargetSpec>,
}

/// Validated macro part of a scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroScenario {
    pub taxonomy: TokenomicTaxonomy,
    pub initial: WealthVector,
    pub rates: RateSchedule,
    pub supply: SupplyModel,
    pub allocation: MintBurnAllocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub macro_part: Option<MacroScenario>,
    /// Target wealth in category order, when a target block is present.
    pub target: Option<WealthVector>,
}

impl Scenario {
    pub fn horizon(&self) -> usize {
        self.spec.horizon
    }

    pub fn dt(&self) -> f64 {
        self.spec.dt
    }

    pub fn seed(&self) -> u64 {
        self.spec.seed
    }

    pub fn ensemble_size(&self) -> usize {
        self.spec.ensemble_size
    }

    pub fn snapshot_every(&self) -> usize {
        self.spec.snapshot_every
    }

    pub fn kinetic(&self) -> Option<&KineticConfig> {
        self.spec.kinetic.as_ref()
    }
}

/// Parses and validates scenario text.
pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| ScenarioError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    scenario_from_value(value)
}

/// Validates an already parsed JSON document.
pub fn scenario_from_value(value: serde_json::Value) -> Result<Scenario, ScenarioError> {
    let spec: ScenarioSpec = serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        ScenarioError::field(&path, "invalid_field", e.into_inner().to_string())
    })?;
    validate_spec(spec)
}

fn wealth_by_id(
    taxonomy: &TokenomicTaxonomy,
    map: &BTreeMap<String, f64>,
    field: &str,
) -> Result<WealthVector, ScenarioError> {
    for id in map.keys() {
        if taxonomy.index_of(id).is_none() {
            return Err(ScenarioError::field(
                &format!("{field}.{id}"),
                "unknown_category",
                format!("no category `{id}`"),
            ));
        }
    }
    let mut values = Vec::with_capacity(taxonomy.len());
    for c in taxonomy.categories() {
        let v = *map.get(&c.id).ok_or_else(|| {
            ScenarioError::field(
                &format!("{field}.{}", c.id),
                "missing_category",
                "every category needs a value",
            )
        })?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(ScenarioError::field(
                &format!("{field}.{}", c.id),
                "negative_wealth",
                format!("wealth must be finite and nonnegative, got {v}"),
            ));
        }
        values.push(v);
    }
    Ok(WealthVector::new(values, 0))
}

pub fn validate_spec(spec: ScenarioSpec) -> Result<Scenario, ScenarioError> {
    if spec.horizon < 1 {
        return Err(ScenarioError::field("horizon", "out_of_range", "horizon must be at least 1"));
    }
    if !(spec.dt > 0.0) || !spec.dt.is_finite() {
        return Err(ScenarioError::field("dt", "out_of_range", "dt must be positive"));
    }
    if spec.ensemble_size < 1 {
        return Err(ScenarioError::field(
            "ensemble_size",
            "out_of_range",
            "ensemble_size must be at least 1",
        ));
    }
    if spec.snapshot_every < 1 {
        return Err(ScenarioError::field(
            "snapshot_every",
            "out_of_range",
            "snapshot_every must be at least 1",
        ));
    }

    let any_macro = spec.taxonomy.is_some()
        || spec.initial_wealth.is_some()
        || spec.rates.is_some()
        || spec.supply.is_some();
    let macro_part = if any_macro {
        Some(validate_macro(&spec)?)
    } else {
        None
    };
    if macro_part.is_none() && spec.kinetic.is_none() {
        return Err(ScenarioError::field(
            "taxonomy",
            "missing_field",
            "a scenario needs the macro blocks or a kinetic block",
        ));
    }
    if spec.equilibrium.window < 1 || !(spec.equilibrium.tol > 0.0) {
        return Err(ScenarioError::field(
            "equilibrium",
            "out_of_range",
            "window must be at least 1 and tol positive",
        ));
    }
    if let Some(k) = &spec.kinetic {
        k.validate().map_err(|e| ScenarioError::invalid("kinetic", e))?;
    }
    let target = match (&spec.target, &macro_part) {
        (None, _) => None,
        (Some(_), None) => {
            return Err(ScenarioError::field(
                "target",
                "missing_field",
                "a target needs the macro blocks",
            ))
        }
        (Some(t), Some(m)) => {
            let w = wealth_by_id(&m.taxonomy, &t.wealth, "target.wealth")?;
            let m0 = m.supply.initial;
            if (w.total() - m0).abs() > 1e-9 * m0 {
                return Err(ScenarioError::field(
                    "target.wealth",
                    "conservation",
                    format!("target sums to {}, supply is {m0}", w.total()),
                ));
            }
            if !(t.regularization >= 0.0) {
                return Err(ScenarioError::field(
                    "target.regularization",
                    "out_of_range",
                    "regularization must be nonnegative",
                ));
            }
            if !(t.perturbation > 0.0 && t.perturbation < 1.0) {
                return Err(ScenarioError::field(
                    "target.perturbation",
                    "out_of_range",
                    "perturbation must be in (0, 1)",
                ));
            }
            Some(w)
        }
    };
    Ok(Scenario {
        spec,
        macro_part,
        target,
    })
}

fn validate_macro(spec: &ScenarioSpec) -> Result<MacroScenario, ScenarioError> {
    let missing = |field: &str| ScenarioError::field(field, "missing_field", "required with the other macro blocks");
    let taxonomy_spec = spec.taxonomy.clone().ok_or_else(|| missing("taxonomy"))?;
    let taxonomy = TokenomicTaxonomy::try_from(taxonomy_spec)
        .map_err(|e| ScenarioError::invalid("taxonomy", e))?;
    let initial_map = spec.initial_wealth.as_ref().ok_or_else(|| missing("initial_wealth"))?;
    let initial = wealth_by_id(&taxonomy, initial_map, "initial_wealth")?;
    let supply_spec = spec.supply.as_ref().ok_or_else(|| missing("supply"))?;
    let supply = supply_spec.model.clone();
    validate_supply(&supply, spec.horizon, spec.dt).map_err(|e| {
        let field = match e {
            crate::supply::SupplyError::RateOutOfRange { .. } => "supply.rate",
            _ => "supply",
        };
        ScenarioError::invalid(field, e)
    })?;
    let m0 = supply.initial;
    if (initial.total() - m0).abs() > 1e-9 * m0 {
        return Err(ScenarioError::field(
            "initial_wealth",
            "conservation",
            format!("initial wealth sums to {}, supply is {m0}", initial.total()),
        ));
    }
    let allocation = match &supply_spec.allocation {
        None => MintBurnAllocation::control_only(&taxonomy),
        Some(map) => MintBurnAllocation::from_ids(&taxonomy, map.iter().map(|(k, v)| (k.as_str(), *v)))
            .map_err(|e| ScenarioError::invalid("supply.allocation", e))?,
    };
    check_nominal_burn(&supply, &allocation, &initial, spec.horizon, spec.dt)?;
    let rates = spec.rates.clone().ok_or_else(|| missing("rates"))?;
    rates
        .validate(&taxonomy, spec.horizon)
        .map_err(|e| ScenarioError::invalid("rates", e))?;
    Ok(MacroScenario {
        taxonomy,
        initial,
        rates,
        supply,
        allocation,
    })
}

/// Burns along the deterministic supply path must not exceed what the
/// allocated categories start with plus what they are minted earlier.
fn check_nominal_burn(
    supply: &SupplyModel,
    allocation: &MintBurnAllocation,
    initial: &WealthVector,
    horizon: usize,
    dt: f64,
) -> Result<(), ScenarioError> {
    if matches!(supply.law, SupplyLaw::Stochastic { .. } | SupplyLaw::Constant) {
        return Ok(());
    }
    let mut level = initial.values.clone();
    let mut prev = supply.initial;
    for step in 1..=horizon {
        let m = supply.deterministic_at(step, dt).expect("deterministic law");
        for (l, g) in level.iter_mut().zip(allocation.split(m - prev)) {
            *l += g;
            if *l < -1e-12 * m {
                return Err(ScenarioError::Validation {
                    field: "supply.allocation".into(),
                    code: "supply.insufficient_wealth_for_burn".into(),
                    message: format!("burns at step {step} exceed the allocated categories' holdings"),
                });
            }
        }
        prev = m;
    }
    Ok(())
}
