//! Crate-wide error type with stable, machine-readable codes.

use thiserror::Error;

use crate::analysis::AnalysisError;
use crate::inverse::InverseError;
use crate::kinetic::KineticError;
use crate::macro_dynamics::MacroError;
use crate::parametrization::ParamError;
use crate::scenario::ScenarioError;
use crate::supply::SupplyError;
use crate::taxonomy::TaxonomyError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Supply(#[from] SupplyError),
    #[error(transparent)]
    Macro(#[from] MacroError),
    #[error(transparent)]
    Kinetic(#[from] KineticError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Inverse(#[from] InverseError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

impl Error {
    /// `module.snake_case_variant`, e.g. `supply.rate_out_of_range`.
    pub fn code(&self) -> String {
        match self {
            Error::Taxonomy(e) => format!("taxonomy.{}", taxonomy_code(e)),
            Error::Param(e) => format!("parametrization.{}", param_code(e)),
            Error::Supply(e) => format!("supply.{}", supply_code(e)),
            Error::Macro(e) => macro_code(e),
            Error::Kinetic(e) => match e {
                KineticError::InvalidConfig(_) => "kinetic.invalid_config".into(),
                KineticError::LambdaOutOfRange { .. } => "kinetic.lambda_out_of_range".into(),
                KineticError::OverlappingTransactions(_) => "kinetic.overlapping_transactions".into(),
                KineticError::Param(p) => format!("parametrization.{}", param_code(p)),
            },
            Error::Analysis(e) => format!(
                "analysis.{}",
                match e {
                    AnalysisError::LambdaOutOfRange(_) => "lambda_out_of_range",
                    AnalysisError::SampleTooSmall { .. } => "sample_too_small",
                    AnalysisError::ZeroVariance => "zero_variance",
                    AnalysisError::TailTooSmall { .. } => "tail_too_small",
                    AnalysisError::InvalidSample(_) => "invalid_sample",
                    AnalysisError::NotConverged { .. } => "not_converged",
                    AnalysisError::InvalidArgument(_) => "invalid_argument",
                }
            ),
            Error::Inverse(e) => match e {
                InverseError::InfeasibleStructure { .. } => "inverse.infeasible_structure".into(),
                InverseError::MaxIterations(_) => "inverse.max_iterations".into(),
                InverseError::InvalidProblem(_) => "inverse.invalid_problem".into(),
                InverseError::Param(p) => format!("parametrization.{}", param_code(p)),
                InverseError::Macro(m) => macro_code(m),
            },
            Error::Scenario(e) => e.code(),
        }
    }

    /// Errors caused by the input rather than by the run itself.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Taxonomy(_) | Error::Scenario(_) | Error::Supply(SupplyError::RateOutOfRange { .. })
        )
    }
}

fn taxonomy_code(e: &TaxonomyError) -> &'static str {
    match e {
        TaxonomyError::MissingControlMechanism => "missing_control_mechanism",
        TaxonomyError::MultipleControlMechanisms(..) => "multiple_control_mechanisms",
        TaxonomyError::MultipleTokenDumps(..) => "multiple_token_dumps",
        TaxonomyError::DuplicateId(_) => "duplicate_id",
        TaxonomyError::DanglingEndpoint { .. } => "dangling_endpoint",
        TaxonomyError::SelfLoop(_) => "self_loop",
        TaxonomyError::TooFewCategories(_) => "too_few_categories",
        TaxonomyError::DimensionMismatch { .. } => "dimension_mismatch",
        TaxonomyError::InvalidWealth { .. } => "invalid_wealth",
    }
}

fn param_code(e: &ParamError) -> &'static str {
    match e {
        ParamError::ZeroWealthEndpoint(..) => "zero_wealth_endpoint",
        ParamError::UnboundedExpectation(_) => "unbounded_expectation",
        ParamError::NonStaticPrice(_) => "non_static_price",
        ParamError::NegativeRotationRate { .. } => "negative_rotation_rate",
        ParamError::ProcessExhausted { .. } => "process_exhausted",
        ParamError::InfeasibleSample { .. } => "infeasible_sample",
        ParamError::FlowExceedsWealth { .. } => "flow_exceeds_wealth",
        ParamError::ModeMismatch { .. } => "mode_mismatch",
        ParamError::InvalidModel { .. } => "invalid_model",
        ParamError::UnknownInteraction(_) => "unknown_interaction",
        ParamError::MissingInteractionSpec(_) => "missing_interaction_spec",
        ParamError::UnknownRotation { .. } => "unknown_rotation",
        ParamError::InvalidMatrix(_) => "invalid_matrix",
        ParamError::InvalidReactiveOutput(_) => "invalid_reactive_output",
        ParamError::InvalidArgument(_) => "invalid_argument",
    }
}

fn supply_code(e: &SupplyError) -> &'static str {
    match e {
        SupplyError::RateOutOfRange { .. } => "rate_out_of_range",
        SupplyError::NonPositiveSupply { .. } => "non_positive_supply",
        SupplyError::TableTooShort { .. } => "table_too_short",
        SupplyError::InitialMismatch { .. } => "initial_mismatch",
        SupplyError::InvalidAllocation(_) => "invalid_allocation",
        SupplyError::LengthMismatch { .. } => "length_mismatch",
        SupplyError::InvalidParameter(_) => "invalid_parameter",
    }
}

fn macro_code(e: &MacroError) -> String {
    match e {
        MacroError::NegativeWealth { .. } => "macro_dynamics.negative_wealth".into(),
        MacroError::InsufficientWealthForBurn { .. } => "supply.insufficient_wealth_for_burn".into(),
        MacroError::ConservationBreach { .. } => "macro_dynamics.conservation_breach".into(),
        MacroError::DimensionMismatch { .. } => "macro_dynamics.dimension_mismatch".into(),
        MacroError::InvalidArgument(_) => "macro_dynamics.invalid_argument".into(),
        MacroError::Param(p) => format!("parametrization.{}", param_code(p)),
        MacroError::Supply(s) => format!("supply.{}", supply_code(s)),
        MacroError::Taxonomy(t) => format!("taxonomy.{}", taxonomy_code(t)),
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
