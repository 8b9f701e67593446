//! Token economy wealth-distribution engine.
//!
//! Categories of agents hold a token supply `M(t)`; wealth moves between them
//! through pairwise interactions (antisymmetric `B`) and rotations (`Gamma`),
//! while minting and burning change the total. A separate kinetic engine
//! runs agent-level exchange for comparison with the aggregate view.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod inverse;
pub mod kinetic;
pub mod macro_dynamics;
pub mod parametrization;
pub mod scenario;
pub mod seed;
pub mod supply;
pub mod taxonomy;

pub use error::{Error, Result};
pub use inverse::{solve_equilibrium_rates, verify_solution, InverseProblem, InverseSolution, StructureMask};
pub use kinetic::{KineticConfig, KineticEngine, KineticModel};
pub use macro_dynamics::{simulate, MacroSetup, MacroState, Trajectory};
pub use parametrization::{InteractionRateMatrix, RateSchedule, RotationRateMatrix};
pub use scenario::{parse_scenario, Scenario, ScenarioError};
pub use supply::{MintBurnAllocation, SupplyModel, SupplyPath};
pub use taxonomy::{build_taxonomy, TokenomicTaxonomy, WealthVector};
