//! Maximum-supply laws, mint/burn allocation and discounting.
//!
//! All closed forms are evaluated at time `t = step * dt`. A stochastic law is
//! realised once per run as a [`SupplyPath`]; deterministic laws produce the
//! same path every time.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seed::StreamRng;
use crate::taxonomy::{TokenomicTaxonomy, WealthVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SupplyError {
    #[error("{variant} rate {rate} outside {bound}")]
    RateOutOfRange {
        variant: &'static str,
        rate: f64,
        bound: String,
    },
    #[error("supply {value} at step {step} is not positive")]
    NonPositiveSupply { step: usize, value: f64 },
    #[error("supply table has {len} entries but the horizon needs {needed}")]
    TableTooShort { len: usize, needed: usize },
    #[error("supply table starts at {table} but initial supply is {initial}")]
    InitialMismatch { initial: f64, table: f64 },
    #[error("invalid allocation: {0}")]
    InvalidAllocation(String),
    #[error("trajectory has {got} states but supply path has {expected}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("{0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "variant", rename_all = "snake_case")]
pub enum SupplyLaw {
    Constant,
    /// `M(t) = (1 + r t) M0`
    Simple { rate: f64 },
    /// `M(t) = (1 + r)^t M0`
    Compound { rate: f64 },
    /// `M(t) = R_t M0` with `R_t` a geometric Brownian motion started at 1.
    Stochastic { drift: f64, volatility: f64 },
    /// Tabulated `g(step)`; entry 0 must equal the initial supply.
    General { values: Vec<f64> },
}

impl SupplyLaw {
    pub fn name(&self) -> &'static str {
        match self {
            SupplyLaw::Constant => "constant",
            SupplyLaw::Simple { .. } => "simple",
            SupplyLaw::Compound { .. } => "compound",
            SupplyLaw::Stochastic { .. } => "stochastic",
            SupplyLaw::General { .. } => "general",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyModel {
    pub initial: f64,
    #[serde(flatten)]
    pub law: SupplyLaw,
}

impl SupplyModel {
    pub fn constant(initial: f64) -> Self {
        Self {
            initial,
            law: SupplyLaw::Constant,
        }
    }

    pub fn simple(initial: f64, rate: f64) -> Self {
        Self {
            initial,
            law: SupplyLaw::Simple { rate },
        }
    }

    pub fn compound(initial: f64, rate: f64) -> Self {
        Self {
            initial,
            law: SupplyLaw::Compound { rate },
        }
    }

    pub fn stochastic(initial: f64, drift: f64, volatility: f64) -> Self {
        Self {
            initial,
            law: SupplyLaw::Stochastic { drift, volatility },
        }
    }

    pub fn general(values: Vec<f64>) -> Self {
        Self {
            initial: values.first().copied().unwrap_or(0.0),
            law: SupplyLaw::General { values },
        }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.law, SupplyLaw::Stochastic { .. })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.law, SupplyLaw::Constant)
    }

    /// `M(step)` for deterministic laws, `None` for the stochastic one.
    pub fn deterministic_at(&self, step: usize, dt: f64) -> Option<f64> {
        let t = step as f64 * dt;
        let m0 = self.initial;
        match &self.law {
            SupplyLaw::Constant => Some(m0),
            SupplyLaw::Simple { rate } => Some((1.0 + rate * t) * m0),
            SupplyLaw::Compound { rate } => Some((1.0 + rate).powf(t) * m0),
            SupplyLaw::Stochastic { .. } => None,
            SupplyLaw::General { values } => values.get(step).copied(),
        }
    }

    /// `E[M(step)]`; equals `M(step)` for deterministic laws.
    pub fn expected_at(&self, step: usize, dt: f64) -> Option<f64> {
        match &self.law {
            SupplyLaw::Stochastic { drift, .. } => {
                Some(self.initial * (drift * step as f64 * dt).exp())
            }
            _ => self.deterministic_at(step, dt),
        }
    }

    /// Draws the supply path over steps `0..=horizon`.
    pub fn realize(&self, horizon: usize, dt: f64, rng: &mut StreamRng) -> SupplyPath {
        let values = match &self.law {
            SupplyLaw::Stochastic { drift, volatility } => {
                let mut r = 1.0_f64;
                let mut out = Vec::with_capacity(horizon + 1);
                out.push(self.initial);
                let mu = (drift - 0.5 * volatility * volatility) * dt;
                let sd = volatility * dt.sqrt();
                for _ in 0..horizon {
                    let z: f64 = rng.sample(StandardNormal);
                    r *= (mu + sd * z).exp();
                    out.push(r * self.initial);
                }
                out
            }
            _ => (0..=horizon)
                .map(|s| self.deterministic_at(s, dt).unwrap_or(f64::NAN))
                .collect(),
        };
        SupplyPath { values }
    }
}

/// Realised `M(step)` for `step = 0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupplyPath {
    values: Vec<f64>,
}

impl SupplyPath {
    pub fn from_values(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn at(&self, step: usize) -> f64 {
        self.values[step]
    }

    pub fn initial(&self) -> f64 {
        self.values[0]
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `M(step) - M(step - 1)`.
    pub fn delta(&self, step: usize) -> f64 {
        self.values[step] - self.values[step - 1]
    }

    pub fn check_positive(&self) -> Result<(), SupplyError> {
        for (step, &value) in self.values.iter().enumerate() {
            if !(value > 0.0) || !value.is_finite() {
                return Err(SupplyError::NonPositiveSupply { step, value });
            }
        }
        Ok(())
    }
}

/// `M(step)` for a deterministic law.
pub fn supply_at(model: &SupplyModel, step: usize, dt: f64) -> Result<f64, SupplyError> {
    let value = model.deterministic_at(step, dt).ok_or_else(|| {
        SupplyError::InvalidParameter(
            "stochastic supply must be realised per run; use SupplyModel::realize".into(),
        )
    })?;
    if !(value > 0.0) || !value.is_finite() {
        return Err(SupplyError::NonPositiveSupply { step, value });
    }
    Ok(value)
}

/// Checks rate ranges and positivity over steps `0..=horizon`.
pub fn validate_supply(model: &SupplyModel, horizon: usize, dt: f64) -> Result<(), SupplyError> {
    if !(model.initial > 0.0) || !model.initial.is_finite() {
        return Err(SupplyError::NonPositiveSupply {
            step: 0,
            value: model.initial,
        });
    }
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(SupplyError::InvalidParameter(format!(
            "dt must be positive, got {dt}"
        )));
    }
    let t_max = horizon as f64 * dt;
    match &model.law {
        SupplyLaw::Constant => {}
        SupplyLaw::Simple { rate } => {
            let bound = -1.0 / t_max;
            if !rate.is_finite() || (t_max > 0.0 && *rate <= bound) {
                return Err(SupplyError::RateOutOfRange {
                    variant: "simple",
                    rate: *rate,
                    bound: format!("({bound}, inf)"),
                });
            }
        }
        SupplyLaw::Compound { rate } => {
            if !(*rate > -1.0 && *rate < 1.0) {
                return Err(SupplyError::RateOutOfRange {
                    variant: "compound",
                    rate: *rate,
                    bound: "(-1, 1)".into(),
                });
            }
        }
        SupplyLaw::Stochastic { drift, volatility } => {
            if !drift.is_finite() || !(*volatility >= 0.0) || !volatility.is_finite() {
                return Err(SupplyError::InvalidParameter(format!(
                    "stochastic supply needs finite drift and volatility >= 0, got ({drift}, {volatility})"
                )));
            }
            // A geometric Brownian path is positive by construction.
            return Ok(());
        }
        SupplyLaw::General { values } => {
            if values.len() < horizon + 1 {
                return Err(SupplyError::TableTooShort {
                    len: values.len(),
                    needed: horizon + 1,
                });
            }
            if values[0] != model.initial {
                return Err(SupplyError::InitialMismatch {
                    initial: model.initial,
                    table: values[0],
                });
            }
        }
    }
    for step in 0..=horizon {
        supply_at(model, step, dt)?;
    }
    Ok(())
}

/// Fractions of each supply change credited to (or debited from) each
/// category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MintBurnAllocation {
    weights: Vec<f64>,
}

impl MintBurnAllocation {
    pub fn new(weights: Vec<f64>) -> Result<Self, SupplyError> {
        if weights.is_empty() {
            return Err(SupplyError::InvalidAllocation("no categories".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(SupplyError::InvalidAllocation(
                "weights must be nonnegative".into(),
            ));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(SupplyError::InvalidAllocation(format!(
                "weights sum to {sum}, expected 1"
            )));
        }
        Ok(Self { weights })
    }

    /// Everything to the Control Mechanism.
    pub fn control_only(taxonomy: &TokenomicTaxonomy) -> Self {
        let mut weights = vec![0.0; taxonomy.len()];
        weights[taxonomy.control_mechanism()] = 1.0;
        Self { weights }
    }

    /// From `(category id, weight)` pairs; unnamed categories get zero.
    pub fn from_ids<'a>(
        taxonomy: &TokenomicTaxonomy,
        pairs: impl IntoIterator<Item = (&'a str, f64)>,
    ) -> Result<Self, SupplyError> {
        let mut weights = vec![0.0; taxonomy.len()];
        for (id, w) in pairs {
            let i = taxonomy
                .index_of(id)
                .ok_or_else(|| SupplyError::InvalidAllocation(format!("unknown category `{id}`")))?;
            weights[i] += w;
        }
        Self::new(weights)
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Splits `delta` by weight; the last nonzero-weight category takes the
    /// rounding residual so the entries sum to `delta`.
    pub fn split(&self, delta: f64) -> Vec<f64> {
        let mut g: Vec<f64> = self.weights.iter().map(|w| w * delta).collect();
        if let Some(last) = self.weights.iter().rposition(|&w| w > 0.0) {
            let others: f64 = g
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != last)
                .map(|(_, v)| v)
                .sum();
            g[last] = delta - others;
        }
        g
    }
}

/// `G(step)`: per-category change bringing the total from `M(step - 1)` to
/// `M(step)`.
pub fn supply_delta(path: &SupplyPath, step: usize, allocation: &MintBurnAllocation) -> Vec<f64> {
    if step == 0 {
        return vec![0.0; allocation.len()];
    }
    allocation.split(path.delta(step))
}

/// `M0 / M(step)`.
pub fn discount_factor(path: &SupplyPath, step: usize) -> f64 {
    path.initial() / path.at(step)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeTranslationReport {
    /// `max_t |sum F(t) - M(t)| / M(t)`
    pub max_relative_drift: f64,
    pub worst_step: usize,
    /// `max_t |discount(t) * sum F(t) - M0| / M0`
    pub max_discounted_error: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Compares trajectory totals to the supply path.
pub fn check_time_translation(
    trajectory: &[WealthVector],
    path: &SupplyPath,
    tol: f64,
) -> Result<TimeTranslationReport, SupplyError> {
    if trajectory.is_empty() || trajectory.len() > path.values().len() {
        return Err(SupplyError::LengthMismatch {
            expected: path.values().len(),
            got: trajectory.len(),
        });
    }
    let m0 = path.initial();
    let mut report = TimeTranslationReport {
        max_relative_drift: 0.0,
        worst_step: 0,
        max_discounted_error: 0.0,
        tolerance: tol,
        passed: true,
    };
    for (step, f) in trajectory.iter().enumerate() {
        let m = path.at(step);
        let total = f.total();
        let drift = (total - m).abs() / m;
        if drift > report.max_relative_drift {
            report.max_relative_drift = drift;
            report.worst_step = step;
        }
        let discounted = (discount_factor(path, step) * total - m0).abs() / m0;
        report.max_discounted_error = report.max_discounted_error.max(discounted);
    }
    report.passed = report.max_relative_drift <= tol && report.max_discounted_error <= tol;
    Ok(report)
}

/// Ensemble form of the check for a stochastic law: the mean realised supply
/// at each step against `E[M(t)]`, in units of its standard error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSupplyReport {
    pub max_z_score: f64,
    pub worst_step: usize,
    pub passed: bool,
}

pub fn check_ensemble_expectation(
    model: &SupplyModel,
    paths: &[SupplyPath],
    dt: f64,
    z_limit: f64,
) -> Result<EnsembleSupplyReport, SupplyError> {
    let first = paths
        .first()
        .ok_or_else(|| SupplyError::InvalidParameter("empty ensemble".into()))?;
    let len = first.values().len();
    if paths.iter().any(|p| p.values().len() != len) {
        return Err(SupplyError::LengthMismatch {
            expected: len,
            got: paths.iter().map(|p| p.values().len()).min().unwrap_or(0),
        });
    }
    let n = paths.len() as f64;
    let mut worst = (0.0_f64, 0);
    for step in 1..len {
        let expected = model.expected_at(step, dt).expect("finite expectation");
        let mean = paths.iter().map(|p| p.at(step)).sum::<f64>() / n;
        let var = paths
            .iter()
            .map(|p| (p.at(step) - mean).powi(2))
            .sum::<f64>()
            / (n - 1.0).max(1.0);
        let se = (var / n).sqrt();
        let z = if se > 0.0 {
            (mean - expected).abs() / se
        } else if mean == expected {
            0.0
        } else {
            f64::INFINITY
        };
        if z > worst.0 {
            worst = (z, step);
        }
    }
    Ok(EnsembleSupplyReport {
        max_z_score: worst.0,
        worst_step: worst.1,
        passed: worst.0 <= z_limit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn closed_forms() {
        assert!((supply_at(&SupplyModel::simple(100.0, 0.1), 5, 1.0).unwrap() - 150.0).abs() < 1e-12);
        assert!((supply_at(&SupplyModel::compound(100.0, 0.1), 2, 1.0).unwrap() - 121.0).abs() < 1e-12);
        assert_eq!(supply_at(&SupplyModel::constant(100.0), 77, 1.0).unwrap(), 100.0);
    }

    #[test]
    fn rate_ranges() {
        assert!(matches!(
            validate_supply(&SupplyModel::simple(100.0, -0.2), 10, 1.0),
            Err(SupplyError::RateOutOfRange { .. })
        ));
        assert!(matches!(
            validate_supply(&SupplyModel::compound(100.0, 1.5), 10, 1.0),
            Err(SupplyError::RateOutOfRange { .. })
        ));
        validate_supply(&SupplyModel::simple(100.0, -0.05), 10, 1.0).unwrap();
        assert!((supply_at(&SupplyModel::simple(100.0, -0.05), 10, 1.0).unwrap() - 50.0).abs() < 1e-12);
        assert!(matches!(
            validate_supply(&SupplyModel::general(vec![100.0, 0.0]), 1, 1.0),
            Err(SupplyError::NonPositiveSupply { step: 1, .. })
        ));
        assert!(matches!(
            validate_supply(&SupplyModel::general(vec![100.0]), 3, 1.0),
            Err(SupplyError::TableTooShort { .. })
        ));
    }

    #[test]
    fn deltas() {
        let mut rng = seed::rng(0);
        let alloc = MintBurnAllocation::new(vec![1.0, 0.0, 0.0]).unwrap();
        let p = SupplyModel::simple(100.0, 0.1).realize(3, 1.0, &mut rng);
        let g = supply_delta(&p, 1, &alloc);
        assert!((g[0] - 10.0).abs() < 1e-12);
        assert_eq!(&g[1..], &[0.0, 0.0]);

        let p = SupplyModel::constant(100.0).realize(3, 1.0, &mut rng);
        assert_eq!(supply_delta(&p, 2, &alloc), vec![0.0; 3]);

        let half = MintBurnAllocation::new(vec![0.5, 0.5]).unwrap();
        let p = SupplyModel::compound(100.0, -0.5).realize(1, 1.0, &mut rng);
        assert_eq!(supply_delta(&p, 1, &half), vec![-25.0, -25.0]);
    }

    #[test]
    fn residual_goes_to_last_weighted_category() {
        let alloc = MintBurnAllocation::new(vec![0.1, 0.2, 0.7, 0.0]).unwrap();
        let g = alloc.split(0.3);
        assert_eq!(g[3], 0.0);
        assert_eq!(g[0] + g[1] + g[2], 0.3);
    }

    #[test]
    fn discounting() {
        let mut rng = seed::rng(0);
        let p = SupplyModel::simple(100.0, 0.1).realize(5, 1.0, &mut rng);
        assert!((discount_factor(&p, 5) - 1.0 / 1.5).abs() < 1e-15);
        let p = SupplyModel::compound(100.0, 0.1).realize(2, 1.0, &mut rng);
        assert!((discount_factor(&p, 2) - 1.0 / 1.21).abs() < 1e-15);
        let p = SupplyModel::constant(100.0).realize(9, 1.0, &mut rng);
        assert!((0..=9).all(|s| discount_factor(&p, s) == 1.0));
    }

    #[test]
    fn corrupted_trajectory_fails_at_step() {
        let mut rng = seed::rng(0);
        let p = SupplyModel::constant(100.0).realize(3, 1.0, &mut rng);
        let mut traj: Vec<_> = (0..=3)
            .map(|t| WealthVector::new(vec![40.0, 60.0], t))
            .collect();
        assert!(check_time_translation(&traj, &p, 1e-9).unwrap().passed);
        traj[2].values[0] += 1.0;
        let r = check_time_translation(&traj, &p, 1e-9).unwrap();
        assert!(!r.passed);
        assert_eq!(r.worst_step, 2);
    }

    #[test]
    fn gbm_mean_matches_expectation() {
        let model = SupplyModel::stochastic(100.0, 0.0, 0.1);
        let paths: Vec<_> = (0..10_000)
            .map(|i| model.realize(5, 1.0, &mut seed::substream(i, "supply")))
            .collect();
        let n = paths.len() as f64;
        let mean = paths.iter().map(|p| p.at(5)).sum::<f64>() / n;
        let sd = (paths.iter().map(|p| (p.at(5) - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((mean - 100.0).abs() < 3.0 * sd / n.sqrt(), "mean {mean}");
        assert!(paths.iter().all(|p| p.check_positive().is_ok()));
    }

    #[test]
    fn serde_shape() {
        let m: SupplyModel =
            serde_json::from_str(r#"{"variant":"compound","initial":100,"rate":0.02}"#).unwrap();
        assert_eq!(m, SupplyModel::compound(100.0, 0.02));
    }
}
