//! Forward stepping of the compartmental wealth system
//!
//! `F' = F + dt * [(1/M) F . (B F) + Gamma F] + G`
//!
//! where `.` is the entry-wise product and `G` the mint/burn vector that
//! moves the total from `M(t)` to `M(t + 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parametrization::{
    InteractionRateMatrix, ParamError, RateSampler, RateSchedule, RotationRateMatrix,
};
use crate::seed;
use crate::supply::{supply_delta, MintBurnAllocation, SupplyError, SupplyModel, SupplyPath};
use crate::taxonomy::{TaxonomyError, TokenomicTaxonomy, WealthVector};

/// Relative tolerance on `sum F = M`, checked after every step.
pub const CONSERVATION_TOL: f64 = 1e-9;
/// Negative values smaller than this (relative to `M`) are rounding noise and
/// are set to zero.
const SNAP_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MacroError {
    #[error("category {category} would reach {value} at step {step}; reduce dt or the rates")]
    NegativeWealth {
        step: usize,
        category: usize,
        value: f64,
    },
    #[error("burn at step {step} would leave category {category} at {value}")]
    InsufficientWealthForBurn {
        step: usize,
        category: usize,
        value: f64,
    },
    #[error("total wealth {total} differs from supply {supply} at step {step}")]
    ConservationBreach { step: usize, total: f64, supply: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("{0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Supply(#[from] SupplyError),
    #[error(transparent)]
    Taxonomy(#[from] TaxonomyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MacroState {
    pub f: WealthVector,
    pub t: usize,
    /// `M(t)`
    pub supply: f64,
}

impl MacroState {
    pub fn new(f: WealthVector, supply: f64) -> Self {
        let t = f.time;
        Self { f, t, supply }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub states: Vec<MacroState>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn last(&self) -> &MacroState {
        self.states.last().expect("trajectory has the initial state")
    }

    pub fn wealth(&self) -> Vec<WealthVector> {
        self.states.iter().map(|s| s.f.clone()).collect()
    }

    /// `max_t |sum F(t) - M(t)| / M(t)`
    pub fn max_relative_drift(&self) -> f64 {
        self.states
            .iter()
            .map(|s| (s.f.total() - s.supply).abs() / s.supply)
            .fold(0.0, f64::max)
    }
}

/// Right-hand side without supply change: `(1/M) F . (B F) + Gamma F`.
pub fn rate_of_change(
    f: &[f64],
    beta: &InteractionRateMatrix,
    gamma: &RotationRateMatrix,
    supply: f64,
) -> Vec<f64> {
    let bf = beta.apply(f);
    let gf = gamma.apply(f);
    f.iter()
        .zip(bf.iter().zip(&gf))
        .map(|(fi, (b, g))| fi * b / supply + g)
        .collect()
}

/// One step `t -> t + 1`. `path` supplies `M(t + 1)`; the mint/burn vector is
/// added after the interaction and rotation terms.
pub fn step(
    state: &MacroState,
    beta: &InteractionRateMatrix,
    gamma: &RotationRateMatrix,
    dt: f64,
    path: &SupplyPath,
    allocation: &MintBurnAllocation,
) -> Result<MacroState, MacroError> {
    let n = state.f.len();
    for got in [beta.dim(), gamma.dim(), allocation.len()] {
        if got != n {
            return Err(MacroError::DimensionMismatch { expected: n, got });
        }
    }
    let t = state.t;
    let m = state.supply;
    let m_next = path.at(t + 1);
    let g = supply_delta(path, t + 1, allocation);
    let rhs = rate_of_change(&state.f.values, beta, gamma, m);
    let snap = SNAP_TOL * m.max(m_next);
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let moved = state.f.values[i] + dt * rhs[i];
        if moved < -snap || !moved.is_finite() {
            return Err(MacroError::NegativeWealth {
                step: t + 1,
                category: i,
                value: moved,
            });
        }
        let mut v = moved + g[i];
        if v < -snap {
            return Err(MacroError::InsufficientWealthForBurn {
                step: t + 1,
                category: i,
                value: v,
            });
        }
        if v < 0.0 {
            v = 0.0;
        }
        values.push(v);
    }
    let f = WealthVector::new(values, t + 1);
    let total = f.total();
    if (total - m_next).abs() > CONSERVATION_TOL * m_next {
        return Err(MacroError::ConservationBreach {
            step: t + 1,
            total,
            supply: m_next,
        });
    }
    Ok(MacroState {
        f,
        t: t + 1,
        supply: m_next,
    })
}

/// Runs `path.horizon()` steps, asking `rates` for `(B, Gamma)` before each
/// one with the pre-step state.
pub fn integrate<R>(
    initial: &WealthVector,
    path: &SupplyPath,
    allocation: &MintBurnAllocation,
    dt: f64,
    mut rates: R,
) -> Result<Trajectory, MacroError>
where
    R: FnMut(&MacroState) -> Result<(InteractionRateMatrix, RotationRateMatrix), MacroError>,
{
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(MacroError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    initial.validate()?;
    let m0 = path.initial();
    if (initial.total() - m0).abs() > CONSERVATION_TOL * m0 {
        return Err(MacroError::ConservationBreach {
            step: 0,
            total: initial.total(),
            supply: m0,
        });
    }
    let mut state = MacroState {
        f: WealthVector::new(initial.values.clone(), 0),
        t: 0,
        supply: m0,
    };
    let mut states = Vec::with_capacity(path.horizon() + 1);
    for _ in 0..path.horizon() {
        let (beta, gamma) = rates(&state)?;
        let next = step(&state, &beta, &gamma, dt, path, allocation)?;
        states.push(std::mem::replace(&mut state, next));
    }
    states.push(state);
    Ok(Trajectory { dt, states })
}

/// Constant rates and constant supply.
pub fn simulate_constant(
    initial: &WealthVector,
    beta: &InteractionRateMatrix,
    gamma: &RotationRateMatrix,
    horizon: usize,
    dt: f64,
) -> Result<Trajectory, MacroError> {
    let n = initial.len();
    let path = SupplyPath::from_values(vec![initial.total(); horizon + 1]);
    let mut weights = vec![0.0; n];
    weights[n - 1] = 1.0;
    let allocation = MintBurnAllocation::new(weights)?;
    integrate(initial, &path, &allocation, dt, |_| {
        Ok((beta.clone(), gamma.clone()))
    })
}

/// Everything `simulate` needs for one macro run.
#[derive(Debug, Clone)]
pub struct MacroSetup<'a> {
    pub taxonomy: &'a TokenomicTaxonomy,
    pub schedule: &'a RateSchedule,
    pub supply: &'a SupplyModel,
    pub allocation: &'a MintBurnAllocation,
    pub initial: &'a WealthVector,
    pub horizon: usize,
    pub dt: f64,
}

/// One run with rates from the schedule and supply from the (possibly
/// stochastic) law. Deterministic given `run_seed`.
pub fn simulate(setup: &MacroSetup<'_>, run_seed: u64) -> Result<(Trajectory, SupplyPath), MacroError> {
    setup.taxonomy.check_wealth(setup.initial)?;
    let path = setup
        .supply
        .realize(setup.horizon, setup.dt, &mut seed::substream(run_seed, "supply"));
    path.check_positive()?;
    let mut sampler = RateSampler::new(
        setup.schedule,
        setup.taxonomy,
        setup.dt,
        run_seed,
        setup.initial,
        path.initial(),
    )?;
    let trajectory = integrate(setup.initial, &path, setup.allocation, setup.dt, |state| {
        let sample = sampler.materialize(state.t, &state.f, state.supply)?;
        Ok((sample.beta, sample.gamma))
    })?;
    Ok((trajectory, path))
}

/// Pairwise form of a step without rotations and with fixed supply:
/// `F_j' = F_j + sum_k dF_jk` with `dF_jk = (dt/M) beta_jk F_j F_k`.
pub fn transaction_rule_reduce(
    f_prev: &WealthVector,
    beta: &InteractionRateMatrix,
    supply: f64,
    dt: f64,
) -> Result<WealthVector, MacroError> {
    let n = f_prev.len();
    if beta.dim() != n {
        return Err(MacroError::DimensionMismatch {
            expected: n,
            got: beta.dim(),
        });
    }
    let f = &f_prev.values;
    let mut out = f.clone();
    for j in 0..n {
        for k in 0..n {
            if j != k {
                out[j] += dt / supply * beta.get(j, k) * f[j] * f[k];
            }
        }
        if out[j] < -SNAP_TOL * supply {
            return Err(MacroError::NegativeWealth {
                step: f_prev.time + 1,
                category: j,
                value: out[j],
            });
        }
        out[j] = out[j].max(0.0);
    }
    Ok(WealthVector::new(out, f_prev.time + 1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parametrization::gamma_static;

    fn wv(v: &[f64]) -> WealthVector {
        WealthVector::new(v.to_vec(), 0)
    }

    fn beta2(b: f64) -> InteractionRateMatrix {
        let mut m = InteractionRateMatrix::zeros(2);
        m.set(0, 1, b);
        m
    }

    #[test]
    fn zero_rates_are_identity() {
        let tr = simulate_constant(
            &wv(&[30.0, 70.0]),
            &InteractionRateMatrix::zeros(2),
            &RotationRateMatrix::zeros(2),
            100,
            1.0,
        )
        .unwrap();
        assert_eq!(tr.len(), 101);
        assert!(tr.states.iter().all(|s| s.f.values == vec![30.0, 70.0]));
    }

    #[test]
    fn interaction_step() {
        let tr = simulate_constant(&wv(&[40.0, 60.0]), &beta2(0.5), &RotationRateMatrix::zeros(2), 2, 1.0)
            .unwrap();
        assert_eq!(tr.states[1].f.values, vec![52.0, 48.0]);
        let f2 = &tr.states[2].f.values;
        assert!((f2[0] - 64.48).abs() < 1e-12 && (f2[1] - 35.52).abs() < 1e-12);
    }

    #[test]
    fn rotation_step() {
        let g = gamma_static(&[vec![0.0, 0.1], vec![0.0, 0.0]]).unwrap();
        let tr = simulate_constant(&wv(&[50.0, 50.0]), &InteractionRateMatrix::zeros(2), &g, 1, 1.0)
            .unwrap();
        assert_eq!(tr.states[1].f.values, vec![45.0, 55.0]);
    }

    #[test]
    fn minting_step() {
        let path = SupplyModel::simple(100.0, 0.1).realize(1, 1.0, &mut seed::rng(0));
        let alloc = MintBurnAllocation::new(vec![1.0, 0.0]).unwrap();
        let s0 = MacroState::new(wv(&[40.0, 60.0]), 100.0);
        let s1 = step(
            &s0,
            &InteractionRateMatrix::zeros(2),
            &RotationRateMatrix::zeros(2),
            1.0,
            &path,
            &alloc,
        )
        .unwrap();
        assert!((s1.f.values[0] - 50.0).abs() < 1e-12);
        assert_eq!(s1.f.values[1], 60.0);
        assert!((s1.supply - 110.0).abs() < 1e-12);
    }

    #[test]
    fn overshoot_is_an_error() {
        let err = simulate_constant(&wv(&[40.0, 60.0]), &beta2(-5.0), &RotationRateMatrix::zeros(2), 1, 1.0)
            .unwrap_err();
        assert!(matches!(err, MacroError::NegativeWealth { category: 0, .. }));
    }

    #[test]
    fn burn_beyond_holdings_is_an_error() {
        let path = SupplyPath::from_values(vec![100.0, 50.0]);
        let alloc = MintBurnAllocation::new(vec![1.0, 0.0]).unwrap();
        let s0 = MacroState::new(wv(&[40.0, 60.0]), 100.0);
        let err = step(
            &s0,
            &InteractionRateMatrix::zeros(2),
            &RotationRateMatrix::zeros(2),
            1.0,
            &path,
            &alloc,
        )
        .unwrap_err();
        assert!(matches!(err, MacroError::InsufficientWealthForBurn { category: 0, .. }));
    }

    #[test]
    fn pairwise_form() {
        let f = wv(&[10.0, 10.0, 10.0]);
        let mut b = InteractionRateMatrix::zeros(3);
        // dF_12 = +5 with M = 30, dt = 1
        b.set(0, 1, 30.0 * 5.0 / 100.0);
        let out = transaction_rule_reduce(&f, &b, 30.0, 1.0).unwrap();
        assert_eq!(out.values, vec![15.0, 5.0, 10.0]);
        let same = transaction_rule_reduce(&f, &InteractionRateMatrix::zeros(3), 30.0, 1.0).unwrap();
        assert_eq!(same.values, f.values);
    }
}
