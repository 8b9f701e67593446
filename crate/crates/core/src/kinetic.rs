//! Agent-level kinetic exchange models.
//!
//! Each step one uniformly random pair of distinct agents pools part of its
//! wealth and splits it by a uniform draw `eps`. The four rules differ in how
//! much each agent keeps out of the pool.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::parametrization::{InteractionRateMatrix, ParamError};
use crate::seed::{self, StreamRng};
use crate::taxonomy::{TokenomicTaxonomy, WealthVector};

/// Wealth below this counts as driven out of the market.
pub const DRIVEN_OUT: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KineticError {
    #[error("invalid kinetic configuration: {0}")]
    InvalidConfig(String),
    #[error("saving propensity {value} of agent {agent} outside (0, 1)")]
    LambdaOutOfRange { agent: usize, value: f64 },
    #[error("agent {0} takes part in more than one transaction of the same step")]
    OverlappingTransactions(usize),
    #[error(transparent)]
    Param(#[from] ParamError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum LambdaAssignment {
    /// `lambda_j ~ U(0, 1)` i.i.d., redrawn per run.
    #[default]
    Uniform,
    Fixed { values: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum KineticModel {
    NoSaving,
    MinInvestment,
    GlobalSaving {
        lambda: f64,
    },
    IndividualSaving {
        #[serde(default)]
        lambdas: LambdaAssignment,
    },
}

impl KineticModel {
    pub fn name(&self) -> &'static str {
        match self {
            KineticModel::NoSaving => "no_saving",
            KineticModel::MinInvestment => "min_investment",
            KineticModel::GlobalSaving { .. } => "global_saving",
            KineticModel::IndividualSaving { .. } => "individual_saving",
        }
    }

    pub fn validate(&self, agents: usize) -> Result<(), KineticError> {
        match self {
            KineticModel::GlobalSaving { lambda } => check_lambda(0, *lambda),
            KineticModel::IndividualSaving {
                lambdas: LambdaAssignment::Fixed { values },
            } => {
                if values.len() != agents {
                    return Err(KineticError::InvalidConfig(format!(
                        "{} saving propensities for {agents} agents",
                        values.len()
                    )));
                }
                values
                    .iter()
                    .enumerate()
                    .try_for_each(|(i, &l)| check_lambda(i, l))
            }
            _ => Ok(()),
        }
    }
}

fn check_lambda(agent: usize, value: f64) -> Result<(), KineticError> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(KineticError::LambdaOutOfRange { agent, value })
    }
}

/// Splits `s` into `(x, s - x)` so that the two parts add back to `s`
/// exactly in floating point. The larger part is rounded, the smaller one is
/// its exact complement.
fn exact_split(x: f64, s: f64) -> (f64, f64) {
    let x = x.clamp(0.0, s);
    if x >= 0.5 * s {
        (x, s - x)
    } else {
        let y = s - x;
        (s - y, y)
    }
}

/// Post-transaction wealth of agents `j` and `k`. `lambda_j`/`lambda_k` are
/// only read by the individual-saving rule.
pub fn pair_step(
    model: &KineticModel,
    xj: f64,
    xk: f64,
    lambda_j: f64,
    lambda_k: f64,
    eps: f64,
) -> (f64, f64) {
    let s = xj + xk;
    let target = match model {
        KineticModel::NoSaving => eps * s,
        KineticModel::MinInvestment => xj + (2.0 * eps - 1.0) * xj.min(xk),
        KineticModel::GlobalSaving { lambda } => lambda * xj + eps * (1.0 - lambda) * s,
        KineticModel::IndividualSaving { .. } => {
            lambda_j * xj + eps * ((1.0 - lambda_j) * xj + (1.0 - lambda_k) * xk)
        }
    };
    exact_split(target, s)
}

/// One executed transaction: agent `j` gained `delta` from agent `k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transaction {
    pub j: usize,
    pub k: usize,
    pub delta: f64,
}

#[derive(Debug, Clone)]
pub struct KineticEngine {
    model: KineticModel,
    wealth: Vec<f64>,
    lambdas: Vec<f64>,
    rng: StreamRng,
    steps: u64,
}

impl KineticEngine {
    /// `lambdas` may be empty unless the model is individual saving.
    pub fn new(
        model: KineticModel,
        wealth: Vec<f64>,
        lambdas: Vec<f64>,
        rng: StreamRng,
    ) -> Result<Self, KineticError> {
        if wealth.len() < 2 {
            return Err(KineticError::InvalidConfig("need at least 2 agents".into()));
        }
        if wealth.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(KineticError::InvalidConfig("wealth must be nonnegative".into()));
        }
        if matches!(model, KineticModel::IndividualSaving { .. }) {
            if lambdas.len() != wealth.len() {
                return Err(KineticError::InvalidConfig(
                    "one saving propensity per agent required".into(),
                ));
            }
            lambdas
                .iter()
                .enumerate()
                .try_for_each(|(i, &l)| check_lambda(i, l))?;
        }
        model.validate(wealth.len())?;
        Ok(Self {
            model,
            wealth,
            lambdas,
            rng,
            steps: 0,
        })
    }

    pub fn wealth(&self) -> &[f64] {
        &self.wealth
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn total(&self) -> f64 {
        self.wealth.iter().sum()
    }

    /// Applies one transaction with a given `eps`, bypassing the random pair
    /// and fraction draws.
    pub fn transact(&mut self, j: usize, k: usize, eps: f64) -> Transaction {
        assert_ne!(j, k, "transaction needs two distinct agents");
        let (lj, lk) = if self.lambdas.is_empty() {
            (0.0, 0.0)
        } else {
            (self.lambdas[j], self.lambdas[k])
        };
        let before = self.wealth[j];
        let (xj, xk) = pair_step(&self.model, before, self.wealth[k], lj, lk, eps);
        self.wealth[j] = xj;
        self.wealth[k] = xk;
        self.steps += 1;
        Transaction {
            j,
            k,
            delta: xj - before,
        }
    }

    /// Draws a uniform distinct pair and `eps ~ U[0, 1)`.
    pub fn draw(&mut self) -> (usize, usize, f64) {
        let n = self.wealth.len();
        let j = self.rng.random_range(0..n);
        let mut k = self.rng.random_range(0..n - 1);
        if k >= j {
            k += 1;
        }
        let eps: f64 = self.rng.random();
        (j, k, eps)
    }

    pub fn step(&mut self) -> Transaction {
        let (j, k, eps) = self.draw();
        self.transact(j, k, eps)
    }

    pub fn run(&mut self, steps: u64) {
        for _ in 0..steps {
            self.step();
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticConfig {
    pub agents: usize,
    pub total_wealth: f64,
    #[serde(flatten)]
    pub model: KineticModel,
    pub steps: u64,
    pub snapshot_every: u64,
    /// Overrides the equal `total_wealth / agents` start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl KineticConfig {
    pub fn new(agents: usize, total_wealth: f64, model: KineticModel, steps: u64) -> Self {
        Self {
            agents,
            total_wealth,
            model,
            steps,
            snapshot_every: steps.max(1),
            initial: None,
        }
    }

    pub fn with_snapshot_every(mut self, every: u64) -> Self {
        self.snapshot_every = every;
        self
    }

    pub fn validate(&self) -> Result<(), KineticError> {
        if self.agents < 2 {
            return Err(KineticError::InvalidConfig(format!(
                "need at least 2 agents, got {}",
                self.agents
            )));
        }
        if !(self.total_wealth > 0.0) || !self.total_wealth.is_finite() {
            return Err(KineticError::InvalidConfig(
                "total wealth must be positive".into(),
            ));
        }
        if self.steps == 0 || self.snapshot_every == 0 {
            return Err(KineticError::InvalidConfig(
                "steps and snapshot_every must be at least 1".into(),
            ));
        }
        if let Some(initial) = &self.initial {
            if initial.len() != self.agents {
                return Err(KineticError::InvalidConfig(format!(
                    "{} initial wealths for {} agents",
                    initial.len(),
                    self.agents
                )));
            }
            let sum: f64 = initial.iter().sum();
            if (sum - self.total_wealth).abs() > 1e-9 * self.total_wealth {
                return Err(KineticError::InvalidConfig(format!(
                    "initial wealths sum to {sum}, expected {}",
                    self.total_wealth
                )));
            }
        }
        self.model.validate(self.agents)
    }

    /// Engine for one run; saving propensities drawn from the run's own
    /// substream when the assignment is random.
    pub fn engine(&self, run_seed: u64) -> Result<KineticEngine, KineticError> {
        self.validate()?;
        let wealth = self
            .initial
            .clone()
            .unwrap_or_else(|| vec![self.total_wealth / self.agents as f64; self.agents]);
        let lambdas = match &self.model {
            KineticModel::IndividualSaving { lambdas } => match lambdas {
                LambdaAssignment::Fixed { values } => values.clone(),
                LambdaAssignment::Uniform => {
                    let mut rng = seed::substream(run_seed, "kinetic:lambda");
                    (0..self.agents)
                        .map(|_| loop {
                            let l: f64 = rng.random();
                            if l > 0.0 {
                                break l;
                            }
                        })
                        .collect()
                }
            },
            _ => Vec::new(),
        };
        KineticEngine::new(
            self.model.clone(),
            wealth,
            lambdas,
            seed::substream(run_seed, "kinetic:pairs"),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: u64,
    pub wealth: Vec<f64>,
}

impl Snapshot {
    pub fn driven_out(&self) -> usize {
        self.wealth.iter().filter(|&&w| w < DRIVEN_OUT).count()
    }

    pub fn max_share(&self) -> f64 {
        let total: f64 = self.wealth.iter().sum();
        self.wealth.iter().copied().fold(0.0, f64::max) / total
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KineticRun {
    pub seed: u64,
    pub lambdas: Vec<f64>,
    /// At step 0, every `snapshot_every` steps, and at the last step.
    pub snapshots: Vec<Snapshot>,
}

impl KineticRun {
    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("at least the initial snapshot")
    }
}

pub fn run_kinetic(config: &KineticConfig, run_seed: u64) -> Result<KineticRun, KineticError> {
    let mut engine = config.engine(run_seed)?;
    let mut snapshots = vec![Snapshot {
        step: 0,
        wealth: engine.wealth().to_vec(),
    }];
    let mut done = 0;
    while done < config.steps {
        let chunk = config.snapshot_every.min(config.steps - done);
        engine.run(chunk);
        done += chunk;
        snapshots.push(Snapshot {
            step: done,
            wealth: engine.wealth().to_vec(),
        });
    }
    Ok(KineticRun {
        seed: run_seed,
        lambdas: engine.lambdas().to_vec(),
        snapshots,
    })
}

/// `runs` independent runs with seeds `master ^ index`, in index order.
pub fn run_ensemble(
    config: &KineticConfig,
    master_seed: u64,
    runs: usize,
) -> Result<Vec<KineticRun>, KineticError> {
    config.validate()?;
    (0..runs as u64)
        .into_par_iter()
        .map(|i| run_kinetic(config, seed::run_seed(master_seed, i)))
        .collect()
}

/// Macro-system view of one kinetic step.
#[derive(Debug, Clone, PartialEq)]
pub struct MacroBridge {
    /// `n` singleton categories plus an empty control mechanism at index `n`.
    pub taxonomy: TokenomicTaxonomy,
    pub f: WealthVector,
    pub beta: InteractionRateMatrix,
    pub supply: f64,
}

/// Interaction rates that reproduce a set of disjoint transactions in one
/// macro step: `beta_jk = (M/dt) dF_jk / (F_j F_k)`.
pub fn kinetic_to_macro(
    wealth: &[f64],
    transactions: &[Transaction],
    dt: f64,
) -> Result<MacroBridge, KineticError> {
    let n = wealth.len();
    let supply: f64 = wealth.iter().sum();
    let mut seen = vec![false; n];
    let mut beta = InteractionRateMatrix::zeros(n + 1);
    for tx in transactions {
        for a in [tx.j, tx.k] {
            if std::mem::replace(&mut seen[a], true) {
                return Err(KineticError::OverlappingTransactions(a));
            }
        }
        if tx.delta == 0.0 {
            continue;
        }
        let denom = wealth[tx.j] * wealth[tx.k];
        if denom == 0.0 {
            return Err(ParamError::ZeroWealthEndpoint(tx.j.min(tx.k), tx.j.max(tx.k)).into());
        }
        beta.set(tx.j, tx.k, supply / dt * tx.delta / denom);
    }
    let mut values = wealth.to_vec();
    values.push(0.0);
    Ok(MacroBridge {
        taxonomy: TokenomicTaxonomy::singletons(n),
        f: WealthVector::new(values, 0),
        beta,
        supply,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        assert_eq!(pair_step(&KineticModel::NoSaving, 4.0, 6.0, 0.0, 0.0, 0.3), (3.0, 7.0));
        assert_eq!(pair_step(&KineticModel::MinInvestment, 4.0, 6.0, 0.0, 0.0, 0.75), (6.0, 4.0));
        assert_eq!(
            pair_step(&KineticModel::GlobalSaving { lambda: 0.5 }, 4.0, 6.0, 0.0, 0.0, 0.5),
            (4.5, 5.5)
        );
        let ind = KineticModel::IndividualSaving {
            lambdas: LambdaAssignment::Uniform,
        };
        let (a, b) = pair_step(&ind, 10.0, 10.0, 0.2, 0.8, 0.5);
        assert!((a - 7.0).abs() < 1e-12 && (b - 13.0).abs() < 1e-12);
        assert_eq!(a + b, 20.0);
    }

    #[test]
    fn forced_half_split() {
        let mut e = KineticEngine::new(KineticModel::NoSaving, vec![3.0, 9.0], vec![], seed::rng(0))
            .unwrap();
        e.transact(0, 1, 0.5);
        assert_eq!(e.wealth(), &[6.0, 6.0]);
    }

    #[test]
    fn lambda_validation() {
        assert!(KineticConfig::new(10, 100.0, KineticModel::GlobalSaving { lambda: 1.0 }, 10)
            .validate()
            .is_err());
        let fixed = KineticModel::IndividualSaving {
            lambdas: LambdaAssignment::Fixed {
                values: vec![0.5, 0.0],
            },
        };
        assert!(matches!(
            KineticConfig::new(2, 1.0, fixed, 10).validate(),
            Err(KineticError::LambdaOutOfRange { agent: 1, .. })
        ));
    }

    #[test]
    fn snapshots_cover_run() {
        let cfg = KineticConfig::new(10, 100.0, KineticModel::NoSaving, 25).with_snapshot_every(10);
        let run = run_kinetic(&cfg, 3).unwrap();
        let steps: Vec<_> = run.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![0, 10, 20, 25]);
        assert_eq!(run, run_kinetic(&cfg, 3).unwrap());
    }

    #[test]
    fn bridge_single_transaction() {
        let b = kinetic_to_macro(
            &[10.0, 10.0, 10.0],
            &[Transaction {
                j: 0,
                k: 1,
                delta: 5.0,
            }],
            1.0,
        )
        .unwrap();
        assert!((b.beta.get(0, 1) - 30.0 * 5.0 / 100.0).abs() < 1e-15);
        assert_eq!(b.beta.get(1, 0), -b.beta.get(0, 1));
        assert_eq!(b.beta.get(0, 2), 0.0);
        assert_eq!(b.taxonomy.len(), 4);
        let empty = kinetic_to_macro(&[1.0, 2.0], &[], 1.0).unwrap();
        assert!(empty.beta.is_zero());
    }
}
