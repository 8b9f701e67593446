//! Interaction and rotation rates under the four parametrization modes.
//!
//! Static modes compute the rate matrices once from the initial state and hold
//! them; dynamic modes rebuild them every step from demand and price models,
//! either deterministic paths or random draws.

mod matrix;
mod models;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use matrix::{gamma_static, InteractionRateMatrix, RotationRateMatrix};
pub use models::{ModelClass, ValueModel, ValueStream};

use crate::seed;
use crate::taxonomy::{circulating_supply, Granularity, TokenomicTaxonomy, WealthVector};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ParamError {
    #[error("pair ({0}, {1}) has a declared interaction but an endpoint holds no wealth")]
    ZeroWealthEndpoint(usize, usize),
    #[error("`{0}` has no finite per-step expectation")]
    UnboundedExpectation(String),
    #[error("price model of `{0}` is not static")]
    NonStaticPrice(String),
    #[error("rotation rate {from} -> {to} is negative ({rate})")]
    NegativeRotationRate { from: usize, to: usize, rate: f64 },
    #[error("finite path of length {len} exhausted at step {step}")]
    ProcessExhausted { step: usize, len: usize },
    #[error("`{label}` produced infeasible value {value} at step {step}: {reason}")]
    InfeasibleSample {
        label: String,
        step: usize,
        value: f64,
        reason: &'static str,
    },
    #[error("interaction `{interaction}` moves {flow} at step {step} but its endpoints hold {available}")]
    FlowExceedsWealth {
        interaction: String,
        step: usize,
        flow: f64,
        available: f64,
    },
    #[error("`{field}` is not allowed in {mode:?} mode: {reason}")]
    ModeMismatch {
        field: String,
        mode: ParametrizationMode,
        reason: &'static str,
    },
    #[error("`{label}`: {reason}")]
    InvalidModel { label: String, reason: String },
    #[error("unknown interaction `{0}`")]
    UnknownInteraction(String),
    #[error("interaction `{0}` has no demand/price specification")]
    MissingInteractionSpec(String),
    #[error("rotation {from} -> {to} is not a declared channel")]
    UnknownRotation { from: String, to: String },
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("reactive rule produced negative multiplier {0}")]
    InvalidReactiveOutput(f64),
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParametrizationMode {
    StaticDeterministic,
    StaticProbabilistic,
    DynamicDeterministic,
    DynamicProbabilistic,
}

impl ParametrizationMode {
    pub fn is_static(self) -> bool {
        matches!(
            self,
            ParametrizationMode::StaticDeterministic | ParametrizationMode::StaticProbabilistic
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DynamicKind {
    #[default]
    Proactive,
    Reactive,
}

/// Realised wealth moved by one interaction type during one step, signed
/// positive when it flows into the lower-indexed endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionFlow {
    pub interaction: String,
    pub step: usize,
    pub value: f64,
}

/// Net flow per unordered category pair `(low, high)`, positive into `low`.
pub type PairFlows = BTreeMap<(usize, usize), f64>;

/// Sums interaction flows per category pair. Every declared interaction
/// contributes its pair, even with zero flow.
pub fn aggregate_flows(
    taxonomy: &TokenomicTaxonomy,
    flows: &[InteractionFlow],
) -> Result<PairFlows, ParamError> {
    let mut totals: PairFlows = taxonomy
        .interactions()
        .iter()
        .map(|i| (i.pair(), 0.0))
        .collect();
    for flow in flows {
        let it = taxonomy
            .interaction(&flow.interaction)
            .ok_or_else(|| ParamError::UnknownInteraction(flow.interaction.clone()))?;
        *totals.entry(it.pair()).or_insert(0.0) += flow.value;
    }
    Ok(totals)
}

fn check_scale(supply: f64, dt: f64) -> Result<(), ParamError> {
    if !(supply > 0.0 && supply.is_finite()) {
        return Err(ParamError::InvalidArgument(format!(
            "supply must be positive, got {supply}"
        )));
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(ParamError::InvalidArgument(format!(
            "dt must be positive, got {dt}"
        )));
    }
    Ok(())
}

/// Interaction rates from net pair flows:
/// `beta[a][b] = (M / dt) * flow / (F[a] * F[b])`.
pub fn beta_static_deterministic(
    flows: &PairFlows,
    f: &WealthVector,
    supply: f64,
    dt: f64,
) -> Result<InteractionRateMatrix, ParamError> {
    check_scale(supply, dt)?;
    let n = f.len();
    let mut beta = InteractionRateMatrix::zeros(n);
    for (&(a, b), &flow) in flows {
        if a >= n || b >= n || a == b {
            return Err(ParamError::InvalidArgument(format!(
                "pair ({a}, {b}) out of range for {n} categories"
            )));
        }
        let (lo, hi, flow) = if a < b { (a, b, flow) } else { (b, a, -flow) };
        let denom = f[lo] * f[hi];
        if denom == 0.0 {
            return Err(ParamError::ZeroWealthEndpoint(lo, hi));
        }
        beta.set(lo, hi, supply / dt * flow / denom);
    }
    Ok(beta)
}

/// Interaction rates from expected demand times (static) price.
pub fn beta_static_probabilistic(
    taxonomy: &TokenomicTaxonomy,
    specs: &BTreeMap<String, InteractionSpec>,
    f: &WealthVector,
    supply: f64,
    dt: f64,
) -> Result<InteractionRateMatrix, ParamError> {
    let mut flows = Vec::with_capacity(taxonomy.interactions().len());
    for it in taxonomy.interactions() {
        let spec = specs
            .get(&it.id)
            .ok_or_else(|| ParamError::MissingInteractionSpec(it.id.clone()))?;
        let demand = spec
            .demand
            .expected_value(0, dt)
            .ok_or_else(|| ParamError::UnboundedExpectation(it.id.clone()))??;
        if !spec.price.class().is_deterministic() {
            return Err(ParamError::NonStaticPrice(it.id.clone()));
        }
        let price = spec.price.deterministic_value(0, dt).expect("deterministic")?;
        flows.push(InteractionFlow {
            interaction: it.id.clone(),
            step: 0,
            value: it.orientation() * demand * price,
        });
    }
    beta_static_deterministic(&aggregate_flows(taxonomy, &flows)?, f, supply, dt)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionSpec {
    pub demand: ValueModel,
    pub price: ValueModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    pub from: String,
    pub to: String,
    pub rate: ValueModel,
}

/// Rate matrices given directly, e.g. from an inverse solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplicitRates {
    pub beta: InteractionRateMatrix,
    pub gamma: RotationRateMatrix,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Statistic {
    /// Circulating supply over maximum supply.
    CirculatingShare,
    /// Filled in by index after resolution; see [`StatisticSpec`].
    CategoryShare { index: usize },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum StatisticSpec {
    CirculatingShare,
    CategoryShare { category: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Response {
    Affine { intercept: f64, slope: f64 },
    /// Piecewise-linear `[statistic, multiplier]` points, clamped at the ends.
    Table { points: Vec<[f64; 2]> },
}

impl Response {
    pub fn evaluate(&self, x: f64) -> f64 {
        match self {
            Response::Affine { intercept, slope } => intercept + slope * x,
            Response::Table { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if x <= first[0] {
                    return first[1];
                }
                if x >= last[0] {
                    return last[1];
                }
                let k = points.partition_point(|p| p[0] <= x);
                let (a, b) = (points[k - 1], points[k]);
                a[1] + (b[1] - a[1]) * (x - a[0]) / (b[0] - a[0])
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RuleTarget {
    Interactions,
    Rotations,
    #[default]
    Both,
}

/// Scales flows and/or rotation rates by a response to an aggregate statistic
/// of the current wealth vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactiveRule {
    pub statistic: StatisticSpec,
    pub response: Response,
    #[serde(default)]
    pub target: RuleTarget,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateSchedule {
    pub mode: ParametrizationMode,
    #[serde(default)]
    pub dynamic_kind: DynamicKind,
    #[serde(default)]
    pub interactions: BTreeMap<String, InteractionSpec>,
    #[serde(default)]
    pub rotations: Vec<RotationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explicit: Option<ExplicitRates>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reactive: Vec<ReactiveRule>,
}

impl RateSchedule {
    pub fn new(mode: ParametrizationMode) -> Self {
        Self {
            mode,
            dynamic_kind: DynamicKind::Proactive,
            interactions: BTreeMap::new(),
            rotations: Vec::new(),
            explicit: None,
            reactive: Vec::new(),
        }
    }

    /// Static schedule holding the given matrices.
    pub fn explicit(beta: InteractionRateMatrix, gamma: RotationRateMatrix) -> Self {
        Self {
            explicit: Some(ExplicitRates { beta, gamma }),
            ..Self::new(ParametrizationMode::StaticDeterministic)
        }
    }

    pub fn with_interaction(mut self, id: &str, demand: ValueModel, price: ValueModel) -> Self {
        self.interactions
            .insert(id.to_string(), InteractionSpec { demand, price });
        self
    }

    pub fn with_rotation(mut self, from: &str, to: &str, rate: ValueModel) -> Self {
        self.rotations.push(RotationSpec {
            from: from.into(),
            to: to.into(),
            rate,
        });
        self
    }

    /// Structural validation against a taxonomy and horizon.
    pub fn validate(&self, taxonomy: &TokenomicTaxonomy, horizon: usize) -> Result<(), ParamError> {
        let mode = self.mode;
        let mismatch = |field: String, reason| ParamError::ModeMismatch {
            field,
            mode,
            reason,
        };
        if let Some(explicit) = &self.explicit {
            if mode != ParametrizationMode::StaticDeterministic {
                return Err(mismatch(
                    "explicit".into(),
                    "explicit matrices are static deterministic",
                ));
            }
            let n = taxonomy.len();
            if explicit.beta.dim() != n || explicit.gamma.dim() != n {
                return Err(ParamError::InvalidMatrix(format!(
                    "explicit matrices must be {n}x{n}"
                )));
            }
            if !self.interactions.is_empty() || !self.rotations.is_empty() {
                return Err(mismatch(
                    "explicit".into(),
                    "explicit matrices exclude demand/price and rotation models",
                ));
            }
        } else {
            for id in self.interactions.keys() {
                if taxonomy.interaction(id).is_none() {
                    return Err(ParamError::UnknownInteraction(id.clone()));
                }
            }
            for it in taxonomy.interactions() {
                let spec = self
                    .interactions
                    .get(&it.id)
                    .ok_or_else(|| ParamError::MissingInteractionSpec(it.id.clone()))?;
                let demand_label = format!("rates.interactions.{}.demand", it.id);
                let price_label = format!("rates.interactions.{}.price", it.id);
                spec.demand.validate(&demand_label)?;
                spec.price.validate(&price_label)?;
                if it.granularity == Granularity::Integer
                    && spec.demand.integer_valued() == Some(false)
                {
                    return Err(ParamError::InvalidModel {
                        label: demand_label,
                        reason: "continuous demand for an integer-granularity interaction".into(),
                    });
                }
                check_class(mode, &demand_label, spec.demand.class(), Role::Demand)?;
                check_class(mode, &price_label, spec.price.class(), Role::Price)?;
                check_horizon(&spec.demand, &demand_label, mode, horizon)?;
                check_horizon(&spec.price, &price_label, mode, horizon)?;
            }
            for r in &self.rotations {
                let from = taxonomy.index_of(&r.from);
                let to = taxonomy.index_of(&r.to);
                let declared = match (from, to) {
                    (Some(f), Some(t)) => taxonomy.rotations().contains(&(f, t)),
                    _ => false,
                };
                if !declared {
                    return Err(ParamError::UnknownRotation {
                        from: r.from.clone(),
                        to: r.to.clone(),
                    });
                }
                let label = format!("rates.rotations.{}->{}", r.from, r.to);
                r.rate.validate(&label)?;
                check_class(mode, &label, r.rate.class(), Role::Rotation)?;
                check_horizon(&r.rate, &label, mode, horizon)?;
            }
        }
        if !self.reactive.is_empty() {
            if mode.is_static() || self.dynamic_kind != DynamicKind::Reactive {
                return Err(mismatch(
                    "reactive".into(),
                    "reactive rules need a dynamic mode with dynamic_kind = reactive",
                ));
            }
            for (k, rule) in self.reactive.iter().enumerate() {
                if let StatisticSpec::CategoryShare { category } = &rule.statistic {
                    if taxonomy.index_of(category).is_none() {
                        return Err(ParamError::InvalidModel {
                            label: format!("rates.reactive[{k}]"),
                            reason: format!("unknown category `{category}`"),
                        });
                    }
                }
                if let Response::Table { points } = &rule.response {
                    let sorted = points.windows(2).all(|w| w[0][0] < w[1][0]);
                    if points.is_empty() || !sorted {
                        return Err(ParamError::InvalidModel {
                            label: format!("rates.reactive[{k}]"),
                            reason: "table needs strictly increasing statistic points".into(),
                        });
                    }
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy)]
enum Role {
    Demand,
    Price,
    Rotation,
}

fn check_class(
    mode: ParametrizationMode,
    label: &str,
    class: ModelClass,
    role: Role,
) -> Result<(), ParamError> {
    use ParametrizationMode::*;
    let err = |reason| {
        Err(ParamError::ModeMismatch {
            field: label.to_string(),
            mode,
            reason,
        })
    };
    match (mode, role, class) {
        (StaticDeterministic | DynamicDeterministic, _, ModelClass::Random | ModelClass::Process) => {
            err("deterministic modes need constant or path models")
        }
        (StaticProbabilistic, Role::Demand | Role::Rotation, ModelClass::Process) => {
            Err(ParamError::UnboundedExpectation(label.to_string()))
        }
        (StaticProbabilistic, Role::Price, ModelClass::Random | ModelClass::Process) => {
            Err(ParamError::NonStaticPrice(label.to_string()))
        }
        _ => Ok(()),
    }
}

fn check_horizon(
    model: &ValueModel,
    _label: &str,
    mode: ParametrizationMode,
    horizon: usize,
) -> Result<(), ParamError> {
    if let Some(len) = model.table_len() {
        // Rates for the step t -> t+1 are read at t, so steps 0..horizon-1 are needed.
        let needed = if mode.is_static() { 1 } else { horizon };
        if len < needed {
            return Err(ParamError::ProcessExhausted { step: len, len });
        }
    }
    Ok(())
}

/// Rates in force for one step plus the flows they encode.
#[derive(Debug, Clone, PartialEq)]
pub struct RateSample {
    pub beta: InteractionRateMatrix,
    pub gamma: RotationRateMatrix,
    pub flows: Vec<InteractionFlow>,
}

#[derive(Debug, Clone)]
struct ResolvedRule {
    statistic: Statistic,
    response: Response,
    target: RuleTarget,
}

/// Per-run state of a [`RateSchedule`]: one random substream per interaction
/// demand, price and rotation, plus the frozen matrices of static modes.
#[derive(Debug, Clone)]
pub struct RateSampler {
    taxonomy: TokenomicTaxonomy,
    mode: ParametrizationMode,
    dt: f64,
    demand: Vec<ValueStream>,
    price: Vec<ValueStream>,
    rotation: Vec<(usize, usize, ValueStream)>,
    rules: Vec<ResolvedRule>,
    frozen: Option<RateSample>,
}

impl RateSampler {
    /// Prepares sampling for one run. Static modes evaluate their matrices here
    /// from the initial wealth `initial` and supply `supply`.
    pub fn new(
        schedule: &RateSchedule,
        taxonomy: &TokenomicTaxonomy,
        dt: f64,
        run_seed: u64,
        initial: &WealthVector,
        supply: f64,
    ) -> Result<Self, ParamError> {
        check_scale(supply, dt)?;
        let n = taxonomy.len();
        if let Some(explicit) = &schedule.explicit {
            return Ok(Self {
                taxonomy: taxonomy.clone(),
                mode: schedule.mode,
                dt,
                demand: Vec::new(),
                price: Vec::new(),
                rotation: Vec::new(),
                rules: Vec::new(),
                frozen: Some(RateSample {
                    beta: explicit.beta.clone(),
                    gamma: explicit.gamma.clone(),
                    flows: Vec::new(),
                }),
            });
        }
        let mut demand = Vec::new();
        let mut price = Vec::new();
        for it in taxonomy.interactions() {
            let spec = schedule
                .interactions
                .get(&it.id)
                .ok_or_else(|| ParamError::MissingInteractionSpec(it.id.clone()))?;
            demand.push(ValueStream::new(
                spec.demand.clone(),
                seed::substream(run_seed, &format!("demand:{}", it.id)),
                dt,
            ));
            price.push(ValueStream::new(
                spec.price.clone(),
                seed::substream(run_seed, &format!("price:{}", it.id)),
                dt,
            ));
        }
        let mut rotation = Vec::new();
        for r in &schedule.rotations {
            let (from, to) = match (taxonomy.index_of(&r.from), taxonomy.index_of(&r.to)) {
                (Some(f), Some(t)) => (f, t),
                _ => {
                    return Err(ParamError::UnknownRotation {
                        from: r.from.clone(),
                        to: r.to.clone(),
                    })
                }
            };
            rotation.push((
                from,
                to,
                ValueStream::new(
                    r.rate.clone(),
                    seed::substream(run_seed, &format!("rotation:{}->{}", r.from, r.to)),
                    dt,
                ),
            ));
        }
        let rules = schedule
            .reactive
            .iter()
            .map(|rule| {
                let statistic = match &rule.statistic {
                    StatisticSpec::CirculatingShare => Statistic::CirculatingShare,
                    StatisticSpec::CategoryShare { category } => Statistic::CategoryShare {
                        index: taxonomy.index_of(category).ok_or_else(|| {
                            ParamError::InvalidArgument(format!("unknown category `{category}`"))
                        })?,
                    },
                };
                Ok(ResolvedRule {
                    statistic,
                    response: rule.response.clone(),
                    target: rule.target,
                })
            })
            .collect::<Result<Vec<_>, ParamError>>()?;

        let mut sampler = Self {
            taxonomy: taxonomy.clone(),
            mode: schedule.mode,
            dt,
            demand,
            price,
            rotation,
            rules,
            frozen: None,
        };
        if initial.len() != n {
            return Err(ParamError::InvalidArgument(format!(
                "initial wealth has {} entries, expected {n}",
                initial.len()
            )));
        }
        match schedule.mode {
            ParametrizationMode::StaticDeterministic => {
                sampler.frozen = Some(sampler.dynamic_sample(0, initial, supply)?);
            }
            ParametrizationMode::StaticProbabilistic => {
                sampler.frozen = Some(sampler.expected_sample(initial, supply)?);
            }
            _ => {}
        }
        Ok(sampler)
    }

    pub fn mode(&self) -> ParametrizationMode {
        self.mode
    }

    pub fn dim(&self) -> usize {
        self.taxonomy.len()
    }

    /// Rates for the step `t -> t + 1` given the state at `t`.
    pub fn materialize(
        &mut self,
        t: usize,
        f: &WealthVector,
        supply: f64,
    ) -> Result<RateSample, ParamError> {
        if let Some(frozen) = &self.frozen {
            return Ok(frozen.clone());
        }
        self.dynamic_sample(t, f, supply)
    }

    fn multipliers(&self, f: &WealthVector, supply: f64) -> Result<(f64, f64), ParamError> {
        let mut interactions = 1.0;
        let mut rotations = 1.0;
        for rule in &self.rules {
            let x = match rule.statistic {
                Statistic::CirculatingShare => circulating_supply(f, &self.taxonomy, supply) / supply,
                Statistic::CategoryShare { index } => f[index] / supply,
            };
            let m = rule.response.evaluate(x);
            if !(m >= 0.0) || !m.is_finite() {
                return Err(ParamError::InvalidReactiveOutput(m));
            }
            if matches!(rule.target, RuleTarget::Interactions | RuleTarget::Both) {
                interactions *= m;
            }
            if matches!(rule.target, RuleTarget::Rotations | RuleTarget::Both) {
                rotations *= m;
            }
        }
        Ok((interactions, rotations))
    }

    fn dynamic_sample(
        &mut self,
        t: usize,
        f: &WealthVector,
        supply: f64,
    ) -> Result<RateSample, ParamError> {
        let (flow_scale, rotation_scale) = self.multipliers(f, supply)?;
        let mut flows = Vec::with_capacity(self.demand.len());
        for (k, it) in self.taxonomy.interactions().iter().enumerate() {
            let d = self.demand[k].value(t)?;
            let p = self.price[k].value(t)?;
            let label = &it.id;
            if !(d >= 0.0) || !d.is_finite() {
                return Err(infeasible(label, t, d, "negative demand"));
            }
            if it.granularity == Granularity::Integer && d.fract() != 0.0 {
                return Err(infeasible(label, t, d, "fractional demand for an integer good"));
            }
            if !(p >= 0.0) || !p.is_finite() {
                return Err(infeasible(label, t, p, "negative price"));
            }
            let value = it.orientation() * d * p * flow_scale;
            let available = f[it.receiver] + f[it.payer];
            if value.abs() > available {
                return Err(ParamError::FlowExceedsWealth {
                    interaction: label.clone(),
                    step: t,
                    flow: value.abs(),
                    available,
                });
            }
            flows.push(InteractionFlow {
                interaction: label.clone(),
                step: t,
                value,
            });
        }
        let beta = self.beta_from_flows(&flows, f, supply)?;
        let mut triples = Vec::with_capacity(self.rotation.len());
        for (from, to, stream) in &mut self.rotation {
            let rate = stream.value(t)? * rotation_scale;
            triples.push((*from, *to, rate));
        }
        let gamma = RotationRateMatrix::from_rates(self.taxonomy.len(), triples)?;
        Ok(RateSample { beta, gamma, flows })
    }

    fn expected_sample(&mut self, f: &WealthVector, supply: f64) -> Result<RateSample, ParamError> {
        let mut flows = Vec::with_capacity(self.demand.len());
        for (k, it) in self.taxonomy.interactions().iter().enumerate() {
            let d = self.demand[k]
                .model()
                .expected_value(0, self.dt)
                .ok_or_else(|| ParamError::UnboundedExpectation(it.id.clone()))??;
            let price_model = self.price[k].model();
            if !price_model.class().is_deterministic() {
                return Err(ParamError::NonStaticPrice(it.id.clone()));
            }
            let p = price_model.deterministic_value(0, self.dt).expect("deterministic")?;
            flows.push(InteractionFlow {
                interaction: it.id.clone(),
                step: 0,
                value: it.orientation() * d * p,
            });
        }
        let beta = self.beta_from_flows(&flows, f, supply)?;
        let mut triples = Vec::new();
        for (from, to, stream) in &self.rotation {
            let rate = stream
                .model()
                .expected_value(0, self.dt)
                .ok_or_else(|| ParamError::UnboundedExpectation(format!("rotation {from}->{to}")))??;
            triples.push((*from, *to, rate));
        }
        let gamma = RotationRateMatrix::from_rates(self.taxonomy.len(), triples)?;
        Ok(RateSample { beta, gamma, flows })
    }

    fn beta_from_flows(
        &self,
        flows: &[InteractionFlow],
        f: &WealthVector,
        supply: f64,
    ) -> Result<InteractionRateMatrix, ParamError> {
        let mut totals = aggregate_flows(&self.taxonomy, flows)?;
        // A pair whose flows are all zero imposes nothing, even at zero wealth.
        totals.retain(|&(a, b), v| *v != 0.0 || f[a] * f[b] != 0.0);
        beta_static_deterministic(&totals, f, supply, self.dt)
    }
}

fn infeasible(label: &str, step: usize, value: f64, reason: &'static str) -> ParamError {
    ParamError::InfeasibleSample {
        label: label.to_string(),
        step,
        value,
        reason,
    }
}

/// Rates in force for step `t -> t + 1`. See [`RateSampler::materialize`].
pub fn materialize_rates(
    sampler: &mut RateSampler,
    t: usize,
    f: &WealthVector,
    supply: f64,
) -> Result<RateSample, ParamError> {
    sampler.materialize(t, f, supply)
}
