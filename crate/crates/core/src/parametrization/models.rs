//! Demand, price and rotation value models.
//!
//! A [`ValueModel`] is either a deterministic path (constant, table or closed
//! form), an i.i.d. distribution drawn once per step, or a stateful stochastic
//! process stepped once per step. Tables are indexed by step; closed forms are
//! evaluated at time `step * dt`.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rand_distr as rd;
use serde::{Deserialize, Serialize};

use super::ParamError;
use crate::seed::StreamRng;

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ValueModel {
    Constant {
        value: f64,
    },
    /// `values[k]` at step `k`.
    Table {
        values: Vec<f64>,
    },
    Linear {
        intercept: f64,
        slope: f64,
    },
    /// `initial * exp(rate * t)`.
    Exponential {
        initial: f64,
        rate: f64,
    },
    /// `mean + amplitude * sin(2 pi t / period + phase)`.
    Sinusoid {
        mean: f64,
        amplitude: f64,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
    /// `amount` units with probability `p`, otherwise none.
    Bernoulli {
        p: f64,
        #[serde(default = "one")]
        amount: f64,
    },
    Binomial {
        trials: u64,
        p: f64,
    },
    Poisson {
        mean: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Integers in `low..=high`.
    UniformInt {
        low: u64,
        high: u64,
    },
    Gamma {
        shape: f64,
        scale: f64,
    },
    LogNormal {
        mu: f64,
        sigma: f64,
    },
    /// Geometric Brownian motion starting at `initial`.
    Gbm {
        initial: f64,
        drift: f64,
        volatility: f64,
    },
    /// Exponential of an Ornstein-Uhlenbeck process reverting to `ln(mean)`.
    LogOu {
        initial: f64,
        mean: f64,
        reversion: f64,
        volatility: f64,
    },
    /// Poisson counts whose intensity follows a geometric Brownian motion.
    PoissonGbm {
        initial_rate: f64,
        drift: f64,
        volatility: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelClass {
    Constant,
    Path,
    Random,
    Process,
}

impl ModelClass {
    pub fn is_deterministic(self) -> bool {
        matches!(self, ModelClass::Constant | ModelClass::Path)
    }
}

fn invalid(label: &str, reason: impl Into<String>) -> ParamError {
    ParamError::InvalidModel {
        label: label.to_string(),
        reason: reason.into(),
    }
}

impl ValueModel {
    pub fn constant(value: f64) -> Self {
        ValueModel::Constant { value }
    }

    pub fn class(&self) -> ModelClass {
        use ValueModel::*;
        match self {
            Constant { .. } => ModelClass::Constant,
            Table { .. } | Linear { .. } | Exponential { .. } | Sinusoid { .. } => ModelClass::Path,
            Bernoulli { .. }
            | Binomial { .. }
            | Poisson { .. }
            | Uniform { .. }
            | UniformInt { .. }
            | Gamma { .. }
            | LogNormal { .. } => ModelClass::Random,
            Gbm { .. } | LogOu { .. } | PoissonGbm { .. } => ModelClass::Process,
        }
    }

    /// Whether every realisation is an integer. Closed-form paths are checked
    /// per step instead and report `None`.
    pub fn integer_valued(&self) -> Option<bool> {
        use ValueModel::*;
        match self {
            Constant { value } => Some(value.fract() == 0.0),
            Table { values } => Some(values.iter().all(|v| v.fract() == 0.0)),
            Linear { .. } | Exponential { .. } | Sinusoid { .. } => None,
            Bernoulli { amount, .. } => Some(amount.fract() == 0.0),
            Binomial { .. } | Poisson { .. } | UniformInt { .. } | PoissonGbm { .. } => Some(true),
            Uniform { .. } | Gamma { .. } | LogNormal { .. } | Gbm { .. } | LogOu { .. } => {
                Some(false)
            }
        }
    }

    pub fn validate(&self, label: &str) -> Result<(), ParamError> {
        use ValueModel::*;
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(invalid(label, format!("{name} must be finite")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(invalid(label, format!("{name} must be a finite value >= 0")))
            }
        };
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(invalid(label, format!("{name} must be > 0")))
            }
        };
        let probability = |v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(invalid(label, "p must lie in [0, 1]"))
            }
        };
        match *self {
            Constant { value } => nonneg("value", value),
            Table { ref values } => {
                if values.is_empty() {
                    return Err(invalid(label, "table is empty"));
                }
                values.iter().try_for_each(|&v| nonneg("table entry", v))
            }
            Linear { intercept, slope } => {
                finite("intercept", intercept)?;
                finite("slope", slope)
            }
            Exponential { initial, rate } => {
                nonneg("initial", initial)?;
                finite("rate", rate)
            }
            Sinusoid {
                mean,
                amplitude,
                period,
                phase,
            } => {
                finite("mean", mean)?;
                finite("amplitude", amplitude)?;
                positive("period", period)?;
                finite("phase", phase)
            }
            Bernoulli { p, amount } => {
                probability(p)?;
                nonneg("amount", amount)
            }
            Binomial { p, .. } => probability(p),
            Poisson { mean } => positive("mean", mean),
            Uniform { low, high } => {
                nonneg("low", low)?;
                finite("high", high)?;
                if high < low {
                    return Err(invalid(label, "high < low"));
                }
                Ok(())
            }
            UniformInt { low, high } => {
                if high < low {
                    return Err(invalid(label, "high < low"));
                }
                Ok(())
            }
            Gamma { shape, scale } => {
                positive("shape", shape)?;
                positive("scale", scale)
            }
            LogNormal { mu, sigma } => {
                finite("mu", mu)?;
                nonneg("sigma", sigma)
            }
            Gbm {
                initial,
                drift,
                volatility,
            } => {
                positive("initial", initial)?;
                finite("drift", drift)?;
                nonneg("volatility", volatility)
            }
            LogOu {
                initial,
                mean,
                reversion,
                volatility,
            } => {
                positive("initial", initial)?;
                positive("mean", mean)?;
                nonneg("reversion", reversion)?;
                nonneg("volatility", volatility)
            }
            PoissonGbm {
                initial_rate,
                drift,
                volatility,
            } => {
                positive("initial_rate", initial_rate)?;
                finite("drift", drift)?;
                nonneg("volatility", volatility)
            }
        }
    }

    /// Value of a deterministic model at `step`; `None` for random models.
    pub fn deterministic_value(&self, step: usize, dt: f64) -> Option<Result<f64, ParamError>> {
        use ValueModel::*;
        let t = step as f64 * dt;
        let v = match *self {
            Constant { value } => value,
            Table { ref values } => {
                return Some(values.get(step).copied().ok_or(ParamError::ProcessExhausted {
                    step,
                    len: values.len(),
                }))
            }
            Linear { intercept, slope } => intercept + slope * t,
            Exponential { initial, rate } => initial * (rate * t).exp(),
            Sinusoid {
                mean,
                amplitude,
                period,
                phase,
            } => mean + amplitude * (std::f64::consts::TAU * t / period + phase).sin(),
            _ => return None,
        };
        Some(Ok(v))
    }

    /// Per-step expectation. Deterministic models return their value at `step`;
    /// stochastic processes have no static expectation.
    pub fn expected_value(&self, step: usize, dt: f64) -> Option<Result<f64, ParamError>> {
        use ValueModel::*;
        if let Some(v) = self.deterministic_value(step, dt) {
            return Some(v);
        }
        let mean = match *self {
            Bernoulli { p, amount } => p * amount,
            Binomial { trials, p } => trials as f64 * p,
            Poisson { mean } => mean,
            Uniform { low, high } => 0.5 * (low + high),
            UniformInt { low, high } => 0.5 * (low as f64 + high as f64),
            Gamma { shape, scale } => shape * scale,
            LogNormal { mu, sigma } => (mu + 0.5 * sigma * sigma).exp(),
            _ => return None,
        };
        Some(Ok(mean))
    }

    /// Number of steps a finite table covers.
    pub fn table_len(&self) -> Option<usize> {
        match self {
            ValueModel::Table { values } => Some(values.len()),
            _ => None,
        }
    }

    fn sample_random(&self, rng: &mut StreamRng) -> f64 {
        use ValueModel::*;
        match *self {
            Bernoulli { p, amount } => {
                if rng.random_bool(p) {
                    amount
                } else {
                    0.0
                }
            }
            Binomial { trials, p } => rd::Binomial::new(trials, p)
                .expect("validated binomial")
                .sample(rng) as f64,
            Poisson { mean } => rd::Poisson::new(mean).expect("validated poisson").sample(rng),
            Uniform { low, high } => {
                if high > low {
                    rng.random_range(low..high)
                } else {
                    low
                }
            }
            UniformInt { low, high } => rng.random_range(low..=high) as f64,
            Gamma { shape, scale } => rd::Gamma::new(shape, scale)
                .expect("validated gamma")
                .sample(rng),
            LogNormal { mu, sigma } => rd::LogNormal::new(mu, sigma)
                .expect("validated log-normal")
                .sample(rng),
            _ => unreachable!("not an i.i.d. model"),
        }
    }
}

/// Per-run sampling state of one value model.
#[derive(Debug, Clone)]
pub struct ValueStream {
    model: ValueModel,
    rng: StreamRng,
    dt: f64,
    /// Latent level of a process and the step it belongs to.
    level: Option<(usize, f64)>,
    cached: Option<(usize, f64)>,
}

impl ValueStream {
    pub fn new(model: ValueModel, rng: StreamRng, dt: f64) -> Self {
        Self {
            model,
            rng,
            dt,
            level: None,
            cached: None,
        }
    }

    pub fn model(&self) -> &ValueModel {
        &self.model
    }

    /// Value at `step`. Random models draw once per step; repeated calls for
    /// the same step return the cached draw. Steps must not go backwards for
    /// processes.
    pub fn value(&mut self, step: usize) -> Result<f64, ParamError> {
        if let Some((s, v)) = self.cached {
            if s == step {
                return Ok(v);
            }
        }
        let v = match self.model.class() {
            ModelClass::Constant | ModelClass::Path => self
                .model
                .deterministic_value(step, self.dt)
                .expect("deterministic")?,
            ModelClass::Random => self.model.sample_random(&mut self.rng),
            ModelClass::Process => self.advance_process(step)?,
        };
        self.cached = Some((step, v));
        Ok(v)
    }

    fn advance_process(&mut self, step: usize) -> Result<f64, ParamError> {
        use ValueModel::*;
        let dt = self.dt;
        let (start_step, mut level) = match self.level {
            Some(l) => l,
            None => {
                let initial = match self.model {
                    Gbm { initial, .. } | LogOu { initial, .. } => initial,
                    PoissonGbm { initial_rate, .. } => initial_rate,
                    _ => unreachable!(),
                };
                (0, initial)
            }
        };
        if step < start_step {
            return Err(ParamError::InvalidArgument(format!(
                "process stepped backwards from {start_step} to {step}"
            )));
        }
        for _ in start_step..step {
            let z: f64 = self.rng.sample(StandardNormal);
            level = match self.model {
                Gbm {
                    drift, volatility, ..
                }
                | PoissonGbm {
                    drift, volatility, ..
                } => {
                    level
                        * ((drift - 0.5 * volatility * volatility) * dt
                            + volatility * dt.sqrt() * z)
                            .exp()
                }
                LogOu {
                    mean,
                    reversion,
                    volatility,
                    ..
                } => {
                    let y = level.ln();
                    (y + reversion * (mean.ln() - y) * dt + volatility * dt.sqrt() * z).exp()
                }
                _ => unreachable!(),
            };
        }
        self.level = Some((step, level));
        Ok(match self.model {
            PoissonGbm { .. } => {
                if level > 0.0 {
                    rd::Poisson::new(level)
                        .map(|p| p.sample(&mut self.rng))
                        .unwrap_or(0.0)
                } else {
                    0.0
                }
            }
            _ => level,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    #[test]
    fn closed_forms_evaluate_at_time() {
        let lin = ValueModel::Linear {
            intercept: 0.0,
            slope: 1.0,
        };
        assert_eq!(lin.deterministic_value(2, 1.0).unwrap().unwrap(), 2.0);
        assert_eq!(lin.deterministic_value(2, 0.5).unwrap().unwrap(), 1.0);
        let table = ValueModel::Table {
            values: vec![1.0, 2.0],
        };
        assert_eq!(table.deterministic_value(1, 9.0).unwrap().unwrap(), 2.0);
        assert!(matches!(
            table.deterministic_value(2, 1.0).unwrap(),
            Err(ParamError::ProcessExhausted { step: 2, len: 2 })
        ));
    }

    #[test]
    fn expectations() {
        let e = |m: ValueModel| m.expected_value(0, 1.0).unwrap().unwrap();
        assert_eq!(e(ValueModel::Bernoulli { p: 0.5, amount: 1.0 }), 0.5);
        assert!((e(ValueModel::Binomial { trials: 10, p: 0.3 }) - 3.0).abs() < 1e-15);
        assert_eq!(e(ValueModel::UniformInt { low: 1, high: 3 }), 2.0);
        assert!(ValueModel::Gbm {
            initial: 1.0,
            drift: 0.0,
            volatility: 0.1
        }
        .expected_value(0, 1.0)
        .is_none());
    }

    #[test]
    fn granularity_classification() {
        assert_eq!(
            ValueModel::Binomial { trials: 3, p: 0.2 }.integer_valued(),
            Some(true)
        );
        assert_eq!(
            ValueModel::Gamma {
                shape: 1.0,
                scale: 1.0
            }
            .integer_valued(),
            Some(false)
        );
        assert_eq!(
            ValueModel::Bernoulli { p: 0.5, amount: 1.5 }.integer_valued(),
            Some(false)
        );
    }

    #[test]
    fn degenerate_bernoulli_always_fires() {
        let mut s = ValueStream::new(
            ValueModel::Bernoulli { p: 1.0, amount: 1.0 },
            seed::rng(3),
            1.0,
        );
        let mean: f64 = (0..10_000).map(|t| s.value(t).unwrap()).sum::<f64>() / 1e4;
        assert_eq!(mean, 1.0);
    }

    #[test]
    fn random_draws_are_cached_per_step() {
        let mut s = ValueStream::new(ValueModel::Poisson { mean: 4.0 }, seed::rng(1), 1.0);
        let a = s.value(5).unwrap();
        assert_eq!(a, s.value(5).unwrap());
    }

    #[test]
    fn gbm_process_is_positive_and_starts_at_initial() {
        let mut s = ValueStream::new(
            ValueModel::Gbm {
                initial: 2.0,
                drift: 0.01,
                volatility: 0.3,
            },
            seed::rng(9),
            1.0,
        );
        assert_eq!(s.value(0).unwrap(), 2.0);
        for t in 1..500 {
            assert!(s.value(t).unwrap() > 0.0);
        }
        assert!(s.value(3).is_err());
    }

    #[test]
    fn validation_rejects_bad_parameters() {
        assert!(ValueModel::Bernoulli { p: 1.5, amount: 1.0 }
            .validate("x")
            .is_err());
        assert!(ValueModel::Table { values: vec![] }.validate("x").is_err());
        assert!(ValueModel::Constant { value: -1.0 }.validate("x").is_err());
        assert!(ValueModel::Uniform {
            low: 2.0,
            high: 1.0
        }
        .validate("x")
        .is_err());
    }
}
