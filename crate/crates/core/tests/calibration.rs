//! Sampled demand averages against their expectations.

mod common;

use common::wv;
use detect_core::parametrization::{ParametrizationMode, RateSampler, RateSchedule, ValueModel};
use detect_core::taxonomy::{build_taxonomy, AgentCategory, Granularity, InteractionType};

fn mean_flow(demand: ValueModel, price: f64, steps: usize, seed: u64) -> (f64, f64) {
    let t = build_taxonomy(
        vec![AgentCategory::control_mechanism("cm"), AgentCategory::normal("shop"), AgentCategory::normal("buyer")],
        vec![InteractionType::new("sale", "shop", "buyer", Granularity::Integer)],
        vec![],
    )
    .unwrap();
    let s = RateSchedule::new(ParametrizationMode::DynamicProbabilistic)
        .with_interaction("sale", demand, ValueModel::constant(price));
    s.validate(&t, steps).unwrap();
    let f = wv(&[100_000.0, 100_000.0, 100_000.0]);
    let m = f.total();
    let mut sampler = RateSampler::new(&s, &t, 1.0, seed, &f, m).unwrap();
    let flows: Vec<f64> = (0..steps)
        .map(|k| {
            let r = sampler.materialize(k, &f, m).unwrap();
            r.flows.iter().map(|x| x.value.abs()).sum()
        })
        .collect();
    let n = steps as f64;
    let mean = flows.iter().sum::<f64>() / n;
    let var = flows.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn bernoulli_demand_within_three_standard_errors() {
    let (mean, se) = mean_flow(ValueModel::Bernoulli { p: 0.3, amount: 2.0 }, 1.5, 10_000, 42);
    assert!((mean - 0.3 * 2.0 * 1.5).abs() <= 3.0 * se, "{mean} +/- {se}");
}

#[test]
fn binomial_demand_within_three_standard_errors() {
    let (mean, se) = mean_flow(ValueModel::Binomial { trials: 12, p: 0.25 }, 4.0, 10_000, 43);
    assert!((mean - 12.0 * 0.25 * 4.0).abs() <= 3.0 * se, "{mean} +/- {se}");
}
