//! End-to-end acceptance checks. Runs every criterion, prints one PASS/FAIL
//! line each and exits nonzero if any failed.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use detect_core::analysis::{
    default_tail_threshold, fit_exponential, fit_gamma, fit_pareto_tail, top_share, GammaPrediction,
};
use detect_core::inverse::{solve_equilibrium_rates, verify_solution, Entry, InverseProblem, StructureMask};
use detect_core::kinetic::{
    kinetic_to_macro, run_ensemble, run_kinetic, KineticConfig, KineticEngine, KineticModel, LambdaAssignment,
};
use detect_core::macro_dynamics::{simulate, simulate_constant, transaction_rule_reduce, MacroSetup};
use detect_core::parametrization::{
    InteractionRateMatrix, ParametrizationMode, RateSampler, RateSchedule, RotationRateMatrix, ValueModel,
};
use detect_core::seed;
use detect_core::supply::{check_time_translation, MintBurnAllocation, SupplyModel};
use detect_core::taxonomy::{build_taxonomy, AgentCategory, Granularity, InteractionType, RotationChannel, TokenomicTaxonomy, WealthVector};
use rand::Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

/// Random taxonomy over `n` categories (the first is the control mechanism)
/// with matching rates: each pair interacts and each ordered pair rotates
/// with probability one half.
fn random_economy(n: usize, rng: &mut impl Rng) -> (TokenomicTaxonomy, InteractionRateMatrix, RotationRateMatrix) {
    let ids: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
    let mut cats = vec![AgentCategory::control_mechanism(&ids[0])];
    cats.extend(ids[1..].iter().map(AgentCategory::normal));
    let mut interactions = Vec::new();
    let mut rotations = Vec::new();
    let mut beta = InteractionRateMatrix::zeros(n);
    let mut rates = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j && rng.random_bool(0.5) {
                interactions.push(InteractionType::new(format!("i{i}{j}"), &ids[i], &ids[j], Granularity::Continuous));
                beta.set(i, j, rng.random_range(-0.005..0.005));
            }
            if i != j && rng.random_bool(0.5) {
                rotations.push(RotationChannel::new(&ids[i], &ids[j]));
                rates.push((i, j, rng.random_range(0.0..0.005)));
            }
        }
    }
    let taxonomy = build_taxonomy(cats, interactions, rotations).unwrap();
    (taxonomy, beta, RotationRateMatrix::from_rates(n, rates).unwrap())
}

fn random_wealth(n: usize, m: f64, rng: &mut impl Rng) -> WealthVector {
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    WealthVector::new(raw.iter().map(|x| x * m / s).collect(), 0)
}

fn criterion_1() -> Outcome {
    let mut rng = seed::rng(1);
    let mut worst: f64 = 0.0;
    for trial in 0..10 {
        let (taxonomy, beta, gamma) = random_economy(5, &mut rng);
        let initial = random_wealth(5, 1000.0, &mut rng);
        let schedule = RateSchedule::explicit(beta, gamma);
        let supply = SupplyModel::constant(1000.0);
        let allocation = MintBurnAllocation::control_only(&taxonomy);
        let setup = MacroSetup {
            taxonomy: &taxonomy,
            schedule: &schedule,
            supply: &supply,
            allocation: &allocation,
            initial: &initial,
            horizon: 10_000,
            dt: 1.0,
        };
        let (tr, _) = simulate(&setup, trial).map_err(|e| e.to_string())?;
        worst = worst.max(tr.max_relative_drift());
    }
    check(worst <= 1e-9, format!("10 random 5-category economies, 1e4 steps, max drift {worst:.2e}"))
}

fn criterion_2() -> Outcome {
    // Rates are per unit time; 1000 steps of 0.05 span t = 50.
    let dt = 0.05;
    let horizon = 1000;
    let mut rng = seed::rng(2);
    let mut walk = vec![1000.0];
    for _ in 0..horizon {
        let last: f64 = *walk.last().unwrap();
        walk.push(last * (1.0 + rng.random_range(-0.004..0.005)));
    }
    let laws = [
        ("simple +0.01", SupplyModel::simple(1000.0, 0.01)),
        ("simple -0.01", SupplyModel::simple(1000.0, -0.01)),
        ("compound +0.01", SupplyModel::compound(1000.0, 0.01)),
        ("compound -0.01", SupplyModel::compound(1000.0, -0.01)),
        ("stochastic", SupplyModel::stochastic(1000.0, 0.01, 0.05)),
        ("general", SupplyModel::general(walk)),
    ];
    let mut lines = Vec::new();
    let mut ok = true;
    for (k, (name, supply)) in laws.iter().enumerate() {
        let (taxonomy, beta, gamma) = random_economy(5, &mut rng);
        let mut values = vec![100.0; 5];
        values[0] = 600.0;
        let initial = WealthVector::new(values, 0);
        let schedule = RateSchedule::explicit(beta, gamma);
        let allocation = MintBurnAllocation::control_only(&taxonomy);
        let setup = MacroSetup {
            taxonomy: &taxonomy,
            schedule: &schedule,
            supply,
            allocation: &allocation,
            initial: &initial,
            horizon,
            dt,
        };
        let (tr, path) = simulate(&setup, 100 + k as u64).map_err(|e| format!("{name}: {e}"))?;
        let report = check_time_translation(&tr.wealth(), &path, 1e-9).map_err(|e| e.to_string())?;
        ok &= report.passed;
        lines.push(format!(
            "{name}: drift {:.1e}, discounted {:.1e}",
            report.max_relative_drift, report.max_discounted_error
        ));
    }
    check(ok, lines.join("; "))
}

fn criterion_3() -> Outcome {
    // Each update is compared from the same prior state; chaining two
    // independent trajectories would amplify rounding near zero wealth.
    let mut worst: f64 = 0.0;
    for sequence in 0..100u64 {
        let mut rng = seed::rng(3_000 + sequence);
        let start = random_wealth(3, 30.0, &mut rng).values;
        let mut engine =
            KineticEngine::new(KineticModel::NoSaving, start, vec![], seed::rng(sequence)).map_err(|e| e.to_string())?;
        for _ in 0..50 {
            let before = engine.wealth().to_vec();
            let tx = engine.step();
            let bridge = kinetic_to_macro(&before, &[tx], 1.0).map_err(|e| e.to_string())?;
            let next = transaction_rule_reduce(&bridge.f, &bridge.beta, bridge.supply, 1.0).map_err(|e| e.to_string())?;
            for (a, b) in next.values.iter().zip(engine.wealth()) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    check(worst <= 1e-12, format!("100 sequences of 50 transactions, max entry gap {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let config = KineticConfig::new(1000, 10_000.0, KineticModel::NoSaving, 2_000_000);
    let runs = run_ensemble(&config, 4, 5).map_err(|e| e.to_string())?;
    let mut good = 0;
    let mut parts = Vec::new();
    for run in &runs {
        let fit = fit_exponential(&run.last().wealth).map_err(|e| e.to_string())?;
        let ok = (fit.mean - 10.0).abs() <= 0.2 && fit.ks < 0.05;
        good += ok as usize;
        parts.push(format!("mean {:.3} ks {:.4}", fit.mean, fit.ks));
    }
    check(good >= 4, format!("{good}/5 seeds fit Exp(10): {}", parts.join(", ")))
}

fn criterion_5() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut variances = Vec::new();
    for lambda in [0.2, 0.5, 0.8] {
        let config = KineticConfig::new(1000, 10_000.0, KineticModel::GlobalSaving { lambda }, 2_000_000);
        let runs = run_ensemble(&config, 5, 5).map_err(|e| e.to_string())?;
        let pooled: Vec<f64> = runs.iter().flat_map(|r| r.last().wealth.clone()).collect();
        let fit = fit_gamma(&pooled).map_err(|e| e.to_string())?;
        let want = GammaPrediction::new(lambda, 10.0).map_err(|e| e.to_string())?.d_half;
        let rel = (fit.shape - want).abs() / want;
        ok &= rel <= 0.15;
        variances.push(fit.shape * fit.scale * fit.scale);
        parts.push(format!("lambda {lambda}: shape {:.3} vs {want:.3}", fit.shape));
    }
    let decreasing = variances.windows(2).all(|w| w[1] < w[0]);
    ok &= decreasing;
    parts.push(format!("variance decreasing in lambda: {decreasing}"));
    check(ok, parts.join("; "))
}

fn criterion_6() -> Outcome {
    let model = KineticModel::IndividualSaving { lambdas: LambdaAssignment::Uniform };
    let config = KineticConfig::new(1000, 10_000.0, model, 2_000_000);
    let runs = run_ensemble(&config, 6, 20).map_err(|e| e.to_string())?;
    let pooled: Vec<f64> = runs.iter().flat_map(|r| r.last().wealth.clone()).collect();
    let hill = fit_pareto_tail(&pooled, default_tail_threshold(&pooled)).map_err(|e| e.to_string())?;
    let share = top_share(&pooled, 0.2).map_err(|e| e.to_string())?;
    check(
        (0.8..=1.4).contains(&hill.alpha) && share >= 0.70,
        format!("20 runs pooled: Hill alpha {:.3}, top 20% share {share:.3}", hill.alpha),
    )
}

fn criterion_7() -> Outcome {
    let config = KineticConfig::new(100, 1000.0, KineticModel::MinInvestment, 1_000_000).with_snapshot_every(100_000);
    let run = run_kinetic(&config, 7).map_err(|e| e.to_string())?;
    let driven: Vec<f64> = run.snapshots.iter().map(|s| s.driven_out() as f64 / 100.0).collect();
    let shares: Vec<f64> = run.snapshots.iter().map(|s| s.max_share()).collect();
    let monotone = driven.windows(2).all(|w| w[1] >= w[0]);
    // least-squares slope of the max share against snapshot index
    let n = shares.len() as f64;
    let xm = (n - 1.0) / 2.0;
    let ym = shares.iter().sum::<f64>() / n;
    let slope: f64 = shares.iter().enumerate().map(|(i, y)| (i as f64 - xm) * (y - ym)).sum::<f64>()
        / shares.iter().enumerate().map(|(i, _)| (i as f64 - xm).powi(2)).sum::<f64>();
    let last_driven = *driven.last().unwrap();
    let last_share = *shares.last().unwrap();
    check(
        monotone && last_driven >= 0.9 && last_share >= 0.5 && slope > 0.0,
        format!(
            "driven out nondecreasing {monotone}, final {last_driven:.2}; max share final {last_share:.3}, slope {slope:.2e}"
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut converged = 0;
    let mut returned = 0;
    let mut worst_residual: f64 = 0.0;
    for trial in 0..20u64 {
        let mut rng = seed::rng(8_000 + trial);
        let mut beta0 = InteractionRateMatrix::zeros(4);
        let mut rates = Vec::new();
        for i in 0..4 {
            for j in 0..4 {
                if i < j {
                    beta0.set(i, j, rng.random_range(-0.05..0.05));
                }
                if i != j {
                    rates.push((i, j, rng.random_range(0.01..0.1)));
                }
            }
        }
        let gamma0 = RotationRateMatrix::from_rates(4, rates).unwrap();
        let start = WealthVector::new(vec![25.0; 4], 0);
        let target = simulate_constant(&start, &beta0, &gamma0, 5000, 1.0).map_err(|e| e.to_string())?.last().f.clone();
        let problem = InverseProblem {
            target,
            supply: 100.0,
            mask: StructureMask::uniform(4, Entry::Free, Entry::Zero).fix_gamma(&gamma0),
            regularization: 0.0,
        };
        let solution = solve_equilibrium_rates(&problem).map_err(|e| format!("trial {trial}: {e}"))?;
        worst_residual = worst_residual.max(solution.residual_norm / 100.0);
        converged += (solution.residual_norm < 1e-8 * 100.0) as usize;
        let report = verify_solution(&solution, &problem, 0.05, 2000, 1.0).map_err(|e| e.to_string())?;
        returned += (report.final_distance <= 0.01) as usize;
    }
    check(
        converged == 20 && returned >= 18,
        format!("residual < 1e-8 M on {converged}/20 (worst {worst_residual:.1e} M); back within 1% L1 on {returned}/20"),
    )
}

fn criterion_9() -> Outcome {
    let taxonomy = build_taxonomy(
        vec![AgentCategory::control_mechanism("cm"), AgentCategory::normal("shop"), AgentCategory::normal("buyer")],
        vec![InteractionType::new("sale", "shop", "buyer", Granularity::Integer)],
        vec![],
    )
    .unwrap();
    let f = WealthVector::new(vec![1e5; 3], 0);
    let m = f.total();
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, demand, price, expected) in [
        ("bernoulli", ValueModel::Bernoulli { p: 0.3, amount: 2.0 }, 1.5, 0.3 * 2.0 * 1.5),
        ("binomial", ValueModel::Binomial { trials: 12, p: 0.25 }, 4.0, 12.0 * 0.25 * 4.0),
    ] {
        let schedule = RateSchedule::new(ParametrizationMode::DynamicProbabilistic)
            .with_interaction("sale", demand, ValueModel::constant(price));
        let mut sampler = RateSampler::new(&schedule, &taxonomy, 1.0, 9, &f, m).map_err(|e| e.to_string())?;
        let flows = (0..10_000)
            .map(|k| sampler.materialize(k, &f, m).map(|r| r.flows.iter().map(|x| x.value.abs()).sum::<f64>()))
            .collect::<Result<Vec<f64>, _>>()
            .map_err(|e| e.to_string())?;
        let n = flows.len() as f64;
        let mean = flows.iter().sum::<f64>() / n;
        let se = (flows.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt();
        let z = (mean - expected).abs() / se;
        ok &= z <= 3.0;
        parts.push(format!("{name}: mean {mean:.4} vs {expected}, z {z:.2}"));
    }
    check(ok, parts.join("; "))
}

fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect()
}

fn criterion_10() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_detect");
    let scenarios = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        ("simulate", "economy.json", vec!["--ensemble", "3"]),
        ("kinetic", "kinetic_no_saving.json", vec!["--ensemble", "2"]),
        ("invert", "stationary_target.json", vec![]),
        ("check", "economy.json", vec![]),
    ];
    let mut parts = Vec::new();
    for (command, file, extra) in cases {
        let mut trees = Vec::new();
        // Different worker counts must not change the bytes.
        for (run, threads) in [(0, "1"), (1, "4")] {
            let out = tmp.path().join(format!("{command}_{run}"));
            let status = Command::new(bin)
                .arg(command)
                .arg("--scenario")
                .arg(scenarios.join(file))
                .arg("--out")
                .arg(&out)
                .args(["--seed", "12345"])
                .args(&extra)
                .env("DETECT_THREADS", threads)
                .status()
                .map_err(|e| e.to_string())?;
            if !status.success() {
                return Err(format!("{command} exited with {status}"));
            }
            trees.push(read_tree(&out));
        }
        if trees[0] != trees[1] {
            return Err(format!("{command}: outputs differ between runs"));
        }
        parts.push(format!("{command} ({} files)", trees[0].len()));
    }
    check(true, format!("byte-identical over two runs: {}", parts.join(", ")))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("conservation, constant supply", criterion_1),
        ("conservation, dynamic supply", criterion_2),
        ("kinetic and macro updates agree", criterion_3),
        ("no-saving exponential equilibrium", criterion_4),
        ("global-saving Gamma equilibrium", criterion_5),
        ("individual-saving power-law tail", criterion_6),
        ("min-investment condensation", criterion_7),
        ("inverse round trip", criterion_8),
        ("probabilistic demand calibration", criterion_9),
        ("CLI determinism", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    let mut stdout = std::io::stdout();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let label = format!("criterion {:>2}: {name}", i + 1);
        if !filter.is_empty() && !filter.iter().any(|p| label.contains(p.as_str())) {
            continue;
        }
        let started = Instant::now();
        let result = f();
        let secs = started.elapsed().as_secs_f64();
        match &result {
            Ok(detail) => writeln!(stdout, "PASS {label} [{secs:.1}s] {detail}").unwrap(),
            Err(detail) => {
                failed += 1;
                writeln!(stdout, "FAIL {label} [{secs:.1}s] {detail}").unwrap()
            }
        }
    }
    if failed > 0 {
        writeln!(stdout, "{failed} criteria failed").unwrap();
        std::process::exit(1);
    }
}
