use criterion::{criterion_group, criterion_main, BatchSize, BenchmarkId, Criterion};
use detect_core::inverse::{solve_equilibrium_rates, Entry, InverseProblem, StructureMask};
use detect_core::kinetic::{KineticConfig, KineticModel, LambdaAssignment};
use detect_core::macro_dynamics::{simulate_constant, step, MacroState};
use detect_core::parametrization::{InteractionRateMatrix, RotationRateMatrix};
use detect_core::supply::{MintBurnAllocation, SupplyPath};
use detect_core::taxonomy::WealthVector;

fn rates(n: usize) -> (InteractionRateMatrix, RotationRateMatrix) {
    let mut beta = InteractionRateMatrix::zeros(n);
    let mut flows = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i < j {
                beta.set(i, j, 0.01 * (((i * 7 + j * 3) % 11) as f64 - 5.0) / 5.0);
            }
            if i != j {
                flows.push((i, j, 0.001 * ((i + 2 * j) % 5) as f64));
            }
        }
    }
    (beta, RotationRateMatrix::from_rates(n, flows).unwrap())
}

fn kinetic(c: &mut Criterion) {
    let mut group = c.benchmark_group("kinetic_100k_transactions");
    let models = [
        KineticModel::NoSaving,
        KineticModel::MinInvestment,
        KineticModel::GlobalSaving { lambda: 0.5 },
        KineticModel::IndividualSaving { lambdas: LambdaAssignment::Uniform },
    ];
    for model in models {
        let config = KineticConfig::new(1000, 10_000.0, model.clone(), 100_000);
        group.bench_function(model.name(), |b| {
            b.iter_batched(|| config.engine(1).unwrap(), |mut e| e.run(100_000), BatchSize::SmallInput)
        });
    }
    group.finish();
}

fn macro_steps(c: &mut Criterion) {
    let mut group = c.benchmark_group("macro");
    for n in [5, 20, 100] {
        let (beta, gamma) = rates(n);
        let f = WealthVector::new(vec![1000.0 / n as f64; n], 0);
        let path = SupplyPath::from_values(vec![1000.0; 2]);
        let alloc = MintBurnAllocation::new({
            let mut w = vec![0.0; n];
            w[0] = 1.0;
            w
        })
        .unwrap();
        let state = MacroState::new(f.clone(), 1000.0);
        group.bench_with_input(BenchmarkId::new("step", n), &n, |b, _| {
            b.iter(|| step(&state, &beta, &gamma, 1.0, &path, &alloc).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("run_1000_steps", n), &n, |b, _| {
            b.iter(|| simulate_constant(&f, &beta, &gamma, 1000, 1.0).unwrap())
        });
    }
    group.finish();
}

fn inverse(c: &mut Criterion) {
    let mut group = c.benchmark_group("inverse_solve");
    for n in [4, 8, 16] {
        let (beta, gamma) = rates(n);
        let start = WealthVector::new(vec![1000.0 / n as f64; n], 0);
        let target = simulate_constant(&start, &beta, &gamma, 2000, 1.0).unwrap().last().f.clone();
        let free_beta = InverseProblem {
            target: target.clone(),
            supply: 1000.0,
            mask: StructureMask::uniform(n, Entry::Free, Entry::Zero).fix_gamma(&gamma),
            regularization: 0.0,
        };
        let free_both = InverseProblem {
            mask: StructureMask::uniform(n, Entry::Free, Entry::Free),
            ..free_beta.clone()
        };
        group.bench_with_input(BenchmarkId::new("beta_free", n), &n, |b, _| {
            b.iter(|| solve_equilibrium_rates(&free_beta).unwrap())
        });
        group.bench_with_input(BenchmarkId::new("all_free", n), &n, |b, _| {
            b.iter(|| solve_equilibrium_rates(&free_both))
        });
    }
    group.finish();
}

criterion_group!(benches, kinetic, macro_steps, inverse);
criterion_main!(benches);
