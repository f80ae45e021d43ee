//! Compares the parallel execution path against the sequential
//! reference on the two hot spots: independent ACC negotiations and
//! independent leg solves.

use criterion::{criterion_group, criterion_main, Criterion};

use rdmm::dispatch::{negotiate, Loads, StepSizes, WarmStart};
use rdmm::io::build_nec_mini_scenario;
use rdmm::model::{AgentKind, DispatchableAgent, J_PER_MWH};
use rdmm::train::{optimize_leg, transcribe_leg, LegNlp, PriceFunction, SolverConfig};
use rdmm::{exec, io};

fn negotiation_workload() -> Vec<(Vec<DispatchableAgent>, Loads)> {
    let m = 12;
    (0..8)
        .map(|i| {
            let cheap = DispatchableAgent::uniform(
                "cheap",
                AgentKind::ElectricGen,
                m,
                1.0,
                0.0,
                0.03,
                1e-4,
                0.0,
                400.0,
            );
            let dear = DispatchableAgent::uniform(
                "dear",
                AgentKind::ElectricGen,
                m,
                1.0,
                0.0,
                0.05 + 0.01 * i as f64,
                2e-4,
                0.0,
                400.0,
            );
            let loads = Loads {
                electric: vec![-350.0 - 10.0 * i as f64; m],
                thermal: vec![0.0; m],
            };
            (vec![cheap, dear], loads)
        })
        .collect()
}

fn leg_workload() -> Vec<LegNlp> {
    let scenario = build_nec_mini_scenario();
    let spec = io::acela_spec();
    let price = PriceFunction::Uniform(50.0 / J_PER_MWH);
    (0..3)
        .map(|l| {
            let x0 = 10_000.0 * l as f64;
            let t0 = 460.0 * l as f64;
            transcribe_leg(
                &spec,
                &scenario.grade,
                x0,
                10_000.0,
                t0,
                t0 + 400.0,
                &price,
                10.0,
            )
            .unwrap()
        })
        .collect()
}

fn bench_negotiations(c: &mut Criterion) {
    let steps = StepSizes::default();
    let mut group = c.benchmark_group("acc_negotiations");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let work = negotiation_workload();
            exec::map(work, |(agents, loads)| {
                negotiate(&agents, &loads, &steps, &WarmStart::zeros(12)).unwrap()
            })
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let work = negotiation_workload();
            exec::seq_map(work, |(agents, loads)| {
                negotiate(&agents, &loads, &steps, &WarmStart::zeros(12)).unwrap()
            })
        })
    });
    group.finish();
}

fn bench_leg_solves(c: &mut Criterion) {
    let config = SolverConfig {
        dt: 10.0,
        multi_starts: 1,
        ..SolverConfig::default()
    };
    let mut group = c.benchmark_group("leg_solves");
    group.sample_size(10);
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let work = leg_workload();
            exec::map(work, |nlp| optimize_leg(&nlp, &config, None).unwrap())
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let work = leg_workload();
            exec::seq_map(work, |nlp| optimize_leg(&nlp, &config, None).unwrap())
        })
    });
    group.finish();
}

criterion_group!(benches, bench_negotiations, bench_leg_solves);
criterion_main!(benches);
