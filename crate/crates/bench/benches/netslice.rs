//! Timings of the three hot paths: relaxation-factor search, a single
//! reservation solve on the built-in topology, and a short simulation.

use std::hint::black_box;
use std::path::PathBuf;

use criterion::{criterion_group, criterion_main, Criterion};
use netslice::engine::{default_solve_options, run, GammaCache};
use netslice::infra::builtin_topology;
use netslice::milp::{build_problem3, BatchEntry, BuildOptions, BuiltinSolver, CommittedLoad, MilpSolver};
use netslice::scenario::{load_scenario, Overrides};
use netslice::slice::{aggregate_moments, builtin_slice_catalog, user_count_moments, DemandPattern};
use netslice::uncertainty::{gamma_ssp, BackgroundTargets, SspOptions};
use netslice::PriorityClass;

fn relaxation_factor(c: &mut Criterion) {
    let catalog = builtin_slice_catalog();
    let opts = SspOptions::default();
    for (id, t) in &catalog.types {
        let pattern = if t.allows_varying {
            DemandPattern::Varying
        } else {
            DemandPattern::Constant
        };
        let count = catalog.user_count(*id, pattern, 3).unwrap();
        let (m, v) = user_count_moments(&count, 0).unwrap();
        let moments = aggregate_moments(&t.user_stats, m, v).unwrap();
        c.bench_function(&format!("gamma_ssp/type-{id}"), |b| {
            b.iter(|| gamma_ssp(black_box(&moments), &t.user_stats, &count, 0, t.target_ssp, &opts).unwrap())
        });
    }
}

fn single_reservation(c: &mut Criterion) {
    let net = builtin_topology("fat-tree-15").unwrap();
    let catalog = builtin_slice_catalog();
    let request = catalog
        .make_request(1, 1, PriorityClass::Standard, DemandPattern::Varying, 0.5, 3, 5)
        .unwrap();
    let targets = GammaCache::new(SspOptions::default()).slice_targets(&request).unwrap();
    let committed = CommittedLoad::new(&net);
    let bg = BackgroundTargets::zero(&net);
    let entry = BatchEntry {
        request: &request,
        targets: &targets,
    };
    let opts = default_solve_options();
    c.bench_function("reserve/type-1-three-slots", |b| {
        b.iter(|| {
            let model = build_problem3(entry, &committed, &net, &bg, &BuildOptions::default()).unwrap();
            BuiltinSolver.solve(black_box(&model), &opts).unwrap()
        })
    });
}

fn short_run(c: &mut Criterion) {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/desk.toml");
    let mut s = load_scenario(&path).unwrap();
    Overrides {
        max_requests: Some(20),
        ..Default::default()
    }
    .apply(&mut s)
    .unwrap();
    let mut group = c.benchmark_group("engine");
    group.sample_size(10);
    group.bench_function("desk-20-requests", |b| {
        b.iter(|| run(&s.config, &s.network, &s.catalog, &BuiltinSolver).unwrap())
    });
    group.finish();
}

criterion_group!(benches, relaxation_factor, single_reservation, short_run);
criterion_main!(benches);
