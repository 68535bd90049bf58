use criterion::{criterion_group, criterion_main, Criterion};
use std::hint::black_box;

use infoval_bench::{crr_put, lattice_instances, put_paths};
use infoval_core::density::GaussianInfoModel;
use infoval_core::lattice::snell_envelope;
use infoval_core::product::value_insider;
use infoval_core::rbsde::{solve_parametrized_atom, solve_rbsde, AtomDensity, BasisSpec, Payoff};

fn lattice(c: &mut Criterion) {
    let (tree, put) = crr_put(500).unwrap();
    c.bench_function("snell_envelope/crr_500", |b| b.iter(|| snell_envelope(black_box(&tree), &put).unwrap()));

    let inst = lattice_instances(100).unwrap();
    c.bench_function("value_insider/100_instances", |b| {
        b.iter(|| {
            for (i, d) in &inst {
                black_box(value_insider(&i.lattice, &i.payoff, d, &i.grid).unwrap());
            }
        })
    });
}

fn monte_carlo(c: &mut Criterion) {
    let paths = put_paths(20_000, 50).unwrap();
    let put = Payoff::put(100.0);
    let (barrier, terminal) = (put.barrier(&paths), put.terminal(&paths));
    let mut g = c.benchmark_group("rbsde");
    g.sample_size(10);
    g.bench_function("solve_rbsde/20k_paths_50_steps", |b| {
        b.iter(|| solve_rbsde(&paths, &barrier, &terminal, None, BasisSpec::monomials(3)).unwrap())
    });
    let model = GaussianInfoModel::new(1.0, 1.0).unwrap();
    let atom = AtomDensity::evaluate(&paths, &model, 0.5, 0);
    g.bench_function("parametrized_atom/20k_paths_50_steps", |b| {
        b.iter(|| solve_parametrized_atom(&paths, &put, &atom, BasisSpec::default()).unwrap())
    });
    g.finish();
}

criterion_group!(benches, lattice, monte_carlo);
criterion_main!(benches);
