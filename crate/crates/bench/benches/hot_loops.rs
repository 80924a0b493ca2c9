//! Throughput of the three inner loops: the event-driven book simulator,
//! the tick-time Langevin generator, and one explicit kinetic step.

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use ticklab_core::boltzmann::{self, ProfileGrid};
use ticklab_core::collect::SeriesCollector;
use ticklab_core::meanfield::{self, Variant};
use ticklab_core::model::Derived;
use ticklab_core::{micro, IntervalMode, SimConfig, SpreadLaw};

fn micro_ticks(c: &mut Criterion) {
    let mut group = c.benchmark_group("micro_ticks");
    group.sample_size(10);
    for n in [100usize, 800] {
        let cfg = SimConfig::new(n, SpreadLaw::gamma(1.0), 100).with_seed(7);
        group.bench_function(format!("N{n}"), |b| {
            b.iter(|| micro::run_ensemble(&cfg, SeriesCollector::new).unwrap())
        });
    }
    group.finish();
}

fn meanfield_ticks(c: &mut Criterion) {
    let cfg = SimConfig::new(100, SpreadLaw::gamma(1.0), 10_000).with_seed(7).with_trend(0.5, 2.5);
    c.bench_function("meanfield_ticks/10k", |b| {
        b.iter(|| {
            meanfield::run_ensemble(
                &cfg,
                Variant::Hyperbolic,
                IntervalMode::Plain,
                SeriesCollector::new,
            )
            .unwrap()
        })
    });
}

fn boltzmann_step(c: &mut Criterion) {
    let mut group = c.benchmark_group("boltzmann_step");
    group.sample_size(20);
    for (tag, law, h, bins) in [
        ("point_800", SpreadLaw::point(1.0), boltzmann::DEFAULT_H_POINT, 1),
        ("gamma_800", SpreadLaw::gamma(1.0), boltzmann::DEFAULT_H_GAMMA, boltzmann::DEFAULT_BINS),
    ] {
        let derived = Derived::new(&law, 800, 1.0);
        let grid = {
            let mut g = ProfileGrid::for_law(
                &law,
                800.0,
                1.0,
                h,
                boltzmann::DEFAULT_CUT_FACTOR,
                bins,
            )
            .unwrap();
            g.init_nlo(derived.l_rho_sq);
            g
        };
        let dt = 0.9 * grid.dt_bound();
        group.bench_function(tag, |b| {
            b.iter_batched_ref(
                || grid.clone(),
                |g| g.step(dt).unwrap(),
                BatchSize::LargeInput,
            )
        });
    }
    group.finish();
}

criterion_group!(benches, micro_ticks, meanfield_ticks, boltzmann_step);
criterion_main!(benches);
