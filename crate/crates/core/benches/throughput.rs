//! Parallel-vs-sequential throughput over the three hot loops: stationary
//! symbol streams, billiard orbit batches and unstable-curve evolution.
//!
//! `exec::map_indexed` dispatches to rayon under the default `parallel`
//! feature while `exec::map_indexed_seq` is the always-sequential fallback,
//! so one binary measures both sides of the same workload. Results are
//! index-ordered either way; the comparison is purely about wall time.

use criterion::{criterion_group, criterion_main, Criterion};
use mme_core::curves::{evolve, EvolveParams, UnstableCurve};
use mme_core::exec::{self, chunk_rng};
use mme_core::map::{derivative, sample_phase_point};
use mme_core::renewal::{RenewalMeasure, RenewalSpec, SymbolStream};
use mme_core::table::Table;
use std::hint::black_box;

const STREAM_CHUNKS: usize = 64;
const STREAM_STEPS: usize = 20_000;
const ORBIT_CHUNKS: usize = 64;
const ORBIT_STEPS: usize = 400;
const EVOLVE_GENERATIONS: u32 = 8;

fn stream_chunk(m: &RenewalMeasure, chunk: usize) -> u64 {
    SymbolStream::stationary(m, 7, chunk as u64)
        .take(STREAM_STEPS)
        .map(|s| s.node() as u64)
        .sum()
}

fn symbol_streams(c: &mut Criterion) {
    let m = RenewalMeasure::build(RenewalSpec::parametric(2.0, 4.0, 120).expect("spec"))
        .expect("measure");
    let mut group = c.benchmark_group("symbol-streams");
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let sums = exec::map_indexed(STREAM_CHUNKS, |i| stream_chunk(&m, i));
            black_box(sums.iter().sum::<u64>())
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let sums = exec::map_indexed_seq(STREAM_CHUNKS, |i| stream_chunk(&m, i));
            black_box(sums.iter().sum::<u64>())
        })
    });
    group.finish();
}

fn orbit_chunk(table: &Table, chunk: usize) -> f64 {
    let mut rng = chunk_rng(11, chunk as u64);
    let mut x = sample_phase_point(table, &mut rng);
    let mut flight = 0.0;
    for _ in 0..ORBIT_STEPS {
        match derivative(table, x) {
            Ok(rep) => {
                flight += rep.collision.tau;
                x = rep.collision.next;
            }
            Err(_) => x = sample_phase_point(table, &mut rng),
        }
    }
    flight
}

fn billiard_orbits(c: &mut Criterion) {
    let table = Table::reference();
    let mut group = c.benchmark_group("billiard-orbits");
    group.bench_function("parallel", |b| {
        b.iter(|| {
            let flights = exec::map_indexed(ORBIT_CHUNKS, |i| orbit_chunk(table, i));
            black_box(flights.iter().sum::<f64>())
        })
    });
    group.bench_function("sequential", |b| {
        b.iter(|| {
            let flights = exec::map_indexed_seq(ORBIT_CHUNKS, |i| orbit_chunk(table, i));
            black_box(flights.iter().sum::<f64>())
        })
    });
    group.finish();
}

/// Curve evolution parallelizes internally over the leaves of each
/// generation, so the same call exercises whichever driver the feature set
/// provides; rebuild with `--no-default-features` for the sequential side.
fn curve_evolution(c: &mut Criterion) {
    let table = Table::reference();
    let params = EvolveParams::for_table(table);
    let seed = UnstableCurve::seed(table, 0, 0.70, 0.10, 5e-3, 9).expect("seed curve");
    let mut group = c.benchmark_group("curve-evolution");
    group.sample_size(20);
    group.bench_function("eight-generations", |b| {
        b.iter(|| {
            let rep = evolve(table, seed.clone(), EVOLVE_GENERATIONS, &params).expect("evolve");
            black_box(rep.counts.last().copied())
        })
    });
    group.finish();
}

criterion_group!(benches, symbol_streams, billiard_orbits, curve_evolution);
criterion_main!(benches);
