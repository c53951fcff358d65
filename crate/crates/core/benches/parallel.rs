use std::hint::black_box;

use bp_handover::cli::run_trial;
use bp_handover::fusion::Architecture;
use bp_handover::metrics::GospaParams;
use bp_handover::model::{likelihood_at, measure, Measurement, Sensor, StateVector};
use bp_handover::par;
use bp_handover::scenario::load_scenario;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn sensor() -> Sensor {
    Sensor {
        id: 1,
        position: [0.0, 0.0],
        fov_radius: 120.0,
        pd_filter: 0.9,
        pd_true: 1.0,
        sigma_r: 1.0,
        sigma_theta: 1f64.to_radians(),
        clutter_rate: 5.0,
    }
}

fn cloud(n: usize) -> Vec<StateVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..n)
        .map(|_| StateVector::new(rng.random_range(40.0..60.0), rng.random_range(-10.0..10.0), 0.0, 0.0))
        .collect()
}

fn kernel<'a>(s: &'a Sensor, zs: &'a [Measurement]) -> impl Fn(usize, &StateVector, &mut [f64]) + Sync + Send + 'a {
    move |_, x, row| {
        let (range, azimuth) = s.project(x.position());
        for (slot, z) in row.iter_mut().zip(zs) {
            *slot = likelihood_at(z, range, azimuth, s);
        }
    }
}

fn likelihood_kernel(c: &mut Criterion) {
    let s = sensor();
    let zs: Vec<Measurement> = cloud(8).iter().map(|x| measure(x, &s, 0)).collect();
    let mut group = c.benchmark_group("likelihood_kernel");
    for n in [2_000usize, 10_000, 50_000] {
        let particles = cloud(n);
        let mut out = vec![0.0; n * zs.len()];
        group.bench_with_input(BenchmarkId::new("sequential", n), &n, |b, _| {
            b.iter(|| par::seq::fill_rows(black_box(&particles), &mut out, zs.len(), kernel(&s, &zs)))
        });
        group.bench_with_input(BenchmarkId::new("parallel", n), &n, |b, _| {
            b.iter(|| par::fill_rows(black_box(&particles), &mut out, zs.len(), kernel(&s, &zs)))
        });
    }
    group.finish();
}

fn monte_carlo_trials(c: &mut Criterion) {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../scenarios/paper_2bs.scenario");
    let mut cfg = load_scenario(path).expect("shipped scenario");
    cfg.filter.num_particles = 200;
    let gp = GospaParams::default();
    let archs = Architecture::ALL;
    let trials = 4;
    let mut group = c.benchmark_group("monte_carlo_trials");
    group.sample_size(10);
    group.bench_function("sequential", |b| {
        b.iter(|| par::seq::map_indexed(trials, |i| run_trial(&cfg, &archs, i as u64, &gp).unwrap().curves.len()))
    });
    group.bench_function("parallel", |b| {
        b.iter(|| par::map_indexed(trials, |i| run_trial(&cfg, &archs, i as u64, &gp).unwrap().curves.len()))
    });
    group.finish();
}

criterion_group!(benches, likelihood_kernel, monte_carlo_trials);
criterion_main!(benches);
