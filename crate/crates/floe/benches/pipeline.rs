//! Throughput benches: detector replay and survival fitting, with the
//! parallel and sequential fitting paths side by side.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use floe::native::NativeDetector;
use floe::simgen::{generate, ScenarioConfig};
use floe::survival::{fit_all, fit_all_seq, VolumeObservation};
use floe::synthetic::{DetectorConfig, SyntheticDetector};

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

fn bench_detectors(c: &mut Criterion) {
    let cfg = ScenarioConfig {
        seed: 9,
        n_native: 500,
        n_synthetic: 500,
        decoy_rate: 0.5,
        ..ScenarioConfig::default()
    };
    let (events, _) = generate(&cfg);

    let mut group = c.benchmark_group("detectors");
    group.throughput(Throughput::Elements(events.len() as u64));
    group.bench_function("native_replay", |b| {
        b.iter(|| {
            let mut det = NativeDetector::new();
            let mut out = Vec::new();
            for ev in &events {
                out.extend(det.apply_event(ev));
            }
            out.extend(det.finalize_all());
            out
        })
    });
    group.bench_function("synthetic_replay", |b| {
        b.iter(|| {
            let mut det = SyntheticDetector::new(DetectorConfig::default());
            let mut out = Vec::new();
            for ev in &events {
                out.extend(det.process_event(ev));
            }
            out.extend(det.finish());
            out
        })
    });
    group.finish();
}

fn synthetic_observations(n: usize, seed: u64) -> Vec<VolumeObservation> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let peak = rng.gen_range(5..=40);
            let tranches = rng.gen_range(1..=12);
            VolumeObservation {
                peak,
                volume: peak * tranches,
                weight: 1.0 / rng.gen_range(1..=4) as f64,
                censored: rng.gen_bool(0.2),
            }
        })
        .collect()
}

fn bench_fitting(c: &mut Criterion) {
    let mut group = c.benchmark_group("survival_fit");
    for &n in &[1_000usize, 10_000, 100_000] {
        let obs = synthetic_observations(n, 42);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("parallel", n), &obs, |b, obs| {
            b.iter(|| fit_all(obs))
        });
        group.bench_with_input(BenchmarkId::new("sequential", n), &obs, |b, obs| {
            b.iter(|| fit_all_seq(obs))
        });
    }
    group.finish();
}

criterion_group!(benches, bench_detectors, bench_fitting);
criterion_main!(benches);
