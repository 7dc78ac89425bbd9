use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use palign_core::envelope::{integrate_envelope, EnvelopeOptions};
use palign_core::particle::{self, alignment_accel, Coupling, ParticleOptions, ParticleState};
use palign_core::{EnvelopeParams, EnvelopeState, EnvelopeSystem, KernelSpec, RateBound, Schedule, SimParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn swarm(n: usize, dim: usize) -> (ParticleState, SimParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let state = ParticleState::random(&mut rng, n, dim, 1.0, 1.0).unwrap();
    let sim = SimParams::new(2.5, KernelSpec::smooth_tail(0.5).unwrap(), n as f64).unwrap();
    (state, sim)
}

fn accel(c: &mut Criterion) {
    let mut g = c.benchmark_group("alignment_accel");
    for n in [32, 128] {
        let (state, sim) = swarm(n, 2);
        g.bench_with_input(BenchmarkId::from_parameter(n), &n, |b, _| {
            b.iter(|| alignment_accel(black_box(&state), &sim, Coupling::MassWeighted))
        });
    }
    g.finish();
}

fn particle_run(c: &mut Criterion) {
    let (state, sim) = swarm(32, 2);
    let opts = ParticleOptions::default();
    c.bench_function("particle_n32_t100", |b| {
        b.iter(|| particle::integrate(black_box(&state), &sim, 100.0, &Schedule::log(50), &opts).unwrap())
    });
}

fn envelope(c: &mut Criterion) {
    let mut g = c.benchmark_group("envelope");
    for (p, alpha) in [(2.5, 1.5), (3.0, 0.5), (4.0, 0.5)] {
        let sim = SimParams::new(p, KernelSpec::smooth_tail(alpha).unwrap(), 2.0).unwrap();
        let params = EnvelopeParams::from_sim(&sim).unwrap();
        let s0 = EnvelopeState::raw(1.0, 1.0).unwrap();
        let opts = EnvelopeOptions::default();
        let id = format!("p{p}_a{alpha}");
        g.bench_function(format!("exact_{id}"), |b| {
            let sys = EnvelopeSystem::exact(params, sim.kernel);
            b.iter(|| integrate_envelope(black_box(&s0), &sys, 1e6, &Schedule::log(100), &opts).unwrap())
        });
        g.bench_function(format!("lower_{id}"), |b| {
            let sys = EnvelopeSystem::tail(params, RateBound::Lower);
            b.iter(|| integrate_envelope(black_box(&s0), &sys, 1e6, &Schedule::log(100), &opts).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, accel, particle_run, envelope);
criterion_main!(benches);
