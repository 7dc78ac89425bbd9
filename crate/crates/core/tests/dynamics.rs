use approx::assert_relative_eq;
use palign_core::envelope::{integrate_envelope, EnvelopeOptions, TimeCoord};
use palign_core::particle::{self, init_two_particle, ParticleOptions};
use palign_core::regions::{check_containment, region_a_sb};
use palign_core::{
    Coords, EnvelopeParams, EnvelopeState, EnvelopeSystem, KernelSpec, RateBound, Schedule, SimParams, Trajectory,
};

fn tail_params(p: f64, alpha: f64) -> EnvelopeParams {
    let kernel = KernelSpec::smooth_tail(alpha).unwrap();
    EnvelopeParams::from_sim(&SimParams::new(p, kernel, 2.0).unwrap()).unwrap()
}

fn tight() -> EnvelopeOptions {
    EnvelopeOptions::with_tol(1e-30, 1e-12)
}

#[test]
fn raw_and_rescaled_s1_runs_agree() {
    for (p, alpha) in [(4.0, 0.5), (3.5, 0.0), (6.0, 0.7)] {
        let params = tail_params(p, alpha);
        let taus: Vec<f64> = (1..=20).map(|k| 0.25 * k as f64).collect();
        let ts: Vec<f64> = taus.iter().map(|tau| tau.exp_m1()).collect();
        for bound in [RateBound::Lower, RateBound::Upper] {
            let raw = integrate_envelope(
                &EnvelopeState::raw(1.3, 0.7).unwrap(),
                &EnvelopeSystem::tail(params, bound),
                *ts.last().unwrap(),
                &Schedule::Times(ts.clone()),
                &tight(),
            )
            .unwrap()
            .convert(Coords::S1)
            .unwrap();
            let scaled = integrate_envelope(
                &EnvelopeState::at(1.3, 0.7, 0.0, TimeCoord::LogTau).unwrap(),
                &EnvelopeSystem::S1 { params, bound },
                *taus.last().unwrap(),
                &Schedule::Times(taus.clone()),
                &tight(),
            )
            .unwrap();
            assert_eq!(raw.samples.len(), scaled.samples.len());
            for (a, b) in raw.samples.iter().zip(&scaled.samples) {
                assert_relative_eq!(a.t, b.t, max_relative = 1e-12);
                assert_relative_eq!(a.d, b.d, max_relative = 1e-6);
                assert_relative_eq!(a.v, b.v, max_relative = 1e-6);
            }
        }
    }
}

#[test]
fn exact_kernel_lies_between_the_tail_bounds() {
    for (p, alpha) in [(2.5, 0.5), (3.0, 1.5), (4.0, 0.5)] {
        let kernel = KernelSpec::smooth_tail(alpha).unwrap();
        let params = tail_params(p, alpha);
        // the λ bound holds only beyond the tail radius R = 1, and D grows
        let run = |sys: EnvelopeSystem| -> Trajectory {
            integrate_envelope(
                &EnvelopeState::raw(1.2, 2.0).unwrap(),
                &sys,
                1e4,
                &Schedule::log(60),
                &tight(),
            )
            .unwrap()
        };
        let upper = run(EnvelopeSystem::tail(params, RateBound::Upper));
        let exact = run(EnvelopeSystem::exact(params, kernel));
        let lower = run(EnvelopeSystem::tail(params, RateBound::Lower));
        for ((u, e), l) in upper.samples.iter().zip(&exact.samples).zip(&lower.samples) {
            let slack = 1e-9 * e.v + 1e-15;
            assert!(
                u.v <= e.v + slack && e.v <= l.v + slack,
                "p = {p}, t = {}: {} {} {}",
                e.t,
                u.v,
                e.v,
                l.v
            );
        }
    }
}

#[test]
fn log_rescaled_run_stays_in_its_box() {
    let alpha = 0.5;
    let params = tail_params(3.0, alpha);
    let lc = params.rate(RateBound::Lower).unwrap();
    for keep_drift in [false, true] {
        let sys = EnvelopeSystem::Sb {
            params,
            bound: RateBound::Lower,
            keep_drift,
        };
        let traj = integrate_envelope(
            &EnvelopeState::at(1.0, 2.0, 0.0, TimeCoord::LogTau).unwrap(),
            &sys,
            30.0,
            &Schedule::Linear { n: 300 },
            &EnvelopeOptions::default(),
        )
        .unwrap();
        let region = region_a_sb(1.0, 2.0, alpha, lc).unwrap();
        let rep = check_containment(&traj, &region).unwrap();
        assert!(rep.contained, "keep_drift = {keep_drift}: {:?}", rep.first_exit);
    }
}

#[test]
fn particle_trajectory_roundtrips_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let sim = SimParams::new(2.5, KernelSpec::smooth_tail(1.0).unwrap(), 2.0).unwrap();
    let opts = ParticleOptions {
        snapshots: true,
        ..Default::default()
    };
    let traj = particle::integrate(
        &init_two_particle(1.0, 1.0).unwrap(),
        &sim,
        50.0,
        &Schedule::Linear { n: 25 },
        &opts,
    )
    .unwrap();
    let csv_path = traj.write_run(dir.path(), "pair").unwrap();
    let back = Trajectory::read_csv_file(&csv_path).unwrap();
    assert_eq!(back.samples.len(), traj.samples.len());
    for (a, b) in back.samples.iter().zip(&traj.samples) {
        assert_eq!((a.t, a.d, a.v), (b.t, b.d, b.v));
    }
    let json = std::fs::read_to_string(dir.path().join("pair_traj.json")).unwrap();
    let parsed: Trajectory = serde_json::from_str(&json).unwrap();
    assert_eq!(parsed, traj);
    assert!(dir.path().join("pair_snap.csv").exists());
}
