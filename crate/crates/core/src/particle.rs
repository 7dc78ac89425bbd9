//! Agent-based dynamics `x' = v`, `v' = A(x, v)` with nonlinear alignment.
//!
//! The force loop visits each unordered pair once, in index order, and adds
//! the two opposite contributions. The summation order is therefore fixed
//! and results are bitwise reproducible.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{phi_scale, SimParams};
use crate::ode::{self, Flow, OdeSystem, Schedule, SolverOptions};
use crate::trajectory::{IntegratorMeta, RunStatus, Sample, Snapshot, Source, Trajectory};

/// Velocity diameter below which a run with `p < 2` is declared coalesced.
pub const COALESCENCE_THRESHOLD: f64 = 1e-14;

/// Effective coalescence threshold. Near a finite-time collapse the
/// solver chatters at the scale of its absolute tolerance, so the
/// threshold is raised to `100 atol` when that is larger.
pub fn coalescence_threshold(atol: f64) -> f64 {
    COALESCENCE_THRESHOLD.max(100.0 * atol)
}

/// Normalization of the pair sum.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Coupling {
    /// `a_i = Σ_j m_j φ(|x_i - x_j|) Φ(v_j - v_i)`.
    #[default]
    MassWeighted,
    /// `a_i = (1/N) Σ_j φ(|x_i - x_j|) Φ(v_j - v_i)`, masses ignored.
    Uniform,
}

/// Positions, velocities and masses of `N` agents in `d` dimensions, stored
/// row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParticleState {
    pub t: f64,
    pub dim: usize,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub m: Vec<f64>,
}

impl ParticleState {
    pub fn new(dim: usize, x: Vec<f64>, v: Vec<f64>, m: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Domain("dimension must be at least 1".into()));
        }
        let n = m.len();
        if n == 0 {
            return Err(Error::Domain("need at least one agent".into()));
        }
        if x.len() != n * dim || v.len() != n * dim {
            return Err(Error::Domain(format!(
                "expected {} coordinates for {n} agents in {dim}D, got x: {}, v: {}",
                n * dim,
                x.len(),
                v.len()
            )));
        }
        if m.iter().any(|&mi| !(mi > 0.0 && mi.is_finite())) {
            return Err(Error::Domain("masses must be positive".into()));
        }
        if x.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(Error::Domain("state must be finite".into()));
        }
        Ok(ParticleState { t: 0.0, dim, x, v, m })
    }

    pub fn n(&self) -> usize {
        self.m.len()
    }

    pub fn total_mass(&self) -> f64 {
        self.m.iter().sum()
    }

    /// `Σ m_i v_i`.
    pub fn momentum(&self) -> Vec<f64> {
        momentum(&self.v, &self.m, self.dim)
    }

    pub fn max_speed(&self) -> f64 {
        self.v.chunks(self.dim).map(norm).fold(0.0, f64::max)
    }

    /// Draw `n` unit-mass agents with positions and velocities uniform in
    /// `[-x_scale, x_scale]^d` and `[-v_scale, v_scale]^d`.
    pub fn random<R: Rng>(rng: &mut R, n: usize, dim: usize, x_scale: f64, v_scale: f64) -> Result<Self> {
        let x = (0..n * dim).map(|_| rng.random_range(-1.0..=1.0) * x_scale).collect();
        let v = (0..n * dim).map(|_| rng.random_range(-1.0..=1.0) * v_scale).collect();
        ParticleState::new(dim, x, v, vec![1.0; n])
    }

    /// Check that the masses add up to `params.total_mass`.
    pub fn check_mass(&self, params: &SimParams) -> Result<()> {
        let total = self.total_mass();
        if (total - params.total_mass).abs() > 1e-12 * params.total_mass.max(1.0) {
            return Err(Error::Domain(format!(
                "agent masses sum to {total}, parameters say {}",
                params.total_mass
            )));
        }
        Ok(())
    }
}

fn norm(z: &[f64]) -> f64 {
    z.iter().map(|c| c * c).sum::<f64>().sqrt()
}

fn momentum(v: &[f64], m: &[f64], dim: usize) -> Vec<f64> {
    let mut p = vec![0.0; dim];
    for (vi, mi) in v.chunks(dim).zip(m) {
        for (pk, vk) in p.iter_mut().zip(vi) {
            *pk += mi * vk;
        }
    }
    p
}

/// Two unit masses at `∓x0/2` moving apart with velocities `∓v0/2`.
pub fn init_two_particle(x0: f64, v0: f64) -> Result<ParticleState> {
    if !(x0 > 0.0 && x0.is_finite() && v0 > 0.0 && v0.is_finite()) {
        return Err(Error::Domain(format!(
            "need x0 > 0 and v0 > 0, got x0 = {x0}, v0 = {v0}"
        )));
    }
    ParticleState::new(1, vec![-0.5 * x0, 0.5 * x0], vec![-0.5 * v0, 0.5 * v0], vec![1.0, 1.0])
}

/// Largest pairwise distance among the rows of `z`; zero for a single row.
pub fn max_pairwise(z: &[f64], dim: usize) -> f64 {
    let rows: Vec<&[f64]> = z.chunks(dim).collect();
    let mut best = 0.0f64;
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            let d2: f64 = rows[i].iter().zip(rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            best = best.max(d2);
        }
    }
    best.sqrt()
}

/// Spatial and velocity diameters `(D, V)`.
pub fn diameters(state: &ParticleState) -> (f64, f64) {
    (max_pairwise(&state.x, state.dim), max_pairwise(&state.v, state.dim))
}

fn accel_into(x: &[f64], v: &[f64], m: &[f64], dim: usize, params: &SimParams, coupling: Coupling, out: &mut [f64]) {
    out.fill(0.0);
    let n = m.len();
    let inv_n = 1.0 / n as f64;
    let mut dv = vec![0.0; dim];
    for i in 0..n {
        let xi = &x[i * dim..(i + 1) * dim];
        let vi = &v[i * dim..(i + 1) * dim];
        for j in i + 1..n {
            let xj = &x[j * dim..(j + 1) * dim];
            let vj = &v[j * dim..(j + 1) * dim];
            let mut r2 = 0.0;
            let mut u2 = 0.0;
            for k in 0..dim {
                let dx = xi[k] - xj[k];
                r2 += dx * dx;
                dv[k] = vj[k] - vi[k];
                u2 += dv[k] * dv[k];
            }
            if u2 == 0.0 {
                continue;
            }
            let w = params.kernel.eval_unchecked(r2.sqrt()) * phi_scale(u2.sqrt(), params.p);
            let (wi, wj) = match coupling {
                Coupling::MassWeighted => (w * m[j], w * m[i]),
                Coupling::Uniform => (w * inv_n, w * inv_n),
            };
            for k in 0..dim {
                out[i * dim + k] += wi * dv[k];
                out[j * dim + k] -= wj * dv[k];
            }
        }
    }
}

/// Alignment acceleration of every agent, row-major `N × d`.
pub fn alignment_accel(state: &ParticleState, params: &SimParams, coupling: Coupling) -> Vec<f64> {
    let mut out = vec![0.0; state.x.len()];
    accel_into(&state.x, &state.v, &state.m, state.dim, params, coupling, &mut out);
    out
}

/// The particle system as a first-order ODE on `y = [x, v]`.
pub struct ParticleSystem<'a> {
    params: &'a SimParams,
    m: &'a [f64],
    dim: usize,
    coupling: Coupling,
}

impl<'a> ParticleSystem<'a> {
    pub fn new(params: &'a SimParams, state: &'a ParticleState, coupling: Coupling) -> Self {
        ParticleSystem {
            params,
            m: &state.m,
            dim: state.dim,
            coupling,
        }
    }
}

impl OdeSystem for ParticleSystem<'_> {
    fn dim(&self) -> usize {
        2 * self.m.len() * self.dim
    }

    fn rhs(&self, _t: f64, y: &[f64], dy: &mut [f64]) {
        let half = y.len() / 2;
        let (x, v) = y.split_at(half);
        let (dx, dv) = dy.split_at_mut(half);
        dx.copy_from_slice(v);
        accel_into(x, v, self.m, self.dim, self.params, self.coupling, dv);
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParticleOptions {
    pub solver: SolverOptions,
    pub coupling: Coupling,
    /// Store the full state at each sample.
    pub snapshots: bool,
    /// Stop (status `Halted`) once `V` falls below this value.
    pub halt_below: Option<f64>,
}

impl Default for ParticleOptions {
    fn default() -> Self {
        ParticleOptions {
            solver: SolverOptions::default(),
            coupling: Coupling::MassWeighted,
            snapshots: false,
            halt_below: None,
        }
    }
}

/// Integrate to `t_end`, recording `(D, V, Σ m_i v_i)` at the schedule's
/// times. Runs with `p < 2` stop once `V` drops below
/// [`coalescence_threshold`] of the solver tolerance.
pub fn integrate(
    state: &ParticleState,
    params: &SimParams,
    t_end: f64,
    schedule: &Schedule,
    opts: &ParticleOptions,
) -> Result<Trajectory> {
    params.validate()?;
    let outputs = schedule.times(state.t, t_end)?;
    let sys = ParticleSystem::new(params, state, opts.coupling);
    let dim = state.dim;
    let half = state.x.len();
    let mut y0 = state.x.clone();
    y0.extend_from_slice(&state.v);

    let record = |t: f64, y: &[f64]| {
        let (x, v) = y.split_at(half);
        let mut s = Sample::new(t, max_pairwise(x, dim), max_pairwise(v, dim));
        s.momentum = Some(momentum(v, &state.m, dim));
        if opts.snapshots {
            s.snapshot = Some(Snapshot {
                x: x.to_vec(),
                v: v.to_vec(),
            });
        }
        s
    };

    let mut samples: Vec<Sample> = Vec::with_capacity(outputs.len());
    let watch_coalescence = params.p < 2.0;
    let threshold = coalescence_threshold(opts.solver.tol.atol);
    let result = ode::solve(
        &sys,
        state.t,
        &y0,
        &outputs,
        &opts.solver,
        |t, y| samples.push(record(t, y)),
        |_, y| {
            let v = max_pairwise(&y[half..], dim);
            if watch_coalescence && v < threshold {
                Flow::Halt("coalesced".into())
            } else if opts.halt_below.is_some_and(|h| v < h) {
                Flow::Halt(format!("V below {:e}", opts.halt_below.unwrap_or(0.0)))
            } else {
                Flow::Continue
            }
        },
    );
    let source = Source::Particle {
        params: *params,
        coupling: opts.coupling,
        n: state.n(),
        dim,
    };
    match result {
        Ok(out) => {
            let status = match out.halted {
                Some((t, reason)) => {
                    if samples.last().is_none_or(|s| s.t < t) {
                        samples.push(record(t, &out.y));
                    }
                    if reason == "coalesced" {
                        RunStatus::Coalesced { t }
                    } else {
                        RunStatus::Halted { t, reason }
                    }
                }
                None => RunStatus::Completed,
            };
            Ok(Trajectory {
                samples,
                coords: crate::trajectory::Coords::Raw,
                source,
                meta: IntegratorMeta {
                    stats: out.stats,
                    tol: opts.solver.tol,
                },
                status,
            })
        }
        Err(fail) => {
            let partial = Trajectory {
                samples,
                coords: crate::trajectory::Coords::Raw,
                source,
                meta: IntegratorMeta {
                    stats: fail.stats,
                    tol: opts.solver.tol,
                },
                status: RunStatus::Halted {
                    t: fail.t,
                    reason: fail.reason.clone(),
                },
            };
            Err(Error::Integration {
                t: fail.t,
                reason: fail.reason,
                partial: Box::new(partial),
            })
        }
    }
}

/// Rate constant `κ` of the exact two-particle reduction
/// `V' = -κ φ(D) Φ(V)` for two unit masses.
pub fn two_particle_rate(coupling: Coupling) -> f64 {
    match coupling {
        // each agent feels its partner's unit mass; the relative velocity
        // picks up both contributions
        Coupling::MassWeighted => 2.0,
        Coupling::Uniform => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::KernelSpec;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn params(p: f64, kernel: KernelSpec, mass: f64) -> SimParams {
        SimParams::new(p, kernel, mass).unwrap()
    }

    #[test]
    fn two_particle_initial_state() {
        let s = init_two_particle(1.0, 1.0).unwrap();
        assert_eq!(s.x, vec![-0.5, 0.5]);
        assert_eq!(s.v, vec![-0.5, 0.5]);
        let s = init_two_particle(2.0, 0.01).unwrap();
        assert_eq!(diameters(&s), (2.0, 0.01));
        assert_eq!(s.momentum(), vec![0.0]);
        assert!(init_two_particle(0.0, 1.0).is_err());
        assert!(init_two_particle(1.0, -1.0).is_err());
    }

    #[test]
    fn diameters_examples() {
        let one = ParticleState::new(2, vec![1.0, 2.0], vec![3.0, 4.0], vec![1.0]).unwrap();
        assert_eq!(diameters(&one), (0.0, 0.0));
        let line = ParticleState::new(1, vec![0.0, 1.0, 5.0], vec![2.0; 3], vec![1.0; 3]).unwrap();
        assert_eq!(diameters(&line), (5.0, 0.0));
    }

    #[test]
    fn hand_evaluated_pair_force() {
        let s = init_two_particle(1.0, 1.0).unwrap();
        let sp = params(3.0, KernelSpec::constant(1.0).unwrap(), 2.0);
        let a = alignment_accel(&s, &sp, Coupling::MassWeighted);
        assert_eq!(a, vec![1.0, -1.0]);
        let a = alignment_accel(&s, &sp, Coupling::Uniform);
        assert_eq!(a, vec![0.5, -0.5]);
    }

    #[test]
    fn equal_velocities_feel_no_force() {
        let s = ParticleState::new(
            2,
            vec![0.0, 0.0, 1.0, 2.0, -3.0, 0.5],
            [0.3, -0.2].repeat(3),
            vec![1.0; 3],
        )
        .unwrap();
        let sp = params(2.5, KernelSpec::smooth_tail(1.0).unwrap(), 3.0);
        assert!(alignment_accel(&s, &sp, Coupling::MassWeighted)
            .iter()
            .all(|&a| a == 0.0));
    }

    #[test]
    fn resting_state_stays_put() {
        let s = ParticleState::new(1, vec![0.0, 1.0, 3.0], vec![0.0; 3], vec![1.0; 3]).unwrap();
        let sp = params(3.0, KernelSpec::smooth_tail(0.5).unwrap(), 3.0);
        let traj = integrate(&s, &sp, 10.0, &Schedule::Linear { n: 5 }, &ParticleOptions::default()).unwrap();
        for smp in &traj.samples {
            assert_eq!((smp.d, smp.v), (3.0, 0.0));
        }
    }

    #[test]
    fn two_particles_follow_closed_form() {
        // V' = -2 V^2 for the constant kernel at p = 3, so V = 1/(1 + 2t)
        let s = init_two_particle(1.0, 1.0).unwrap();
        let sp = params(3.0, KernelSpec::constant(1.0).unwrap(), 2.0);
        let traj = integrate(&s, &sp, 100.0, &Schedule::log(20), &ParticleOptions::default()).unwrap();
        for smp in &traj.samples {
            assert_relative_eq!(smp.v, 1.0 / (1.0 + 2.0 * smp.t), max_relative = 1e-6);
        }
    }

    #[test]
    fn coalescence_is_reported_below_p_two() {
        let s = init_two_particle(1.0, 1.0).unwrap();
        let sp = params(1.5, KernelSpec::constant(1.0).unwrap(), 2.0);
        let traj = integrate(&s, &sp, 10.0, &Schedule::Linear { n: 10 }, &ParticleOptions::default()).unwrap();
        match traj.status {
            // (V^{1/2})' = -1 for κ = 2, so V vanishes at t = 1
            RunStatus::Coalesced { t } => assert!((t - 1.0).abs() < 1e-3, "t = {t}"),
            ref other => panic!("unexpected status {other:?}"),
        }
        assert!(traj.last().v < coalescence_threshold(1e-10));
    }

    #[test]
    fn snapshots_are_written() {
        let s = init_two_particle(1.0, 0.5).unwrap();
        let sp = params(2.0, KernelSpec::constant(1.0).unwrap(), 2.0);
        let opts = ParticleOptions {
            snapshots: true,
            ..Default::default()
        };
        let traj = integrate(&s, &sp, 1.0, &Schedule::Linear { n: 2 }, &opts).unwrap();
        let mut buf = Vec::new();
        traj.write_snapshots(&mut buf, 1).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("t,agent,x0,v0\n"));
        assert_eq!(text.lines().count(), 1 + 3 * 2);
    }

    proptest! {
        #[test]
        fn momentum_is_balanced(seed in any::<u64>(), n in 1usize..12, dim in 1usize..4, p in 1.2f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = ParticleState::random(&mut rng, n, dim, 3.0, 2.0).unwrap();
            for mi in s.m.iter_mut() {
                *mi = rng.random_range(0.1..2.0);
            }
            let total = s.total_mass();
            let sp = params(p, KernelSpec::smooth_tail(1.3).unwrap(), total);
            let a = alignment_accel(&s, &sp, Coupling::MassWeighted);
            let net = momentum(&a, &s.m, dim);
            let scale: f64 = a.iter().map(|c| c.abs()).sum::<f64>() * 2.0 + 1.0;
            for c in net {
                prop_assert!(c.abs() <= 1e-13 * scale);
            }
        }

        #[test]
        fn diameters_are_translation_invariant(seed in any::<u64>(), shift in -1e3f64..1e3, boost in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let s = ParticleState::random(&mut rng, 5, 2, 2.0, 1.0).unwrap();
            let mut moved = s.clone();
            moved.x.iter_mut().for_each(|c| *c += shift);
            moved.v.iter_mut().for_each(|c| *c += boost);
            let (d0, v0) = diameters(&s);
            let (d1, v1) = diameters(&moved);
            prop_assert!((d0 - d1).abs() <= 1e-12 * (1.0 + shift.abs()));
            prop_assert!((v0 - v1).abs() <= 1e-12 * (1.0 + boost.abs()));
        }
    }
}
