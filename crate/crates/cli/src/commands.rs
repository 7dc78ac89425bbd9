use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use palign_core::config::{kernel_from_parts, parse_params};
use palign_core::envelope::{alignment_constant, beta_sub, beta_sup, integrate_envelope, EnvelopeOptions, TimeCoord};
use palign_core::particle::{self, Coupling, ParticleOptions, ParticleState};
use palign_core::rates::{classify_scenario, fit_log_corrected, fit_power, lyapunov_series, predicted_log_power, Psi};
use palign_core::regions::{self, check_containment, FloorOutcome};
use palign_core::sweep::{line_configuration, run_sweep, SweepConfig, Verdict};
use palign_core::trajectory::Source;
use palign_core::{
    Coords, EnvelopeParams, EnvelopeState, EnvelopeSystem, Error, Field, RateBound, Schedule, SimParams, Trajectory,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Map, Value};

use crate::{
    BoundArg, CheckArgs, CheckKind, ClassifyArgs, CoordsArg, EnvelopeArgs, FitArgs, ModelArgs, RegionsArgs, RunArgs,
    SimulateArgs, SweepArgs, TrajectoryInput,
};

/// Exit code for a check that ran but did not hold.
const CHECK_FAILED: u8 = 3;

fn print_json(v: &Value) -> Result<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, v)?;
    writeln!(out)?;
    Ok(())
}

fn sim_params(m: &ModelArgs) -> Result<SimParams> {
    if let Some(path) = &m.config {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        return Ok(parse_params(&text)?);
    }
    let p = m.p.ok_or_else(|| anyhow!("--p is required"))?;
    let kernel = kernel_from_parts(m.kernel.name(), Some(m.alpha), Some(m.r_min), Some(m.floor))?;
    let mut params = SimParams::new(p, kernel, m.mass)?;
    if let Some(l) = m.lambda {
        params.lambda = l;
    }
    if let Some(l) = m.big_lambda {
        params.big_lambda = l;
    }
    if let Some(r) = m.r_tail {
        params.r_tail = r;
    }
    params.validate()?;
    Ok(params)
}

fn schedule(run: &RunArgs) -> Schedule {
    if run.linear {
        Schedule::Linear { n: run.samples }
    } else {
        Schedule::log(run.samples)
    }
}

fn apply_tol(tol: &mut palign_core::Tolerances, run: &RunArgs) {
    if let Some(a) = run.atol {
        tol.atol = a;
    }
    if let Some(r) = run.rtol {
        tol.rtol = r;
    }
}

fn last_json(traj: &Trajectory) -> Value {
    traj.samples
        .last()
        .map(|s| json!({"t": s.t, "D": s.d, "V": s.v}))
        .unwrap_or(Value::Null)
}

/// Write the run to `--out` (and report where) or stream the CSV to stdout.
fn emit_run(traj: &Trajectory, run: &RunArgs) -> Result<()> {
    match &run.out {
        Some(dir) => {
            let csv = traj.write_run(dir, &run.runid)?;
            print_json(&json!({
                "csv": csv,
                "json": dir.join(format!("{}_traj.json", run.runid)),
                "status": traj.status,
                "final": last_json(traj),
            }))
        }
        None => Ok(traj.write_csv(std::io::stdout().lock())?),
    }
}

/// Report an integration failure, keeping whatever was computed.
fn integration_result(res: palign_core::Result<Trajectory>, run: &RunArgs) -> Result<ExitCode> {
    match res {
        Ok(traj) => {
            emit_run(&traj, run)?;
            Ok(ExitCode::SUCCESS)
        }
        Err(Error::Integration { t, reason, partial }) => {
            if run.out.is_some() {
                emit_run(&partial, run)?;
            }
            bail!("integration stopped at t = {t}: {reason}")
        }
        Err(e) => Err(e.into()),
    }
}

pub fn simulate(a: SimulateArgs) -> Result<ExitCode> {
    let mut sim = sim_params(&a.model)?;
    if a.n < 2 || a.dim == 0 {
        bail!("need at least two agents in dimension >= 1");
    }
    let mut state = if a.n == 2 && a.dim == 1 {
        particle::init_two_particle(a.run.d0, a.run.v0)?
    } else if a.dim == 1 {
        line_configuration(a.n, a.run.d0, a.run.v0, a.seed)?
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        ParticleState::random(&mut rng, a.n, a.dim, 0.5 * a.run.d0, 0.5 * a.run.v0)?
    };
    let each = sim.total_mass / a.n as f64;
    state.m.iter_mut().for_each(|m| *m = each);
    sim.total_mass = state.total_mass();
    let mut opts = ParticleOptions {
        coupling: if a.uniform {
            Coupling::Uniform
        } else {
            Coupling::MassWeighted
        },
        snapshots: a.snapshots,
        ..Default::default()
    };
    apply_tol(&mut opts.solver.tol, &a.run);
    let res = particle::integrate(&state, &sim, a.run.t_end, &schedule(&a.run), &opts);
    integration_result(res, &a.run)
}

pub fn envelope(a: EnvelopeArgs) -> Result<ExitCode> {
    let sim = sim_params(&a.model)?;
    let c = match a.c {
        Some(c) => c,
        None => alignment_constant(sim.p, sim.total_mass)?,
    };
    let params = EnvelopeParams::with_constant(&sim, c)?;
    let bound = match a.bound {
        BoundArg::Exact => RateBound::Exact,
        BoundArg::Lower => RateBound::Lower,
        BoundArg::Upper => RateBound::Upper,
    };
    let scaled_bound = || -> Result<RateBound> {
        if bound == RateBound::Exact {
            bail!("rescaled coordinates use a tail law; pass --bound lower or --bound upper");
        }
        Ok(bound)
    };
    let (sys, s0) = match a.coords {
        CoordsArg::Raw => {
            let sys = match bound {
                RateBound::Exact => EnvelopeSystem::exact(params, sim.kernel),
                b => EnvelopeSystem::tail(params, b),
            };
            (sys, EnvelopeState::raw(a.run.d0, a.run.v0)?)
        }
        CoordsArg::S1 => (
            EnvelopeSystem::S1 {
                params,
                bound: scaled_bound()?,
            },
            EnvelopeState::at(a.run.d0, a.run.v0, 0.0, TimeCoord::LogTau)?,
        ),
        CoordsArg::Sb => (
            EnvelopeSystem::Sb {
                params,
                bound: scaled_bound()?,
                keep_drift: a.keep_drift,
            },
            EnvelopeState::at(a.run.d0, a.run.v0, 0.0, TimeCoord::LogTau)?,
        ),
    };
    let mut opts = EnvelopeOptions::default();
    apply_tol(&mut opts.solver.tol, &a.run);
    let res = integrate_envelope(&s0, &sys, a.run.t_end, &schedule(&a.run), &opts);
    integration_result(res, &a.run)
}

pub fn classify(a: ClassifyArgs) -> Result<ExitCode> {
    let class = classify_scenario(a.p, a.alpha)?;
    print_json(&serde_json::to_value(class)?)?;
    Ok(ExitCode::SUCCESS)
}

/// Insert `f()` under `key` when it succeeds, otherwise note why it was
/// skipped.
fn try_insert<T: serde::Serialize>(
    out: &mut Map<String, Value>,
    skipped: &mut Map<String, Value>,
    key: &str,
    f: impl FnOnce() -> palign_core::Result<T>,
) -> Result<()> {
    match f() {
        Ok(v) => {
            out.insert(key.into(), serde_json::to_value(v)?);
        }
        Err(e) => {
            skipped.insert(key.into(), Value::String(e.to_string()));
        }
    }
    Ok(())
}

pub fn regions(a: RegionsArgs) -> Result<ExitCode> {
    let (p, alpha, lc) = (a.p, a.alpha, a.lambda_c);
    let big_lc = a.big_lambda_c.unwrap_or(lc);
    if !(lc > 0.0 && big_lc >= lc) {
        bail!("need 0 < lambdaC <= LambdaC, got {lc} and {big_lc}");
    }
    let class = classify_scenario(p, alpha)?;
    let mut out = Map::new();
    let mut skipped = Map::new();
    out.insert("p".into(), json!(p));
    out.insert("alpha".into(), json!(alpha));
    out.insert("lambdaC".into(), json!(lc));
    out.insert("LambdaC".into(), json!(big_lc));
    out.insert("scenario".into(), json!(class.label.to_string()));
    try_insert(&mut out, &mut skipped, "beta_sup", || beta_sup(p, alpha))?;
    try_insert(&mut out, &mut skipped, "beta_sub", || beta_sub(p))?;
    try_insert(&mut out, &mut skipped, "D0_star", || regions::d0_star(p, alpha, lc))?;
    try_insert(&mut out, &mut skipped, "supercritical_thresholds", || {
        regions::supercritical_membership(0.0, 0.0, p, alpha, big_lc)
            .map(|t| json!({"V0_min": t.v_threshold, "x0_over_v0_min": t.x_factor}))
    })?;
    try_insert(&mut out, &mut skipped, "floor_gamma_range", || {
        regions::floor_gamma_range(p, alpha)
    })?;

    if let (Some(d0), Some(v0)) = (a.d0, a.v0) {
        out.insert("D0".into(), json!(d0));
        out.insert("V0".into(), json!(v0));
        try_insert(&mut out, &mut skipped, "region_A_S1", || {
            regions::region_a_s1(d0, v0, p, alpha, lc)
        })?;
        try_insert(&mut out, &mut skipped, "region_B_S1_lower", || {
            regions::region_b_s1_lower(d0, v0, p, alpha, big_lc)
        })?;
        try_insert(&mut out, &mut skipped, "region_A_Sb", || {
            regions::region_a_sb(d0, v0, alpha, lc)
        })?;
        try_insert(&mut out, &mut skipped, "fat_tail_region", || {
            regions::fat_tail_region(d0, v0, p, alpha, lc)
        })?;
        try_insert(&mut out, &mut skipped, "subcritical", || {
            let m = regions::subcritical_membership(d0, v0, p, alpha, lc)?;
            let bx = match m.witness_beta {
                Some(b) => Some(regions::scenario2_box(d0, v0, p, alpha, lc, b)?),
                None => None,
            };
            Ok(json!({"membership": m, "box": bx}))
        })?;
        try_insert(&mut out, &mut skipped, "supercritical", || {
            regions::supercritical_membership(d0, v0, p, alpha, big_lc)
        })?;
        try_insert(&mut out, &mut skipped, "floors", || -> palign_core::Result<Value> {
            if p < 3.0 {
                Ok(match regions::no_alignment_floor_23(d0, v0, p, alpha, big_lc)? {
                    FloorOutcome::Floors(f) => json!(f),
                    FloorOutcome::NotSupercritical(t) => json!({"not_supercritical": t}),
                })
            } else {
                Ok(json!(regions::no_alignment_floor(d0, v0, p, alpha, big_lc, a.gamma)?))
            }
        })?;
    }
    out.insert("not_applicable".into(), Value::Object(skipped));
    print_json(&Value::Object(out))?;
    Ok(ExitCode::SUCCESS)
}

/// Load a trajectory and the `(p, α)` it was produced with.
fn load(input: &TrajectoryInput) -> Result<(Trajectory, f64, f64)> {
    let path = &input.input;
    let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
    let traj = if is_json {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
    } else {
        let mut traj = Trajectory::read_csv_file(path)?;
        let sidecar: PathBuf = path.with_extension("json");
        if let Ok(text) = fs::read_to_string(&sidecar) {
            let meta: Trajectory =
                serde_json::from_str(&text).with_context(|| format!("parsing {}", sidecar.display()))?;
            if meta.coords == traj.coords || matches!(traj.source, Source::Imported { .. }) {
                traj.coords = meta.coords;
                traj.source = meta.source;
                traj.meta = meta.meta;
                traj.status = meta.status;
            }
        }
        traj
    };
    let known = traj.exponents();
    let p = input.p.or(known.map(|k| k.0));
    let alpha = input.alpha.or(known.map(|k| k.1));
    match (p, alpha) {
        (Some(p), Some(alpha)) => Ok((traj, p, alpha)),
        _ => bail!("{} carries no model metadata; pass --p and --alpha", path.display()),
    }
}

pub fn fit(a: FitArgs) -> Result<ExitCode> {
    let (traj, p, alpha) = load(&a.traj)?;
    let raw = if traj.coords == Coords::Raw {
        traj
    } else {
        bail!("fits need a raw-time trajectory, got {} coordinates", traj.coords)
    };
    let window = a.window.map(|w| (w[0], w[1]));
    let mut out = Map::new();
    out.insert("p".into(), json!(p));
    out.insert("alpha".into(), json!(alpha));
    if let Ok(class) = classify_scenario(p, alpha) {
        out.insert("scenario".into(), json!(class));
    }
    out.insert("V".into(), json!(fit_power(&raw, Field::V, window)?));
    out.insert("D".into(), json!(fit_power(&raw, Field::D, window)?));
    if p == 3.0 && (0.0..1.0).contains(&alpha) {
        out.insert(
            "log_corrected".into(),
            json!({
                "V": fit_log_corrected(&raw, Field::V, alpha, window)?,
                "D": fit_log_corrected(&raw, Field::D, alpha, window)?,
                "predicted_V": predicted_log_power(Field::V, alpha)?,
                "predicted_D": predicted_log_power(Field::D, alpha)?,
            }),
        );
    }
    print_json(&Value::Object(out))?;
    Ok(ExitCode::SUCCESS)
}

/// `(λC, ΛC)` implied by the run that produced `traj`, when known.
fn rate_constants(traj: &Trajectory, p: f64) -> Result<(Option<f64>, Option<f64>)> {
    Ok(match &traj.source {
        Source::Envelope { params, .. } => (
            Some(params.rate(RateBound::Lower)?),
            Some(params.rate(RateBound::Upper)?),
        ),
        Source::Particle {
            params, coupling, n, ..
        } => {
            if *n == 2 {
                let k = particle::two_particle_rate(*coupling);
                (Some(params.lambda * k), Some(params.big_lambda * k))
            } else if *coupling == Coupling::MassWeighted {
                (Some(params.lambda * alignment_constant(p, params.total_mass)?), None)
            } else {
                (None, None)
            }
        }
        Source::Imported { .. } => (None, None),
    })
}

fn first_point(traj: &Trajectory) -> Result<(f64, f64)> {
    let s = traj.samples.first().ok_or_else(|| anyhow!("empty trajectory"))?;
    Ok((s.d, s.v))
}

fn need(x: Option<f64>, flag: &str) -> Result<f64> {
    x.ok_or_else(|| anyhow!("the rate constant is not known from the file; pass --{flag}"))
}

fn in_coords(traj: &Trajectory, target: Coords, p: f64, alpha: f64) -> Result<Trajectory> {
    Ok(traj.convert_with(target, p, alpha)?)
}

pub fn check(a: CheckArgs) -> Result<ExitCode> {
    let (traj, p, alpha) = load(&a.traj)?;
    let (lc_meta, big_meta) = rate_constants(&traj, p)?;
    let lc = a.lambda_c.or(lc_meta);
    let big_lc = a.big_lambda_c.or(big_meta);
    let (d0, v0) = first_point(&traj)?;

    if a.kind == CheckKind::Lyapunov {
        let raw = in_coords(&traj, Coords::Raw, p, alpha)?;
        let (c, psi) = match &traj.source {
            Source::Envelope {
                params,
                bound: RateBound::Exact,
                kernel: Some(k),
            } => (params.c, Psi::Kernel { kernel: *k }),
            Source::Particle {
                params, coupling, n: 2, ..
            } => (
                particle::two_particle_rate(*coupling),
                Psi::Kernel { kernel: params.kernel },
            ),
            _ => (need(lc, "lambdaC")?, Psi::Power { alpha }),
        };
        let series = lyapunov_series(&raw, p, c, &psi)?;
        print_json(&json!({
            "kind": "lyapunov",
            "monotone": series.monotone,
            "max_increase": series.max_increase,
            "tol": series.tol,
            "E0": series.values.first(),
            "E_end": series.values.last(),
            "samples": series.values.len(),
        }))?;
        return Ok(if series.monotone {
            ExitCode::SUCCESS
        } else {
            ExitCode::from(CHECK_FAILED)
        });
    }

    let region = match a.kind {
        CheckKind::RegionAS1 => regions::region_a_s1(d0, v0, p, alpha, need(lc, "lambdaC")?)?,
        CheckKind::RegionBS1 => regions::region_b_s1_lower(d0, v0, p, alpha, need(big_lc, "LambdaC")?)?,
        CheckKind::RegionSb => regions::region_a_sb(d0, v0, alpha, need(lc, "lambdaC")?)?,
        CheckKind::FatTail => regions::fat_tail_region(d0, v0, p, alpha, need(lc, "lambdaC")?)?,
        CheckKind::Box => {
            let lc = need(lc, "lambdaC")?;
            let m = regions::subcritical_membership(d0, v0, p, alpha, lc)?;
            let beta = m
                .witness_beta
                .ok_or_else(|| anyhow!("initial data ({d0}, {v0}) are not subcritical"))?;
            regions::scenario2_box(d0, v0, p, alpha, lc, beta)?
                .region(v0)
                .ok_or_else(|| anyhow!("no feasible box for beta = {beta}"))?
        }
        CheckKind::Floors => {
            let big_lc = need(big_lc, "LambdaC")?;
            let floors = if p < 3.0 {
                match regions::no_alignment_floor_23(d0, v0, p, alpha, big_lc)? {
                    FloorOutcome::Floors(f) => f,
                    FloorOutcome::NotSupercritical(_) => bail!("initial data ({d0}, {v0}) are not supercritical"),
                }
            } else {
                regions::no_alignment_floor(d0, v0, p, alpha, big_lc, a.gamma)?
            };
            floors.region()?
        }
        CheckKind::Lyapunov => unreachable!(),
    };
    let moved = in_coords(&traj, region.coords, p, alpha)?;
    let report = check_containment(&moved, &region)?;
    print_json(&json!({
        "kind": format!("{:?}", a.kind),
        "region": region,
        "report": report,
    }))?;
    Ok(if report.contained {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(CHECK_FAILED)
    })
}

pub fn sweep(a: SweepArgs) -> Result<ExitCode> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut cfg = SweepConfig::from_toml(&text)?;
    if let Some(out) = a.out {
        cfg.out_dir = Some(out);
    }
    if let Some(j) = a.jobs {
        cfg.jobs = j;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    let dir = cfg.out_dir.get_or_insert_with(|| PathBuf::from("sweep_out")).clone();
    let res = run_sweep(&cfg)?;
    let count = |v: Verdict| res.rows.iter().filter(|r| r.status == v).count();
    print_json(&json!({
        "rows": res.rows.len(),
        "pass": count(Verdict::Pass),
        "fail": count(Verdict::Fail),
        "failed": count(Verdict::Failed),
        "n/a": count(Verdict::NotApplicable),
        "csv": Path::new(&dir).join("sweep.csv"),
        "json": Path::new(&dir).join("sweep.json"),
    }))?;
    Ok(ExitCode::SUCCESS)
}
