//! Batch runs over the `(p, α)` plane with per-row classification, fits
//! and region checks.
//!
//! Rows are independent and single-threaded; they run on a rayon pool of
//! `jobs` threads and are collected in grid order, so output files depend
//! only on the configuration.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::kernel_from_parts;
use crate::envelope::{self, alignment_constant, EnvelopeOptions, EnvelopeParams, EnvelopeState, EnvelopeSystem};
use crate::error::{Error, Result};
use crate::model::{KernelSpec, SimParams, DEFAULT_R_MIN};
use crate::ode::Schedule;
use crate::particle::{self, Coupling, ParticleOptions, ParticleState};
use crate::rates::{self, Field, RateFit, ScenarioClass, ScenarioLabel};
use crate::regions::{self, check_containment, FloorOutcome, RegionSpec};
use crate::svg;
use crate::trajectory::{Coords, RunStatus, Trajectory};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    Envelope,
    Particle,
}

fn default_particles() -> usize {
    2
}
fn default_samples() -> usize {
    200
}
fn default_jobs() -> usize {
    1
}
fn default_kernel() -> String {
    "capped_power".into()
}
fn default_mass() -> f64 {
    2.0
}

/// Sweep description; also the schema of the sweep config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub p_grid: Vec<f64>,
    pub alpha_grid: Vec<f64>,
    /// `(D0, V0)` pairs (`(x0, v0)` for two-particle runs).
    pub ic_set: Vec<(f64, f64)>,
    pub engine: Engine,
    /// Agent count for the particle engine.
    #[serde(default = "default_particles")]
    pub particles: usize,
    pub t_end: f64,
    /// Number of log-spaced samples.
    #[serde(default = "default_samples")]
    pub samples: usize,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
    #[serde(default = "default_jobs")]
    pub jobs: usize,
    #[serde(default)]
    pub seed: u64,
    /// `capped_power` or `smooth_tail`; `α` comes from the grid.
    #[serde(default = "default_kernel")]
    pub kernel: String,
    /// Total mass for the envelope engine.
    #[serde(default = "default_mass")]
    pub total_mass: f64,
    #[serde(default)]
    pub plots: bool,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: SweepConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.p_grid.is_empty() || self.alpha_grid.is_empty() || self.ic_set.is_empty() {
            return Err(Error::Config("p_grid, alpha_grid and ic_set must be nonempty".into()));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(Error::Config(format!("t_end must be > 0, got {}", self.t_end)));
        }
        if self.samples < rates::MIN_FIT_POINTS {
            return Err(Error::Config(format!(
                "need at least {} samples",
                rates::MIN_FIT_POINTS
            )));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be >= 1".into()));
        }
        if self.engine == Engine::Particle && self.particles < 2 {
            return Err(Error::Config("particle engine needs at least 2 agents".into()));
        }
        if self.ic_set.iter().any(|&(d, v)| !(d > 0.0 && v > 0.0)) {
            return Err(Error::Config("initial diameters must be positive".into()));
        }
        if !matches!(
            self.kernel.as_str(),
            "capped_power" | "capped" | "smooth_tail" | "smooth"
        ) {
            return Err(Error::Config(format!(
                "sweep kernel must be capped_power or smooth_tail, got {:?}",
                self.kernel
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    #[serde(rename = "n/a")]
    NotApplicable,
    Unresolved,
    Failed,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::NotApplicable => "n/a",
            Verdict::Unresolved => "unresolved",
            Verdict::Failed => "failed",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub p: f64,
    pub alpha: f64,
    #[serde(rename = "D0")]
    pub d0: f64,
    #[serde(rename = "V0")]
    pub v0: f64,
    pub scenario: Option<ScenarioClass>,
    pub v_fit: Option<RateFit>,
    pub d_fit: Option<RateFit>,
    pub log_fit: Option<RateFit>,
    /// Fitted rate of `ln V` against `t` for exponential rows; reported in
    /// the `V_exp_fit` column in place of the power fit.
    pub v_exp_rate: Option<f64>,
    pub region_check: Verdict,
    pub status: Verdict,
    pub message: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

pub const CSV_HEADER: [&str; 12] = [
    "p",
    "alpha",
    "D0",
    "V0",
    "scenario",
    "V_exp_pred",
    "V_exp_fit",
    "D_exp_pred",
    "D_exp_fit",
    "log_q_fit",
    "region_check",
    "status",
];

fn num(x: Option<f64>) -> String {
    x.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl SweepRow {
    fn record(&self) -> Vec<String> {
        let scen = self.scenario.as_ref();
        let v_pred = scen
            .and_then(|c| c.predicted_v_exponent)
            .map(|r| match r.power() {
                Some(x) => format!("{x:?}"),
                None => "exponential".into(),
            })
            .unwrap_or_default();
        vec![
            format!("{:?}", self.p),
            format!("{:?}", self.alpha),
            format!("{:?}", self.d0),
            format!("{:?}", self.v0),
            scen.map(|c| c.label.to_string()).unwrap_or_default(),
            v_pred,
            num(self.v_exp_rate.or(self.v_fit.map(|f| f.exponent))),
            num(scen.and_then(|c| c.predicted_d_exponent)),
            num(self.d_fit.map(|f| f.exponent)),
            num(self.log_fit.and_then(|f| f.log_power)),
            self.region_check.to_string(),
            self.status.to_string(),
        ]
    }
}

impl SweepResult {
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(CSV_HEADER)?;
        for row in &self.rows {
            wr.write_record(row.record())?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Write `sweep.csv`, `sweep.json` and optional plots into `dir`.
    pub fn write_files(&self, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join("sweep.csv");
        self.write_csv(fs::File::create(&csv_path)?)?;
        let json_path = dir.join("sweep.json");
        fs::write(&json_path, serde_json::to_string_pretty(self)?)?;
        Ok((csv_path, json_path))
    }
}

/// Tolerances of the rate checks.
const S1_TOL: f64 = 0.03;
const S2_TOL: f64 = 0.05;
const PLATEAU_TOL: f64 = 0.01;
const LOG_TOL: f64 = 0.15;

struct RowRun {
    traj: Trajectory,
    lambda_c: f64,
    /// `ΛC` when a rigorous upper rate is known for the engine.
    big_lambda_c: Option<f64>,
}

fn row_kernel(cfg: &SweepConfig, alpha: f64) -> Result<KernelSpec> {
    kernel_from_parts(&cfg.kernel, Some(alpha), Some(DEFAULT_R_MIN), None)
}

fn run_row(cfg: &SweepConfig, idx: usize, p: f64, alpha: f64, d0: f64, v0: f64) -> Result<RowRun> {
    let kernel = row_kernel(cfg, alpha)?;
    let schedule = Schedule::log(cfg.samples);
    match cfg.engine {
        Engine::Envelope => {
            let sim = SimParams::new(p, kernel, cfg.total_mass)?;
            let c = alignment_constant(p, cfg.total_mass)?;
            let ep = EnvelopeParams::with_constant(&sim, c)?;
            let sys = EnvelopeSystem::exact(ep, kernel);
            let mut opts = EnvelopeOptions::default();
            // at p = 2 a flocking envelope decays exponentially and an explicit
            // solver ends up stability-limited once V reaches atol
            if p <= 2.0 {
                opts.halt_below = Some(1e-12 * v0);
            }
            let traj = envelope::integrate_envelope(&EnvelopeState::raw(d0, v0)?, &sys, cfg.t_end, &schedule, &opts)?;
            Ok(RowRun {
                traj,
                lambda_c: sim.lambda * c,
                big_lambda_c: Some(sim.big_lambda * c),
            })
        }
        Engine::Particle => {
            let n = cfg.particles;
            let (state, c_low, c_high) = if n == 2 {
                let k2 = particle::two_particle_rate(Coupling::MassWeighted);
                (particle::init_two_particle(d0, v0)?, k2, Some(k2))
            } else {
                (
                    line_configuration(n, d0, v0, cfg.seed.wrapping_add(idx as u64))?,
                    alignment_constant(p, n as f64)?,
                    None,
                )
            };
            let sim = SimParams::new(p, kernel, state.total_mass())?;
            let mut opts = ParticleOptions::default();
            opts.solver.tol = envelope::ENVELOPE_TOL;
            if p <= 2.0 {
                opts.halt_below = Some(1e-12 * v0);
            }
            let traj = particle::integrate(&state, &sim, cfg.t_end, &schedule, &opts)?;
            Ok(RowRun {
                traj,
                lambda_c: sim.lambda * c_low,
                big_lambda_c: c_high.map(|k| sim.big_lambda * k),
            })
        }
    }
}

/// `n` unit masses on a line with diameters `(d0, v0)`: the two extreme
/// agents sit at `∓d0/2` moving with `∓v0/2`, interior agents are drawn
/// uniformly in between.
pub fn line_configuration(n: usize, d0: f64, v0: f64, seed: u64) -> Result<ParticleState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = vec![-0.5 * d0, 0.5 * d0];
    let mut v = vec![-0.5 * v0, 0.5 * v0];
    for _ in 2..n {
        x.push(rng.random_range(-0.5..0.5) * d0);
        v.push(rng.random_range(-0.5..0.5) * v0);
    }
    ParticleState::new(1, x, v, vec![1.0; n])
}

fn contained(traj: &Trajectory, region: &RegionSpec) -> Result<bool> {
    Ok(check_containment(traj, region)?.contained)
}

fn verdict(ok: bool) -> Verdict {
    if ok {
        Verdict::Pass
    } else {
        Verdict::Fail
    }
}

fn region_verdict(
    run: &RowRun,
    label: ScenarioLabel,
    (p, alpha, d0, v0): (f64, f64, f64, f64),
    notes: &mut Vec<String>,
) -> Result<Verdict> {
    let traj = &run.traj;
    Ok(match label {
        ScenarioLabel::S1 => {
            let upper = contained(traj, &regions::region_a_s1(d0, v0, p, alpha, run.lambda_c)?)?;
            let lower = match run.big_lambda_c {
                Some(lc) => contained(traj, &regions::region_b_s1_lower(d0, v0, p, alpha, lc)?)?,
                None => true,
            };
            verdict(upper && lower)
        }
        ScenarioLabel::S2 => verdict(contained(
            traj,
            &regions::fat_tail_region(d0, v0, p, alpha, run.lambda_c)?,
        )?),
        ScenarioLabel::Sb => verdict(contained(traj, &regions::region_a_sb(d0, v0, alpha, run.lambda_c)?)?),
        ScenarioLabel::S3 => {
            let sub = regions::subcritical_membership(d0, v0, p, alpha, run.lambda_c)?;
            if let Some(beta) = sub.witness_beta {
                let bx = regions::scenario2_box(d0, v0, p, alpha, run.lambda_c, beta)?;
                if bx.t_c_star.is_some_and(|t| t < 0.0) {
                    notes.push(format!(
                        "box switch time t_c* = {:.3e} < 0: V0 lies above the box top",
                        bx.t_c_star.unwrap_or(0.0)
                    ));
                }
                match bx.region(v0) {
                    Some(r) => verdict(contained(traj, &r)?),
                    None => Verdict::Unresolved,
                }
            } else if let Some(lc) = run.big_lambda_c {
                match regions::no_alignment_floor_23(d0, v0, p, alpha, lc)? {
                    FloorOutcome::Floors(f) => verdict(contained(traj, &f.region()?)?),
                    FloorOutcome::NotSupercritical(_) => Verdict::Unresolved,
                }
            } else {
                Verdict::Unresolved
            }
        }
        ScenarioLabel::S4 => match run.big_lambda_c {
            Some(lc) => {
                let f = regions::no_alignment_floor(d0, v0, p, alpha, lc, None)?;
                verdict(contained(traj, &f.region()?)?)
            }
            None => Verdict::NotApplicable,
        },
        _ => Verdict::NotApplicable,
    })
}

fn exp_rate(traj: &Trajectory) -> Option<(f64, f64)> {
    let pts: Vec<(f64, f64)> = traj
        .samples
        .iter()
        .filter(|s| s.v > 0.0)
        .map(|s| (s.t, s.v.ln()))
        .collect();
    if pts.len() < rates::MIN_FIT_POINTS {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Some((-slope, r2))
}

fn process_row(cfg: &SweepConfig, idx: usize, p: f64, alpha: f64, d0: f64, v0: f64) -> SweepRow {
    let mut row = SweepRow {
        p,
        alpha,
        d0,
        v0,
        scenario: None,
        v_fit: None,
        d_fit: None,
        log_fit: None,
        v_exp_rate: None,
        region_check: Verdict::NotApplicable,
        status: Verdict::NotApplicable,
        message: None,
    };
    let scen = match rates::classify_scenario(p, alpha) {
        Ok(s) => s,
        Err(e) => {
            row.status = Verdict::Failed;
            row.message = Some(e.to_string());
            return row;
        }
    };
    let label = scen.label;
    row.scenario = Some(scen.clone());
    let run = match run_row(cfg, idx, p, alpha, d0, v0) {
        Ok(r) => r,
        Err(e) => {
            row.status = Verdict::Failed;
            row.message = Some(e.to_string());
            return row;
        }
    };
    let traj = &run.traj;
    if let RunStatus::Extinct { t, .. } | RunStatus::Coalesced { t } = traj.status {
        row.message = Some(format!("V vanished at t = {t}"));
    }

    let mut checks: Vec<bool> = Vec::new();
    let mut notes: Vec<String> = Vec::new();
    let fit_v = rates::fit_power(traj, Field::V, None);
    let fit_d = rates::fit_power(traj, Field::D, None);
    row.v_fit = fit_v.as_ref().ok().copied();
    row.d_fit = fit_d.as_ref().ok().copied();

    match label {
        ScenarioLabel::S0 => match exp_rate(traj) {
            Some((rate, r2)) => {
                row.v_exp_rate = Some(rate);
                checks.push(rate > 0.0 && r2 >= 0.99);
            }
            None => notes.push("too few samples for the exponential fit".into()),
        },
        ScenarioLabel::S1 | ScenarioLabel::S2 | ScenarioLabel::S3 => {
            let subcritical = label != ScenarioLabel::S3
                || regions::subcritical_membership(d0, v0, p, alpha, run.lambda_c).is_ok_and(|m| m.member);
            if subcritical {
                let v_pred = scen.predicted_v_exponent.and_then(|r| r.power()).unwrap_or(f64::NAN);
                let d_pred = scen.predicted_d_exponent.unwrap_or(f64::NAN);
                let tol = if label == ScenarioLabel::S1 { S1_TOL } else { S2_TOL };
                let d_tol = if label == ScenarioLabel::S1 {
                    S1_TOL
                } else {
                    PLATEAU_TOL
                };
                match (&fit_v, &fit_d) {
                    (Ok(fv), Ok(fd)) => {
                        checks.push((fv.exponent - v_pred).abs() <= tol);
                        checks.push((fd.exponent - d_pred).abs() <= d_tol);
                    }
                    (Err(e), _) | (_, Err(e)) => notes.push(e.to_string()),
                }
            }
        }
        ScenarioLabel::Sb => match rates::fit_log_corrected(traj, Field::V, alpha, None) {
            Ok(f) => {
                row.log_fit = Some(f);
                let q_pred = rates::predicted_log_power(Field::V, alpha).unwrap_or(f64::NAN);
                checks.push((f.log_power.unwrap_or(f64::NAN) - q_pred).abs() <= LOG_TOL);
            }
            Err(e) => notes.push(e.to_string()),
        },
        _ => {}
    }

    row.region_check = match region_verdict(&run, label, (p, alpha, d0, v0), &mut notes) {
        Ok(v) => v,
        Err(e) => {
            notes.push(e.to_string());
            Verdict::Unresolved
        }
    };
    match row.region_check {
        Verdict::Pass => checks.push(true),
        Verdict::Fail => checks.push(false),
        _ => {}
    }
    row.status = if checks.is_empty() {
        Verdict::NotApplicable
    } else {
        verdict(checks.iter().all(|&c| c))
    };
    if !notes.is_empty() {
        let joined = notes.join("; ");
        row.message = Some(match row.message.take() {
            Some(m) => format!("{m}; {joined}"),
            None => joined,
        });
    }

    if cfg.plots {
        if let Some(dir) = &cfg.out_dir {
            let guides = svg::Guides {
                d: scen.predicted_d_exponent,
                v: scen.predicted_v_exponent.and_then(|r| r.power()),
            };
            let title = format!("p = {p}, α = {alpha}, D0 = {d0}, V0 = {v0} ({label})");
            let plot_dir = dir.join("plots");
            let written = fs::create_dir_all(&plot_dir).and_then(|_| {
                fs::write(
                    plot_dir.join(format!("row{idx:04}.svg")),
                    svg::loglog_plot(traj, &title, guides),
                )
            });
            if let Err(e) = written {
                row.message = Some(format!("plot not written: {e}"));
            }
        }
    }
    row
}

/// Run every `(p, α, ic)` combination in grid order.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepResult> {
    cfg.validate()?;
    let mut points = Vec::new();
    for &p in &cfg.p_grid {
        for &alpha in &cfg.alpha_grid {
            for &(d0, v0) in &cfg.ic_set {
                points.push((p, alpha, d0, v0));
            }
        }
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let rows: Vec<SweepRow> = pool.install(|| {
        points
            .par_iter()
            .enumerate()
            .map(|(idx, &(p, alpha, d0, v0))| process_row(cfg, idx, p, alpha, d0, v0))
            .collect()
    });
    let result = SweepResult {
        config: cfg.clone(),
        rows,
    };
    if let Some(dir) = &cfg.out_dir {
        result.write_files(dir)?;
    }
    Ok(result)
}

/// Coordinates a region check of `label` runs in; exposed for reporting.
pub fn region_coords(label: ScenarioLabel) -> Option<Coords> {
    match label {
        ScenarioLabel::S1 => Some(Coords::S1),
        ScenarioLabel::Sb => Some(Coords::Sb),
        ScenarioLabel::S2 => Some(Coords::Raw),
        ScenarioLabel::S3 | ScenarioLabel::S4 => Some(Coords::DScaled { gamma: 1.0 }),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(p: Vec<f64>, a: Vec<f64>, t_end: f64) -> SweepConfig {
        SweepConfig {
            p_grid: p,
            alpha_grid: a,
            ic_set: vec![(1.0, 1.0)],
            engine: Engine::Envelope,
            particles: 2,
            t_end,
            samples: 120,
            out_dir: None,
            jobs: 2,
            seed: 0,
            kernel: "capped_power".into(),
            total_mass: 2.0,
            plots: false,
        }
    }

    #[test]
    fn empty_grid_is_rejected() {
        let c = cfg(vec![4.0], vec![], 1e3);
        assert!(matches!(run_sweep(&c), Err(Error::Config(_))));
    }

    #[test]
    fn config_file_roundtrip() {
        let text = r#"
            p_grid = [4.0, 2.5]
            alpha_grid = [0.5]
            ic_set = [[1.0, 1.0]]
            engine = "envelope"
            t_end = 1e4
        "#;
        let c = SweepConfig::from_toml(text).unwrap();
        assert_eq!(c.samples, 200);
        assert_eq!(c.kernel, "capped_power");
        assert!(SweepConfig::from_toml(
            "p_grid = [1.0]\nalpha_grid=[0.0]\nic_set=[[1.0,1.0]]\nengine='envelope'\nt_end=1\nbogus=1"
        )
        .is_err());
    }

    #[test]
    fn row_failures_do_not_abort() {
        // p = 1.5 with a tail kernel is out of range; p = 0.5 cannot be classified
        let c = cfg(vec![0.5, 1.5, 4.0], vec![0.5], 1e3);
        let res = run_sweep(&c).unwrap();
        assert_eq!(res.rows.len(), 3);
        assert_eq!(res.rows[0].status, Verdict::Failed);
        assert_eq!(res.rows[1].scenario.as_ref().unwrap().label, ScenarioLabel::OutOfRange);
    }

    #[test]
    fn scenario_one_row_passes() {
        let res = run_sweep(&cfg(vec![4.0], vec![0.5], 1e6)).unwrap();
        let row = &res.rows[0];
        assert_eq!(row.scenario.as_ref().unwrap().label, ScenarioLabel::S1);
        assert_eq!(
            (row.region_check, row.status),
            (Verdict::Pass, Verdict::Pass),
            "{row:?}"
        );
    }

    #[test]
    fn output_does_not_depend_on_jobs() {
        let mut c = cfg(vec![2.0, 2.5, 4.0], vec![0.0, 0.5], 1e4);
        c.ic_set.push((0.3, 2.0));
        let mut first = Vec::new();
        run_sweep(&c).unwrap().write_csv(&mut first).unwrap();
        c.jobs = 1;
        let mut second = Vec::new();
        run_sweep(&c).unwrap().write_csv(&mut second).unwrap();
        assert_eq!(first, second);
        assert_eq!(String::from_utf8(first).unwrap().lines().count(), 1 + 12);
    }

    #[test]
    fn line_configuration_has_requested_diameters() {
        let s = line_configuration(8, 2.0, 0.5, 3).unwrap();
        assert_eq!(particle::diameters(&s), (2.0, 0.5));
    }
}
