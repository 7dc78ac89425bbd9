//! Adaptive Dormand-Prince 5(4) stepper.
//!
//! The stepper never interpolates: every requested output time is hit
//! exactly by shortening the step that would cross it. This keeps long
//! log-spaced runs free of dense-output error.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Right-hand side `y' = f(t, y)`.
pub trait OdeSystem {
    fn dim(&self) -> usize;
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]);
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub atol: f64,
    pub rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            atol: 1e-10,
            rtol: 1e-9,
        }
    }
}

impl Tolerances {
    pub fn new(atol: f64, rtol: f64) -> Self {
        Tolerances { atol, rtol }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverOptions {
    pub tol: Tolerances,
    /// First trial step; estimated from the initial slope when `None`.
    pub h_init: Option<f64>,
    pub max_steps: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: Tolerances::default(),
            h_init: None,
            max_steps: 50_000_000,
        }
    }
}

impl SolverOptions {
    pub fn with_tol(atol: f64, rtol: f64) -> Self {
        SolverOptions {
            tol: Tolerances::new(atol, rtol),
            ..Default::default()
        }
    }
}

/// Counters collected over one solve.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverStats {
    pub steps: u64,
    pub rejected: u64,
    pub rhs_evals: u64,
    /// Largest scaled error estimate among accepted steps (<= 1).
    pub max_error: f64,
}

/// Returned by the per-step hook.
#[derive(Clone, Debug, PartialEq)]
pub enum Flow {
    Continue,
    Halt(String),
}

#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub stats: SolverStats,
    /// `(t, reason)` when the per-step hook stopped the run early.
    pub halted: Option<(f64, String)>,
    pub t: f64,
    pub y: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct SolveFailure {
    pub t: f64,
    pub y: Vec<f64>,
    pub reason: String,
    pub stats: SolverStats,
}

/// Output time schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    /// `n` equally spaced times after the start.
    Linear { n: usize },
    /// `n` log-spaced times from `start + first` to the end.
    Log { n: usize, first: Option<f64> },
    /// Explicit times; must be increasing and inside the run.
    Times(Vec<f64>),
}

impl Schedule {
    pub fn log(n: usize) -> Self {
        Schedule::Log { n, first: None }
    }

    /// Output times for a run on `[t0, t_end]`, including `t0` itself.
    pub fn times(&self, t0: f64, t_end: f64) -> Result<Vec<f64>> {
        if !(t_end > t0) || !t0.is_finite() || !t_end.is_finite() {
            return Err(Error::param(format!("need t_end > t0, got t0 = {t0}, t_end = {t_end}")));
        }
        let span = t_end - t0;
        let mut out = vec![t0];
        match self {
            Schedule::Linear { n } => {
                if *n == 0 {
                    return Err(Error::param("schedule must be nonempty"));
                }
                out.extend((1..=*n).map(|k| t0 + span * k as f64 / *n as f64));
            }
            Schedule::Log { n, first } => {
                if *n < 2 {
                    return Err(Error::param("log schedule needs at least 2 points"));
                }
                let first = first.unwrap_or(if span > 10.0 { 1e-2 } else { span * 1e-3 });
                if !(first > 0.0 && first < span) {
                    return Err(Error::param(format!("log schedule start {first} outside (0, {span})")));
                }
                let (l0, l1) = (first.ln(), span.ln());
                for k in 0..*n {
                    let s = if k + 1 == *n {
                        span
                    } else {
                        (l0 + (l1 - l0) * k as f64 / (*n - 1) as f64).exp()
                    };
                    out.push(t0 + s);
                }
            }
            Schedule::Times(ts) => {
                if ts.is_empty() {
                    return Err(Error::param("schedule must be nonempty"));
                }
                out.extend(ts.iter().copied().filter(|&t| t > t0));
                if ts.iter().any(|&t| t > t_end || t < t0) {
                    return Err(Error::param("explicit sample time outside [t0, t_end]"));
                }
            }
        }
        if out.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::param("sample times must be strictly increasing"));
        }
        Ok(out)
    }
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

// fifth-order weights minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

struct Work {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
}

impl Work {
    fn new(n: usize) -> Self {
        Work {
            k: std::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
        }
    }
}

fn scaled_norm(v: &[f64], y: &[f64], tol: &Tolerances) -> f64 {
    let n = v.len().max(1) as f64;
    (v.iter()
        .zip(y)
        .map(|(e, yi)| {
            let sc = tol.atol + tol.rtol * yi.abs();
            (e / sc) * (e / sc)
        })
        .sum::<f64>()
        / n)
        .sqrt()
}

fn initial_step<S: OdeSystem>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    tol: &Tolerances,
    stats: &mut SolverStats,
) -> f64 {
    let d0 = scaled_norm(y0, y0, tol);
    let d1 = scaled_norm(f0, y0, tol);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    sys.rhs(t0 + h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled_norm(&diff, y0, tol) / h0;
    let m = d1.max(d2);
    let h1 = if m <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / m).powf(0.2)
    };
    let h = (100.0 * h0).min(h1);
    if h.is_finite() && h > 0.0 {
        h
    } else {
        1e-6
    }
}

/// Integrate from `t0`, calling `on_output` at each time in `outputs`
/// (which must start at or after `t0` and increase strictly) and `after_step`
/// after every accepted step.
pub fn solve<S, O, H>(
    sys: &S,
    t0: f64,
    y0: &[f64],
    outputs: &[f64],
    opts: &SolverOptions,
    mut on_output: O,
    mut after_step: H,
) -> std::result::Result<SolveOutcome, SolveFailure>
where
    S: OdeSystem,
    O: FnMut(f64, &[f64]),
    H: FnMut(f64, &[f64]) -> Flow,
{
    let n = sys.dim();
    assert_eq!(y0.len(), n, "state length must match system dimension");
    let tol = opts.tol;
    let mut stats = SolverStats::default();
    let mut t = t0;
    let mut y = y0.to_vec();
    let mut w = Work::new(n);

    let mut out_idx = 0;
    while out_idx < outputs.len() && outputs[out_idx] <= t0 {
        on_output(t0, &y);
        out_idx += 1;
    }
    if out_idx == outputs.len() {
        return Ok(SolveOutcome {
            stats,
            halted: None,
            t,
            y,
        });
    }

    sys.rhs(t, &y, &mut w.k[0]);
    stats.rhs_evals += 1;
    let mut h = opts
        .h_init
        .unwrap_or_else(|| initial_step(sys, t, &y, &w.k[0], &tol, &mut stats));
    let mut last_rejected = false;

    while out_idx < outputs.len() {
        let target = outputs[out_idx];
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(SolveFailure {
                t,
                y,
                reason: format!("step budget of {} exhausted", opts.max_steps),
                stats,
            });
        }
        let min_step = 16.0 * f64::EPSILON * t.abs().max(f64::MIN_POSITIVE);
        if !(h > min_step) {
            return Err(SolveFailure {
                t,
                y,
                reason: format!("step size underflow (h = {h:e})"),
                stats,
            });
        }

        let remaining = target - t;
        let clipped = h >= remaining * (1.0 - 1e-12);
        let h_trial = if clipped { remaining } else { h };

        step(sys, t, &y, h_trial, &mut w);
        stats.rhs_evals += 6;

        // error estimate, accumulated into ytmp
        let hk = h_trial;
        for i in 0..n {
            w.ytmp[i] = hk
                * (E1 * w.k[0][i] + E3 * w.k[2][i] + E4 * w.k[3][i] + E5 * w.k[4][i] + E6 * w.k[5][i] + E7 * w.k[6][i]);
        }
        let err = {
            let ny = n.max(1) as f64;
            (w.ytmp
                .iter()
                .zip(y.iter().zip(&w.ynew))
                .map(|(e, (a, b))| {
                    let sc = tol.atol + tol.rtol * a.abs().max(b.abs());
                    (e / sc) * (e / sc)
                })
                .sum::<f64>()
                / ny)
                .sqrt()
        };

        if !err.is_finite() || w.ynew.iter().any(|v| !v.is_finite()) {
            stats.rejected += 1;
            h = h_trial * 0.25;
            last_rejected = true;
            continue;
        }

        let fac = if err == 0.0 { FAC_MAX } else { SAFETY * err.powf(-0.2) };
        if err <= 1.0 {
            stats.steps += 1;
            stats.max_error = stats.max_error.max(err);
            t = if clipped { target } else { t + h_trial };
            std::mem::swap(&mut y, &mut w.ynew);
            w.k.swap(0, 6);
            let grow = fac.clamp(FAC_MIN, if last_rejected { 1.0 } else { FAC_MAX });
            let proposal = h_trial * grow;
            h = if clipped { proposal.max(h) } else { proposal };
            last_rejected = false;
            if clipped {
                on_output(t, &y);
                out_idx += 1;
            }
            if let Flow::Halt(reason) = after_step(t, &y) {
                return Ok(SolveOutcome {
                    stats,
                    halted: Some((t, reason)),
                    t,
                    y,
                });
            }
        } else {
            stats.rejected += 1;
            h = h_trial * fac.clamp(FAC_MIN, 1.0);
            last_rejected = true;
        }
    }
    Ok(SolveOutcome {
        stats,
        halted: None,
        t,
        y,
    })
}

/// One Dormand-Prince step from `(t, y)` with `k[0] = f(t, y)` already set.
/// Leaves the fifth-order solution in `w.ynew` and `f(t+h, ynew)` in `k[6]`.
fn step<S: OdeSystem>(sys: &S, t: f64, y: &[f64], h: f64, w: &mut Work) {
    let n = y.len();
    let [k1, k2, k3, k4, k5, k6, k7] = &mut w.k;
    let yt = &mut w.ytmp;
    for i in 0..n {
        yt[i] = y[i] + h * A21 * k1[i];
    }
    sys.rhs(t + C2 * h, yt, k2);
    for i in 0..n {
        yt[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    sys.rhs(t + C3 * h, yt, k3);
    for i in 0..n {
        yt[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    sys.rhs(t + C4 * h, yt, k4);
    for i in 0..n {
        yt[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    sys.rhs(t + C5 * h, yt, k5);
    for i in 0..n {
        yt[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    sys.rhs(t + h, yt, k6);
    let yn = &mut w.ynew;
    for i in 0..n {
        yn[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    sys.rhs(t + h, yn, k7);
}
