//! Exponent fits, scenario classification over the `(p, α)` plane and the
//! Lyapunov functional.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::envelope::{beta_sup, gamma_log};
use crate::error::{Error, Result};
use crate::model::{check_p, KernelSpec};
use crate::quad;
use crate::trajectory::{Coords, Trajectory};

const EPS_CMP: f64 = 1e-12;

/// Minimum number of samples in a fit window.
pub const MIN_FIT_POINTS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Field {
    D,
    V,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Field::D => "D",
            Field::V => "V",
        })
    }
}

impl std::str::FromStr for Field {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "D" | "d" => Ok(Field::D),
            "V" | "v" => Ok(Field::V),
            _ => Err(Error::Config(format!("unknown field {s:?}, expected D or V"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub field: Field,
    /// Power of `t`: decay exponent for `V` (reported positive), growth
    /// exponent for `D`. Fixed by the model for log-corrected fits.
    pub exponent: f64,
    /// Fitted power of `log t`, for log-corrected fits.
    pub log_power: Option<f64>,
    pub r2: f64,
    pub window: (f64, f64),
    pub n: usize,
}

struct Line {
    slope: f64,
    r2: f64,
}

fn least_squares(x: &[f64], y: &[f64]) -> Line {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    let slope = sxy / sxx;
    let resid = (syy - slope * sxy).max(0.0);
    let r2 = if syy == 0.0 {
        1.0
    } else {
        (1.0 - resid / syy).clamp(0.0, 1.0)
    };
    Line { slope, r2 }
}

/// Default window: the last two decades of the run.
pub fn default_window(traj: &Trajectory) -> (f64, f64) {
    let t_end = traj.last().t;
    (t_end / 100.0, t_end)
}

fn window_points(traj: &Trajectory, field: Field, window: (f64, f64)) -> Result<Vec<(f64, f64)>> {
    if traj.coords != Coords::Raw {
        return Err(Error::CoordinateMismatch {
            found: traj.coords.to_string(),
            expected: "raw".into(),
        });
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi) {
        return Err(Error::Fit(format!("window [{lo}, {hi}] must satisfy 0 < lo < hi")));
    }
    let mut pts = Vec::new();
    for s in traj.samples.iter().filter(|s| s.t >= lo && s.t <= hi) {
        let val = match field {
            Field::D => s.d,
            Field::V => s.v,
        };
        if !(val > 0.0) {
            return Err(Error::Fit(format!(
                "{field} = {val} is not positive at sample t = {}",
                s.t
            )));
        }
        pts.push((s.t, val));
    }
    if pts.len() < MIN_FIT_POINTS {
        return Err(Error::Fit(format!(
            "window [{lo}, {hi}] holds {} samples, need at least {MIN_FIT_POINTS}",
            pts.len()
        )));
    }
    Ok(pts)
}

/// Slope of `ln field` against `ln t`.
pub fn fit_power(traj: &Trajectory, field: Field, window: Option<(f64, f64)>) -> Result<RateFit> {
    let window = window.unwrap_or_else(|| default_window(traj));
    let pts = window_points(traj, field, window)?;
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln()).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.1.ln()).collect();
    let line = least_squares(&x, &y);
    Ok(RateFit {
        field,
        exponent: match field {
            Field::V => -line.slope,
            Field::D => line.slope,
        },
        log_power: None,
        r2: line.r2,
        window,
        n: pts.len(),
    })
}

/// Fit `V t = c (log t)^q` or `D = c (log t)^q`; only samples with
/// `t >= 100` are used.
pub fn fit_log_corrected(traj: &Trajectory, field: Field, alpha: f64, window: Option<(f64, f64)>) -> Result<RateFit> {
    gamma_log(alpha).map_err(|_| Error::Fit(format!("log-corrected fit needs 0 <= α < 1, got {alpha}")))?;
    let (lo, hi) = window.unwrap_or_else(|| default_window(traj));
    let window = (lo.max(100.0), hi);
    let pts = window_points(traj, field, window)?;
    let x: Vec<f64> = pts.iter().map(|p| p.0.ln().ln()).collect();
    let y: Vec<f64> = pts
        .iter()
        .map(|&(t, val)| match field {
            Field::V => (val * t).ln(),
            Field::D => val.ln(),
        })
        .collect();
    let line = least_squares(&x, &y);
    Ok(RateFit {
        field,
        exponent: match field {
            Field::V => 1.0,
            Field::D => 0.0,
        },
        log_power: Some(line.slope),
        r2: line.r2,
        window,
        n: pts.len(),
    })
}

/// Predicted log power at `p = 3`: `α/(1-α)` on `V t`, `1/(1-α)` on `D`.
pub fn predicted_log_power(field: Field, alpha: f64) -> Result<f64> {
    let g = gamma_log(alpha)?;
    Ok(match field {
        Field::V => g,
        Field::D => g + 1.0,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScenarioLabel {
    S0,
    S1,
    S2,
    Sb,
    S3,
    S4,
    #[serde(rename = "boundary")]
    Boundary,
    #[serde(rename = "out_of_range")]
    OutOfRange,
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ScenarioLabel::S0 => "S0",
            ScenarioLabel::S1 => "S1",
            ScenarioLabel::S2 => "S2",
            ScenarioLabel::Sb => "Sb",
            ScenarioLabel::S3 => "S3",
            ScenarioLabel::S4 => "S4",
            ScenarioLabel::Boundary => "boundary",
            ScenarioLabel::OutOfRange => "out_of_range",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Conditionality {
    Unconditional,
    SemiUnconditional,
    Conditional,
    NoAlignmentGeneric,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateKind {
    Exponential,
}

/// Predicted decay of `V`: a power of `t`, or exponential.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Rate {
    Power(f64),
    Kind(RateKind),
}

impl Rate {
    pub fn power(&self) -> Option<f64> {
        match self {
            Rate::Power(x) => Some(*x),
            Rate::Kind(_) => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogCorrection {
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(rename = "D")]
    pub d: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioClass {
    pub p: f64,
    pub alpha: f64,
    pub label: ScenarioLabel,
    #[serde(rename = "V_exponent")]
    pub predicted_v_exponent: Option<Rate>,
    /// Growth exponent of `D`; `0` means bounded.
    #[serde(rename = "D_exponent")]
    pub predicted_d_exponent: Option<f64>,
    pub log_correction: Option<LogCorrection>,
    pub conditionality: Option<Conditionality>,
    pub note: String,
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS_CMP * b.abs().max(1.0)
}

/// Place `(p, α)` in the scenario map.
pub fn classify_scenario(p: f64, alpha: f64) -> Result<ScenarioClass> {
    check_p(p)?;
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("α must be >= 0, got {alpha}")));
    }
    let base = |label, note: &str| ScenarioClass {
        p,
        alpha,
        label,
        predicted_v_exponent: None,
        predicted_d_exponent: None,
        log_correction: None,
        conditionality: None,
        note: note.to_string(),
    };
    let with = |mut c: ScenarioClass, v: Rate, d: f64, cond| {
        c.predicted_v_exponent = Some(v);
        c.predicted_d_exponent = Some(d);
        c.conditionality = Some(cond);
        c
    };
    use Conditionality::*;
    use ScenarioLabel::*;
    let fat = alpha < 1.0 && !near(alpha, 1.0);
    let thin = alpha > 1.0 && !near(alpha, 1.0);
    let c = if near(p, 2.0) {
        if fat || near(alpha, 1.0) {
            with(
                base(S0, "linear alignment with fat tail: flocking and exponential alignment"),
                Rate::Kind(RateKind::Exponential),
                0.0,
                Unconditional,
            )
        } else {
            base(OutOfRange, "linear alignment with thin tail: outside the scenario map")
        }
    } else if p < 2.0 {
        base(
            OutOfRange,
            "p < 2: velocities coalesce in finite time; outside the scenario map",
        )
    } else if !fat && !thin {
        base(Boundary, "α = 1 separates fat and thin tails")
    } else if near(p, 3.0) {
        if fat {
            let g = gamma_log(alpha)?;
            let mut c = with(
                base(Sb, "borderline p = 3: logarithmic corrections"),
                Rate::Power(1.0),
                0.0,
                Unconditional,
            );
            c.log_correction = Some(LogCorrection { v: g, d: g + 1.0 });
            c
        } else {
            base(Boundary, "p = 3 with thin tail: between S3 and S4")
        }
    } else if p < 3.0 {
        let b = 1.0 / (p - 2.0);
        if fat {
            with(
                base(S2, "2 < p < 3, fat tail: flocking and algebraic alignment"),
                Rate::Power(b),
                0.0,
                Unconditional,
            )
        } else {
            with(
                base(
                    S3,
                    "2 < p < 3, thin tail: alignment for subcritical data, none for supercritical",
                ),
                Rate::Power(b),
                0.0,
                SemiUnconditional,
            )
        }
    } else if fat {
        let b = beta_sup(p, alpha)?;
        with(
            base(S1, "p > 3, fat tail: alignment without flocking"),
            Rate::Power(b),
            1.0 - b,
            Unconditional,
        )
    } else {
        let mut c = base(S4, "p > 3, thin tail: no alignment for generic data");
        c.conditionality = Some(NoAlignmentGeneric);
        c
    };
    Ok(c)
}

/// Antiderivative source for `ψ(D) = ∫_{D0}^{D} φ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Psi {
    /// The actual kernel.
    Kernel { kernel: KernelSpec },
    /// Pure power law `r^{-α}`.
    Power { alpha: f64 },
}

fn power_antiderivative(r: f64, alpha: f64) -> f64 {
    if alpha == 1.0 {
        r.ln()
    } else {
        r.powf(1.0 - alpha) / (1.0 - alpha)
    }
}

impl Psi {
    /// `∫_a^b φ`.
    pub fn integral(&self, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        if !(a >= 0.0 && b >= 0.0) {
            return Err(Error::Domain(format!("ψ needs nonnegative radii, got [{a}, {b}]")));
        }
        match *self {
            Psi::Power { alpha } => {
                if (a == 0.0 || b == 0.0) && alpha >= 1.0 {
                    return Err(Error::SingularKernel("∫ r^{-α} diverges at 0 for α >= 1".into()));
                }
                Ok(power_antiderivative(b, alpha) - power_antiderivative(a, alpha))
            }
            Psi::Kernel { kernel } => match kernel {
                KernelSpec::ConstantFloor { floor } => Ok(floor * (b - a)),
                KernelSpec::CappedPower { alpha, r_min } => {
                    let big_f = |r: f64| {
                        if r <= r_min {
                            r * r_min.powf(-alpha)
                        } else {
                            r_min.powf(1.0 - alpha) + power_antiderivative(r, alpha)
                                - power_antiderivative(r_min, alpha)
                        }
                    };
                    Ok(big_f(b) - big_f(a))
                }
                KernelSpec::SmoothTail { alpha } => {
                    if alpha == 0.0 {
                        Ok(b - a)
                    } else if alpha == 1.0 {
                        Ok(b.asinh() - a.asinh())
                    } else if alpha == 2.0 {
                        Ok(b.atan() - a.atan())
                    } else {
                        quad::integrate(|r| kernel.eval_unchecked(r), a, b, 1e-300, 1e-13)
                    }
                }
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub monotone: bool,
    /// Largest single-step increase of `E`.
    pub max_increase: f64,
    pub tol: f64,
}

/// `E(t) = V^{3-p} + (3-p) c ψ(D)`, with `ψ(D) = ∫_{D0}^{D} φ` and `D0` the
/// first sample. `c` is `C` for the exact kernel and `λC` for the power law.
/// Monotone means `E_{k+1} <= E_k + 1e-9 (1 + E_0)` at every step.
pub fn lyapunov_series(traj: &Trajectory, p: f64, c: f64, psi: &Psi) -> Result<LyapunovSeries> {
    if !(2.0..3.0).contains(&p) {
        return Err(Error::scenario(format!(
            "the Lyapunov functional needs 2 <= p < 3, got {p}"
        )));
    }
    if traj.coords != Coords::Raw {
        return Err(Error::CoordinateMismatch {
            found: traj.coords.to_string(),
            expected: "raw".into(),
        });
    }
    if traj.samples.is_empty() {
        return Err(Error::Domain("empty trajectory".into()));
    }
    let q = 3.0 - p;
    let mut values = Vec::with_capacity(traj.samples.len());
    let mut psi_acc = 0.0;
    let mut prev_d = traj.samples[0].d;
    for s in &traj.samples {
        psi_acc += psi.integral(prev_d, s.d)?;
        prev_d = s.d;
        values.push(s.v.powf(q) + q * c * psi_acc);
    }
    let tol = 1e-9 * (1.0 + values[0].abs());
    let max_increase = values.windows(2).map(|w| w[1] - w[0]).fold(f64::NEG_INFINITY, f64::max);
    Ok(LyapunovSeries {
        t: traj.times(),
        monotone: values.windows(2).all(|w| w[1] <= w[0] + tol),
        max_increase: if values.len() < 2 { 0.0 } else { max_increase },
        values,
        tol,
    })
}
