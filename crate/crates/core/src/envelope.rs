//! Diameter envelope dynamics `D' = V`, `V' = -κ Φ(V)` and its rescaled
//! forms.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{check_p, phi_scalar, KernelSpec, SimParams};
use crate::ode::{self, Flow, OdeSystem, Schedule, SolverOptions, Tolerances};
use crate::trajectory::{Coords, IntegratorMeta, RunStatus, Sample, Source, Trajectory};

/// `V` below which a run with `p < 2` is declared extinct.
pub const EXTINCTION_THRESHOLD: f64 = 1e-14;

/// Default envelope tolerances. The diameters span many decades, so the
/// absolute floor is negligible and the control is relative.
pub const ENVELOPE_TOL: Tolerances = Tolerances {
    atol: 1e-30,
    rtol: 1e-9,
};

const EPS_CMP: f64 = 1e-12;

/// `C = 2^{2-p} m0`.
pub fn alignment_constant(p: f64, total_mass: f64) -> Result<f64> {
    check_p(p)?;
    if !(total_mass > 0.0 && total_mass.is_finite()) {
        return Err(Error::param(format!("total mass must be > 0, got {total_mass}")));
    }
    Ok(2f64.powf(2.0 - p) * total_mass)
}

/// `β* = (1-α)/(p-2-α)`, the decay exponent of `V` for `p > 3`, `α < 1`.
pub fn beta_sup(p: f64, alpha: f64) -> Result<f64> {
    if !(p > 3.0 && (0.0..1.0).contains(&alpha)) {
        return Err(Error::scenario(format!(
            "β* needs p > 3 and 0 <= α < 1, got p = {p}, α = {alpha}"
        )));
    }
    Ok((1.0 - alpha) / (p - 2.0 - alpha))
}

/// `β_* = 1/(p-2)` for `p > 2`.
pub fn beta_sub(p: f64) -> Result<f64> {
    if !(p > 2.0 && p.is_finite()) {
        return Err(Error::scenario(format!("β_* needs p > 2, got {p}")));
    }
    Ok(1.0 / (p - 2.0))
}

/// `γ = α/(1-α)`, the log power on `V t` when `p = 3`.
pub fn gamma_log(alpha: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::scenario(format!("γ needs 0 <= α < 1, got {alpha}")));
    }
    Ok(alpha / (1.0 - alpha))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeParams {
    pub p: f64,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    /// Alignment constant multiplying the kernel.
    #[serde(rename = "C")]
    pub c: f64,
}

impl EnvelopeParams {
    pub fn new(p: f64, alpha: f64, lambda: f64, big_lambda: f64, c: f64) -> Result<Self> {
        let e = EnvelopeParams {
            p,
            alpha,
            lambda,
            big_lambda,
            c,
        };
        e.validate()?;
        Ok(e)
    }

    /// Envelope parameters for `sim` with the constant `C = 2^{2-p} m0`.
    pub fn from_sim(sim: &SimParams) -> Result<Self> {
        Self::with_constant(sim, alignment_constant(sim.p, sim.total_mass)?)
    }

    pub fn with_constant(sim: &SimParams, c: f64) -> Result<Self> {
        Self::new(sim.p, sim.alpha, sim.lambda, sim.big_lambda, c)
    }

    pub fn validate(&self) -> Result<()> {
        check_p(self.p)?;
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::param(format!("α must be >= 0, got {}", self.alpha)));
        }
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda && self.big_lambda.is_finite()) {
            return Err(Error::param("need 0 < lambda <= Lambda"));
        }
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::param(format!("C must be > 0, got {}", self.c)));
        }
        Ok(())
    }

    pub fn beta_sup(&self) -> Result<f64> {
        beta_sup(self.p, self.alpha)
    }

    pub fn beta_sub(&self) -> Result<f64> {
        beta_sub(self.p)
    }

    pub fn gamma(&self) -> Result<f64> {
        gamma_log(self.alpha)
    }

    /// `λC` or `ΛC`.
    pub fn rate(&self, bound: RateBound) -> Result<f64> {
        match bound {
            RateBound::Lower => Ok(self.lambda * self.c),
            RateBound::Upper => Ok(self.big_lambda * self.c),
            RateBound::Exact => Err(Error::param("the exact kernel has no single tail rate")),
        }
    }
}

/// Which interaction strength drives the envelope.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateBound {
    /// `κ = λ C D^{-α}`: the slowest admissible decay.
    Lower,
    /// `κ = Λ C D^{-α}`: the fastest admissible decay.
    Upper,
    /// `κ = C φ(D)` with the actual kernel.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeCoord {
    RawT,
    LogTau,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeState {
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "V")]
    pub v: f64,
    pub t: f64,
    pub time: TimeCoord,
}

impl EnvelopeState {
    pub fn raw(d: f64, v: f64) -> Result<Self> {
        Self::at(d, v, 0.0, TimeCoord::RawT)
    }

    pub fn at(d: f64, v: f64, t: f64, time: TimeCoord) -> Result<Self> {
        if !(d >= 0.0 && v >= 0.0 && d.is_finite() && v.is_finite() && t.is_finite()) {
            return Err(Error::Domain(format!("need finite D, V >= 0, got D = {d}, V = {v}")));
        }
        Ok(EnvelopeState { d, v, t, time })
    }
}

fn power_decay(rate: f64, d: f64, alpha: f64) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(rate);
    }
    if d <= 0.0 {
        return Err(Error::SingularKernel(format!(
            "D^-α at D = {d}; use the capped kernel near the origin"
        )));
    }
    Ok(rate * d.powf(-alpha))
}

/// `κ(D)` for the chosen bound.
fn kappa(params: &EnvelopeParams, kernel: Option<&KernelSpec>, bound: RateBound, d: f64) -> Result<f64> {
    match bound {
        RateBound::Exact => {
            let k = kernel.ok_or_else(|| Error::param("the exact bound needs a kernel"))?;
            Ok(params.c * crate::model::kernel_eval(k, d)?)
        }
        _ => power_decay(params.rate(bound)?, d, params.alpha),
    }
}

/// Raw-time envelope vector field `(V, -κ(D) V^{p-1})`.
pub fn envelope_rhs(
    s: &EnvelopeState,
    kernel: Option<&KernelSpec>,
    params: &EnvelopeParams,
    bound: RateBound,
) -> Result<(f64, f64)> {
    if s.time != TimeCoord::RawT {
        return Err(Error::CoordinateMismatch {
            found: "log_tau".into(),
            expected: "raw_t".into(),
        });
    }
    if s.v == 0.0 {
        return Ok((0.0, 0.0));
    }
    let k = kappa(params, kernel, bound, s.d)?;
    Ok((s.v, -k * phi_scalar(s.v, params.p)))
}

/// Rescaled autonomous field in `τ = ln(t+1)` for `p > 3`, `α < 1`:
/// `(β*-1) D + V`, `β* V - rate D^{-α} V^{p-1}`.
#[allow(non_snake_case)]
pub fn scaled_rhs_S1(d: f64, v: f64, params: &EnvelopeParams, bound: RateBound) -> Result<(f64, f64)> {
    let b = params.beta_sup()?;
    let k = power_decay(params.rate(bound)?, d, params.alpha)?;
    Ok(((b - 1.0) * d + v, b * v - k * phi_scalar(v, params.p)))
}

/// Doubly rescaled field for `p = 3`, `α < 1`:
/// `(-D/(1-α) + V)/(τ+1)`, `V (1 - rate D^{-α} V)`.
#[allow(non_snake_case)]
pub fn log_scaled_rhs_Sb(tau: f64, d: f64, v: f64, params: &EnvelopeParams, bound: RateBound) -> Result<(f64, f64)> {
    if (params.p - 3.0).abs() > EPS_CMP {
        return Err(Error::scenario(format!(
            "log-scaled system needs p = 3, got {}",
            params.p
        )));
    }
    gamma_log(params.alpha)?;
    if v == 0.0 {
        return Ok(((-d / (1.0 - params.alpha)) / (tau + 1.0), 0.0));
    }
    let k = power_decay(params.rate(bound)?, d, params.alpha)?;
    Ok(((-d / (1.0 - params.alpha) + v) / (tau + 1.0), v * (1.0 - k * v)))
}

/// Closed-form `V(t)` for a constant interaction rate `k = C φ̲`.
pub fn closed_form_global(p: f64, k: f64, v0: f64, t: f64) -> Result<f64> {
    check_p(p)?;
    if !(k > 0.0 && v0 >= 0.0 && t >= 0.0) {
        return Err(Error::param(format!(
            "need k > 0, V0 >= 0, t >= 0, got k = {k}, V0 = {v0}, t = {t}"
        )));
    }
    if v0 == 0.0 {
        return Ok(0.0);
    }
    let s = p - 2.0;
    Ok(if s == 0.0 {
        v0 * (-k * t).exp()
    } else if s > 0.0 {
        (v0.powf(-s) + s * k * t).powf(-1.0 / s)
    } else {
        (v0.powf(-s) + s * k * t).max(0.0).powf(-1.0 / s)
    })
}

/// Extinction time `V0^{2-p}/((2-p) k)` for `p < 2`; `None` otherwise.
pub fn extinction_time(p: f64, k: f64, v0: f64) -> Result<Option<f64>> {
    check_p(p)?;
    if !(k > 0.0) {
        return Err(Error::param(format!("need k > 0, got {k}")));
    }
    Ok((p < 2.0).then(|| v0.powf(2.0 - p) / ((2.0 - p) * k)))
}

/// One of the envelope vector fields, ready for the stepper.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "system", rename_all = "snake_case")]
pub enum EnvelopeSystem {
    /// Raw time, `D' = V`, `V' = -κ(D) Φ(V)`.
    Raw {
        params: EnvelopeParams,
        kernel: Option<KernelSpec>,
        bound: RateBound,
    },
    /// `τ = ln(t+1)` with `(t+1)^{β*}` scaling, `p > 3`.
    S1 { params: EnvelopeParams, bound: RateBound },
    /// `p = 3` with additional `(τ+1)^γ` scaling. `keep_drift` restores the
    /// `-γ V/(τ+1)` term that the exact change of variables produces.
    Sb {
        params: EnvelopeParams,
        bound: RateBound,
        keep_drift: bool,
    },
}

impl EnvelopeSystem {
    /// Raw envelope driven by the actual kernel.
    pub fn exact(params: EnvelopeParams, kernel: KernelSpec) -> Self {
        EnvelopeSystem::Raw {
            params,
            kernel: Some(kernel),
            bound: RateBound::Exact,
        }
    }

    /// Raw envelope with the λ or Λ tail law.
    pub fn tail(params: EnvelopeParams, bound: RateBound) -> Self {
        EnvelopeSystem::Raw {
            params,
            kernel: None,
            bound,
        }
    }

    pub fn params(&self) -> &EnvelopeParams {
        match self {
            EnvelopeSystem::Raw { params, .. }
            | EnvelopeSystem::S1 { params, .. }
            | EnvelopeSystem::Sb { params, .. } => params,
        }
    }

    pub fn bound(&self) -> RateBound {
        match *self {
            EnvelopeSystem::Raw { bound, .. } | EnvelopeSystem::S1 { bound, .. } | EnvelopeSystem::Sb { bound, .. } => {
                bound
            }
        }
    }

    pub fn coords(&self) -> Coords {
        match self {
            EnvelopeSystem::Raw { .. } => Coords::Raw,
            EnvelopeSystem::S1 { .. } => Coords::S1,
            EnvelopeSystem::Sb { .. } => Coords::Sb,
        }
    }

    fn kernel(&self) -> Option<KernelSpec> {
        match self {
            EnvelopeSystem::Raw { kernel, .. } => *kernel,
            _ => None,
        }
    }

    /// Check that the system is well posed for its scenario.
    pub fn validate(&self) -> Result<()> {
        let params = self.params();
        params.validate()?;
        match self {
            EnvelopeSystem::Raw { kernel, bound, .. } => {
                if *bound == RateBound::Exact && kernel.is_none() {
                    return Err(Error::param("the exact bound needs a kernel"));
                }
            }
            EnvelopeSystem::S1 { bound, .. } => {
                params.beta_sup()?;
                params.rate(*bound)?;
            }
            EnvelopeSystem::Sb { bound, .. } => {
                if (params.p - 3.0).abs() > EPS_CMP {
                    return Err(Error::scenario(format!(
                        "log-scaled system needs p = 3, got {}",
                        params.p
                    )));
                }
                params.gamma()?;
                params.rate(*bound)?;
            }
        }
        Ok(())
    }

    /// Evaluate the field; trial states from the stepper may leave the
    /// physical quadrant, so errors become NaN and force a step rejection.
    fn field(&self, t: f64, d: f64, v: f64) -> (f64, f64) {
        let r = match self {
            EnvelopeSystem::Raw { params, kernel, bound } => {
                if v == 0.0 {
                    Ok((0.0, 0.0))
                } else if *bound == RateBound::Exact {
                    // trial stages never move D below its start in raw time,
                    // but guard anyway
                    let k = kernel.as_ref().map(|k| params.c * k.eval_unchecked(d.max(0.0)));
                    Ok((v, -k.unwrap_or(f64::NAN) * phi_scalar(v, params.p)))
                } else {
                    power_decay(params.rate(*bound).unwrap_or(f64::NAN), d, params.alpha)
                        .map(|k| (v, -k * phi_scalar(v, params.p)))
                }
            }
            EnvelopeSystem::S1 { params, bound } => scaled_rhs_S1(d, v, params, *bound),
            EnvelopeSystem::Sb {
                params,
                bound,
                keep_drift,
            } => log_scaled_rhs_Sb(t, d, v, params, *bound).map(|(dd, dv)| {
                if *keep_drift {
                    let g = params.alpha / (1.0 - params.alpha);
                    (dd, dv - g * v / (t + 1.0))
                } else {
                    (dd, dv)
                }
            }),
        };
        r.unwrap_or((f64::NAN, f64::NAN))
    }

    /// Effective rate `κ(D)` of the raw system at `D`.
    fn raw_kappa(&self, d: f64) -> Option<f64> {
        match self {
            EnvelopeSystem::Raw { params, kernel, bound } => kappa(params, kernel.as_ref(), *bound, d).ok(),
            _ => None,
        }
    }
}

impl OdeSystem for EnvelopeSystem {
    fn dim(&self) -> usize {
        2
    }

    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let (a, b) = self.field(t, y[0], y[1]);
        dy[0] = a;
        dy[1] = b;
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeOptions {
    pub solver: SolverOptions,
    /// Stop (status `Halted`) once `V` drops below this value.
    pub halt_below: Option<f64>,
}

impl Default for EnvelopeOptions {
    fn default() -> Self {
        EnvelopeOptions {
            solver: SolverOptions {
                tol: ENVELOPE_TOL,
                ..Default::default()
            },
            halt_below: None,
        }
    }
}

impl EnvelopeOptions {
    pub fn with_tol(atol: f64, rtol: f64) -> Self {
        EnvelopeOptions {
            solver: SolverOptions::with_tol(atol, rtol),
            halt_below: None,
        }
    }
}

/// Integrate an envelope system from `s0` to `t_end` (in the system's own
/// time variable), sampling at the schedule's times.
pub fn integrate_envelope(
    s0: &EnvelopeState,
    sys: &EnvelopeSystem,
    t_end: f64,
    schedule: &Schedule,
    opts: &EnvelopeOptions,
) -> Result<Trajectory> {
    sys.validate()?;
    let want = match sys {
        EnvelopeSystem::Raw { .. } => TimeCoord::RawT,
        _ => TimeCoord::LogTau,
    };
    if s0.time != want {
        return Err(Error::CoordinateMismatch {
            found: format!("{:?}", s0.time),
            expected: format!("{want:?}"),
        });
    }
    let outputs = schedule.times(s0.t, t_end)?;
    let params = *sys.params();
    let extinction = matches!(sys, EnvelopeSystem::Raw { .. }) && params.p < 2.0;
    let halt_below = opts.halt_below;
    let mut samples: Vec<Sample> = Vec::with_capacity(outputs.len());
    let result = ode::solve(
        sys,
        s0.t,
        &[s0.d, s0.v],
        &outputs,
        &opts.solver,
        |t, y| samples.push(Sample::new(t, y[0], y[1].max(0.0))),
        |_, y| {
            if extinction && y[1] < EXTINCTION_THRESHOLD {
                Flow::Halt("extinct".into())
            } else if halt_below.is_some_and(|h| y[1] < h) {
                Flow::Halt(format!("V below {:e}", halt_below.unwrap_or(0.0)))
            } else {
                Flow::Continue
            }
        },
    );
    let source = Source::Envelope {
        params,
        bound: sys.bound(),
        kernel: sys.kernel(),
    };
    let meta_of = |stats| IntegratorMeta {
        stats,
        tol: opts.solver.tol,
    };
    match result {
        Ok(out) => {
            let status = match out.halted {
                None => RunStatus::Completed,
                Some((t, reason)) => {
                    let (d, v) = (out.y[0], out.y[1].max(0.0));
                    if samples.last().is_none_or(|s| s.t < t) {
                        samples.push(Sample::new(t, d, v));
                    }
                    if reason == "extinct" {
                        // invert the closed form locally with the frozen rate κ(D)
                        let t_star = match sys.raw_kappa(d) {
                            Some(k) if k > 0.0 => t + v.powf(2.0 - params.p) / ((2.0 - params.p) * k),
                            _ => t,
                        };
                        RunStatus::Extinct { t, t_star }
                    } else {
                        RunStatus::Halted { t, reason }
                    }
                }
            };
            Ok(Trajectory {
                samples,
                coords: sys.coords(),
                source,
                meta: meta_of(out.stats),
                status,
            })
        }
        Err(fail) => {
            let partial = Trajectory {
                samples,
                coords: sys.coords(),
                source,
                meta: meta_of(fail.stats),
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

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn ep(p: f64, alpha: f64, c: f64) -> EnvelopeParams {
        EnvelopeParams::new(p, alpha, 1.0, 1.0, c).unwrap()
    }

    #[test]
    fn alignment_constant_examples() {
        assert_eq!(alignment_constant(2.0, 1.0).unwrap(), 1.0);
        assert_eq!(alignment_constant(3.0, 2.0).unwrap(), 1.0);
        assert_eq!(alignment_constant(4.0, 2.0).unwrap(), 0.5);
        assert!(alignment_constant(1.0, 2.0).is_err());
    }

    #[test]
    fn rhs_examples() {
        let k = KernelSpec::constant(1.0).unwrap();
        let s = EnvelopeState::raw(1.0, 0.0).unwrap();
        assert_eq!(
            envelope_rhs(&s, Some(&k), &ep(3.0, 0.0, 1.0), RateBound::Exact).unwrap(),
            (0.0, 0.0)
        );
        let s = EnvelopeState::raw(1.0, 1.0).unwrap();
        assert_eq!(
            envelope_rhs(&s, Some(&k), &ep(3.0, 0.0, 1.0), RateBound::Exact).unwrap(),
            (1.0, -1.0)
        );
        let s = EnvelopeState::raw(4.0, 2.0).unwrap();
        let (dd, dv) = envelope_rhs(&s, None, &ep(2.5, 0.5, 1.0), RateBound::Lower).unwrap();
        assert_eq!(dd, 2.0);
        assert_relative_eq!(dv, -(2f64.sqrt()), max_relative = 1e-15);
        let s = EnvelopeState::raw(0.0, 2.0).unwrap();
        assert!(matches!(
            envelope_rhs(&s, None, &ep(2.5, 0.5, 1.0), RateBound::Lower),
            Err(Error::SingularKernel(_))
        ));
    }

    #[test]
    fn s1_nullclines() {
        let e = ep(4.0, 0.0, 1.0);
        assert_eq!(scaled_rhs_S1(2.0, 1.0, &e, RateBound::Lower).unwrap(), (0.0, -0.5));
        let e = ep(5.0, 0.5, 0.7);
        let b = e.beta_sup().unwrap();
        let d = 1.7;
        let (dd, _) = scaled_rhs_S1(d, (1.0 - b) * d, &e, RateBound::Lower).unwrap();
        assert!(dd.abs() < 1e-15);
        // blue nullcline: V^{p-2} = β* D^α / (λC)
        let v = (b * d.powf(0.5) / 0.7).powf(1.0 / 3.0);
        let (_, dv) = scaled_rhs_S1(d, v, &e, RateBound::Lower).unwrap();
        assert!(dv.abs() < 1e-14);
        assert!(scaled_rhs_S1(0.0, 1.0, &e, RateBound::Lower).is_err());
        assert!(scaled_rhs_S1(1.0, 1.0, &ep(3.0, 0.5, 1.0), RateBound::Lower).is_err());
    }

    #[test]
    fn sb_fixed_points() {
        let e = ep(3.0, 0.5, 2.0);
        assert_eq!(log_scaled_rhs_Sb(0.3, 1.0, 0.0, &e, RateBound::Lower).unwrap().1, 0.0);
        let d: f64 = 3.0;
        let (_, dv) = log_scaled_rhs_Sb(0.3, d, d.sqrt() / 2.0, &e, RateBound::Lower).unwrap();
        assert!(dv.abs() < 1e-15);
    }

    #[test]
    fn sb_alpha_zero_limit() {
        let e = ep(3.0, 0.0, 2.0);
        let sys = EnvelopeSystem::Sb {
            params: e,
            bound: RateBound::Lower,
            keep_drift: false,
        };
        let s0 = EnvelopeState::at(1.0, 1.0, 0.0, TimeCoord::LogTau).unwrap();
        let traj = integrate_envelope(
            &s0,
            &sys,
            50.0,
            &Schedule::Linear { n: 10 },
            &EnvelopeOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(traj.last().v, 0.5, max_relative = 1e-8);
    }

    #[test]
    fn closed_form_examples() {
        assert_eq!(closed_form_global(3.0, 1.0, 1.0, 1.0).unwrap(), 0.5);
        assert_eq!(extinction_time(1.5, 1.0, 1.0).unwrap(), Some(2.0));
        assert_eq!(closed_form_global(2.0, 0.7, 2.0, 0.0).unwrap(), 2.0);
        assert_eq!(closed_form_global(1.5, 1.0, 1.0, 3.0).unwrap(), 0.0);
        assert!(closed_form_global(1.0, 1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn p3_constant_kernel_reaches_one_over_eleven() {
        let sys = EnvelopeSystem::exact(ep(3.0, 0.0, 1.0), KernelSpec::constant(1.0).unwrap());
        let s0 = EnvelopeState::raw(1.0, 1.0).unwrap();
        let traj = integrate_envelope(
            &s0,
            &sys,
            10.0,
            &Schedule::Linear { n: 10 },
            &EnvelopeOptions::default(),
        )
        .unwrap();
        assert_relative_eq!(traj.last().v, 1.0 / 11.0, max_relative = 1e-8);
        // D = 1 + ln(1+t)
        assert_relative_eq!(traj.last().d, 1.0 + 11f64.ln(), max_relative = 1e-8);
    }

    #[test]
    fn extinction_is_detected() {
        let sys = EnvelopeSystem::exact(ep(1.5, 0.0, 1.0), KernelSpec::constant(1.0).unwrap());
        let s0 = EnvelopeState::raw(1.0, 1.0).unwrap();
        let traj = integrate_envelope(
            &s0,
            &sys,
            10.0,
            &Schedule::Linear { n: 10 },
            &EnvelopeOptions::default(),
        )
        .unwrap();
        match traj.status {
            RunStatus::Extinct { t, t_star } => {
                assert!(t <= 2.0 + 1e-9);
                assert!((t_star - 2.0).abs() < 1e-6, "T* = {t_star}");
            }
            ref s => panic!("unexpected {s:?}"),
        }
    }

    #[test]
    fn mismatched_time_coordinate_is_rejected() {
        let sys = EnvelopeSystem::S1 {
            params: ep(4.0, 0.0, 1.0),
            bound: RateBound::Lower,
        };
        let s0 = EnvelopeState::raw(1.0, 1.0).unwrap();
        assert!(matches!(
            integrate_envelope(&s0, &sys, 1.0, &Schedule::Linear { n: 2 }, &EnvelopeOptions::default()),
            Err(Error::CoordinateMismatch { .. })
        ));
    }
}
