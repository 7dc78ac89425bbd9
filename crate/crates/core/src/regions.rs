//! Explicit invariant regions, flocking bounds and no-alignment floors,
//! plus containment checks of trajectories against them.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envelope::{beta_sup, gamma_log};
use crate::error::{Error, Result};
use crate::trajectory::{Coords, Trajectory};

const EPS_CMP: f64 = 1e-12;

/// Number of β points scanned by [`subcritical_membership`].
pub const BETA_GRID: usize = 512;

/// Closed interval `[lo, hi]` with `hi` possibly `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(lo >= 0.0 && lo <= hi && lo.is_finite()) || hi.is_nan() {
            return Err(Error::Domain(format!("bad interval [{lo}, {hi}]")));
        }
        Ok(Interval { lo, hi })
    }

    pub fn upper_unbounded(lo: f64) -> Result<Self> {
        Self::new(lo, f64::INFINITY)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum End {
    Num(f64),
    Text(String),
}

impl Serialize for Interval {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let hi = if self.hi.is_infinite() {
            End::Text("inf".into())
        } else {
            End::Num(self.hi)
        };
        (self.lo, hi).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let (lo, hi): (f64, End) = Deserialize::deserialize(d)?;
        let hi = match hi {
            End::Num(x) => x,
            End::Text(t) if t == "inf" => f64::INFINITY,
            End::Text(t) => return Err(serde::de::Error::custom(format!("bad interval end {t:?}"))),
        };
        Interval::new(lo, hi).map_err(serde::de::Error::custom)
    }
}

/// A box `D_interval × V_interval` in some coordinate system.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub provenance: String,
    pub coords: Coords,
    #[serde(rename = "D_interval")]
    pub d: Interval,
    #[serde(rename = "V_interval")]
    pub v: Interval,
    pub constants: BTreeMap<String, f64>,
}

impl RegionSpec {
    fn new(provenance: &str, coords: Coords, d: Interval, v: Interval) -> Self {
        RegionSpec {
            provenance: provenance.to_string(),
            coords,
            d,
            v,
            constants: BTreeMap::new(),
        }
    }

    fn with(mut self, name: &str, value: f64) -> Self {
        self.constants.insert(name.to_string(), value);
        self
    }

    pub fn contains(&self, d: f64, v: f64) -> bool {
        self.d.contains(d) && self.v.contains(v)
    }

    /// Shrink the finite upper ends by `factor`.
    pub fn scaled_upper(&self, factor: f64) -> RegionSpec {
        let mut r = self.clone();
        if r.d.hi.is_finite() {
            r.d.hi = (r.d.hi * factor).max(r.d.lo);
        }
        if r.v.hi.is_finite() {
            r.v.hi = (r.v.hi * factor).max(r.v.lo);
        }
        r
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if !(x > 0.0 && x.is_finite()) {
        return Err(Error::param(format!("{name} must be > 0, got {x}")));
    }
    Ok(())
}

fn nonneg(name: &str, x: f64) -> Result<()> {
    if !(x >= 0.0 && x.is_finite()) {
        return Err(Error::param(format!("{name} must be >= 0, got {x}")));
    }
    Ok(())
}

fn s1_floor(b: f64, p: f64, alpha: f64, rate: f64) -> f64 {
    (b / (rate * (1.0 - b).powf(alpha))).powf(1.0 / (p - 2.0 - alpha))
}

/// Upper invariant box `[0, M/(1-β*)] × [0, M]` of the rescaled system,
/// `p > 3`, `α < 1`.
pub fn region_a_s1(d0: f64, v0: f64, p: f64, alpha: f64, lambda_c: f64) -> Result<RegionSpec> {
    let b = beta_sup(p, alpha)?;
    nonneg("D0", d0)?;
    nonneg("V0", v0)?;
    positive("λC", lambda_c)?;
    let floor = s1_floor(b, p, alpha, lambda_c);
    let m = v0.max((1.0 - b) * d0).max(floor);
    Ok(RegionSpec::new(
        "invariant region A for the rescaled system (p > 3, α < 1)",
        Coords::S1,
        Interval::new(0.0, m / (1.0 - b))?,
        Interval::new(0.0, m)?,
    )
    .with("M", m)
    .with("beta_sup", b)
    .with("lambdaC", lambda_c))
}

/// Lower invariant box `[m/(1-β*), ∞) × [m, ∞)` of the rescaled system.
pub fn region_b_s1_lower(x0: f64, v0: f64, p: f64, alpha: f64, big_lambda_c: f64) -> Result<RegionSpec> {
    let b = beta_sup(p, alpha)?;
    nonneg("x0", x0)?;
    nonneg("v0", v0)?;
    positive("ΛC", big_lambda_c)?;
    let floor = s1_floor(b, p, alpha, big_lambda_c);
    let m = v0.min((1.0 - b) * x0).min(floor);
    if !(m > 0.0) {
        return Err(Error::Degenerate(format!("lower region collapses (m = {m})")));
    }
    Ok(RegionSpec::new(
        "lower invariant region B for the rescaled system (p > 3, α < 1)",
        Coords::S1,
        Interval::upper_unbounded(m / (1.0 - b))?,
        Interval::upper_unbounded(m)?,
    )
    .with("m", m)
    .with("beta_sup", b)
    .with("LambdaC", big_lambda_c))
}

/// Invariant box of the doubly rescaled `p = 3` system:
/// `V̄ = max{V0, D0/(1-α), ((1-α)^α/λC)^{1/(1-α)}}`, `D̄ = (1-α) V̄`.
pub fn region_a_sb(d0: f64, v0: f64, alpha: f64, lambda_c: f64) -> Result<RegionSpec> {
    gamma_log(alpha)?;
    nonneg("D0", d0)?;
    nonneg("V0", v0)?;
    positive("λC", lambda_c)?;
    let q = 1.0 - alpha;
    let v_bar = v0.max(d0 / q).max((q.powf(alpha) / lambda_c).powf(1.0 / q));
    Ok(RegionSpec::new(
        "invariant box for the log-rescaled system (p = 3, α < 1)",
        Coords::Sb,
        Interval::new(0.0, q * v_bar)?,
        Interval::new(0.0, v_bar)?,
    )
    .with("V_bar", v_bar)
    .with("D_bar", q * v_bar))
}

/// Flocking bound `D̄ = (D0^{1-α} + (1-α)/((3-p) λC) V0^{3-p})^{1/(1-α)}`
/// for `2 <= p < 3`, `α < 1`.
pub fn flocking_bound_fat_tail(d0: f64, v0: f64, p: f64, alpha: f64, lambda_c: f64) -> Result<f64> {
    if !((2.0..3.0).contains(&p) && (0.0..1.0).contains(&alpha)) {
        return Err(Error::scenario(format!(
            "fat-tail flocking bound needs 2 <= p < 3, α < 1, got p = {p}, α = {alpha}"
        )));
    }
    nonneg("D0", d0)?;
    nonneg("V0", v0)?;
    positive("λC", lambda_c)?;
    let q = 1.0 - alpha;
    Ok((d0.powf(q) + q / ((3.0 - p) * lambda_c) * v0.powf(3.0 - p)).powf(1.0 / q))
}

/// Raw-coordinate region `[0, D̄] × [0, V0]` from the fat-tail bound.
pub fn fat_tail_region(d0: f64, v0: f64, p: f64, alpha: f64, lambda_c: f64) -> Result<RegionSpec> {
    let d_bar = flocking_bound_fat_tail(d0, v0, p, alpha, lambda_c)?;
    Ok(RegionSpec::new(
        "Lyapunov flocking bound (2 <= p < 3, α < 1)",
        Coords::Raw,
        Interval::new(0.0, d_bar)?,
        Interval::new(0.0, v0)?,
    )
    .with("D_bar", d_bar))
}

/// Outcome of the β-box construction for `2 < p < 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario2Box {
    pub beta: f64,
    pub feasible: bool,
    #[serde(rename = "D_bar")]
    pub d_bar: Option<f64>,
    /// Bound on `(t+1)^β V(t)`.
    #[serde(rename = "V_bar")]
    pub v_bar: Option<f64>,
    /// Switching time `t_c*` of the construction; negative values mean the
    /// rough pre-switch bound is never used.
    pub t_c_star: Option<f64>,
}

impl Scenario2Box {
    /// `[0, D̄] × [0, V0]` in raw coordinates.
    pub fn region(&self, v0: f64) -> Option<RegionSpec> {
        let d_bar = self.d_bar?;
        Some(
            RegionSpec::new(
                "scenario-2 flocking box (2 < p < 3)",
                Coords::Raw,
                Interval::new(0.0, d_bar).ok()?,
                Interval::new(0.0, v0).ok()?,
            )
            .with("D_bar", d_bar)
            .with("V_bar", self.v_bar.unwrap_or(f64::NAN))
            .with("beta", self.beta),
        )
    }
}

/// Logarithm of the right side of the subcritical condition,
/// `(αβ-1) ((β-1)(λC)^β/(αβ)^{αβ})^{1/(αβ-1)}`, for `αβ > 1`.
fn ln_sub_rhs(beta: f64, alpha: f64, lambda_c: f64) -> f64 {
    let ab = alpha * beta;
    (ab - 1.0).ln() + ((beta - 1.0).ln() + beta * lambda_c.ln() - ab * ab.ln()) / (ab - 1.0)
}

/// Exponent `(1-β(p-2))/(αβ-1)` of `V0` in the subcritical condition.
fn sub_exponent(beta: f64, p: f64, alpha: f64) -> f64 {
    (1.0 - beta * (p - 2.0)) / (alpha * beta - 1.0)
}

/// Build the flocking box for a given `β ∈ (1, β_*)`.
pub fn scenario2_box(d0: f64, v0: f64, p: f64, alpha: f64, lambda_c: f64, beta: f64) -> Result<Scenario2Box> {
    if !(p > 2.0 && p < 3.0) {
        return Err(Error::scenario(format!("the β-box needs 2 < p < 3, got {p}")));
    }
    nonneg("α", alpha)?;
    nonneg("D0", d0)?;
    positive("V0", v0)?;
    positive("λC", lambda_c)?;
    let s = p - 2.0;
    let b_sub = 1.0 / s;
    if !(beta > 1.0 && beta < b_sub) {
        return Err(Error::param(format!("β must lie in (1, {b_sub}), got {beta}")));
    }
    let ab = alpha * beta;
    let vpow = v0.powf(1.0 - beta * s);
    let lcb = lambda_c.powf(beta);
    let v_bar_of = |d_bar: f64| vpow * d_bar.powf(ab) / lcb;
    let t_c_of = |d_bar: f64| d_bar.powf(alpha) / (lambda_c * v0.powf(s)) - 1.0;
    let feasible_box = |d_bar: f64| Scenario2Box {
        beta,
        feasible: true,
        d_bar: Some(d_bar),
        v_bar: Some(v_bar_of(d_bar)),
        t_c_star: Some(t_c_of(d_bar)),
    };
    let infeasible = Scenario2Box {
        beta,
        feasible: false,
        d_bar: None,
        v_bar: None,
        t_c_star: None,
    };
    if (ab - 1.0).abs() <= EPS_CMP {
        // f(D̄) = D0 + k D̄ - D̄ is linear
        let k = vpow / ((beta - 1.0) * lcb);
        return Ok(if k < 1.0 {
            feasible_box(d0 / (1.0 - k))
        } else {
            infeasible
        });
    }
    if ab < 1.0 {
        let d_bar = (2.0 * d0).max((2.0 * vpow / ((beta - 1.0) * lcb)).powf(1.0 / (1.0 - ab)));
        return Ok(feasible_box(d_bar));
    }
    let lhs = d0.ln() + sub_exponent(beta, p, alpha) * v0.ln();
    let rhs = ln_sub_rhs(beta, alpha, lambda_c);
    if d0 == 0.0 || lhs <= rhs + EPS_CMP * rhs.abs().max(1.0) {
        let d_bar = ((beta - 1.0) * lcb / (ab * vpow)).powf(1.0 / (ab - 1.0));
        Ok(feasible_box(d_bar))
    } else {
        Ok(infeasible)
    }
}

fn check_thin_23(p: f64, alpha: f64) -> Result<()> {
    if !(p > 2.0 && p < 3.0 && alpha > 1.0 && alpha.is_finite()) {
        return Err(Error::scenario(format!(
            "needs 2 < p < 3 and α > 1, got p = {p}, α = {alpha}"
        )));
    }
    Ok(())
}

/// The scanned β values: Chebyshev points on `(1+ε, β_*-ε)` in increasing
/// order, `ε = 1e-6 (β_* - 1)`.
pub fn beta_grid(p: f64) -> Vec<f64> {
    let b_sub = 1.0 / (p - 2.0);
    let eps = 1e-6 * (b_sub - 1.0);
    let (a, b) = (1.0 + eps, b_sub - eps);
    let n = BETA_GRID;
    let mut g: Vec<f64> = (0..n)
        .map(|k| {
            let theta = std::f64::consts::PI * (2 * k + 1) as f64 / (2 * n) as f64;
            0.5 * (a + b) - 0.5 * (b - a) * theta.cos()
        })
        .collect();
    g.sort_by(f64::total_cmp);
    g
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub member: bool,
    pub witness_beta: Option<f64>,
}

/// Whether `(D0, V0)` lies in the subcritical region: some `β` in the grid
/// satisfies `D0 V0^{(1-β(p-2))/(αβ-1)} <= (αβ-1)((β-1)(λC)^β/(αβ)^{αβ})^{1/(αβ-1)}`.
pub fn subcritical_membership(d0: f64, v0: f64, p: f64, alpha: f64, lambda_c: f64) -> Result<Membership> {
    check_thin_23(p, alpha)?;
    nonneg("D0", d0)?;
    positive("V0", v0)?;
    positive("λC", lambda_c)?;
    if d0 == 0.0 {
        return Ok(Membership {
            member: true,
            witness_beta: Some(beta_grid(p)[0]),
        });
    }
    for beta in beta_grid(p) {
        let lhs = d0.ln() + sub_exponent(beta, p, alpha) * v0.ln();
        let rhs = ln_sub_rhs(beta, alpha, lambda_c);
        if lhs <= rhs + EPS_CMP * rhs.abs().max(1.0) {
            return Ok(Membership {
                member: true,
                witness_beta: Some(beta),
            });
        }
    }
    Ok(Membership {
        member: false,
        witness_beta: None,
    })
}

/// Right side of the subcritical condition at `β`, i.e. the largest `D0`
/// admitted for `V0 = 1`.
pub fn subcritical_threshold(beta: f64, p: f64, alpha: f64, lambda_c: f64) -> Result<f64> {
    check_thin_23(p, alpha)?;
    if !(beta > 1.0 && beta < 1.0 / (p - 2.0)) {
        return Err(Error::param(format!("β must lie in (1, β_*), got {beta}")));
    }
    Ok(ln_sub_rhs(beta, alpha, lambda_c).exp())
}

/// Semi-unconditional threshold `D0*`; the `p = 2` limit `(λC)^{1/α}` is
/// returned for `p = 2`.
pub fn d0_star(p: f64, alpha: f64, lambda_c: f64) -> Result<f64> {
    positive("λC", lambda_c)?;
    if p == 2.0 && alpha > 1.0 {
        return Ok(lambda_c.powf(1.0 / alpha));
    }
    check_thin_23(p, alpha)?;
    let b = 1.0 / (p - 2.0);
    if alpha * b <= 1.0 {
        return Err(Error::Degenerate(format!("αβ_* = {} <= 1", alpha * b)));
    }
    Ok(ln_sub_rhs(b, alpha, lambda_c).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SupercriticalTest {
    pub member: bool,
    pub v_threshold: f64,
    /// `x0` must be at least `x_factor · v0`.
    pub x_factor: f64,
}

/// Supercritical test: `v0 >= (αΛC/(α-1))^{β_*/(αβ_*-1)} (αβ_*/(αβ_*-1))^{β_*}`
/// and `x0 >= (αβ_*-1)^{β_*} v0`. Valid for `p > 2` with `α > max(1, p-2)`.
pub fn supercritical_membership(x0: f64, v0: f64, p: f64, alpha: f64, big_lambda_c: f64) -> Result<SupercriticalTest> {
    if !(p > 2.0 && alpha > 1.0 && alpha > p - 2.0 && alpha.is_finite()) {
        return Err(Error::scenario(format!(
            "supercritical region needs p > 2, α > max(1, p-2), got p = {p}, α = {alpha}"
        )));
    }
    nonneg("x0", x0)?;
    nonneg("v0", v0)?;
    positive("ΛC", big_lambda_c)?;
    let b = 1.0 / (p - 2.0);
    let ab = alpha * b;
    let v_threshold = (alpha * big_lambda_c / (alpha - 1.0)).powf(b / (ab - 1.0)) * (ab / (ab - 1.0)).powf(b);
    let x_factor = (ab - 1.0).powf(b);
    Ok(SupercriticalTest {
        member: v0 >= v_threshold && x0 >= x_factor * v0,
        v_threshold,
        x_factor,
    })
}

/// Lower bounds along two-particle dynamics: `D(t) >= d_linear (t+1)`,
/// `V(t) >= v_floor`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Floors {
    /// Floor of `D(t+1)^{-γ}` (`γ = 1` for `2 < p < 3`).
    pub d_floor: f64,
    pub v_floor: f64,
    /// Slope of the guaranteed linear spread.
    pub d_linear: f64,
    pub gamma: f64,
    /// Root of the floor condition before capping at `x0` (`p > 3` only).
    pub root: Option<f64>,
}

impl Floors {
    /// Region `[d_linear, ∞) × [v_floor, ∞)` for `D(t)/(t+1)` and `V`.
    pub fn region(&self) -> Result<RegionSpec> {
        Ok(RegionSpec::new(
            "no-alignment floor",
            Coords::DScaled { gamma: 1.0 },
            Interval::upper_unbounded(self.d_linear)?,
            Interval::upper_unbounded(self.v_floor)?,
        )
        .with("D_floor", self.d_floor)
        .with("V_floor", self.v_floor)
        .with("gamma", self.gamma))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "result", rename_all = "snake_case")]
pub enum FloorOutcome {
    Floors(Floors),
    NotSupercritical(SupercriticalTest),
}

fn v_floor(v0: f64, s: f64, big_lambda_c: f64, d_floor: f64, alpha: f64, denom: f64) -> f64 {
    (v0.powf(-s) + s * big_lambda_c * d_floor.powf(-alpha) / denom).powf(-1.0 / s)
}

/// Floors for `2 < p < 3`, `α > 1` when `(x0, v0)` is supercritical.
///
/// `D̲` is the minimizer `((αβ_*-1)/(αβ_*))^{β_*} v0` of
/// `f(D) = v0^{-(p-2)} D^α - D^{α-(p-2)} + (p-2)ΛC/(α-1)`.
pub fn no_alignment_floor_23(x0: f64, v0: f64, p: f64, alpha: f64, big_lambda_c: f64) -> Result<FloorOutcome> {
    let test = supercritical_membership(x0, v0, p, alpha, big_lambda_c)?;
    if !test.member {
        return Ok(FloorOutcome::NotSupercritical(test));
    }
    let s = p - 2.0;
    let b = 1.0 / s;
    let ab = alpha * b;
    let d_floor = ((ab - 1.0) / ab).powf(b) * v0;
    let v = v_floor(v0, s, big_lambda_c, d_floor, alpha, alpha - 1.0);
    Ok(FloorOutcome::Floors(Floors {
        d_floor,
        v_floor: v,
        d_linear: d_floor.min(x0).min(v),
        gamma: 1.0,
        root: None,
    }))
}

/// `f(D) = v0^{-s} D^α - x0^{(1-γ)s/γ} D^{α-s/γ} + sΛC/(γα-1)`, `s = p-2`,
/// whose root bounds `D(t)(t+1)^{-γ}` from below. Increasing in `D`.
pub fn floor_function(d: f64, x0: f64, v0: f64, p: f64, alpha: f64, big_lambda_c: f64, gamma: f64) -> f64 {
    let s = p - 2.0;
    v0.powf(-s) * d.powf(alpha) - x0.powf((1.0 - gamma) * s / gamma) * d.powf(alpha - s / gamma)
        + s * big_lambda_c / (gamma * alpha - 1.0)
}

/// Admissible `γ` interval `(1/α, min(1, (p-2)/α))` for `p > 3`, `α > 1`.
pub fn floor_gamma_range(p: f64, alpha: f64) -> Result<(f64, f64)> {
    if !(p > 3.0 && alpha > 1.0 && p.is_finite() && alpha.is_finite()) {
        return Err(Error::scenario(format!(
            "needs p > 3 and α > 1, got p = {p}, α = {alpha}"
        )));
    }
    Ok((1.0 / alpha, 1f64.min((p - 2.0) / alpha)))
}

/// Floors for `p > 3`, `α > 1` and any `x0, v0 > 0`. `gamma` defaults to
/// the midpoint of its admissible interval.
pub fn no_alignment_floor(
    x0: f64,
    v0: f64,
    p: f64,
    alpha: f64,
    big_lambda_c: f64,
    gamma: Option<f64>,
) -> Result<Floors> {
    let (g_lo, g_hi) = floor_gamma_range(p, alpha)?;
    let gamma = gamma.unwrap_or(0.5 * (g_lo + g_hi));
    if !(gamma > g_lo && gamma < g_hi) && !(gamma == 1.0 && g_hi == 1.0) {
        return Err(Error::param(format!("γ must lie in ({g_lo}, {g_hi}), got {gamma}")));
    }
    positive("x0", x0)?;
    positive("v0", v0)?;
    positive("ΛC", big_lambda_c)?;
    let f = |d: f64| floor_function(d, x0, v0, p, alpha, big_lambda_c, gamma);
    let root = bisect_increasing(f, 1.0)?;
    let d_floor = root.min(x0);
    let s = p - 2.0;
    let v = v_floor(v0, s, big_lambda_c, d_floor, alpha, gamma * alpha - 1.0);
    Ok(Floors {
        d_floor,
        v_floor: v,
        d_linear: x0.min(v),
        gamma,
        root: Some(root),
    })
}

/// Root of an increasing function with `f(0+) < 0 < f(∞)`: geometric
/// bracket expansion from `start`, then bisection to `1e-12` relative.
fn bisect_increasing<F: Fn(f64) -> f64>(f: F, start: f64) -> Result<f64> {
    let (mut lo, mut hi) = (start, start);
    let mut k = 0;
    while f(lo) > 0.0 {
        lo *= 0.5;
        k += 1;
        if k > 4000 || lo == 0.0 {
            return Err(Error::Degenerate("no sign change below the start point".into()));
        }
    }
    k = 0;
    while f(hi) < 0.0 {
        hi *= 2.0;
        k += 1;
        if k > 4000 || !hi.is_finite() {
            return Err(Error::Degenerate("no sign change above the start point".into()));
        }
    }
    if lo == hi {
        return Ok(lo);
    }
    while hi - lo > 1e-12 * hi {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Left,
    Right,
    Bottom,
    Top,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Exit {
    pub t: f64,
    pub side: Side,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "V")]
    pub v: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContainmentReport {
    pub contained: bool,
    pub first_exit: Option<Exit>,
    pub samples: usize,
}

/// Scan a trajectory for the first sample outside `region`. Violations
/// within `10 (atol + rtol |bound|)` of a boundary, with the trajectory's
/// own tolerances, count as grazing and are ignored. The trajectory is
/// converted to the region's coordinates when its metadata allows.
pub fn check_containment(traj: &Trajectory, region: &RegionSpec) -> Result<ContainmentReport> {
    let tol = traj.meta.tol;
    check_containment_with(traj, region, |b| 10.0 * (tol.atol + tol.rtol * b.abs()))
}

/// As [`check_containment`] with a caller-chosen grazing allowance.
pub fn check_containment_with<G: Fn(f64) -> f64>(
    traj: &Trajectory,
    region: &RegionSpec,
    grace: G,
) -> Result<ContainmentReport> {
    let converted;
    let traj = if traj.coords == region.coords {
        traj
    } else {
        converted = traj.convert(region.coords)?;
        &converted
    };
    for s in &traj.samples {
        let side = if s.d < region.d.lo - grace(region.d.lo) {
            Some(Side::Left)
        } else if s.d > region.d.hi + grace(region.d.hi) {
            Some(Side::Right)
        } else if s.v < region.v.lo - grace(region.v.lo) {
            Some(Side::Bottom)
        } else if s.v > region.v.hi + grace(region.v.hi) {
            Some(Side::Top)
        } else {
            None
        };
        if let Some(side) = side {
            return Ok(ContainmentReport {
                contained: false,
                first_exit: Some(Exit {
                    t: s.t,
                    side,
                    d: s.d,
                    v: s.v,
                }),
                samples: traj.samples.len(),
            });
        }
    }
    Ok(ContainmentReport {
        contained: true,
        first_exit: None,
        samples: traj.samples.len(),
    })
}
