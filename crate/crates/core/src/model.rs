//! Model parameters, communication kernels and the nonlinear alignment map.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap radius for singular power kernels.
pub const DEFAULT_R_MIN: f64 = 1e-6;

/// Radially symmetric, nonincreasing communication protocol `φ(r)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum KernelSpec {
    /// `φ(r) = floor` for every `r`: global communication with a positive
    /// lower bound.
    ConstantFloor { floor: f64 },
    /// `φ(r) = (1 + r²)^{-α/2}`.
    SmoothTail { alpha: f64 },
    /// `φ(r) = min(r_min^{-α}, r^{-α})`.
    CappedPower { alpha: f64, r_min: f64 },
}

impl KernelSpec {
    pub fn constant(floor: f64) -> Result<Self> {
        let k = KernelSpec::ConstantFloor { floor };
        k.validate()?;
        Ok(k)
    }

    pub fn smooth_tail(alpha: f64) -> Result<Self> {
        let k = KernelSpec::SmoothTail { alpha };
        k.validate()?;
        Ok(k)
    }

    pub fn capped_power(alpha: f64, r_min: f64) -> Result<Self> {
        let k = KernelSpec::CappedPower { alpha, r_min };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            KernelSpec::ConstantFloor { floor } => {
                if !(floor > 0.0 && floor.is_finite()) {
                    return Err(Error::param(format!("constant kernel floor must be > 0, got {floor}")));
                }
            }
            KernelSpec::SmoothTail { alpha } => check_alpha(alpha)?,
            KernelSpec::CappedPower { alpha, r_min } => {
                check_alpha(alpha)?;
                if !(r_min > 0.0 && r_min.is_finite()) {
                    return Err(Error::param(format!("cap radius must be > 0, got {r_min}")));
                }
            }
        }
        Ok(())
    }

    /// Tail exponent `α`; zero for the constant kernel.
    pub fn alpha(&self) -> f64 {
        match *self {
            KernelSpec::ConstantFloor { .. } => 0.0,
            KernelSpec::SmoothTail { alpha } | KernelSpec::CappedPower { alpha, .. } => alpha,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelSpec::ConstantFloor { .. } => "constant_floor",
            KernelSpec::SmoothTail { .. } => "smooth_tail",
            KernelSpec::CappedPower { .. } => "capped_power",
        }
    }

    /// `φ(r)` without the domain check; callers guarantee `r >= 0`.
    #[inline]
    pub(crate) fn eval_unchecked(&self, r: f64) -> f64 {
        match *self {
            KernelSpec::ConstantFloor { floor } => floor,
            KernelSpec::SmoothTail { alpha } => {
                if alpha == 0.0 {
                    1.0
                } else {
                    (1.0 + r * r).powf(-0.5 * alpha)
                }
            }
            KernelSpec::CappedPower { alpha, r_min } => {
                if alpha == 0.0 {
                    1.0
                } else {
                    r.max(r_min).powf(-alpha)
                }
            }
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha >= 0.0 && alpha.is_finite()) {
        return Err(Error::param(format!("tail exponent must be >= 0, got {alpha}")));
    }
    Ok(())
}

/// Evaluate `φ(r)`.
pub fn kernel_eval(kernel: &KernelSpec, r: f64) -> Result<f64> {
    if !(r >= 0.0) {
        return Err(Error::Domain(format!("kernel distance must be >= 0, got {r}")));
    }
    Ok(kernel.eval_unchecked(r))
}

/// Constants `(λ, Λ, R)` with `λ r^{-α} <= φ(r) <= Λ r^{-α}` for all `r >= R`.
pub fn tail_constants(kernel: &KernelSpec) -> Result<(f64, f64, f64)> {
    match *kernel {
        KernelSpec::ConstantFloor { .. } => Err(Error::NoTailClass(kernel.name().into())),
        // r/sqrt(1+r²) lies in [1/sqrt(2), 1) once r >= 1.
        KernelSpec::SmoothTail { alpha } => Ok((2f64.powf(-0.5 * alpha), 1.0, 1.0)),
        KernelSpec::CappedPower { r_min, .. } => Ok((1.0, 1.0, r_min)),
    }
}

/// Model parameters shared by the particle and envelope integrators.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimParams {
    pub p: f64,
    pub alpha: f64,
    pub lambda: f64,
    #[serde(rename = "Lambda")]
    pub big_lambda: f64,
    #[serde(rename = "R")]
    pub r_tail: f64,
    pub total_mass: f64,
    pub kernel: KernelSpec,
}

impl SimParams {
    /// Build parameters with the tail constants read off the kernel.
    ///
    /// The constant kernel is treated as an `α = 0` tail with
    /// `λ = Λ = floor`.
    pub fn new(p: f64, kernel: KernelSpec, total_mass: f64) -> Result<Self> {
        kernel.validate()?;
        let (lambda, big_lambda, r_tail) = match kernel {
            KernelSpec::ConstantFloor { floor } => (floor, floor, 1.0),
            _ => tail_constants(&kernel)?,
        };
        let params = SimParams {
            p,
            alpha: kernel.alpha(),
            lambda,
            big_lambda,
            r_tail,
            total_mass,
            kernel,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.p > 1.0 && self.p.is_finite()) {
            return Err(Error::param(format!("p must be > 1, got {}", self.p)));
        }
        check_alpha(self.alpha)?;
        if !(self.lambda > 0.0 && self.lambda <= self.big_lambda && self.big_lambda.is_finite()) {
            return Err(Error::param(format!(
                "need 0 < lambda <= Lambda, got lambda = {}, Lambda = {}",
                self.lambda, self.big_lambda
            )));
        }
        if !(self.r_tail > 0.0 && self.r_tail.is_finite()) {
            return Err(Error::param(format!("R must be > 0, got {}", self.r_tail)));
        }
        if !(self.total_mass > 0.0 && self.total_mass.is_finite()) {
            return Err(Error::param(format!("total mass must be > 0, got {}", self.total_mass)));
        }
        self.kernel.validate()?;
        if !matches!(self.kernel, KernelSpec::ConstantFloor { .. }) && self.kernel.alpha() != self.alpha {
            return Err(Error::param(format!(
                "alpha = {} disagrees with kernel tail exponent {}",
                self.alpha,
                self.kernel.alpha()
            )));
        }
        Ok(())
    }
}

/// `Φ(z) = |z|^{p-2} z`, with `Φ(0) = 0` for every `p > 1`.
pub fn phi_p(z: &[f64], p: f64) -> Result<Vec<f64>> {
    check_p(p)?;
    let mut out = vec![0.0; z.len()];
    phi_p_into(z, p, &mut out);
    Ok(out)
}

pub(crate) fn check_p(p: f64) -> Result<()> {
    if !(p > 1.0 && p.is_finite()) {
        return Err(Error::param(format!("p must be > 1, got {p}")));
    }
    Ok(())
}

/// Scale factor `|z|^{p-2}` applied by `Φ`, zero at the origin.
#[inline]
pub(crate) fn phi_scale(norm: f64, p: f64) -> f64 {
    if norm == 0.0 {
        0.0
    } else if p == 2.0 {
        1.0
    } else if p == 3.0 {
        norm
    } else {
        norm.powf(p - 2.0)
    }
}

#[inline]
pub(crate) fn phi_p_into(z: &[f64], p: f64, out: &mut [f64]) {
    let s = phi_scale(norm(z), p);
    for (o, &zi) in out.iter_mut().zip(z) {
        *o = s * zi;
    }
}

/// Scalar `Φ`, i.e. `|v|^{p-2} v`.
#[inline]
pub(crate) fn phi_scalar(v: f64, p: f64) -> f64 {
    phi_scale(v.abs(), p) * v
}

#[inline]
pub(crate) fn norm(z: &[f64]) -> f64 {
    z.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Check the pairwise dissipation bound
/// `(a-b)·(Φ(c-a) - Φ(c-b)) <= -2^{2-p} |a-b|^p`
/// for a velocity `c` inside the lens spanned by the extremal pair `a`, `b`.
///
/// Returns [`Error::NotAdmissible`] if `c` lies outside the lens.
pub fn pairwise_dissipation_holds(a: &[f64], b: &[f64], c: &[f64], p: f64) -> Result<bool> {
    check_p(p)?;
    if a.len() != b.len() || a.len() != c.len() {
        return Err(Error::param("vectors must share a dimension"));
    }
    let diff = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(u, v)| u - v).collect::<Vec<_>>();
    let ab = diff(a, b);
    let ca = diff(c, a);
    let cb = diff(c, b);
    let width = norm(&ab);
    let slack = 1e-12 * width.max(f64::MIN_POSITIVE);
    if norm(&ca) > width + slack || norm(&cb) > width + slack {
        return Err(Error::NotAdmissible(format!(
            "|c-a| = {}, |c-b| = {}, |a-b| = {}",
            norm(&ca),
            norm(&cb),
            width
        )));
    }
    let mut pa = vec![0.0; ab.len()];
    let mut pb = vec![0.0; ab.len()];
    phi_p_into(&ca, p, &mut pa);
    phi_p_into(&cb, p, &mut pb);
    let lhs: f64 = ab.iter().zip(pa.iter().zip(&pb)).map(|(d, (x, y))| d * (x - y)).sum();
    let bound = -(2f64.powf(2.0 - p)) * width.powf(p);
    let tol = 1e-12 * width.powf(p).max(1.0);
    Ok(lhs <= bound + tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn kernel_values() {
        let k = KernelSpec::constant(1.0).unwrap();
        assert_eq!(kernel_eval(&k, 7.3).unwrap(), 1.0);
        let k = KernelSpec::smooth_tail(1.0).unwrap();
        assert_eq!(kernel_eval(&k, 0.0).unwrap(), 1.0);
        let k = KernelSpec::capped_power(0.5, DEFAULT_R_MIN).unwrap();
        assert_relative_eq!(kernel_eval(&k, 4.0).unwrap(), 0.5, max_relative = 1e-15);
        // capped near the origin
        assert_relative_eq!(kernel_eval(&k, 0.0).unwrap(), 1e3, max_relative = 1e-12);
    }

    #[test]
    fn negative_distance_is_a_domain_error() {
        let k = KernelSpec::smooth_tail(1.0).unwrap();
        assert!(matches!(kernel_eval(&k, -1.0), Err(Error::Domain(_))));
        assert!(matches!(kernel_eval(&k, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_kernel_has_no_tail_class() {
        let k = KernelSpec::constant(0.3).unwrap();
        assert!(matches!(tail_constants(&k), Err(Error::NoTailClass(_))));
    }

    #[test]
    fn tail_constants_match_dense_sampling() {
        // Oracle: sample r^α φ(r) on [R, 1e6 R] and read off its range.
        let cases = [
            (KernelSpec::smooth_tail(1.0).unwrap(), 1.0 / 2f64.sqrt()),
            (KernelSpec::smooth_tail(2.0).unwrap(), 0.5),
            (KernelSpec::capped_power(0.7, 1e-6).unwrap(), 1.0),
            (KernelSpec::capped_power(2.5, 1e-3).unwrap(), 1.0),
        ];
        for (k, expected_lambda) in cases {
            let (lambda, big_lambda, r) = tail_constants(&k).unwrap();
            assert_relative_eq!(lambda, expected_lambda, max_relative = 1e-14);
            let alpha = k.alpha();
            let mut lo = f64::INFINITY;
            let mut hi = 0.0f64;
            for i in 0..=60_000 {
                let rr = r * 10f64.powf(6.0 * i as f64 / 60_000.0);
                let scaled = kernel_eval(&k, rr).unwrap() * rr.powf(alpha);
                lo = lo.min(scaled);
                hi = hi.max(scaled);
            }
            assert!(lo >= lambda * (1.0 - 1e-12), "{k:?}: {lo} < {lambda}");
            assert!(hi <= big_lambda * (1.0 + 1e-12), "{k:?}: {hi} > {big_lambda}");
            assert_relative_eq!(lo, lambda, max_relative = 1e-9);
        }
    }

    #[test]
    fn phi_examples() {
        assert_eq!(phi_p(&[0.0, 0.0], 1.5).unwrap(), vec![0.0, 0.0]);
        assert_eq!(phi_p(&[0.0], 4.0).unwrap(), vec![0.0]);
        assert_eq!(phi_p(&[3.0, -4.0], 2.0).unwrap(), vec![3.0, -4.0]);
        assert_eq!(phi_p(&[2.0], 3.0).unwrap(), vec![4.0]);
        assert!(matches!(phi_p(&[1.0], 1.0), Err(Error::Parameter(_))));
    }

    #[test]
    fn dissipation_examples() {
        // a = b: both sides vanish
        assert!(pairwise_dissipation_holds(&[0.3], &[0.3], &[0.3], 2.5).unwrap());
        // midpoint attains equality: (a-b)(Φ(c-a) - Φ(c-b)) = 2(-1-1) = -4 = -2^0 2^2
        assert!(pairwise_dissipation_holds(&[1.0], &[-1.0], &[0.0], 2.0).unwrap());
        let err = pairwise_dissipation_holds(&[1.0], &[-1.0], &[5.0], 2.0);
        assert!(matches!(err, Err(Error::NotAdmissible(_))));
    }

    #[test]
    fn dissipation_bound_fails_below_p_two() {
        // At c = a the left side is -|a-b|^p, which exceeds -2^{2-p}|a-b|^p when p < 2.
        assert!(!pairwise_dissipation_holds(&[1.0], &[-1.0], &[1.0], 1.5).unwrap());
    }

    #[test]
    fn simparams_validation() {
        let k = KernelSpec::smooth_tail(0.5).unwrap();
        let sp = SimParams::new(3.0, k, 2.0).unwrap();
        assert_relative_eq!(sp.lambda, 2f64.powf(-0.25));
        assert!(SimParams::new(1.0, k, 2.0).is_err());
        assert!(SimParams::new(3.0, k, 0.0).is_err());
        let mut bad = sp;
        bad.alpha = 0.7;
        assert!(bad.validate().is_err());
    }

    fn kernels() -> impl Strategy<Value = KernelSpec> {
        prop_oneof![
            (0.01f64..5.0).prop_map(|f| KernelSpec::ConstantFloor { floor: f }),
            (0.0f64..4.0).prop_map(|a| KernelSpec::SmoothTail { alpha: a }),
            (0.0f64..4.0, 1e-8f64..1.0).prop_map(|(a, r)| KernelSpec::CappedPower { alpha: a, r_min: r }),
        ]
    }

    proptest! {
        #[test]
        fn phi_is_odd(z in prop::collection::vec(-1e3f64..1e3, 1..4), p in 1.01f64..6.0) {
            let plus = phi_p(&z, p).unwrap();
            let neg: Vec<f64> = z.iter().map(|x| -x).collect();
            let minus = phi_p(&neg, p).unwrap();
            for (a, b) in plus.iter().zip(&minus) {
                prop_assert_eq!(*a, -*b);
            }
        }

        #[test]
        fn phi_monotone_along_rays(
            dir in prop::collection::vec(-1.0f64..1.0, 1..4),
            s in 0.0f64..50.0,
            gap in 0.0f64..50.0,
            p in 1.01f64..6.0,
        ) {
            let n = norm(&dir);
            prop_assume!(n > 1e-6);
            let e: Vec<f64> = dir.iter().map(|x| x / n).collect();
            let t = s + gap;
            let ps = phi_p(&e.iter().map(|x| x * s).collect::<Vec<_>>(), p).unwrap();
            let pt = phi_p(&e.iter().map(|x| x * t).collect::<Vec<_>>(), p).unwrap();
            let proj: f64 = pt.iter().zip(&ps).zip(&e).map(|((a, b), c)| (a - b) * c).sum();
            prop_assert!(proj >= -1e-12 * t.powf(p - 1.0).max(1.0));
        }

        #[test]
        fn kernels_are_nonincreasing(k in kernels(), mut rs in prop::collection::vec(0.0f64..1e4, 2..40)) {
            rs.sort_by(f64::total_cmp);
            let vals: Vec<f64> = rs.iter().map(|&r| kernel_eval(&k, r).unwrap()).collect();
            for w in vals.windows(2) {
                prop_assert!(w[1] <= w[0]);
                prop_assert!(w[1] >= 0.0 && w[1].is_finite());
            }
        }

        #[test]
        fn tail_sandwich(alpha in 0.0f64..4.0, r_min in 1e-6f64..0.5, scale in 0.0f64..6.0, smooth in any::<bool>()) {
            let k = if smooth { KernelSpec::SmoothTail { alpha } } else { KernelSpec::CappedPower { alpha, r_min } };
            let (lambda, big_lambda, r_tail) = tail_constants(&k).unwrap();
            let r = r_tail * 10f64.powf(scale);
            let phi = kernel_eval(&k, r).unwrap();
            let base = r.powf(-alpha);
            prop_assert!(lambda * base <= phi * (1.0 + 1e-12));
            prop_assert!(phi <= big_lambda * base * (1.0 + 1e-12));
        }
    }
}
