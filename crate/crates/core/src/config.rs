//! Human-readable `key = value` configuration for [`SimParams`].
//!
//! The format is TOML restricted to flat keys:
//!
//! ```text
//! p = 2.5
//! alpha = 0.5
//! lambda = 0.8408964152537145   # optional, read off the kernel when absent
//! Lambda = 1.0                  # optional
//! R = 1.0                       # optional
//! total_mass = 2.0
//! kernel.family = "smooth_tail" # constant_floor | smooth_tail | capped_power
//! kernel.alpha = 0.5
//! kernel.r_min = 1e-6           # capped_power only, default 1e-6
//! kernel.floor = 1.0            # constant_floor only
//! ```

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{KernelSpec, SimParams, DEFAULT_R_MIN};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawKernel {
    family: String,
    alpha: Option<f64>,
    r_min: Option<f64>,
    floor: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    p: f64,
    alpha: Option<f64>,
    lambda: Option<f64>,
    #[serde(rename = "Lambda")]
    big_lambda: Option<f64>,
    #[serde(rename = "R")]
    r_tail: Option<f64>,
    total_mass: f64,
    kernel: RawKernel,
}

/// Build a kernel from a family name (`constant_floor`, `smooth_tail`,
/// `capped_power` or their short forms) and the optional shape values.
pub fn kernel_from_parts(
    family: &str,
    alpha: Option<f64>,
    r_min: Option<f64>,
    floor: Option<f64>,
) -> Result<KernelSpec> {
    let need_alpha = || alpha.ok_or_else(|| Error::Config(format!("kernel family {family} needs kernel.alpha")));
    match family {
        "constant_floor" | "constant" => {
            let floor = floor.ok_or_else(|| Error::Config("constant_floor needs kernel.floor".into()))?;
            KernelSpec::constant(floor)
        }
        "smooth_tail" | "smooth" => KernelSpec::smooth_tail(need_alpha()?),
        "capped_power" | "capped" => KernelSpec::capped_power(need_alpha()?, r_min.unwrap_or(DEFAULT_R_MIN)),
        other => Err(Error::Config(format!("unknown kernel family {other:?}"))),
    }
}

/// Parse parameters from the `key = value` format.
pub fn parse_params(text: &str) -> Result<SimParams> {
    let raw: RawParams = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    let kernel = kernel_from_parts(&raw.kernel.family, raw.kernel.alpha, raw.kernel.r_min, raw.kernel.floor)?;
    let mut params = SimParams::new(raw.p, kernel, raw.total_mass)?;
    if let Some(alpha) = raw.alpha {
        params.alpha = alpha;
    }
    if let Some(l) = raw.lambda {
        params.lambda = l;
    }
    if let Some(l) = raw.big_lambda {
        params.big_lambda = l;
    }
    if let Some(r) = raw.r_tail {
        params.r_tail = r;
    }
    params.validate()?;
    Ok(params)
}

/// Render parameters in the `key = value` format; the output parses back
/// to the same value.
pub fn format_params(params: &SimParams) -> String {
    let mut out = format!(
        "p = {:?}\nalpha = {:?}\nlambda = {:?}\nLambda = {:?}\nR = {:?}\ntotal_mass = {:?}\n",
        params.p, params.alpha, params.lambda, params.big_lambda, params.r_tail, params.total_mass
    );
    out.push_str(&format!("kernel.family = \"{}\"\n", params.kernel.name()));
    match params.kernel {
        KernelSpec::ConstantFloor { floor } => out.push_str(&format!("kernel.floor = {floor:?}\n")),
        KernelSpec::SmoothTail { alpha } => out.push_str(&format!("kernel.alpha = {alpha:?}\n")),
        KernelSpec::CappedPower { alpha, r_min } => {
            out.push_str(&format!("kernel.alpha = {alpha:?}\nkernel.r_min = {r_min:?}\n"))
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_documented_schema() {
        let text = r#"
            p = 2.5
            total_mass = 2.0
            kernel.family = "capped_power"
            kernel.alpha = 1.5
        "#;
        let params = parse_params(text).unwrap();
        assert_eq!(params.alpha, 1.5);
        assert_eq!(
            params.kernel,
            KernelSpec::CappedPower {
                alpha: 1.5,
                r_min: 1e-6
            }
        );
        assert_eq!((params.lambda, params.big_lambda, params.r_tail), (1.0, 1.0, 1e-6));
    }

    #[test]
    fn rejects_unknown_keys_and_families() {
        assert!(parse_params("p = 2\ntotal_mass = 1\nkernel.family = \"gauss\"\nkernel.alpha = 1").is_err());
        assert!(
            parse_params("p = 2\ntotal_mass = 1\nbeta = 3\nkernel.family = \"smooth_tail\"\nkernel.alpha = 1").is_err()
        );
        assert!(parse_params("p = 2\ntotal_mass = 1\nkernel.family = \"constant_floor\"").is_err());
    }

    proptest! {
        #[test]
        fn format_parse_roundtrip(p in 1.01f64..8.0, alpha in 0.0f64..3.0, m in 0.1f64..10.0, which in 0u8..3) {
            let kernel = match which {
                0 => KernelSpec::ConstantFloor { floor: alpha + 0.1 },
                1 => KernelSpec::SmoothTail { alpha },
                _ => KernelSpec::CappedPower { alpha, r_min: 1e-5 },
            };
            let params = SimParams::new(p, kernel, m).unwrap();
            let back = parse_params(&format_params(&params)).unwrap();
            prop_assert_eq!(params, back);
        }
    }
}
