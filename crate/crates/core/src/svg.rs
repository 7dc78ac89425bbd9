//! Minimal log-log SVG plots of `D(t)` and `V(t)`.

use std::fmt::Write;

use crate::trajectory::Trajectory;

const W: f64 = 640.0;
const H: f64 = 420.0;
const PAD: f64 = 50.0;

/// Predicted slopes drawn as dashed guides through the last sample.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Guides {
    /// Growth exponent of `D`.
    pub d: Option<f64>,
    /// Decay exponent of `V` (positive).
    pub v: Option<f64>,
}

fn bounds(vals: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    let (lo, hi) = vals
        .filter(|v| *v > 0.0 && v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if lo.is_finite() {
        let (l, h) = (lo.log10(), hi.log10());
        if h - l < 1e-9 {
            Some((l - 0.5, h + 0.5))
        } else {
            Some((l, h))
        }
    } else {
        None
    }
}

/// Render the positive-time samples of `traj` on shared log-log axes.
pub fn loglog_plot(traj: &Trajectory, title: &str, guides: Guides) -> String {
    let pts: Vec<_> = traj.samples.iter().filter(|s| s.t > 0.0).collect();
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="20" text-anchor="middle">{}</text>"#,
        W / 2.0,
        escape(title)
    );
    let (Some((tx0, tx1)), Some((y0, y1))) = (
        bounds(pts.iter().map(|s| s.t)),
        bounds(pts.iter().flat_map(|s| [s.d, s.v])),
    ) else {
        out.push_str("</svg>\n");
        return out;
    };
    let sx = |lt: f64| PAD + (lt - tx0) / (tx1 - tx0).max(1e-12) * (W - 2.0 * PAD);
    let sy = |ly: f64| H - PAD - (ly - y0) / (y1 - y0) * (H - 2.0 * PAD);
    let _ = writeln!(
        out,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    let _ = writeln!(
        out,
        r#"<text x="{PAD}" y="{}">t = 1e{tx0:.1}</text><text x="{}" y="{}" text-anchor="end">1e{tx1:.1}</text>"#,
        H - PAD + 16.0,
        W - PAD,
        H - PAD + 16.0
    );
    let _ = writeln!(
        out,
        r#"<text x="4" y="{}">1e{y0:.1}</text><text x="4" y="{}">1e{y1:.1}</text>"#,
        H - PAD,
        PAD + 4.0
    );
    for (name, color, pick, slope) in [
        ("D", "#1f77b4", 0usize, guides.d),
        ("V", "#d62728", 1usize, guides.v.map(|b| -b)),
    ] {
        let series: Vec<(f64, f64)> = pts
            .iter()
            .map(|s| (s.t, if pick == 0 { s.d } else { s.v }))
            .filter(|(_, y)| *y > 0.0)
            .map(|(t, y)| (t.log10(), y.log10()))
            .collect();
        if series.is_empty() {
            continue;
        }
        let path: Vec<String> = series
            .iter()
            .map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let &(lx, ly) = series.last().unwrap_or(&(0.0, 0.0));
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" fill="{color}">{name}</text>"#,
            sx(lx) + 4.0,
            sy(ly)
        );
        if let Some(k) = slope {
            let gx0 = series[0].0.max(tx0);
            let gy0 = ly + k * (gx0 - lx);
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{color}" stroke-dasharray="5,4" opacity="0.6"/>"#,
                sx(gx0),
                sy(gy0.clamp(y0, y1)),
                sx(lx),
                sy(ly)
            );
        }
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{Coords, IntegratorMeta, RunStatus, Sample, Source};

    #[test]
    fn renders_polylines_and_guides() {
        let tr = Trajectory {
            samples: (0..20)
                .map(|k| {
                    let t = 10f64.powi(k - 2);
                    Sample::new(t, 1.0 + t.powf(0.5), 1.0 / (1.0 + t))
                })
                .collect(),
            coords: Coords::Raw,
            source: Source::Imported { path: "x".into() },
            meta: IntegratorMeta::default(),
            status: RunStatus::Completed,
        };
        let svg = loglog_plot(
            &tr,
            "p = 4 & α = 0.5",
            Guides {
                d: Some(0.5),
                v: Some(1.0),
            },
        );
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert_eq!(svg.matches("stroke-dasharray").count(), 2);
        assert!(svg.contains("&amp;"));
    }
}
