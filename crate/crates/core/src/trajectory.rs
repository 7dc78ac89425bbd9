//! Time series of diameter observables and their file formats.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::envelope::{beta_sup, gamma_log, EnvelopeParams, RateBound};
use crate::error::{Error, Result};
use crate::model::{KernelSpec, SimParams};
use crate::ode::{SolverStats, Tolerances};
use crate::particle::Coupling;

type SampleMap = Box<dyn Fn(&Sample) -> (f64, f64, f64)>;

/// Coordinate system of a `(D, V)` series.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Coords {
    /// Raw time `t`, unscaled diameters.
    Raw,
    /// `τ = ln(t+1)`, `D = (t+1)^{β*-1} 𝒟`, `V = (t+1)^{β*} 𝒱`.
    S1,
    /// `τ = ln(t+1)`, `D̃ = (τ+1)^{-(γ+1)} 𝒟`, `Ṽ = (τ+1)^{-γ} (t+1) 𝒱`.
    Sb,
    /// Raw time, `D = (t+1)^{-γ} 𝒟`, raw `V`.
    DScaled { gamma: f64 },
}

impl fmt::Display for Coords {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coords::Raw => f.write_str("raw"),
            Coords::S1 => f.write_str("S1"),
            Coords::Sb => f.write_str("Sb"),
            Coords::DScaled { gamma } => write!(f, "Dscaled:{gamma:?}"),
        }
    }
}

impl FromStr for Coords {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "raw" => Ok(Coords::Raw),
            "S1" | "s1" => Ok(Coords::S1),
            "Sb" | "sb" => Ok(Coords::Sb),
            other => {
                if let Some(g) = other.strip_prefix("Dscaled:") {
                    let gamma = g
                        .parse()
                        .map_err(|_| Error::Config(format!("bad Dscaled exponent {g:?}")))?;
                    Ok(Coords::DScaled { gamma })
                } else {
                    Err(Error::Config(format!("unknown coordinate system {other:?}")))
                }
            }
        }
    }
}

impl From<Coords> for String {
    fn from(c: Coords) -> String {
        c.to_string()
    }
}

impl TryFrom<String> for Coords {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    /// Row-major `N × d` positions.
    pub x: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    /// Raw time, or `τ` in the rescaled coordinate systems.
    pub t: f64,
    #[serde(rename = "D")]
    pub d: f64,
    #[serde(rename = "V")]
    pub v: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub momentum: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub lyapunov: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snapshot: Option<Snapshot>,
}

impl Sample {
    pub fn new(t: f64, d: f64, v: f64) -> Self {
        Sample {
            t,
            d,
            v,
            momentum: None,
            lyapunov: None,
            snapshot: None,
        }
    }

    pub fn momentum_norm(&self) -> Option<f64> {
        self.momentum
            .as_ref()
            .map(|m| m.iter().map(|x| x * x).sum::<f64>().sqrt())
    }
}

/// How a run ended.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    /// Velocities coalesced (`V < 1e-14`) in finite time.
    Coalesced {
        t: f64,
    },
    /// Envelope `V` reached zero; `t_star` estimates the extinction time.
    Extinct {
        t: f64,
        t_star: f64,
    },
    /// A caller-supplied stop rule fired.
    Halted {
        t: f64,
        reason: String,
    },
}

/// Where a trajectory came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "engine", rename_all = "snake_case")]
pub enum Source {
    Particle {
        params: SimParams,
        coupling: Coupling,
        n: usize,
        dim: usize,
    },
    Envelope {
        params: EnvelopeParams,
        bound: RateBound,
        #[serde(skip_serializing_if = "Option::is_none", default)]
        kernel: Option<KernelSpec>,
    },
    Imported {
        path: String,
    },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegratorMeta {
    pub stats: SolverStats,
    pub tol: Tolerances,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub coords: Coords,
    pub source: Source,
    pub meta: IntegratorMeta,
    pub status: RunStatus,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    pub fn d_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.d).collect()
    }

    pub fn v_values(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.v).collect()
    }

    pub fn last(&self) -> &Sample {
        self.samples.last().expect("trajectory has at least one sample")
    }

    /// `(p, α)` of the generating model, when known.
    pub fn exponents(&self) -> Option<(f64, f64)> {
        match &self.source {
            Source::Particle { params, .. } => Some((params.p, params.alpha)),
            Source::Envelope { params, .. } => Some((params.p, params.alpha)),
            Source::Imported { .. } => None,
        }
    }

    /// Check the structural invariants: increasing times, nonnegative
    /// diameters.
    pub fn validate(&self) -> Result<()> {
        if self.samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(Error::Domain("sample times must increase strictly".into()));
        }
        if let Some(s) = self.samples.iter().find(|s| !(s.d >= 0.0 && s.v >= 0.0)) {
            return Err(Error::Domain(format!("negative diameter at t = {}", s.t)));
        }
        Ok(())
    }

    /// Map a raw-time trajectory into `target` coordinates using the given
    /// model exponents.
    pub fn convert_with(&self, target: Coords, p: f64, alpha: f64) -> Result<Trajectory> {
        if self.coords == target {
            return Ok(self.clone());
        }
        if self.coords != Coords::Raw {
            return Err(Error::CoordinateMismatch {
                found: self.coords.to_string(),
                expected: target.to_string(),
            });
        }
        let map: SampleMap = match target {
            Coords::Raw => unreachable!(),
            Coords::S1 => {
                let b = beta_sup(p, alpha)?;
                Box::new(move |s: &Sample| {
                    let tp1 = s.t + 1.0;
                    (tp1.ln(), tp1.powf(b - 1.0) * s.d, tp1.powf(b) * s.v)
                })
            }
            Coords::Sb => {
                if (p - 3.0).abs() > 1e-12 {
                    return Err(Error::scenario(format!("log-scaled coordinates need p = 3, got {p}")));
                }
                let g = gamma_log(alpha)?;
                Box::new(move |s: &Sample| {
                    let tp1 = s.t + 1.0;
                    let tau = tp1.ln();
                    let taup1 = tau + 1.0;
                    (tau, taup1.powf(-(g + 1.0)) * s.d, taup1.powf(-g) * tp1 * s.v)
                })
            }
            Coords::DScaled { gamma } => Box::new(move |s: &Sample| (s.t, (s.t + 1.0).powf(-gamma) * s.d, s.v)),
        };
        let samples = self
            .samples
            .iter()
            .map(|s| {
                let (t, d, v) = map(s);
                Sample {
                    t,
                    d,
                    v,
                    momentum: s.momentum.clone(),
                    lyapunov: s.lyapunov,
                    snapshot: None,
                }
            })
            .collect();
        Ok(Trajectory {
            samples,
            coords: target,
            source: self.source.clone(),
            meta: self.meta,
            status: self.status.clone(),
        })
    }

    /// Map into `target` coordinates using the exponents recorded in the
    /// source metadata.
    pub fn convert(&self, target: Coords) -> Result<Trajectory> {
        if self.coords == target {
            return Ok(self.clone());
        }
        let (p, alpha) = self.exponents().ok_or_else(|| Error::CoordinateMismatch {
            found: format!("{} (no model metadata)", self.coords),
            expected: target.to_string(),
        })?;
        self.convert_with(target, p, alpha)
    }

    fn has_coords_column(&self) -> bool {
        !matches!(self.source, Source::Particle { .. })
    }

    /// CSV with header `t,D,V,momentum` (plus `coords` for envelope runs).
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let with_coords = self.has_coords_column();
        if with_coords {
            wr.write_record(["t", "D", "V", "momentum", "coords"])?;
        } else {
            wr.write_record(["t", "D", "V", "momentum"])?;
        }
        let coords = self.coords.to_string();
        for s in &self.samples {
            let m = s.momentum_norm().map(|m| format!("{m:?}")).unwrap_or_default();
            let mut rec = vec![format!("{:?}", s.t), format!("{:?}", s.d), format!("{:?}", s.v), m];
            if with_coords {
                rec.push(coords.clone());
            }
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R, origin: &str) -> Result<Trajectory> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let col = |name: &str| headers.iter().position(|h| h == name);
        let (ti, di, vi) = match (col("t"), col("D"), col("V")) {
            (Some(a), Some(b), Some(c)) => (a, b, c),
            _ => return Err(Error::Config(format!("{origin}: CSV needs t, D and V columns"))),
        };
        let mi = col("momentum");
        let ci = col("coords");
        let mut coords = None;
        let mut samples = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> {
                rec.get(i)
                    .unwrap_or("")
                    .trim()
                    .parse()
                    .map_err(|_| Error::Config(format!("{origin}: bad number on data row {}", line + 1)))
            };
            let mut s = Sample::new(num(ti)?, num(di)?, num(vi)?);
            if let Some(mi) = mi {
                let raw = rec.get(mi).unwrap_or("").trim();
                if !raw.is_empty() {
                    s.momentum = Some(vec![num(mi)?]);
                }
            }
            if let Some(ci) = ci {
                let c: Coords = rec.get(ci).unwrap_or("raw").trim().parse()?;
                match coords {
                    None => coords = Some(c),
                    Some(prev) if prev != c => {
                        return Err(Error::Config(format!("{origin}: mixed coordinate systems")));
                    }
                    _ => {}
                }
            }
            samples.push(s);
        }
        let traj = Trajectory {
            samples,
            coords: coords.unwrap_or(Coords::Raw),
            source: Source::Imported {
                path: origin.to_string(),
            },
            meta: IntegratorMeta::default(),
            status: RunStatus::Completed,
        };
        traj.validate()?;
        Ok(traj)
    }

    pub fn read_csv_file(path: &Path) -> Result<Trajectory> {
        let f = fs::File::open(path)?;
        Self::read_csv(f, &path.display().to_string())
    }

    /// Per-agent snapshots as CSV: `t,agent,x0..x{d-1},v0..v{d-1}`.
    pub fn write_snapshots<W: std::io::Write>(&self, w: W, dim: usize) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string(), "agent".to_string()];
        header.extend((0..dim).map(|k| format!("x{k}")));
        header.extend((0..dim).map(|k| format!("v{k}")));
        wr.write_record(&header)?;
        for s in &self.samples {
            let Some(snap) = &s.snapshot else { continue };
            for (agent, (x, v)) in snap.x.chunks(dim).zip(snap.v.chunks(dim)).enumerate() {
                let mut rec = vec![format!("{:?}", s.t), agent.to_string()];
                rec.extend(x.iter().map(|c| format!("{c:?}")));
                rec.extend(v.iter().map(|c| format!("{c:?}")));
                wr.write_record(&rec)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Write `<runid>_traj.csv`, `<runid>_traj.json` and, when snapshots
    /// were recorded, `<runid>_snap.csv` into `dir`. Returns the CSV path.
    pub fn write_run(&self, dir: &Path, runid: &str) -> Result<PathBuf> {
        fs::create_dir_all(dir)?;
        let csv_path = dir.join(format!("{runid}_traj.csv"));
        self.write_csv(fs::File::create(&csv_path)?)?;
        let json_path = dir.join(format!("{runid}_traj.json"));
        fs::write(&json_path, serde_json::to_string_pretty(self)?)?;
        if let Source::Particle { dim, .. } = self.source {
            if self.samples.iter().any(|s| s.snapshot.is_some()) {
                let snap_path = dir.join(format!("{runid}_snap.csv"));
                self.write_snapshots(fs::File::create(snap_path)?, dim)?;
            }
        }
        Ok(csv_path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Trajectory {
        Trajectory {
            samples: vec![Sample::new(0.0, 1.0, 2.0), Sample::new(3.0, 1.5, 1e-12)],
            coords: Coords::Raw,
            source: Source::Imported { path: "mem".into() },
            meta: IntegratorMeta::default(),
            status: RunStatus::Completed,
        }
    }

    #[test]
    fn coords_parse_and_print() {
        for c in [Coords::Raw, Coords::S1, Coords::Sb, Coords::DScaled { gamma: 0.75 }] {
            assert_eq!(c.to_string().parse::<Coords>().unwrap(), c);
        }
        assert!("polar".parse::<Coords>().is_err());
    }

    #[test]
    fn csv_roundtrip_keeps_values_bit_exact() {
        let t = toy();
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,D,V,momentum,coords\n"));
        let back = Trajectory::read_csv(&buf[..], "mem").unwrap();
        assert_eq!(back.samples, t.samples);
        assert_eq!(back.coords, Coords::Raw);
    }

    #[test]
    fn s1_conversion_formula() {
        // p = 4, α = 0: β* = 1/2
        let s1 = toy().convert_with(Coords::S1, 4.0, 0.0).unwrap();
        let s = &s1.samples[1];
        assert!((s.t - 4f64.ln()).abs() < 1e-15);
        assert!((s.d - 1.5 * 4f64.powf(-0.5)).abs() < 1e-15);
        assert!((s.v - 1e-12 * 2.0).abs() < 1e-27);
    }

    #[test]
    fn imported_trajectories_cannot_convert_without_exponents() {
        assert!(matches!(
            toy().convert(Coords::S1),
            Err(Error::CoordinateMismatch { .. })
        ));
    }

    #[test]
    fn rejects_non_monotone_times() {
        let text = "t,D,V\n0,1,1\n0,1,1\n";
        assert!(Trajectory::read_csv(text.as_bytes(), "mem").is_err());
    }
}
