//! Simulation and verification toolkit for collective dynamics with
//! nonlinear velocity alignment `Φ(z) = |z|^{p-2} z`.
//!
//! The crate integrates two dynamical systems side by side:
//!
//! * the agent-based Cucker-Smale dynamics with the nonlinear alignment map
//!   ([`particle`]), and
//! * the paired diameter envelope `D' = V`, `V' = -C φ(D) V^{p-1}` together
//!   with its rescaled autonomous forms ([`envelope`]).
//!
//! On top of these it builds the explicit invariant, subcritical and
//! supercritical regions ([`regions`]), measures decay and growth exponents
//! ([`rates`]) and runs batch sweeps over the `(p, α)` plane ([`sweep`]).

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod envelope;
pub mod error;
pub mod model;
pub mod ode;
pub mod particle;
pub mod quad;
pub mod rates;
pub mod regions;
pub mod svg;
pub mod sweep;
pub mod trajectory;

pub use envelope::{EnvelopeParams, EnvelopeState, EnvelopeSystem, RateBound};
pub use error::{Error, Result};
pub use model::{KernelSpec, SimParams};
pub use ode::{Schedule, SolverOptions, Tolerances};
pub use particle::{Coupling, ParticleState};
pub use rates::{Field, RateFit, ScenarioClass, ScenarioLabel};
pub use regions::{Interval, RegionSpec};
pub use trajectory::{Coords, RunStatus, Sample, Trajectory};
