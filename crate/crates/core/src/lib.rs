//! Numerical toolkit for local semiflows on finite-dimensional phase spaces.
//!
//! The crate is organised bottom-up:
//!
//! * [`flow`] integrates vector fields as local semiflows (escape times,
//!   blow-up detection, omega-limit estimates, Lyapunov probes).
//! * [`wazewski`] describes closed sets by margin functions and builds exit-set
//!   checks, the collapsed quotient flow, and stability-at-infinity probes on
//!   top of them.
//! * [`linking`] deforms discrete paths by the flow to estimate minimax levels
//!   and extract near-invariant candidates.
//! * [`resonant`] and [`elliptic`] are two parabolic applications: a spectral
//!   Galerkin model at resonance with quasiperiodic forcing, and a radial
//!   finite-volume model whose positive equilibrium is found by mountain pass.

pub mod builtin;
pub mod csv;
mod error;
pub mod elliptic;
pub mod flow;
pub mod linalg;
pub mod linking;
pub mod region;
pub mod resonant;
mod state;
pub mod wazewski;

pub use error::{Error, Result};
pub use flow::{FlowModel, LinearPart, Scheme, Trajectory, TrajectoryStatus, VectorField};
pub use region::Region;
pub use state::{SpaceId, StateVector};
