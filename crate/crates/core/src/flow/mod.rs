//! Local semiflows generated by finite-dimensional vector fields.
//!
//! A [`FlowModel`] couples a [`VectorField`] with an integrator policy and a
//! blow-up threshold. The threshold is the numerical stand-in for a finite
//! escape time: a trajectory whose norm reaches it is reported as
//! [`TrajectoryStatus::Exploded`] and never continued.

mod integrator;
mod limit;
mod ops;
mod trajectory;

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::Tridiagonal;
use crate::state::{SpaceId, StateVector};

pub use limit::{
    attraction_probe, lyapunov_monotonicity, omega_limit, AttractionOutcome, AttractionReport,
    LimitSetEstimate, LyapunovReport,
};
pub use ops::{
    check_semigroup, escape_time, evolve, evolve_from, evolve_in_region, evolve_sampled, EscapeResult,
    SemigroupCheck,
};
pub use trajectory::{Trajectory, TrajectoryStatus};

/// Linear part `A` of a semilinear field `F(t,x) = A x + N(t,x)`, treated
/// implicitly by the IMEX scheme.
#[derive(Debug, Clone, PartialEq)]
pub enum LinearPart {
    Diagonal(Vec<f64>),
    Tridiagonal(Tridiagonal),
}

impl LinearPart {
    pub fn dim(&self) -> usize {
        match self {
            LinearPart::Diagonal(d) => d.len(),
            LinearPart::Tridiagonal(t) => t.dim(),
        }
    }

    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        match self {
            LinearPart::Diagonal(d) => {
                for ((o, di), xi) in out.iter_mut().zip(d).zip(x) {
                    *o = di * xi;
                }
            }
            LinearPart::Tridiagonal(t) => t.apply(x, out),
        }
    }

    /// Solves `(I - beta A) x = rhs`.
    pub(crate) fn solve_implicit(&self, beta: f64, rhs: &[f64], x: &mut [f64], scratch: &mut [f64]) {
        match self {
            LinearPart::Diagonal(d) => {
                for i in 0..d.len() {
                    x[i] = rhs[i] / (1.0 - beta * d[i]);
                }
            }
            LinearPart::Tridiagonal(t) => t.solve_shifted(1.0, -beta, rhs, x, scratch),
        }
    }
}

/// Right-hand side of `u' = F(t, u)`.
///
/// Implementations must be deterministic. Autonomous fields ignore `t`.
pub trait VectorField: Send + Sync {
    fn dim(&self) -> usize;

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]);

    fn space(&self) -> SpaceId {
        SpaceId::EUCLIDEAN
    }

    /// Stiff linear part for the IMEX scheme, if the field is semilinear.
    fn linear_part(&self) -> Option<&LinearPart> {
        None
    }

    /// `F(t,x) - A x`. The default subtracts the linear part from [`eval`].
    ///
    /// [`eval`]: VectorField::eval
    fn eval_nonlinear(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.eval(t, x, out);
        if let Some(lin) = self.linear_part() {
            let mut ax = vec![0.0; x.len()];
            lin.apply(x, &mut ax);
            for (o, a) in out.iter_mut().zip(&ax) {
                *o -= a;
            }
        }
    }

    /// Norm used for blow-up detection, clustering and distances.
    fn norm(&self, x: &[f64]) -> f64 {
        crate::linalg::norm2(x)
    }
}

/// Integration scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    /// Dormand–Prince 5(4) with local extrapolation.
    Dopri5,
    /// Additive IMEX Runge–Kutta (ARS(4,4,3)); linear part implicit, error by
    /// step doubling.
    Imex,
}

/// Default norm threshold for declaring blow-up.
pub const DEFAULT_BLOW_UP_NORM: f64 = 1e6;

/// A vector field together with the integrator policy that realizes its local
/// semiflow. Immutable after construction and cheap to clone.
#[derive(Clone)]
pub struct FlowModel {
    field: Arc<dyn VectorField>,
    pub dt_max: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub blow_up_norm: f64,
    pub scheme: Scheme,
}

impl fmt::Debug for FlowModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FlowModel")
            .field("dim", &self.dim())
            .field("space", &self.space())
            .field("dt_max", &self.dt_max)
            .field("abs_tol", &self.abs_tol)
            .field("rel_tol", &self.rel_tol)
            .field("blow_up_norm", &self.blow_up_norm)
            .field("scheme", &self.scheme)
            .finish()
    }
}

impl FlowModel {
    /// Wraps a field with default policy: tolerances `1e-9`, `dt_max = 0.1`,
    /// blow-up at norm `1e6`, IMEX when the field exposes a linear part.
    pub fn new(field: impl VectorField + 'static) -> Self {
        Self::from_arc(Arc::new(field))
    }

    pub fn from_arc(field: Arc<dyn VectorField>) -> Self {
        let scheme = if field.linear_part().is_some() { Scheme::Imex } else { Scheme::Dopri5 };
        Self {
            field,
            dt_max: 0.1,
            abs_tol: 1e-9,
            rel_tol: 1e-9,
            blow_up_norm: DEFAULT_BLOW_UP_NORM,
            scheme,
        }
    }

    pub fn with_tolerances(mut self, abs_tol: f64, rel_tol: f64) -> Self {
        assert!(abs_tol > 0.0 && rel_tol > 0.0);
        self.abs_tol = abs_tol;
        self.rel_tol = rel_tol;
        self
    }

    pub fn with_dt_max(mut self, dt_max: f64) -> Self {
        assert!(dt_max > 0.0);
        self.dt_max = dt_max;
        self
    }

    pub fn with_blow_up_norm(mut self, blow_up_norm: f64) -> Self {
        assert!(blow_up_norm > 0.0);
        self.blow_up_norm = blow_up_norm;
        self
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        if scheme == Scheme::Imex {
            assert!(self.field.linear_part().is_some(), "IMEX needs a linear part");
        }
        self.scheme = scheme;
        self
    }

    pub fn dim(&self) -> usize {
        self.field.dim()
    }

    pub fn space(&self) -> SpaceId {
        self.field.space()
    }

    pub fn field(&self) -> &dyn VectorField {
        self.field.as_ref()
    }

    pub fn norm(&self, x: &[f64]) -> f64 {
        self.field.norm(x)
    }

    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        self.field.norm(&d)
    }

    pub fn rhs(&self, t: f64, x: &StateVector) -> Result<StateVector> {
        self.check_state(x)?;
        let mut out = vec![0.0; self.dim()];
        self.field.eval(t, x.coords(), &mut out);
        if let Some(index) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(StateVector::from_raw(out, self.space()))
    }

    /// Norm of the vector field at `x`: the residual of the stationary problem.
    pub fn residual(&self, t: f64, x: &StateVector) -> f64 {
        let mut out = vec![0.0; self.dim()];
        self.field.eval(t, x.coords(), &mut out);
        self.field.norm(&out)
    }

    pub fn state(&self, coords: Vec<f64>) -> Result<StateVector> {
        let s = StateVector::new(coords, self.space())?;
        self.check_state(&s)?;
        Ok(s)
    }

    pub(crate) fn check_state(&self, x: &StateVector) -> Result<()> {
        if x.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: x.dim() });
        }
        if x.space() != self.space() {
            return Err(Error::SpaceMismatch { expected: self.space(), got: x.space() });
        }
        Ok(())
    }
}
