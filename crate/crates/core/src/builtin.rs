//! Small closed-form models used by tests, examples and the `verify` experiment.

use crate::flow::{FlowModel, VectorField};

/// Vector field given by a closure.
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        assert!(dim > 0);
        Self { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(f64, &[f64], &mut [f64]) + Send + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        (self.f)(t, x, out)
    }
}

pub fn from_fn(dim: usize, f: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'static) -> FlowModel {
    FlowModel::new(FnField::new(dim, f))
}

/// `u' = -u` in one dimension.
pub fn linear_decay() -> FlowModel {
    linear_decay_nd(1)
}

pub fn linear_decay_nd(dim: usize) -> FlowModel {
    from_fn(dim, |_, x, out| {
        for (o, v) in out.iter_mut().zip(x) {
            *o = -v;
        }
    })
}

/// `u' = u` in one dimension.
pub fn repeller() -> FlowModel {
    from_fn(1, |_, x, out| out[0] = x[0])
}

/// `u' = e_0`: unit speed along the first axis.
pub fn unit_speed(dim: usize) -> FlowModel {
    from_fn(dim, |_, _, out| {
        out.fill(0.0);
        out[0] = 1.0;
    })
}

/// `u' = u²`, exploding at `t = 1/u0`.
pub fn quadratic_blow_up() -> FlowModel {
    from_fn(1, |_, x, out| out[0] = x[0] * x[0])
}

/// Hopf normal form `r' = r(1 - r²)`, `θ' = 1` in Cartesian coordinates.
pub fn hopf() -> FlowModel {
    from_fn(2, |_, x, out| {
        let g = 1.0 - (x[0] * x[0] + x[1] * x[1]);
        out[0] = x[0] * g - x[1];
        out[1] = x[1] * g + x[0];
    })
}

/// Radius of the Hopf orbit started at radius `r0` after time `t`.
pub fn hopf_radius(r0: f64, t: f64) -> f64 {
    let q = (1.0 - r0 * r0) / (r0 * r0);
    (1.0 / (1.0 + q * (-2.0 * t).exp())).sqrt()
}

/// Linear saddle `u' = (x, -y)`.
pub fn saddle() -> FlowModel {
    from_fn(2, |_, x, out| {
        out[0] = x[0];
        out[1] = -x[1];
    })
}

/// `(x² - 1)²`.
pub fn double_well_energy(x: f64) -> f64 {
    let a = x * x - 1.0;
    a * a
}

/// Gradient flow of [`double_well_energy`].
pub fn double_well() -> FlowModel {
    from_fn(1, |_, x, out| out[0] = -4.0 * x[0] * (x[0] * x[0] - 1.0))
}

/// `x⁴ - x² + y²`: minima at `(±1/√2, 0)` with value `-1/4`, saddle at the origin.
pub fn quartic_saddle_energy(x: &[f64]) -> f64 {
    x[0].powi(4) - x[0] * x[0] + x[1] * x[1]
}

/// Gradient flow of [`quartic_saddle_energy`].
pub fn quartic_saddle() -> FlowModel {
    from_fn(2, |_, x, out| {
        out[0] = -(4.0 * x[0].powi(3) - 2.0 * x[0]);
        out[1] = -2.0 * x[1];
    })
}

/// Named catalogue of the autonomous built-ins.
pub fn catalogue() -> Vec<(&'static str, FlowModel)> {
    vec![
        ("linear-decay", linear_decay()),
        ("repeller", repeller()),
        ("unit-speed", unit_speed(1)),
        ("quadratic-blow-up", quadratic_blow_up()),
        ("hopf", hopf()),
        ("saddle", saddle()),
        ("double-well", double_well()),
        ("quartic-saddle", quartic_saddle()),
    ]
}
