//! Adaptive steppers and the event-aware integration driver.

use log::warn;

use super::{FlowModel, LinearPart, Scheme, VectorField};

/// One-step method with an embedded (or doubled-step) error estimate.
pub(crate) trait Stepper {
    /// Order of the propagated solution; the step controller uses `1/(order+1)`.
    fn order(&self) -> i32;

    /// Takes one step and returns the scaled max-norm error (`<= 1` accepts).
    /// Non-finite output is reported as an infinite error.
    fn step(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> f64;

    /// Takes one step without error control; `false` if the result is not finite.
    fn step_plain(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> bool;
}

fn scaled_error(err: &[f64], x: &[f64], y: &[f64], atol: f64, rtol: f64) -> f64 {
    let mut worst = 0.0_f64;
    for i in 0..err.len() {
        let sc = atol + rtol * x[i].abs().max(y[i].abs());
        let e = (err[i] / sc).abs();
        if !e.is_finite() || !y[i].is_finite() {
            return f64::INFINITY;
        }
        worst = worst.max(e);
    }
    worst
}

pub(crate) struct Dopri5<'a> {
    field: &'a dyn VectorField,
    atol: f64,
    rtol: f64,
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    err: Vec<f64>,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

impl<'a> Dopri5<'a> {
    pub(crate) fn new(field: &'a dyn VectorField, atol: f64, rtol: f64) -> Self {
        let n = field.dim();
        Self {
            field,
            atol,
            rtol,
            k: std::array::from_fn(|_| vec![0.0; n]),
            tmp: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    fn stages(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        let [k1, k2, k3, k4, k5, k6, k7] = &mut self.k;
        let tmp = &mut self.tmp;
        self.field.eval(t, x, k1);
        for i in 0..n {
            tmp[i] = x[i] + h * A21 * k1[i];
        }
        self.field.eval(t + C2 * h, tmp, k2);
        for i in 0..n {
            tmp[i] = x[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        self.field.eval(t + C3 * h, tmp, k3);
        for i in 0..n {
            tmp[i] = x[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        self.field.eval(t + C4 * h, tmp, k4);
        for i in 0..n {
            tmp[i] = x[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        self.field.eval(t + C5 * h, tmp, k5);
        for i in 0..n {
            tmp[i] = x[i]
                + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        self.field.eval(t + h, tmp, k6);
        for i in 0..n {
            out[i] = x[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        self.field.eval(t + h, out, k7);
    }
}

impl Stepper for Dopri5<'_> {
    fn order(&self) -> i32 {
        4
    }

    fn step(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> f64 {
        self.stages(t, x, h, out);
        let [k1, _, k3, k4, k5, k6, k7] = &self.k;
        for i in 0..x.len() {
            self.err[i] =
                h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        }
        scaled_error(&self.err, x, out, self.atol, self.rtol)
    }

    fn step_plain(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> bool {
        self.stages(t, x, h, out);
        out.iter().all(|v| v.is_finite())
    }
}

/// Additive Runge–Kutta tableau; the implicit part is diagonally implicit.
struct ImexTableau {
    implicit: &'static [&'static [f64]],
    explicit: &'static [&'static [f64]],
    c: &'static [f64],
    order: i32,
}

// Ascher–Ruuth–Spiteri (4,4,3): L-stable, stiffly accurate, third order.
const ARS443: ImexTableau = ImexTableau {
    implicit: &[
        &[0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.0, 0.5, 0.0, 0.0, 0.0],
        &[0.0, 1.0 / 6.0, 0.5, 0.0, 0.0],
        &[0.0, -0.5, 0.5, 0.5, 0.0],
        &[0.0, 1.5, -1.5, 0.5, 0.5],
    ],
    explicit: &[
        &[0.0, 0.0, 0.0, 0.0, 0.0],
        &[0.5, 0.0, 0.0, 0.0, 0.0],
        &[11.0 / 18.0, 1.0 / 18.0, 0.0, 0.0, 0.0],
        &[5.0 / 6.0, -5.0 / 6.0, 0.5, 0.0, 0.0],
        &[0.25, 1.75, 0.75, -1.75, 0.0],
    ],
    c: &[0.0, 0.5, 2.0 / 3.0, 0.5, 1.0],
    order: 3,
};

pub(crate) struct Imex<'a> {
    field: &'a dyn VectorField,
    lin: &'a LinearPart,
    atol: f64,
    rtol: f64,
    tab: &'static ImexTableau,
    ki: Vec<Vec<f64>>,
    ke: Vec<Vec<f64>>,
    stage: Vec<f64>,
    rhs: Vec<f64>,
    scratch: Vec<f64>,
    full: Vec<f64>,
    half: Vec<f64>,
    err: Vec<f64>,
}

impl<'a> Imex<'a> {
    pub(crate) fn new(field: &'a dyn VectorField, lin: &'a LinearPart, atol: f64, rtol: f64) -> Self {
        let n = field.dim();
        let tab = &ARS443;
        let s = tab.c.len();
        Self {
            field,
            lin,
            atol,
            rtol,
            tab,
            ki: vec![vec![0.0; n]; s],
            ke: vec![vec![0.0; n]; s],
            stage: vec![0.0; n],
            rhs: vec![0.0; n],
            scratch: vec![0.0; n],
            full: vec![0.0; n],
            half: vec![0.0; n],
            err: vec![0.0; n],
        }
    }

    fn single(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) {
        let n = x.len();
        let s = self.tab.c.len();
        for i in 0..s {
            self.rhs.copy_from_slice(x);
            for j in 0..i {
                let ai = self.tab.implicit[i][j];
                let ae = self.tab.explicit[i][j];
                for k in 0..n {
                    self.rhs[k] += h * (ai * self.ki[j][k] + ae * self.ke[j][k]);
                }
            }
            let diag = self.tab.implicit[i][i];
            if diag != 0.0 {
                self.lin.solve_implicit(h * diag, &self.rhs, &mut self.stage, &mut self.scratch);
            } else {
                self.stage.copy_from_slice(&self.rhs);
            }
            if i + 1 == s {
                // stiffly accurate: the last stage is the step result
                out.copy_from_slice(&self.stage);
                return;
            }
            self.lin.apply(&self.stage, &mut self.ki[i]);
            self.field.eval_nonlinear(t + self.tab.c[i] * h, &self.stage, &mut self.ke[i]);
        }
    }
}

impl Stepper for Imex<'_> {
    fn order(&self) -> i32 {
        self.tab.order
    }

    fn step(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> f64 {
        let mut full = std::mem::take(&mut self.full);
        let mut half = std::mem::take(&mut self.half);
        self.single(t, x, h, &mut full);
        self.single(t, x, 0.5 * h, &mut half);
        self.single(t + 0.5 * h, &half, 0.5 * h, out);
        let denom = f64::from(2_i32.pow(self.tab.order as u32) - 1);
        for i in 0..x.len() {
            self.err[i] = (out[i] - full[i]) / denom;
        }
        self.full = full;
        self.half = half;
        scaled_error(&self.err, x, out, self.atol, self.rtol)
    }

    fn step_plain(&mut self, t: f64, x: &[f64], h: f64, out: &mut [f64]) -> bool {
        let mut half = std::mem::take(&mut self.half);
        self.single(t, x, 0.5 * h, &mut half);
        self.single(t + 0.5 * h, &half, 0.5 * h, out);
        self.half = half;
        out.iter().all(|v| v.is_finite())
    }
}

pub(crate) fn make_stepper(model: &FlowModel) -> Box<dyn Stepper + '_> {
    let field = model.field();
    match (model.scheme, field.linear_part()) {
        (Scheme::Imex, Some(lin)) => Box::new(Imex::new(field, lin, model.abs_tol, model.rel_tol)),
        _ => Box::new(Dopri5::new(field, model.abs_tol, model.rel_tol)),
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Sampling {
    /// Record every accepted step.
    Steps,
    /// Record at multiples of the given interval (and at the horizon).
    Uniform(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Outcome {
    Completed,
    Exploded(f64),
    Escaped(f64),
}

pub(crate) struct RawRun {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub outcome: Outcome,
}

/// Integrates from relative time 0 to `horizon` (field time `t0 + t`), stopping
/// at blow-up or when `margin` becomes positive. Events are localized by
/// bisection on the bracketing step to a time resolution of `abs_tol`.
pub(crate) fn run(
    model: &FlowModel,
    t0: f64,
    x0: &[f64],
    horizon: f64,
    sampling: Sampling,
    margin: Option<&dyn Fn(&[f64]) -> f64>,
) -> RawRun {
    let mut times = vec![0.0];
    let mut states = vec![x0.to_vec()];
    let blow = model.blow_up_norm;
    let is_event = |y: &[f64]| -> bool {
        !y.iter().all(|v| v.is_finite())
            || model.norm(y) >= blow
            || margin.is_some_and(|m| m(y) > 0.0)
    };
    if model.norm(x0) >= blow {
        return RawRun { times, states, outcome: Outcome::Exploded(0.0) };
    }
    if horizon <= 0.0 {
        return RawRun { times, states, outcome: Outcome::Completed };
    }

    let mut stepper = make_stepper(model);
    let inv_order = 1.0 / f64::from(stepper.order() + 1);
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut y = vec![0.0; n];
    let mut t = 0.0_f64;
    let mut h = initial_step(model, t0, x0).min(model.dt_max).min(horizon);
    let mut next_sample = 1_u64;

    loop {
        let target = match sampling {
            Sampling::Steps => horizon,
            Sampling::Uniform(dt) => (next_sample as f64 * dt).min(horizon),
        };
        let remaining = target - t;
        let (h_try, clamped) = if h >= remaining * (1.0 - 1e-12) { (remaining, true) } else { (h, false) };
        let err = stepper.step(t0 + t, &x, h_try, &mut y);
        let h_min = 1e-14 * t.abs().max(1.0);

        if !err.is_finite() {
            if h_try * 0.25 < h_min {
                warn!("integrator breakdown: non-finite state at t={t}, treating as blow-up");
                times.push(t);
                states.push(x.clone());
                return RawRun { times, states, outcome: Outcome::Exploded(t) };
            }
            h = h_try * 0.25;
            continue;
        }
        if err > 1.0 && h_try > h_min {
            h = h_try * (0.9 * err.powf(-inv_order)).clamp(0.2, 1.0);
            continue;
        }

        if is_event(&y) {
            let (dt_hit, y_hit) = bisect_event(stepper.as_mut(), t0 + t, &x, h_try, &y, model.abs_tol, &is_event);
            let t_hit = t + dt_hit;
            let escaped = margin.is_some_and(|m| m(&y_hit) > 0.0);
            times.push(t_hit);
            states.push(y_hit);
            let outcome = if escaped { Outcome::Escaped(t_hit) } else { Outcome::Exploded(t_hit) };
            return RawRun { times, states, outcome };
        }

        let t_new = if clamped { target } else { t + h_try };
        std::mem::swap(&mut x, &mut y);
        t = t_new;
        let record = match sampling {
            Sampling::Steps => true,
            Sampling::Uniform(_) => clamped,
        };
        if record {
            times.push(t);
            states.push(x.clone());
            if clamped {
                next_sample += 1;
            }
        }
        if clamped && target >= horizon {
            return RawRun { times, states, outcome: Outcome::Completed };
        }
        let proposal = h_try * (0.9 * err.max(1e-10).powf(-inv_order)).clamp(0.2, 5.0);
        h = if clamped { h.max(proposal) } else { proposal };
        h = h.min(model.dt_max);
    }
}

fn bisect_event(
    stepper: &mut dyn Stepper,
    t: f64,
    x: &[f64],
    h: f64,
    y_full: &[f64],
    resolution: f64,
    is_event: &dyn Fn(&[f64]) -> bool,
) -> (f64, Vec<f64>) {
    let mut lo = 0.0;
    let mut hi = h;
    let mut y_hi = y_full.to_vec();
    let mut y_mid = vec![0.0; x.len()];
    let mut iters = 0;
    while hi - lo > resolution && iters < 200 {
        let mid = 0.5 * (lo + hi);
        let finite = stepper.step_plain(t, x, mid, &mut y_mid);
        if !finite || is_event(&y_mid) {
            hi = mid;
            if finite {
                y_hi.copy_from_slice(&y_mid);
            }
        } else {
            lo = mid;
        }
        iters += 1;
    }
    if !y_hi.iter().all(|v| v.is_finite()) {
        // last finite state is the left end; report it as the terminal sample
        y_hi.copy_from_slice(x);
    }
    (hi, y_hi)
}

fn initial_step(model: &FlowModel, t0: f64, x: &[f64]) -> f64 {
    let n = x.len();
    let mut f = vec![0.0; n];
    model.field().eval(t0, x, &mut f);
    let mut d0 = 0.0_f64;
    let mut d1 = 0.0_f64;
    for i in 0..n {
        let sc = model.abs_tol + model.rel_tol * x[i].abs();
        d0 = d0.max((x[i] / sc).abs());
        d1 = d1.max((f[i] / sc).abs());
    }
    let h = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h.clamp(1e-10, model.dt_max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::flow::FlowModel;

    /// u' = A u + N(t,u) with A = diag(-50, -1) and N = (sin t, cos t · u_0):
    /// mixes stiff implicit and explicit parts.
    struct Mixed {
        lin: LinearPart,
    }

    impl VectorField for Mixed {
        fn dim(&self) -> usize {
            2
        }
        fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
            out[0] = -50.0 * x[0] + t.sin();
            out[1] = -x[1] + t.cos() * x[0];
        }
        fn linear_part(&self) -> Option<&LinearPart> {
            Some(&self.lin)
        }
    }

    fn fixed_steps(stepper: &mut dyn Stepper, x0: &[f64], t_end: f64, steps: usize) -> Vec<f64> {
        let h = t_end / steps as f64;
        let mut x = x0.to_vec();
        let mut y = vec![0.0; x.len()];
        for k in 0..steps {
            stepper.step(k as f64 * h, &x, h, &mut y);
            std::mem::swap(&mut x, &mut y);
        }
        x
    }

    #[test]
    fn imex_observed_order_is_three() {
        let field = Mixed { lin: LinearPart::Diagonal(vec![-50.0, -1.0]) };
        let model = FlowModel::new(field);
        let lin = model.field().linear_part().unwrap();
        let reference = {
            let mut s = Dopri5::new(model.field(), 1e-14, 1e-14);
            fixed_steps(&mut s, &[1.0, 1.0], 1.0, 20000)
        };
        let mut errs = Vec::new();
        for steps in [100, 200, 400] {
            let mut s = Imex::new(model.field(), lin, 1e-9, 1e-9);
            let x = fixed_steps(&mut s, &[1.0, 1.0], 1.0, steps);
            errs.push(crate::linalg::dist2(&x, &reference));
        }
        let p1 = (errs[0] / errs[1]).log2();
        let p2 = (errs[1] / errs[2]).log2();
        assert!(p1 > 2.7 && p2 > 2.7, "observed orders {p1} {p2}, errors {errs:?}");
    }

    #[test]
    fn dopri_observed_order_is_five() {
        let field = Mixed { lin: LinearPart::Diagonal(vec![-50.0, -1.0]) };
        let model = FlowModel::new(field);
        let reference = {
            let mut s = Dopri5::new(model.field(), 1e-14, 1e-14);
            fixed_steps(&mut s, &[1.0, 1.0], 1.0, 20000)
        };
        let mut errs = Vec::new();
        for steps in [100, 200] {
            let mut s = Dopri5::new(model.field(), 1e-9, 1e-9);
            let x = fixed_steps(&mut s, &[1.0, 1.0], 1.0, steps);
            errs.push(crate::linalg::dist2(&x, &reference));
        }
        let p = (errs[0] / errs[1]).log2();
        assert!(p > 4.5, "observed order {p}");
    }
}
