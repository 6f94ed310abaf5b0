//! Radial parabolic flow of `-Δu + a(r)u = b(r)|u|^γ u` on a ball of radius
//! `R_max` in `ℝⁿ` with a Dirichlet condition on the outer sphere.
//!
//! The discretization is a conservative finite-volume scheme on the uniform
//! grid `r_i = i·h`, `i < N`, `h = R_max/N`, with `u_N = 0`. With cell volumes
//! `W_i` and face weights `S_{i+½} = ω_n r_{i+½}^{n-1}/h` the discrete energy is
//!
//! ```text
//! J(u) = ½ Σ S_{i+½}(u_{i+1} - u_i)² + ½ Σ W_i a_i u_i² - Σ W_i F(r_i, u_i)
//! ```
//!
//! and the semi-discrete flow `u' = -(W⁻¹K u + a u - f(u))` is exactly its
//! `W`-weighted gradient flow, so the energy identity holds without a
//! discretization defect.

use std::f64::consts::PI;
use std::sync::Arc;

use log::{debug, info, warn};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::csv::Cell;
use crate::error::{Error, Result};
use crate::flow::{evolve, FlowModel, LinearPart, Trajectory, VectorField};
use crate::linalg::Tridiagonal;
use crate::linking::{minimax_estimate_with, DeformOptions, DiscretePath, MinimaxRecord, Termination};
use crate::region::Region;
use crate::state::{SpaceId, StateVector};

/// Potential `a(r)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Potential {
    Constant(f64),
    /// `base - depth·exp(-(r/width)²)`.
    Dip { base: f64, depth: f64, width: f64 },
}

impl Potential {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Potential::Constant(a) => a,
            Potential::Dip { base, depth, width } => base - depth * (-(r / width).powi(2)).exp(),
        }
    }
}

/// Weight `b(r) >= 0` of the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    Zero,
    /// `amplitude·exp(-(r/width)²)`.
    Gaussian { amplitude: f64, width: f64 },
}

impl Weight {
    pub fn eval(&self, r: f64) -> f64 {
        match *self {
            Weight::Zero => 0.0,
            Weight::Gaussian { amplitude, width } => amplitude * (-(r / width).powi(2)).exp(),
        }
    }

    pub fn scaled(&self, s: f64) -> Self {
        match *self {
            Weight::Zero => Weight::Zero,
            Weight::Gaussian { amplitude, width } => Weight::Gaussian { amplitude: amplitude * s, width },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EllipticSpec {
    pub n: usize,
    pub r_max: f64,
    pub grid_points: usize,
    pub a: Potential,
    pub gamma: f64,
    pub b: Weight,
    /// Radius of the ball `Ω` carrying `w₁`.
    pub omega_radius: f64,
}

impl Default for EllipticSpec {
    fn default() -> Self {
        Self {
            n: 3,
            r_max: 25.0,
            grid_points: 2000,
            a: Potential::Constant(1.0),
            gamma: 0.5,
            b: Weight::Gaussian { amplitude: 5.0, width: 1.0 },
            omega_radius: 2.0,
        }
    }
}

/// Area of the unit sphere in `ℝⁿ`.
pub fn sphere_area(n: usize) -> f64 {
    // ω₁ = 2, ω₂ = 2π, ω_{n+2} = 2π ω_n / n
    let mut w = if n % 2 == 1 { 2.0 } else { 2.0 * PI };
    let mut k = if n % 2 == 1 { 1 } else { 2 };
    while k < n {
        w *= 2.0 * PI / k as f64;
        k += 2;
    }
    w
}

#[derive(Debug, Clone)]
pub struct EllipticModel {
    spec: EllipticSpec,
    h: f64,
    nodes: Vec<f64>,
    mass: Vec<f64>,
    /// `S_{i+½}` for `i < N`; the last face couples to the boundary value 0.
    face: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    a0: f64,
    a1: f64,
    mu: f64,
    omega_n: f64,
    stiffness: Tridiagonal,
}

impl EllipticModel {
    pub fn new(spec: EllipticSpec) -> Result<Self> {
        if spec.n == 0 {
            return Err(Error::Config("dimension n must be positive".into()));
        }
        if spec.grid_points < 3 {
            return Err(Error::Config("grid_points must be at least 3".into()));
        }
        if !(spec.r_max > 0.0 && spec.r_max.is_finite()) {
            return Err(Error::Config("R_max must be positive".into()));
        }
        if !(spec.gamma > 0.0) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(spec.omega_radius > 0.0 && spec.omega_radius < spec.r_max) {
            return Err(Error::Config("omega radius must lie in (0, R_max)".into()));
        }
        let n = spec.grid_points;
        let h = spec.r_max / n as f64;
        let omega_n = sphere_area(spec.n);
        let dim = spec.n as i32;
        let nodes: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let mass: Vec<f64> = (0..n)
            .map(|i| {
                let hi = (i as f64 + 0.5) * h;
                let lo = if i == 0 { 0.0 } else { (i as f64 - 0.5) * h };
                omega_n * (hi.powi(dim) - lo.powi(dim)) / spec.n as f64
            })
            .collect();
        let face: Vec<f64> = (0..n).map(|i| omega_n * ((i as f64 + 0.5) * h).powi(dim - 1) / h).collect();
        let a: Vec<f64> = nodes.iter().map(|&r| spec.a.eval(r)).collect();
        let b: Vec<f64> = nodes.iter().map(|&r| spec.b.eval(r)).collect();
        if b.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::Config("weight b must be nonnegative".into()));
        }
        let a0 = a.iter().copied().fold(f64::INFINITY, f64::min);
        let a1 = a.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n {
            let left = if i == 0 { 0.0 } else { face[i - 1] };
            diag[i] = left + face[i];
            if i > 0 {
                sub[i] = -left;
            }
            if i + 1 < n {
                sup[i] = -face[i];
            }
        }
        let mu = spec.gamma + 2.0;
        Ok(Self { h, nodes, mass, face, a, b, a0, a1, mu, omega_n, stiffness: Tridiagonal::new(sub, diag, sup), spec })
    }

    pub fn spec(&self) -> &EllipticSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.nodes.len()
    }

    pub fn step(&self) -> f64 {
        self.h
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn weight(&self) -> &[f64] {
        &self.b
    }

    pub fn a0(&self) -> f64 {
        self.a0
    }

    pub fn a1(&self) -> f64 {
        self.a1
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn gamma(&self) -> f64 {
        self.spec.gamma
    }

    pub fn omega_n(&self) -> f64 {
        self.omega_n
    }

    pub fn state(&self, coords: Vec<f64>) -> Result<StateVector> {
        if coords.len() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), got: coords.len() });
        }
        StateVector::new(coords, SpaceId::RADIAL_GRID)
    }

    /// Samples `g` on the grid.
    pub fn sample(&self, g: impl Fn(f64) -> f64) -> StateVector {
        StateVector::from_raw(self.nodes.iter().map(|&r| g(r)).collect(), SpaceId::RADIAL_GRID)
    }

    pub fn f(&self, i: usize, s: f64) -> f64 {
        self.b[i] * s.abs().powf(self.spec.gamma) * s
    }

    pub fn f_prime(&self, i: usize, s: f64) -> f64 {
        (self.spec.gamma + 1.0) * self.b[i] * s.abs().powf(self.spec.gamma)
    }

    pub fn primitive(&self, i: usize, s: f64) -> f64 {
        self.b[i] * s.abs().powf(self.mu) / self.mu
    }

    fn apply_k(&self, u: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; u.len()];
        self.stiffness.apply(u, &mut out);
        out
    }

    /// `∫|∇u|² + a u²`.
    pub fn v_norm_sq(&self, u: &[f64]) -> f64 {
        let mut grad = 0.0;
        for i in 0..u.len() {
            let next = if i + 1 < u.len() { u[i + 1] } else { 0.0 };
            grad += self.face[i] * (next - u[i]).powi(2);
        }
        grad + u.iter().zip(&self.mass).zip(&self.a).map(|((v, w), a)| w * a * v * v).sum::<f64>()
    }

    /// `‖u‖`, the norm of the phase space.
    pub fn v_norm(&self, u: &[f64]) -> f64 {
        self.v_norm_sq(u).sqrt()
    }

    /// `|u|` (L²).
    pub fn h_norm(&self, u: &[f64]) -> f64 {
        u.iter().zip(&self.mass).map(|(v, w)| w * v * v).sum::<f64>().sqrt()
    }

    /// `∫F(r, u)`.
    pub fn potential_energy(&self, u: &[f64]) -> f64 {
        u.iter().enumerate().map(|(i, &s)| self.mass[i] * self.primitive(i, s)).sum()
    }

    pub fn j_eval(&self, u: &[f64]) -> f64 {
        0.5 * self.v_norm_sq(u) - self.potential_energy(u)
    }

    /// Nodal values of `Lu - f̃(u)`.
    pub fn residual_vector(&self, u: &[f64]) -> Vec<f64> {
        let ku = self.apply_k(u);
        (0..u.len()).map(|i| ku[i] / self.mass[i] + self.a[i] * u[i] - self.f(i, u[i])).collect()
    }

    /// `|Lu - f̃(u)|` in L².
    pub fn residual_norm(&self, u: &[f64]) -> f64 {
        self.h_norm(&self.residual_vector(u))
    }

    /// `(K + W·diag(a + shift))`.
    fn operator_plus(&self, shift: &[f64]) -> Tridiagonal {
        let mut t = self.stiffness.clone();
        for i in 0..t.diag.len() {
            t.diag[i] += self.mass[i] * (self.a[i] + shift[i]);
        }
        t
    }

    pub fn flow_model(self: &Arc<Self>) -> FlowModel {
        FlowModel::new(RadialField::new(Arc::clone(self)))
    }
}

/// The semi-discrete parabolic field.
#[derive(Debug, Clone)]
pub struct RadialField {
    model: Arc<EllipticModel>,
    linear: LinearPart,
}

impl RadialField {
    pub fn new(model: Arc<EllipticModel>) -> Self {
        let k = &model.stiffness;
        let n = model.dim();
        let mut sub = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut sup = vec![0.0; n];
        for i in 0..n {
            let w = model.mass[i];
            sub[i] = -k.sub[i] / w;
            diag[i] = -k.diag[i] / w - model.a[i];
            sup[i] = -k.sup[i] / w;
        }
        let linear = LinearPart::Tridiagonal(Tridiagonal::new(sub, diag, sup));
        Self { model, linear }
    }
}

impl VectorField for RadialField {
    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn eval(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        self.linear.apply(x, out);
        for (i, o) in out.iter_mut().enumerate() {
            *o += self.model.f(i, x[i]);
        }
    }

    fn space(&self) -> SpaceId {
        SpaceId::RADIAL_GRID
    }

    fn linear_part(&self) -> Option<&LinearPart> {
        Some(&self.linear)
    }

    fn eval_nonlinear(&self, _t: f64, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.model.f(i, x[i]);
        }
    }

    fn norm(&self, x: &[f64]) -> f64 {
        self.model.v_norm(x)
    }
}

/// Integrates the parabolic flow from `u` over `[0, horizon]`.
pub fn parabolic_evolve(model: &Arc<EllipticModel>, u: &StateVector, horizon: f64) -> Result<Trajectory> {
    evolve(&model.flow_model(), u, horizon)
}

pub fn j7_eval(model: &EllipticModel, u: &StateVector) -> Result<f64> {
    if u.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), got: u.dim() });
    }
    Ok(model.j_eval(u.coords()))
}

/// A lower/upper energy band `J_lower^upper`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyBand {
    pub lower: f64,
    pub upper: f64,
}

impl EnergyBand {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        if !(lower <= upper) {
            return Err(Error::Config(format!("energy band needs lower <= upper (got {lower}, {upper})")));
        }
        Ok(Self { lower, upper })
    }

    pub fn contains(&self, j: f64) -> bool {
        self.lower <= j && j <= self.upper
    }

    pub fn region(&self, model: &Arc<EllipticModel>) -> Region {
        let m = Arc::clone(model);
        let (lo, hi) = (self.lower, self.upper);
        Region::new(format!("J in [{lo}, {hi}]"), move |u: &[f64]| {
            let j = m.j_eval(u);
            (j - hi).max(lo - j)
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionRow {
    pub name: &'static str,
    pub pass: bool,
    /// Worst-case slack of the sampled inequality (negative when violated).
    pub margin: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub rows: Vec<ConditionRow>,
}

impl ConditionReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, name: &str) -> Option<&ConditionRow> {
        self.rows.iter().find(|r| r.name == name)
    }
}

/// Samples the structural hypotheses on `s_grid × r_grid`. Any failure rejects
/// the model; the error message lists the failing conditions.
pub fn validate_conditions(model: &EllipticModel, s_grid: &[f64], r_grid: &[f64]) -> Result<ConditionReport> {
    if s_grid.is_empty() || r_grid.is_empty() {
        return Err(Error::Precondition("condition grids must be nonempty".into()));
    }
    let spec = model.spec();
    let gamma = spec.gamma;
    let cap = if spec.n > 2 { (2.0 / (spec.n as f64 - 2.0)).min(1.0) } else { 1.0 };
    let mut rows = vec![ConditionRow {
        name: "gamma",
        pass: gamma > 0.0 && gamma < cap,
        margin: (cap - gamma).min(gamma),
        detail: format!("need 0 < gamma < {cap}"),
    }];

    let a_vals: Vec<f64> = r_grid.iter().map(|&r| spec.a.eval(r)).collect();
    let a0 = a_vals.iter().copied().fold(f64::INFINITY, f64::min);
    let a1 = a_vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    rows.push(ConditionRow {
        name: "A1",
        pass: a0 > 0.0 && a1.is_finite(),
        margin: a0,
        detail: format!("a0 = {a0}, a1 = {a1}"),
    });

    // f is evaluated from its closed form at arbitrary radii
    let f = |r: f64, s: f64| spec.b.eval(r) * s.abs().powf(gamma) * s;
    let big_f = |r: f64, s: f64| spec.b.eval(r) * s.abs().powf(gamma + 2.0) / (gamma + 2.0);
    let mu = gamma + 2.0;
    let (mut f1, mut f3_low, mut f3_gap, mut f3_eq) = (f64::INFINITY, f64::INFINITY, f64::INFINITY, 0.0_f64);
    for &r in r_grid {
        let b = spec.b.eval(r);
        for &s in s_grid {
            let d = 1e-6 * (1.0 + s.abs());
            let fd = (f(r, s + d) - f(r, s - d)) / (2.0 * d);
            // the difference quotient is f' somewhere in [s-d, s+d]
            let bound = (gamma + 1.0) * b * (s.abs() + d).powf(gamma);
            f1 = f1.min((bound - fd.abs()) / (1.0 + bound) + 1e-6);
            let lhs = mu * big_f(r, s);
            let rhs = f(r, s) * s;
            f3_low = f3_low.min(lhs);
            f3_gap = f3_gap.min((rhs - lhs) / (1.0 + rhs.abs()));
            f3_eq = f3_eq.max((rhs - lhs).abs() / (1.0 + rhs.abs()));
        }
    }
    rows.push(ConditionRow {
        name: "F1",
        pass: f1 >= 0.0,
        margin: f1,
        detail: format!("|f'_s| <= (gamma+1) b |s|^gamma, constant gamma+1 = {}", gamma + 1.0),
    });

    let omega_r: Vec<f64> = r_grid.iter().copied().filter(|&r| r <= spec.omega_radius).collect();
    let s_pos: Vec<f64> = {
        let mut v: Vec<f64> = s_grid.iter().map(|s| s.abs()).filter(|&s| s > 0.0).collect();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v
    };
    let mut f2 = f64::INFINITY;
    for &r in &omega_r {
        let b = spec.b.eval(r);
        f2 = f2.min(b);
        for w in s_pos.windows(2) {
            // f(s)/s must grow with |s| on both sides
            for sign in [-1.0, 1.0] {
                let q0 = f(r, sign * w[0]) / (sign * w[0]);
                let q1 = f(r, sign * w[1]) / (sign * w[1]);
                f2 = f2.min(q1 - q0);
            }
        }
    }
    let top = s_pos.last().copied().unwrap_or(0.0);
    rows.push(ConditionRow {
        name: "F2",
        pass: !omega_r.is_empty() && f2 > 0.0,
        margin: if omega_r.is_empty() { f64::NEG_INFINITY } else { f2 },
        detail: format!("f(r,s)/s increasing on r <= {} up to |s| = {top}", spec.omega_radius),
    });
    rows.push(ConditionRow {
        name: "F3",
        pass: f3_low >= 0.0 && f3_gap >= -1e-12,
        margin: f3_gap.min(f3_low),
        detail: format!("mu = {mu}, largest relative gap |fs - mu F| = {f3_eq:e}"),
    });
    let report = ConditionReport { rows };
    if report.passed() {
        Ok(report)
    } else {
        let failed: Vec<String> = report
            .rows
            .iter()
            .filter(|r| !r.pass)
            .map(|r| format!("{} (margin {}, {})", r.name, r.margin, r.detail))
            .collect();
        Err(Error::Rejected(format!("model rejected: {}", failed.join("; "))))
    }
}

/// Smooth nonnegative trial functions: sums of one to three Gaussian bumps
/// centred in `[0, reach·R_max)`.
pub fn random_bump(model: &EllipticModel, rng: &mut ChaCha8Rng, reach: f64) -> Vec<f64> {
    let k = rng.random_range(1..=3);
    let r_max = model.spec().r_max;
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| {
            (rng.random_range(0.05..1.0), rng.random_range(0.0..reach * r_max), rng.random_range(0.3..4.0))
        })
        .collect();
    model
        .nodes()
        .iter()
        .map(|&r| bumps.iter().map(|&(c, m, w)| c * (-((r - m) / w).powi(2)).exp()).sum())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpRadius {
    /// Sampled `sup ∫F(u) / ‖u‖^{γ+2}`.
    pub c5_hat: f64,
    /// `(4 c5_hat)^{-1/γ}`, infinite when `c5_hat = 0`.
    pub rho: f64,
    /// Smallest sampled `J` on the sphere `‖u‖ = ρ`.
    pub barrier: f64,
    pub barrier_samples: usize,
    pub trials: usize,
    /// Best trial function found, normalized to `‖u‖ = 1`.
    pub maximizer: Vec<f64>,
}

impl MpRadius {
    pub fn beta(&self) -> f64 {
        0.25 * self.rho * self.rho
    }

    pub fn barrier_holds(&self, tol: f64) -> bool {
        self.barrier >= self.beta() - tol
    }
}

fn ratio(model: &EllipticModel, u: &[f64]) -> f64 {
    let n = model.v_norm(u);
    if n == 0.0 {
        0.0
    } else {
        model.potential_energy(u) / n.powf(model.mu())
    }
}

/// Ascent on `∫F(u)/‖u‖^μ` by the fixed-point map `u ← (K + Wa)⁻¹ W f(u)`.
fn ratio_ascent(model: &EllipticModel, start: &[f64], iterations: usize) -> (f64, Vec<f64>) {
    let op = model.operator_plus(&vec![0.0; model.dim()]);
    let mut u = start.to_vec();
    let (mut best, mut best_u) = (ratio(model, &u), u.clone());
    for _ in 0..iterations {
        let rhs: Vec<f64> = (0..u.len()).map(|i| model.mass[i] * model.f(i, u[i])).collect();
        let mut next = op.solve(&rhs);
        let n = model.v_norm(&next);
        if !(n > 0.0 && n.is_finite()) {
            break;
        }
        next.iter_mut().for_each(|v| *v /= n);
        u = next;
        let q = ratio(model, &u);
        if q > best {
            best = q;
            best_u = u.clone();
        }
    }
    (best, best_u)
}

/// Estimates `c₅`, the radius `ρ = (4c₅)^{-1/γ}` and the barrier
/// `min_{‖u‖=ρ} J(u)`.
///
/// `c5_hat` is the largest ratio over `trial_count` random bumps, refined by a
/// fixed-point ascent from the best few. The barrier is sampled on an
/// independent set of `trial_count` sphere points. If the barrier falls below
/// `¼ρ²`, sampling is repeated with twice as many trials (three times at most).
pub fn mp_radius(model: &EllipticModel, trial_count: usize, seed: u64) -> Result<MpRadius> {
    if trial_count == 0 {
        return Err(Error::Precondition("trial_count must be positive".into()));
    }
    if model.weight().iter().all(|&b| b == 0.0) {
        return Ok(MpRadius {
            c5_hat: 0.0,
            rho: f64::INFINITY,
            barrier: f64::INFINITY,
            barrier_samples: 0,
            trials: 0,
            maximizer: vec![0.0; model.dim()],
        });
    }
    let gamma = model.gamma();
    let mut trials = trial_count;
    let mut best: (f64, Vec<f64>) = (0.0, vec![0.0; model.dim()]);
    for round in 0..4 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(round));
        let cands: Vec<Vec<f64>> = (0..trials).map(|_| random_bump(model, &mut rng, 0.3)).collect();
        let mut scored: Vec<(f64, usize)> = cands.par_iter().map(|u| ratio(model, u)).zip(0..trials).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0));
        let refined: Vec<(f64, Vec<f64>)> =
            scored.iter().take(4).collect::<Vec<_>>().par_iter().map(|&&(_, i)| ratio_ascent(model, &cands[i], 200)).collect();
        for (q, u) in refined {
            if q > best.0 {
                best = (q, u);
            }
        }
        let c5_hat = best.0;
        let rho = (4.0 * c5_hat).powf(-1.0 / gamma);
        let sphere: Vec<Vec<f64>> = (0..trials).map(|_| random_bump(model, &mut rng, 0.3)).collect();
        let barrier = sphere
            .par_iter()
            .map(|u| {
                let s = rho / model.v_norm(u);
                let v: Vec<f64> = u.iter().map(|x| x * s).collect();
                model.j_eval(&v)
            })
            .reduce(|| f64::INFINITY, f64::min);
        let rep = MpRadius {
            c5_hat,
            rho,
            barrier,
            barrier_samples: trials,
            trials,
            maximizer: best.1.clone(),
        };
        info!("mp_radius round {round}: c5_hat = {c5_hat}, rho = {rho}, barrier = {barrier} vs {}", rep.beta());
        if rep.barrier_holds(1e-9 * rep.beta()) || round == 3 {
            if !rep.barrier_holds(1e-9 * rep.beta()) {
                warn!("barrier below rho^2/4 after repeated sampling; c5 is underestimated");
            }
            return Ok(rep);
        }
        trials *= 2;
    }
    unreachable!("loop returns on its last round")
}

/// First Dirichlet eigenpair of `-Δ` on the ball `Ω`, extended by zero and
/// normalized to `‖w₁‖ = 1`. Returns `(λ₁, w₁)`.
pub fn first_eigenfunction(model: &EllipticModel) -> Result<(f64, StateVector)> {
    let m = model.nodes().iter().filter(|&&r| r < model.spec().omega_radius).count();
    if m < 3 {
        return Err(Error::Precondition("omega radius covers fewer than 3 grid nodes".into()));
    }
    let k = &model.stiffness;
    let op = Tridiagonal::new(k.sub[..m].to_vec(), k.diag[..m].to_vec(), k.sup[..m].to_vec());
    let w = &model.mass[..m];
    let mut v: Vec<f64> = model.nodes()[..m].iter().map(|r| 1.0 - r / model.spec().omega_radius).collect();
    let mut lambda = 0.0;
    for it in 0..500 {
        let rhs: Vec<f64> = v.iter().zip(w).map(|(x, w)| x * w).collect();
        let mut next = op.solve(&rhs);
        let norm = next.iter().zip(w).map(|(x, w)| w * x * x).sum::<f64>().sqrt();
        next.iter_mut().for_each(|x| *x /= norm);
        let mut kv = vec![0.0; m];
        op.apply(&next, &mut kv);
        let new_lambda: f64 = next.iter().zip(&kv).map(|(a, b)| a * b).sum();
        let done = (new_lambda - lambda).abs() <= 1e-14 * new_lambda && it > 2;
        lambda = new_lambda;
        v = next;
        if done {
            break;
        }
    }
    let mut full = vec![0.0; model.dim()];
    full[..m].copy_from_slice(&v);
    let n = model.v_norm(&full);
    full.iter_mut().for_each(|x| *x /= n);
    Ok((lambda, StateVector::from_raw(full, SpaceId::RADIAL_GRID)))
}

/// Doubles `s` from 1 until `J(s w₁) <= 0`.
pub fn find_s1(model: &EllipticModel, w1: &StateVector) -> Result<f64> {
    let mut s = 1.0;
    while s <= 1e6 {
        let u: Vec<f64> = w1.coords().iter().map(|x| s * x).collect();
        if model.j_eval(&u) <= 0.0 {
            return Ok(s);
        }
        s *= 2.0;
    }
    Err(Error::SearchFailed("J(s w1) stays positive up to s = 1e6; superlinear growth is too weak on the grid".into()))
}

#[derive(Debug, Clone)]
pub struct ConeReport {
    pub samples: usize,
    pub min_entry: f64,
    pub witness: Option<(usize, Trajectory)>,
    pub tol: f64,
}

impl ConeReport {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Evolves nonnegative samples and checks they stay in the cone `u >= -tol`.
pub fn cone_invariance_check(
    model: &Arc<EllipticModel>,
    samples: &[StateVector],
    horizon: f64,
    tol: f64,
) -> Result<ConeReport> {
    if let Some(i) = samples.iter().position(|s| s.coords().iter().any(|&v| v < 0.0)) {
        return Err(Error::Precondition(format!("sample {i} has a negative entry")));
    }
    let fm = model.flow_model();
    let runs: Vec<(f64, Trajectory)> = samples
        .par_iter()
        .map(|s| -> Result<_> {
            let tr = evolve(&fm, s, horizon)?;
            let lo = tr.states.iter().flat_map(|x| x.coords().iter().copied()).fold(f64::INFINITY, f64::min);
            Ok((lo, tr))
        })
        .collect::<Result<_>>()?;
    let min_entry = runs.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let witness = runs.into_iter().enumerate().find(|(_, (lo, _))| *lo < -tol).map(|(i, (_, tr))| (i, tr));
    Ok(ConeReport { samples: samples.len(), min_entry, witness, tol })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipativityReport {
    pub checked: usize,
    /// Samples skipped because `J` is outside `[-c, c]`.
    pub outside_band: usize,
    pub r0: f64,
    /// `min (d|u|²/dt - ((μ-2)a₀|u|² - 2μJ))`, scaled by `1 + |rhs|`.
    pub min_slack: f64,
    /// Same with `‖u‖²` in place of `a₀|u|²` (the sharper first inequality).
    pub min_slack_sharp: f64,
    pub far_samples: usize,
    /// `min (d|u|²/dt - 2μc)` over samples with `|u| >= R₀`.
    pub min_far_slack: f64,
    pub witness: Option<usize>,
}

impl DissipativityReport {
    pub fn passed(&self) -> bool {
        self.witness.is_none()
    }
}

/// Checks `d|u|²/dt >= (μ-2)a₀|u|² - 2μJ(u)` at every interior sample of the
/// trajectory (central differences) with `J` in `[-c, c]`, and
/// `d|u|²/dt >= 2μc` wherever additionally `|u| >= R₀ = 2√(μc/((μ-2)a₀))`.
/// A sample fails when its slack is below `-tol·(1 + |rhs|)`.
pub fn dissipativity_check(model: &EllipticModel, traj: &Trajectory, c: f64, tol: f64) -> Result<DissipativityReport> {
    if traj.len() < 3 {
        return Err(Error::Precondition("trajectory needs at least 3 samples".into()));
    }
    let mu = model.mu();
    let a0 = model.a0();
    let r0 = 2.0 * (mu * c / ((mu - 2.0) * a0)).sqrt();
    let h2: Vec<f64> = traj.states.iter().map(|s| model.h_norm(s.coords()).powi(2)).collect();
    let mut rep = DissipativityReport {
        checked: 0,
        outside_band: 0,
        r0,
        min_slack: f64::INFINITY,
        min_slack_sharp: f64::INFINITY,
        far_samples: 0,
        min_far_slack: f64::INFINITY,
        witness: None,
    };
    for k in 1..traj.len() - 1 {
        let u = traj.states[k].coords();
        let j = model.j_eval(u);
        if !(-c..=c).contains(&j) {
            rep.outside_band += 1;
            continue;
        }
        rep.checked += 1;
        let dt = traj.times[k + 1] - traj.times[k - 1];
        let deriv = (h2[k + 1] - h2[k - 1]) / dt;
        let rhs = (mu - 2.0) * a0 * h2[k] - 2.0 * mu * j;
        let rhs_sharp = (mu - 2.0) * model.v_norm_sq(u) - 2.0 * mu * j;
        let slack = (deriv - rhs) / (1.0 + rhs.abs());
        let sharp = (deriv - rhs_sharp) / (1.0 + rhs_sharp.abs());
        rep.min_slack = rep.min_slack.min(slack);
        rep.min_slack_sharp = rep.min_slack_sharp.min(sharp);
        let mut bad = slack < -tol;
        if h2[k].sqrt() >= r0 {
            rep.far_samples += 1;
            let far = (deriv - 2.0 * mu * c) / (1.0 + 2.0 * mu * c);
            rep.min_far_slack = rep.min_far_slack.min(far);
            bad |= far < -tol;
        }
        if bad && rep.witness.is_none() {
            rep.witness = Some(k);
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub intervals: usize,
    /// `max |−ΔJ/Δt − |Lu − f̃(u)|²| / max |Lu − f̃(u)|²`.
    pub relative_error: f64,
    pub absolute_error: f64,
    pub pass: bool,
}

/// Compares `−ΔJ/Δt` between consecutive samples with `|Lu − f̃(u)|²` at the
/// midpoint state. Intended for densely, uniformly sampled trajectories.
pub fn energy_identity_check(model: &EllipticModel, traj: &Trajectory, tol: f64) -> Result<EnergyReport> {
    if traj.len() < 2 {
        return Err(Error::Precondition("trajectory needs at least 2 samples".into()));
    }
    let js: Vec<f64> = traj.states.par_iter().map(|s| model.j_eval(s.coords())).collect();
    let pairs: Vec<(f64, f64)> = (0..traj.len() - 1)
        .into_par_iter()
        .map(|k| {
            let dt = traj.times[k + 1] - traj.times[k];
            let lhs = -(js[k + 1] - js[k]) / dt;
            let mid = traj.states[k].lerp(&traj.states[k + 1], 0.5);
            (lhs, model.residual_norm(mid.coords()).powi(2))
        })
        .collect();
    let scale = pairs.iter().map(|p| p.1).fold(0.0, f64::max);
    let absolute_error = pairs.iter().map(|(l, r)| (l - r).abs()).fold(0.0, f64::max);
    let relative_error = if scale > 0.0 { absolute_error / scale } else { absolute_error };
    Ok(EnergyReport { intervals: pairs.len(), relative_error, absolute_error, pass: relative_error <= tol })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions {
    pub trial_count: usize,
    pub path_nodes: usize,
    /// Largest `‖·‖` distance between neighbouring path nodes.
    pub path_gap: f64,
    pub deform_dt: f64,
    pub max_iterations: usize,
    pub stall_tol: f64,
    pub residual_tol: f64,
    pub newton_max: usize,
    pub seed: u64,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            trial_count: 1000,
            path_nodes: 32,
            path_gap: 0.5,
            deform_dt: 0.1,
            max_iterations: 400,
            stall_tol: 1e-7,
            residual_tol: 1e-6,
            newton_max: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PositiveSolution {
    pub u_star: StateVector,
    /// `|Lu* − f̃(u*)|`.
    pub residual: f64,
    pub j_value: f64,
    /// Supremum of `J` over the final polygonal path, an upper estimate of
    /// the mountain-pass level.
    pub c: f64,
    /// Largest nodal value of `J` on the final path.
    pub c_nodes: f64,
    /// `¼ρ²`.
    pub beta: f64,
    pub radius: MpRadius,
    pub lambda1: f64,
    pub s1: f64,
    pub records: Vec<MinimaxRecord>,
    /// Node count of the final path.
    pub path_nodes: usize,
    pub termination: Termination,
    /// Largest negative part removed by the cone projection.
    pub max_clip: f64,
    pub candidate_residual: f64,
    pub newton_iterations: usize,
}

impl PositiveSolution {
    pub fn profile_rows(&self, model: &EllipticModel) -> Vec<Vec<Cell>> {
        model
            .nodes()
            .iter()
            .zip(self.u_star.coords())
            .map(|(&r, &u)| vec![r.into(), u.into()])
            .chain(std::iter::once(vec![model.spec().r_max.into(), 0.0.into()]))
            .collect()
    }
}

/// Damped Newton iteration on `Lu = f̃(u)`. Returns the iterate count.
pub fn newton_polish(model: &EllipticModel, u: &mut Vec<f64>, tol: f64, max_iter: usize) -> Result<usize> {
    let mut res = model.residual_norm(u);
    for it in 0..max_iter {
        if res <= tol {
            return Ok(it);
        }
        let shift: Vec<f64> = (0..u.len()).map(|i| -model.f_prime(i, u[i])).collect();
        let jac = model.operator_plus(&shift);
        let rv = model.residual_vector(u);
        let rhs: Vec<f64> = rv.iter().zip(&model.mass).map(|(r, w)| -r * w).collect();
        let delta = jac.solve(&rhs);
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = u.iter().zip(&delta).map(|(a, d)| a + step * d).collect();
            let r = model.residual_norm(&trial);
            if r < res || step < 1e-4 {
                debug!("newton {it}: residual {r:e} (step {step})");
                *u = trial;
                res = r;
                break;
            }
            step *= 0.5;
        }
        if !res.is_finite() {
            break;
        }
    }
    if res <= tol {
        Ok(max_iter)
    } else {
        Err(Error::SearchFailed(format!("newton polish stopped at residual {res:e}")))
    }
}

/// `sup J` over the piecewise-linear path through the nodes.
pub fn polygonal_sup(model: &EllipticModel, path: &DiscretePath) -> f64 {
    let on = |a: &[f64], b: &[f64], t: f64| {
        let u: Vec<f64> = a.iter().zip(b).map(|(x, y)| x + t * (y - x)).collect();
        model.j_eval(&u)
    };
    path.nodes
        .par_windows(2)
        .map(|w| {
            let (a, b) = (w[0].coords(), w[1].coords());
            let samples = 8;
            let (k, best) = (0..=samples)
                .map(|k| (k, on(a, b, k as f64 / samples as f64)))
                .fold((0, f64::NEG_INFINITY), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
            // golden section on the bracket around the best sample
            let g = (5f64.sqrt() - 1.0) / 2.0;
            let (mut lo, mut hi) = ((k as f64 - 1.0).max(0.0) / samples as f64, (k as f64 + 1.0).min(samples as f64) / samples as f64);
            let mut x1 = hi - g * (hi - lo);
            let mut x2 = lo + g * (hi - lo);
            let (mut f1, mut f2) = (on(a, b, x1), on(a, b, x2));
            for _ in 0..40 {
                if f1 > f2 {
                    hi = x2;
                    x2 = x1;
                    f2 = f1;
                    x1 = hi - g * (hi - lo);
                    f1 = on(a, b, x1);
                } else {
                    lo = x1;
                    x1 = x2;
                    f1 = f2;
                    x2 = lo + g * (hi - lo);
                    f2 = on(a, b, x2);
                }
            }
            best.max(f1).max(f2)
        })
        .reduce(|| f64::NEG_INFINITY, f64::max)
}

/// Mountain-pass search for a positive solution: cone path from 0 to
/// `s₁w₁`, flow deformation (nodes below `β/2` stay fixed, negative parts are
/// clipped), Newton polish of the best candidate at the minimax level.
pub fn positive_solution_search(model: &Arc<EllipticModel>, opts: &SearchOptions) -> Result<PositiveSolution> {
    let s_grid: Vec<f64> = (-200..=200).map(|i| i as f64 * 0.5).collect();
    validate_conditions(model, &s_grid, model.nodes())?;
    let radius = mp_radius(model, opts.trial_count, opts.seed)?;
    if !radius.rho.is_finite() {
        return Err(Error::Rejected("b = 0: no mountain-pass geometry".into()));
    }
    let beta = radius.beta();
    if !radius.barrier_holds(1e-9 * beta) {
        return Err(Error::Rejected(format!(
            "sampled barrier {} is below rho^2/4 = {beta}; c5 is underestimated",
            radius.barrier
        )));
    }
    let (lambda1, w1) = first_eigenfunction(model)?;
    let s1 = find_s1(model, &w1)?;
    info!("rho = {}, beta = {beta}, lambda1 = {lambda1}, s1 = {s1}", radius.rho);
    let zero = StateVector::zeros(model.dim(), SpaceId::RADIAL_GRID);
    let end = w1.scaled(s1);
    let path = DiscretePath::segment(&zero, &end, opts.path_nodes, opts.path_gap)?;

    let fm = model.flow_model().with_tolerances(1e-8, 1e-8);
    let m = Arc::clone(model);
    let phi = move |s: &StateVector| m.j_eval(s.coords());
    let clip = |y: &mut [f64]| {
        let mut worst = 0.0_f64;
        for v in y.iter_mut() {
            if *v < 0.0 {
                worst = worst.max(-*v);
                *v = 0.0;
            }
        }
        worst
    };
    let deform = DeformOptions { freeze_below: Some((&phi, 0.5 * beta)), project: Some(&clip), max_nodes: Some(64 * opts.path_nodes) };
    let out = minimax_estimate_with(&fm, &phi, &path, opts.max_iterations, opts.deform_dt, opts.stall_tol, &deform)?;
    let clip_limit = 10.0 * fm.abs_tol;
    if out.max_projection > clip_limit {
        return Err(Error::Rejected(format!(
            "cone projection removed {} (> {clip_limit}); the flow left the cone",
            out.max_projection
        )));
    }
    let c = polygonal_sup(model, &out.final_path);
    info!("minimax level c = {c} (nodes {}) after {} iterations ({:?})", out.c, out.records.len() - 1, out.termination);
    let mut cands: Vec<(f64, &StateVector)> = out
        .final_path
        .nodes
        .par_iter()
        .map(|n| (model.residual_norm(n.coords()), n))
        .filter(|(_, n)| phi(n) >= 0.5 * beta)
        .collect();
    cands.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut last_err = Error::SearchFailed("no path node above the barrier level".into());
    for (cres, cand) in cands.into_iter().take(3) {
        let mut u = cand.coords().to_vec();
        match newton_polish(model, &mut u, opts.residual_tol * 1e-3, opts.newton_max) {
            Ok(newton_iterations) => {
                let residual = model.residual_norm(&u);
                let j_value = model.j_eval(&u);
                let min_entry = u.iter().copied().fold(f64::INFINITY, f64::min);
                if residual <= opts.residual_tol && min_entry >= -clip_limit && model.v_norm(&u) > 0.0 && j_value >= 0.5 * beta {
                    u.iter_mut().for_each(|v| *v = v.max(0.0));
                    return Ok(PositiveSolution {
                        u_star: StateVector::from_raw(u, SpaceId::RADIAL_GRID),
                        residual,
                        j_value,
                        c,
                        c_nodes: out.c,
                        beta,
                        radius,
                        lambda1,
                        s1,
                        path_nodes: out.final_path.len(),
                        records: out.records,
                        termination: out.termination,
                        max_clip: out.max_projection,
                        candidate_residual: cres,
                        newton_iterations,
                    });
                }
                last_err = Error::SearchFailed(format!(
                    "polished candidate rejected: residual {residual:e}, min entry {min_entry}, J = {j_value}"
                ));
            }
            Err(e) => last_err = e,
        }
    }
    Err(last_err)
}

/// Nonnegative directions for probes at infinity: single Gaussian bumps
/// centred in `[0, centre_max)` with widths in `[0.5, 2)`. Bumps centred where
/// `b` is moderate meet the band `|J| <= c` at large norms.
pub fn bump_direction_sampler(model: &Arc<EllipticModel>, centre_max: f64) -> impl Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync {
    let m = Arc::clone(model);
    move |rng: &mut ChaCha8Rng| {
        let centre = rng.random_range(0.0..centre_max);
        let width = rng.random_range(0.5..2.0);
        m.nodes().iter().map(|&r| (-((r - centre) / width).powi(2)).exp()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model_with(b: Weight, a: Potential, n: usize) -> Arc<EllipticModel> {
        Arc::new(EllipticModel::new(EllipticSpec { grid_points: n, b, a, ..EllipticSpec::default() }).unwrap())
    }

    fn linear(n: usize) -> Arc<EllipticModel> {
        model_with(Weight::Zero, Potential::Constant(1.0), n)
    }

    fn canonical(n: usize) -> Arc<EllipticModel> {
        Arc::new(EllipticModel::new(EllipticSpec { grid_points: n, ..EllipticSpec::default() }).unwrap())
    }

    /// Ground state of `K v = ν (K + W a)`-free generalized problem
    /// `(K + W a) v = ν W v` by plain power iteration on the inverse.
    fn ground_mode(m: &EllipticModel) -> (f64, Vec<f64>) {
        let n = m.dim();
        let k = m.operator_plus(&vec![0.0; n]);
        let mut v = vec![1.0; n];
        let mut nu = 0.0;
        for _ in 0..2000 {
            let rhs: Vec<f64> = v.iter().zip(m.mass()).map(|(x, w)| x * w).collect();
            let mut x = k.solve(&rhs);
            let norm = m.h_norm(&x);
            x.iter_mut().for_each(|y| *y /= norm);
            let mut kx = vec![0.0; n];
            k.apply(&x, &mut kx);
            nu = x.iter().zip(&kx).map(|(a, b)| a * b).sum();
            v = x;
        }
        (nu, v)
    }

    #[test]
    fn sphere_areas() {
        assert_eq!(sphere_area(1), 2.0);
        assert!((sphere_area(2) - 2.0 * PI).abs() < 1e-15);
        assert!((sphere_area(3) - 4.0 * PI).abs() < 1e-14);
        assert!((sphere_area(4) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn cell_volumes_sum_to_the_ball() {
        let m = linear(200);
        let total: f64 = m.mass().iter().sum();
        let ball = 4.0 / 3.0 * PI * (25.0 - 0.5 * m.step()).powi(3);
        assert!((total - ball).abs() < 1e-9 * ball);
    }

    #[test]
    fn zero_is_stationary_and_has_zero_energy() {
        let m = canonical(200);
        let z = m.sample(|_| 0.0);
        assert_eq!(j7_eval(&m, &z).unwrap(), 0.0);
        let tr = parabolic_evolve(&m, &z, 1.0).unwrap();
        assert!(tr.last().coords().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn j_of_ground_mode_is_half_eigenvalue() {
        let m = linear(300);
        let (nu, phi) = ground_mode(&m);
        let expected = 0.5 * nu * m.h_norm(&phi).powi(2);
        assert!((m.j_eval(&phi) - expected).abs() < 1e-10 * expected);
        // continuum value on the ball: ν = 1 + (π/R)²
        assert!((nu - (1.0 + (PI / 25.0).powi(2))).abs() < 1e-3);
    }

    #[test]
    fn linear_flow_decays_like_the_ground_mode() {
        let m = linear(200);
        let (nu, phi) = ground_mode(&m);
        let fm = m.flow_model().with_tolerances(1e-11, 1e-11);
        let tr = evolve(&fm, &m.state(phi.clone()).unwrap(), 2.0).unwrap();
        let expected: Vec<f64> = phi.iter().map(|v| v * (-nu * 2.0).exp()).collect();
        let err = m.h_norm(&tr.last().sub(&m.state(expected).unwrap()));
        assert!(err < 1e-7, "err {err}");
        let u0 = m.sample(|r| (-(r - 3.0).powi(2)).exp());
        let tr = evolve(&fm, &u0, 3.0).unwrap();
        for (t, s) in tr.iter() {
            assert!(m.v_norm(s.coords()) <= m.v_norm(u0.coords()) * (-m.a0() * t).exp() * (1.0 + 1e-8));
        }
    }

    #[test]
    fn j_along_a_ray_has_closed_form() {
        let m = canonical(400);
        let (_, w1) = first_eigenfunction(&m).unwrap();
        let w = w1.coords();
        assert!((m.v_norm(w) - 1.0).abs() < 1e-12);
        let mu = m.mu();
        let integral: f64 = (0..m.dim()).map(|i| m.mass()[i] * m.weight()[i] * w[i].abs().powf(mu)).sum();
        for &s in &[0.5, 3.0, 40.0] {
            let u: Vec<f64> = w.iter().map(|x| s * x).collect();
            let closed = 0.5 * s * s - s.powf(mu) / mu * integral;
            assert!((m.j_eval(&u) - closed).abs() < 1e-10 * (1.0 + closed.abs()));
        }
        let s1 = find_s1(&m, &w1).unwrap();
        let bound = (mu / (2.0 * integral / mu)).powf(1.0 / (mu - 2.0));
        assert!(s1 <= 2.0 * bound.max(1.0));
        assert!(m.j_eval(&w.iter().map(|x| s1 * x).collect::<Vec<_>>()) <= 0.0);
        // b scaled by 2^μ shrinks s₁
        let big = model_with(Weight::Gaussian { amplitude: 5.0 * 2f64.powf(mu), width: 1.0 }, Potential::Constant(1.0), 400);
        let (_, w1b) = first_eigenfunction(&big).unwrap();
        assert!(find_s1(&big, &w1b).unwrap() < s1);
        assert!(matches!(find_s1(&linear(100), &first_eigenfunction(&linear(100)).unwrap().1), Err(Error::SearchFailed(_))));
    }

    #[test]
    fn eigenfunction_matches_the_ball_mode() {
        let m = canonical(1000);
        let (lambda, w1) = first_eigenfunction(&m).unwrap();
        // continuum: λ₁ = (π/R_Ω)², w₁ ∝ sin(πr/R_Ω)/r on the ball of radius R_Ω
        let r_omega = m.spec().omega_radius;
        assert!((lambda - (PI / r_omega).powi(2)).abs() < 2e-2 * (PI / r_omega).powi(2), "{lambda}");
        let i = m.nodes().iter().position(|&r| r >= 1.0).unwrap();
        let shape = |r: f64| if r == 0.0 { PI / r_omega } else { (PI * r / r_omega).sin() / r };
        let scale = w1[i] / shape(m.nodes()[i]);
        for (k, &r) in m.nodes().iter().enumerate().filter(|(_, &r)| r < r_omega) {
            assert!((w1[k] - scale * shape(r)).abs() < 1e-2 * w1[0], "r = {r}");
        }
        assert!(w1.coords().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn canonical_conditions_pass_and_bad_models_are_rejected() {
        let s: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.37).collect();
        let m = canonical(200);
        let rep = validate_conditions(&m, &s, m.nodes()).unwrap();
        assert!(rep.passed());
        assert!(rep.row("F3").unwrap().detail.contains("e-1") || rep.row("F3").unwrap().margin >= -1e-12);
        let bad_gamma = EllipticModel::new(EllipticSpec { gamma: 1.5, grid_points: 100, ..EllipticSpec::default() }).unwrap();
        assert!(matches!(validate_conditions(&bad_gamma, &s, bad_gamma.nodes()), Err(Error::Rejected(msg)) if msg.contains("gamma")));
        let dip = model_with(
            Weight::Gaussian { amplitude: 5.0, width: 1.0 },
            Potential::Dip { base: 1.0, depth: 1.0, width: 1.0 },
            100,
        );
        assert!(matches!(validate_conditions(&dip, &s, dip.nodes()), Err(Error::Rejected(msg)) if msg.contains("A1")));
    }

    #[test]
    fn f3_holds_with_equality() {
        let m = canonical(100);
        for i in 0..m.dim() {
            for &s in &[-7.0, -0.3, 0.0, 0.2, 11.0] {
                let lhs = m.mu() * m.primitive(i, s);
                let rhs = m.f(i, s) * s;
                assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
            }
        }
    }

    #[test]
    fn mp_radius_scaling_and_degenerate_case() {
        let m = canonical(200);
        let r = mp_radius(&m, 200, 4).unwrap();
        assert!(r.rho.is_finite() && r.barrier_holds(1e-9 * r.beta()));
        let doubled = model_with(Weight::Gaussian { amplitude: 10.0, width: 1.0 }, Potential::Constant(1.0), 200);
        let r2 = mp_radius(&doubled, 200, 4).unwrap();
        assert!((r2.c5_hat / r.c5_hat - 2.0).abs() < 1e-9, "{}", r2.c5_hat / r.c5_hat);
        assert!((r2.rho / r.rho - 2f64.powf(-1.0 / 0.5)).abs() < 1e-8);
        let z = mp_radius(&linear(50), 10, 0).unwrap();
        assert_eq!(z.c5_hat, 0.0);
        assert!(z.rho.is_infinite());
    }

    #[test]
    fn cone_is_invariant() {
        let m = canonical(200);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples: Vec<StateVector> = (0..8).map(|_| m.state(random_bump(&m, &mut rng, 0.3)).unwrap()).collect();
        let rep = cone_invariance_check(&m, &samples, 1.0, 10.0 * 1e-9).unwrap();
        assert!(rep.passed(), "min entry {}", rep.min_entry);
        let lin = linear(200);
        let bump = lin.sample(|r| (-(r - 2.0).powi(2)).exp());
        assert!(cone_invariance_check(&lin, &[bump], 2.0, 1e-8).unwrap().passed());
        let neg = lin.sample(|r| -(-r * r).exp());
        assert!(matches!(cone_invariance_check(&lin, &[neg], 1.0, 1e-8), Err(Error::Precondition(_))));
    }

    #[test]
    fn linear_dissipativity_is_tight() {
        let m = linear(200);
        let fm = m.flow_model().with_tolerances(1e-12, 1e-12);
        let u0 = m.sample(|r| (-(r - 1.0).powi(2)).exp());
        let run = |dt: f64| {
            let tr = crate::flow::evolve_sampled(&fm, 0.0, &u0, 1.0, dt).unwrap();
            let rep = dissipativity_check(&m, &tr, 100.0, 1e-6).unwrap();
            assert!(rep.passed());
            rep.min_slack_sharp
        };
        // with b = 0 the sharp form is the identity d|u|²/dt = -2‖u‖², up to
        // the second-order difference quotient
        let (coarse, fine) = (run(1e-3), run(5e-4));
        assert!(coarse.abs() < 1e-4 && coarse / fine > 3.5, "{coarse} {fine}");
    }

    #[test]
    fn energy_identity_on_linear_mode() {
        let m = linear(200);
        let (nu, phi) = ground_mode(&m);
        let fm = m.flow_model().with_tolerances(1e-12, 1e-12);
        let tr = crate::flow::evolve_sampled(&fm, 0.0, &m.state(phi.clone()).unwrap(), 0.5, 1e-3).unwrap();
        let rep = energy_identity_check(&m, &tr, 1e-2).unwrap();
        assert!(rep.pass && rep.relative_error < 1e-5, "{}", rep.relative_error);
        let norm2 = m.h_norm(&phi).powi(2);
        let rhs0 = m.residual_norm(&phi).powi(2);
        assert!((rhs0 - nu * nu * norm2).abs() < 1e-9 * rhs0);
    }
}
