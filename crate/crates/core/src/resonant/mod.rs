//! Spectral Galerkin model of `u_t + Lu = f(u) + g(x,t)` on `(0, π)` with
//! Dirichlet conditions at resonance.
//!
//! `L = A - μ` where `A = -d²/dx²` has eigenpairs `(k², sin kx)` and `μ` is one
//! of the eigenvalues. A state holds the sine coefficients `u_1..u_m`. Norms:
//! `|u|² = Σ u_k² π/2` (L²) and `‖u‖² = Σ k² u_k² π/2` (H¹₀, the phase-space
//! norm). Nonlinear terms are evaluated on a uniform midpoint rule.

mod bebutov;
mod sweep;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::flow::{evolve_from, lyapunov_monotonicity, FlowModel, LinearPart, Trajectory, TrajectoryStatus, VectorField};
use crate::linking::{linking_check_sphere_with, DiscretePath, LinkingCheck};
use crate::state::{SpaceId, StateVector};

pub use bebutov::{
    bebutov_distance, bebutov_profile, recurrence_test, BebutovDistance, RecurrenceProfile, RecurrenceReport,
    RecurrenceRow, TimeRecord, RECURRENCE_CSV_HEADER,
};
pub use sweep::{bounded_solution_search, BoundedRecord, BoundedSearch, SweepOptions};

/// Bounded scalar nonlinearity `f`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Nonlinearity {
    /// `2·arctan(s)`: limits `±π`, sup `π`.
    TwoArctan,
    /// `tanh(s)`.
    Tanh,
    /// `f ≡ 0`; violates the sign conditions at infinity, useful for linear checks.
    Zero,
}

impl Nonlinearity {
    pub fn eval(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::TwoArctan => 2.0 * s.atan(),
            Nonlinearity::Tanh => s.tanh(),
            Nonlinearity::Zero => 0.0,
        }
    }

    pub fn derivative(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::TwoArctan => 2.0 / (1.0 + s * s),
            Nonlinearity::Tanh => 1.0 - s.tanh().powi(2),
            Nonlinearity::Zero => 0.0,
        }
    }

    /// Primitive `F(s) = ∫₀ˢ f`.
    pub fn primitive(&self, s: f64) -> f64 {
        match self {
            Nonlinearity::TwoArctan => 2.0 * s * s.atan() - (s * s).ln_1p(),
            Nonlinearity::Tanh => {
                let a = s.abs();
                a + (-2.0 * a).exp().ln_1p() - 2f64.ln()
            }
            Nonlinearity::Zero => 0.0,
        }
    }

    /// `liminf_{s→+∞} f(s)`.
    pub fn f_bar(&self) -> f64 {
        match self {
            Nonlinearity::TwoArctan => PI,
            Nonlinearity::Tanh => 1.0,
            Nonlinearity::Zero => 0.0,
        }
    }

    /// `-limsup_{s→-∞} f(s)`.
    pub fn f_under(&self) -> f64 {
        self.f_bar()
    }

    /// `M = sup |f|`.
    pub fn sup_abs(&self) -> f64 {
        self.f_bar()
    }

    /// Upper bound of `f'`.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Nonlinearity::TwoArctan => 2.0,
            Nonlinearity::Tanh => 1.0,
            Nonlinearity::Zero => 0.0,
        }
    }
}

impl FromStr for Nonlinearity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "2arctan" | "two_arctan" => Ok(Nonlinearity::TwoArctan),
            "tanh" => Ok(Nonlinearity::Tanh),
            "zero" => Ok(Nonlinearity::Zero),
            other => Err(Error::Config(format!("unknown nonlinearity '{other}' (expected 2arctan, tanh or zero)"))),
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Nonlinearity::TwoArctan => "2arctan",
            Nonlinearity::Tanh => "tanh",
            Nonlinearity::Zero => "zero",
        })
    }
}

/// Spatial profile of a separable forcing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Profile {
    /// `sin x`.
    Sine,
    /// `1`.
    One,
}

impl Profile {
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            Profile::Sine => x.sin(),
            Profile::One => 1.0,
        }
    }

    pub fn sup_abs(&self) -> f64 {
        1.0
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Profile::Sine => "sin",
            Profile::One => "one",
        })
    }
}

impl FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sin" => Ok(Profile::Sine),
            "one" => Ok(Profile::One),
            other => Err(Error::Config(format!("unknown forcing profile '{other}' (expected sin or one)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForcingKind {
    Zero,
    /// `profile(x) · Σ a_i sin(ω_i t)`.
    Quasiperiodic { frequencies: Vec<f64>, amplitudes: Vec<f64>, profile: Profile },
}

/// Time-dependent forcing `g(x,t)` with its range bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ForcingSignal {
    pub kind: ForcingKind,
    pub inf_g: f64,
    pub sup_g: f64,
}

impl ForcingSignal {
    pub fn zero() -> Self {
        Self { kind: ForcingKind::Zero, inf_g: 0.0, sup_g: 0.0 }
    }

    pub fn quasiperiodic(frequencies: Vec<f64>, amplitudes: Vec<f64>, profile: Profile) -> Result<Self> {
        if frequencies.len() != amplitudes.len() || frequencies.is_empty() {
            return Err(Error::Config("forcing needs matching, nonempty frequency and amplitude lists".into()));
        }
        if frequencies.iter().chain(&amplitudes).any(|v| !v.is_finite()) {
            return Err(Error::Config("forcing parameters must be finite".into()));
        }
        // sines with incommensurate frequencies reach the sum of amplitudes
        let bound = profile.sup_abs() * amplitudes.iter().map(|a| a.abs()).sum::<f64>();
        Ok(Self {
            kind: ForcingKind::Quasiperiodic { frequencies, amplitudes, profile },
            inf_g: -bound,
            sup_g: bound,
        })
    }

    /// The time factor `Σ a_i sin(ω_i t)`.
    pub fn time_factor(&self, t: f64) -> f64 {
        match &self.kind {
            ForcingKind::Zero => 0.0,
            ForcingKind::Quasiperiodic { frequencies, amplitudes, .. } => {
                frequencies.iter().zip(amplitudes).map(|(w, a)| a * (w * t).sin()).sum()
            }
        }
    }

    pub fn eval(&self, x: f64, t: f64) -> f64 {
        match &self.kind {
            ForcingKind::Zero => 0.0,
            ForcingKind::Quasiperiodic { profile, .. } => profile.eval(x) * self.time_factor(t),
        }
    }

    pub fn sup_abs(&self) -> f64 {
        self.inf_g.abs().max(self.sup_g.abs())
    }
}

/// A point `θ_τ g` of the hull of the forcing, represented by its shift.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HullShift {
    pub tau: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sector {
    Minus,
    Zero,
    Plus,
}

/// Galerkin truncation data at resonance.
#[derive(Debug, Clone)]
pub struct SpectralModel {
    modes: usize,
    mu: f64,
    f: Nonlinearity,
    eigenvalues: Vec<f64>,
    nodes: Vec<f64>,
    weight: f64,
    /// `sin(k x_q)`, row-major by mode.
    sines: Vec<f64>,
}

impl SpectralModel {
    /// Uses `4m` midpoint nodes, exact for `sin jx · sin kx` with `j, k <= m`.
    pub fn new(modes: usize, mu: f64, f: Nonlinearity) -> Result<Self> {
        Self::with_quadrature(modes, mu, f, 4 * modes)
    }

    pub fn with_quadrature(modes: usize, mu: f64, f: Nonlinearity, nodes: usize) -> Result<Self> {
        if modes == 0 {
            return Err(Error::Config("modes must be positive".into()));
        }
        if nodes < 2 * modes {
            return Err(Error::Config(format!("quadrature needs at least {} nodes", 2 * modes)));
        }
        let eigenvalues: Vec<f64> = (1..=modes).map(|k| (k * k) as f64).collect();
        if !eigenvalues.contains(&mu) {
            return Err(Error::Config(format!("mu = {mu} is not an eigenvalue k² with k <= {modes}")));
        }
        let weight = PI / nodes as f64;
        let xs: Vec<f64> = (0..nodes).map(|q| (q as f64 + 0.5) * weight).collect();
        let mut sines = Vec::with_capacity(modes * nodes);
        for k in 1..=modes {
            sines.extend(xs.iter().map(|x| (k as f64 * x).sin()));
        }
        Ok(Self { modes, mu, f, eigenvalues, nodes: xs, weight, sines })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn nonlinearity(&self) -> Nonlinearity {
        self.f
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn quadrature_nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn sector(&self, k: usize) -> Sector {
        let l = self.eigenvalues[k];
        if l < self.mu {
            Sector::Minus
        } else if l == self.mu {
            Sector::Zero
        } else {
            Sector::Plus
        }
    }

    /// Zero-based indices of a sector.
    pub fn indices(&self, sector: Sector) -> Vec<usize> {
        (0..self.modes).filter(|&k| self.sector(k) == sector).collect()
    }

    /// Smallest eigenvalue above `mu`.
    pub fn mu_plus(&self) -> Option<f64> {
        self.eigenvalues.iter().copied().find(|&l| l > self.mu)
    }

    pub fn state(&self, coords: Vec<f64>) -> Result<StateVector> {
        if coords.len() != self.modes {
            return Err(Error::DimensionMismatch { expected: self.modes, got: coords.len() });
        }
        StateVector::new(coords, SpaceId::GALERKIN_SINE)
    }

    pub fn unit_mode(&self, k: usize) -> StateVector {
        let mut c = vec![0.0; self.modes];
        c[k - 1] = 1.0;
        StateVector::from_raw(c, SpaceId::GALERKIN_SINE)
    }

    fn sin_row(&self, k: usize) -> &[f64] {
        let q = self.nodes.len();
        &self.sines[k * q..(k + 1) * q]
    }

    /// Values of `u` at the quadrature nodes.
    pub fn synthesize(&self, u: &[f64], out: &mut [f64]) {
        out.fill(0.0);
        for (k, &uk) in u.iter().enumerate() {
            if uk != 0.0 {
                for (o, s) in out.iter_mut().zip(self.sin_row(k)) {
                    *o += uk * s;
                }
            }
        }
    }

    /// `(2/π)⟨v, sin k·⟩` for every mode, by quadrature of nodal values.
    pub fn analyze(&self, values: &[f64], out: &mut [f64]) {
        let scale = 2.0 / PI * self.weight;
        for (k, o) in out.iter_mut().enumerate() {
            *o = scale * values.iter().zip(self.sin_row(k)).map(|(v, s)| v * s).sum::<f64>();
        }
    }

    /// `∫₀^π v` by the model quadrature.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        self.weight * values.iter().sum::<f64>()
    }

    pub fn project(&self, u: &StateVector, sector: Sector) -> StateVector {
        let coords = u
            .coords()
            .iter()
            .enumerate()
            .map(|(k, &v)| if self.sector(k) == sector { v } else { 0.0 })
            .collect();
        StateVector::from_raw(coords, u.space())
    }

    /// `‖u‖` (H¹₀).
    pub fn v_norm(&self, u: &[f64]) -> f64 {
        (u.iter().zip(&self.eigenvalues).map(|(v, l)| l * v * v).sum::<f64>() * PI / 2.0).sqrt()
    }

    /// `|u|` (L²).
    pub fn h_norm(&self, u: &[f64]) -> f64 {
        (u.iter().map(|v| v * v).sum::<f64>() * PI / 2.0).sqrt()
    }

    /// `‖P⁺u‖`.
    pub fn plus_norm(&self, u: &[f64]) -> f64 {
        let s: f64 = (0..self.modes)
            .filter(|&k| self.sector(k) == Sector::Plus)
            .map(|k| self.eigenvalues[k] * u[k] * u[k])
            .sum();
        (s * PI / 2.0).sqrt()
    }

    /// `|Lu|` (L²).
    pub fn l_norm(&self, u: &[f64]) -> f64 {
        let s: f64 = u.iter().zip(&self.eigenvalues).map(|(v, l)| ((l - self.mu) * v).powi(2)).sum();
        (s * PI / 2.0).sqrt()
    }

    /// `J(u) = ½(‖u‖² − μ|u|²) − ∫F(u)`.
    pub fn j_eval(&self, u: &[f64]) -> f64 {
        let quad: f64 = u.iter().zip(&self.eigenvalues).map(|(v, l)| (l - self.mu) * v * v).sum::<f64>() * PI / 4.0;
        let mut vals = vec![0.0; self.nodes.len()];
        self.synthesize(u, &mut vals);
        quad - self.weight * vals.iter().map(|&s| self.f.primitive(s)).sum::<f64>()
    }

    /// Bundles the model with a forcing and hull point as a vector field.
    pub fn field(self: &Arc<Self>, forcing: &ForcingSignal, shift: HullShift) -> ResonantField {
        let mut profile = vec![0.0; self.modes];
        if let ForcingKind::Quasiperiodic { profile: p, .. } = &forcing.kind {
            let vals: Vec<f64> = self.nodes.iter().map(|&x| p.eval(x)).collect();
            self.analyze(&vals, &mut profile);
        }
        let linear = LinearPart::Diagonal(self.eigenvalues.iter().map(|l| self.mu - l).collect());
        ResonantField { model: Arc::clone(self), forcing: forcing.clone(), profile, shift, linear }
    }

    pub fn flow_model(self: &Arc<Self>, forcing: &ForcingSignal, shift: HullShift) -> FlowModel {
        FlowModel::new(self.field(forcing, shift))
    }
}

/// Right-hand side `−Lu + P(f(u) + g(·, t+τ))` of the Galerkin system.
#[derive(Debug, Clone)]
pub struct ResonantField {
    model: Arc<SpectralModel>,
    forcing: ForcingSignal,
    /// Sine coefficients of the forcing profile.
    profile: Vec<f64>,
    shift: HullShift,
    linear: LinearPart,
}

impl ResonantField {
    pub fn model(&self) -> &SpectralModel {
        &self.model
    }

    pub fn forcing(&self) -> &ForcingSignal {
        &self.forcing
    }

    pub fn shift(&self) -> HullShift {
        self.shift
    }

    /// `P(f(u) + g(·, t+τ))`, the nonlinear part.
    pub fn nonlinear(&self, t: f64, u: &[f64], out: &mut [f64]) {
        let m = &self.model;
        let mut vals = vec![0.0; m.nodes.len()];
        m.synthesize(u, &mut vals);
        for v in vals.iter_mut() {
            *v = m.f.eval(*v);
        }
        m.analyze(&vals, out);
        let a = self.forcing.time_factor(t + self.shift.tau);
        if a != 0.0 {
            for (o, p) in out.iter_mut().zip(&self.profile) {
                *o += a * p;
            }
        }
    }
}

impl VectorField for ResonantField {
    fn dim(&self) -> usize {
        self.model.modes
    }

    fn eval(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.nonlinear(t, x, out);
        for ((o, l), v) in out.iter_mut().zip(&self.model.eigenvalues).zip(x) {
            *o -= (l - self.model.mu) * v;
        }
    }

    fn space(&self) -> SpaceId {
        SpaceId::GALERKIN_SINE
    }

    fn linear_part(&self) -> Option<&LinearPart> {
        Some(&self.linear)
    }

    fn eval_nonlinear(&self, t: f64, x: &[f64], out: &mut [f64]) {
        self.nonlinear(t, x, out);
    }

    fn norm(&self, x: &[f64]) -> f64 {
        self.model.v_norm(x)
    }
}

/// Galerkin right-hand side at hull point `shift` and time `t`.
pub fn galerkin_rhs(
    model: &Arc<SpectralModel>,
    forcing: &ForcingSignal,
    u: &StateVector,
    shift: HullShift,
    t: f64,
) -> Result<StateVector> {
    let fm = model.flow_model(forcing, shift);
    fm.rhs(t, u)
}

/// `(f̄ + inf g, f_ − sup g)`; both must be positive.
pub fn landesman_lazer_margins(model: &SpectralModel, forcing: &ForcingSignal) -> Result<(f64, f64)> {
    let f = model.nonlinearity();
    let m1 = f.f_bar() + forcing.inf_g;
    let m2 = f.f_under() - forcing.sup_g;
    if m1 > 0.0 && m2 > 0.0 {
        Ok((m1, m2))
    } else {
        Err(Error::Rejected(format!(
            "sign condition on the forcing fails: f_bar + inf g = {m1}, f_under - sup g = {m2}"
        )))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KappaReport {
    pub kappa: f64,
    /// `max (κ|s| − F(s))` over the grid, inflated by the Lipschitz bound of
    /// the deficit times half the spacing.
    pub c0: f64,
    pub argmax: f64,
    pub verify_points: usize,
    /// `min (F(s) − κ|s| + c₀)` on the verification grid.
    pub min_slack: f64,
    pub pass: bool,
}

/// Finds `c₀` with `F(s) >= κ|s| − c₀`, `κ = ½ min(f̄, f_)`, on a uniform grid
/// and verifies it on a 10× denser grid.
pub fn kappa_bound_check(f: Nonlinearity, s_grid: &[f64]) -> Result<KappaReport> {
    let kappa = 0.5 * f.f_bar().min(f.f_under());
    if !(kappa > 0.0) {
        return Err(Error::Rejected(format!("nonlinearity {f} has no positive limits at infinity")));
    }
    if s_grid.len() < 3 || s_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("s grid must be increasing with at least 3 points".into()));
    }
    let (lo, hi) = (s_grid[0], s_grid[s_grid.len() - 1]);
    if lo > -1e3 || hi < 1e3 {
        return Err(Error::Precondition("s grid must span at least [-1e3, 1e3]".into()));
    }
    let deficit = |s: f64| kappa * s.abs() - f.primitive(s);
    let (mut best, mut argmax, mut at_end) = (f64::NEG_INFINITY, 0.0, false);
    for (i, &s) in s_grid.iter().enumerate() {
        let d = deficit(s);
        if d > best {
            best = d;
            argmax = s;
            at_end = i == 0 || i + 1 == s_grid.len();
        }
    }
    if at_end {
        return Err(Error::Rejected(format!(
            "F(s) - kappa|s| is still decreasing at the grid end s = {argmax}; condition fails"
        )));
    }
    let spacing = s_grid.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let c0 = best + (kappa + f.sup_abs()) * spacing / 2.0;
    let verify_points = 10 * (s_grid.len() - 1) + 1;
    let min_slack = (0..verify_points)
        .map(|i| lo + (hi - lo) * i as f64 / (verify_points - 1) as f64)
        .map(|s| f.primitive(s) - kappa * s.abs() + c0)
        .fold(f64::INFINITY, f64::min);
    Ok(KappaReport { kappa, c0, argmax, verify_points, min_slack, pass: min_slack >= 0.0 && c0.is_finite() })
}

/// Constants of the positively invariant set `N_{c,ρ}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds {
    pub mu_plus: f64,
    pub epsilon: f64,
    /// Decay rate of `‖u⁺‖²` is `2λ`.
    pub lambda: f64,
    /// `C_ε = (M + sup|g|)² |Ω| / (4ε)` from `ab <= εa² + b²/(4ε)`.
    pub c_eps: f64,
    pub rho1: f64,
    /// `3 M |Ω|^{1/2}`.
    pub lv_threshold: f64,
    /// Largest sampled `J(v)` with `|Lv| <= 3M|Ω|^{1/2}` (floored at 0).
    pub c1: f64,
    /// Rigorous upper bound `T²/(2(μ⁺−μ)) − |Ω| min(0, inf F)`.
    pub c1_bound: f64,
    /// `min |Lv| − 3M|Ω|^{1/2}` over sampled `v` with `J(v) >= c₁`.
    pub lv_margin: f64,
    pub samples: usize,
}

/// Computes `λ`, `ρ₁` in closed form and estimates `c₁` by sampling the set
/// `{|Lv| <= 3M|Ω|^{1/2}}` (random directions, mode-wise extremes, and a free
/// kernel component).
pub fn invariance_thresholds(model: &SpectralModel, forcing: &ForcingSignal, samples: usize, seed: u64) -> Result<Thresholds> {
    let mu = model.mu();
    let mu_plus = model
        .mu_plus()
        .ok_or_else(|| Error::Rejected("no eigenvalue above mu in the truncation; need m with m² > mu".into()))?;
    let epsilon = (mu_plus - mu) / (2.0 * mu_plus);
    let lambda = (1.0 - epsilon) * mu_plus - mu;
    let omega = PI;
    let big_m = model.nonlinearity().sup_abs();
    let c_eps = (big_m + forcing.sup_abs()).powi(2) * omega / (4.0 * epsilon);
    let rho1 = (c_eps / lambda).sqrt();
    let lv_threshold = 3.0 * big_m * omega.sqrt();

    let m = model.modes();
    let kernel = model.indices(Sector::Zero);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cands: Vec<Vec<f64>> = Vec::with_capacity(samples + 4 * m);
    let scale_to = |v: &mut Vec<f64>, target: f64| {
        let l = model.l_norm(v);
        if l > 0.0 {
            v.iter_mut().for_each(|x| *x *= target / l);
        }
    };
    // mode-wise extremes with and without a kernel component
    for k in 0..m {
        if model.sector(k) == Sector::Zero {
            continue;
        }
        for sign in [-1.0, 1.0] {
            for kern in [0.0, 0.5, 2.0] {
                let mut v = vec![0.0; m];
                v[k] = sign;
                scale_to(&mut v, lv_threshold);
                for &z in &kernel {
                    v[z] = kern;
                }
                cands.push(v);
            }
        }
    }
    for _ in 0..samples {
        let mut v: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        for &z in &kernel {
            v[z] = 0.0;
        }
        let r: f64 = rng.random::<f64>().sqrt();
        scale_to(&mut v, lv_threshold * r);
        for &z in &kernel {
            v[z] = rng.random_range(-5.0..5.0);
        }
        cands.push(v);
        // broader probe outside the set, to report the margin
        let mut w: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s = rng.random_range(0.0..4.0);
        scale_to(&mut w, lv_threshold * s);
        cands.push(w);
    }
    let evals: Vec<(f64, f64)> = cands.par_iter().map(|v| (model.j_eval(v), model.l_norm(v))).collect();
    let sampled = evals
        .iter()
        .filter(|(_, l)| *l <= lv_threshold)
        .map(|(j, _)| *j)
        .fold(f64::NEG_INFINITY, f64::max);
    let c1 = sampled.max(0.0);
    let lv_margin = evals
        .iter()
        .filter(|(j, _)| *j > c1)
        .map(|(_, l)| l - lv_threshold)
        .fold(f64::INFINITY, f64::min);
    let inf_f = (-2000..=2000)
        .map(|i| model.nonlinearity().primitive(i as f64 * 0.5))
        .fold(f64::INFINITY, f64::min);
    let c1_bound = lv_threshold.powi(2) / (2.0 * (mu_plus - mu)) - omega * inf_f.min(0.0);
    info!("c1 sampled = {c1}, analytic bound = {c1_bound}, |Lv| margin = {lv_margin}");
    Ok(Thresholds {
        mu_plus,
        epsilon,
        lambda,
        c_eps,
        rho1,
        lv_threshold,
        c1,
        c1_bound,
        lv_margin,
        samples: cands.len(),
    })
}

/// Membership margin of `N_{c,ρ} = {‖P⁺v‖ <= ρ, J(v) <= c}`.
pub fn region_margin(model: &SpectralModel, c: f64, rho: f64, u: &[f64]) -> f64 {
    (model.plus_norm(u) - rho).max(model.j_eval(u) - c)
}

/// An initial condition for the skew-product flow.
#[derive(Debug, Clone, PartialEq)]
pub struct Seed {
    pub shift: HullShift,
    pub state: StateVector,
}

/// Draws seeds in `N_{c,ρ}` by rejection: the `V⁺` part uniform in the
/// `ρ`-ball direction-wise, kernel and `V⁻` coefficients in `[-5, 5]`, hull
/// shifts in `[0, 1000)`.
pub fn sample_seeds(model: &SpectralModel, c: f64, rho: f64, count: usize, seed: u64) -> Result<Vec<Seed>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = model.modes();
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0usize;
    while out.len() < count {
        attempts += 1;
        if attempts > 1000 * count.max(1) {
            return Err(Error::SearchFailed(format!("could only place {} of {count} seeds in N_(c,rho)", out.len())));
        }
        let mut v = vec![0.0; m];
        for (k, x) in v.iter_mut().enumerate() {
            *x = match model.sector(k) {
                Sector::Plus => rng.sample::<f64, _>(StandardNormal),
                _ => rng.random_range(-5.0..5.0),
            };
        }
        let pn = model.plus_norm(&v);
        if pn > 0.0 {
            let target = rho * rng.random::<f64>();
            for k in 0..m {
                if model.sector(k) == Sector::Plus {
                    v[k] *= target / pn;
                }
            }
        }
        let tau = rng.random_range(0.0..1000.0);
        if region_margin(model, c, rho, &v) <= 0.0 {
            out.push(Seed { shift: HullShift { tau }, state: model.state(v)? });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InvarianceViolationKind {
    Level,
    PlusNorm,
    Envelope,
}

#[derive(Debug, Clone)]
pub struct InvarianceViolation {
    pub seed: usize,
    pub kind: InvarianceViolationKind,
    pub time: f64,
    pub excess: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct InvarianceReport {
    pub samples: usize,
    /// Trajectories that reached the blow-up norm (escape to infinity along
    /// the kernel/unstable directions), checked up to that time.
    pub escaped_to_infinity: usize,
    pub max_level_excess: f64,
    pub max_plus_excess: f64,
    pub max_envelope_excess: f64,
    /// Largest increase of `J` between consecutive samples with `J >= c₁`.
    pub max_j_increase_above_c1: f64,
    pub violations: Vec<InvarianceViolation>,
}

impl InvarianceReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Verifies forward invariance of `N_{c,ρ}` and the decay envelope of `‖u⁺‖`
/// along trajectories of the given seeds.
#[allow(clippy::too_many_arguments)]
pub fn invariant_region_check(
    model: &Arc<SpectralModel>,
    forcing: &ForcingSignal,
    thresholds: &Thresholds,
    c: f64,
    rho: f64,
    seeds: &[Seed],
    horizon: f64,
    tol: f64,
) -> Result<InvarianceReport> {
    if !(c > thresholds.c1) {
        return Err(Error::Precondition(format!("level c = {c} must exceed c1 = {}", thresholds.c1)));
    }
    if !(rho > thresholds.rho1) {
        return Err(Error::Precondition(format!("rho = {rho} must exceed rho1 = {}", thresholds.rho1)));
    }
    for (i, s) in seeds.iter().enumerate() {
        let m = region_margin(model, c, rho, s.state.coords());
        if m > 0.0 {
            return Err(Error::Precondition(format!("seed {i} lies outside N_(c,rho) (margin {m})")));
        }
    }
    let (lambda, rho1) = (thresholds.lambda, thresholds.rho1);
    struct One {
        escaped: bool,
        level: f64,
        plus: f64,
        envelope: f64,
        j_increase: f64,
        violations: Vec<InvarianceViolation>,
    }
    let results: Vec<One> = seeds
        .par_iter()
        .enumerate()
        .map(|(i, seed)| -> Result<One> {
            let fm = model.flow_model(forcing, seed.shift);
            let tr = evolve_from(&fm, 0.0, &seed.state, horizon)?;
            let p0 = model.plus_norm(seed.state.coords()).powi(2);
            let (mut level, mut plus, mut envelope) = (f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
            let mut worst = [(f64::NEG_INFINITY, 0.0); 3];
            for (t, s) in tr.iter() {
                let u = s.coords();
                let pn = model.plus_norm(u);
                let l = model.j_eval(u) - c;
                let p = pn - rho;
                let decay = (-2.0 * lambda * t).exp();
                let e = pn * pn - (p0 * decay + rho1 * rho1 * (1.0 - decay));
                for (k, v) in [l, p, e].into_iter().enumerate() {
                    if v > worst[k].0 {
                        worst[k] = (v, t);
                    }
                }
                level = level.max(l);
                plus = plus.max(p);
                envelope = envelope.max(e);
            }
            let kinds = [InvarianceViolationKind::Level, InvarianceViolationKind::PlusNorm, InvarianceViolationKind::Envelope];
            let violations = kinds
                .iter()
                .zip(worst)
                .filter(|(_, (v, _))| *v > tol)
                .map(|(&kind, (excess, time))| InvarianceViolation { seed: i, kind, time, excess, trajectory: tr.clone() })
                .collect();
            let mono = lyapunov_monotonicity(&|s: &StateVector| model.j_eval(s.coords()), &tr, f64::INFINITY, Some(thresholds.c1));
            Ok(One {
                escaped: matches!(tr.status, TrajectoryStatus::Exploded(_)),
                level,
                plus,
                envelope,
                j_increase: mono.max_increase,
                violations,
            })
        })
        .collect::<Result<_>>()?;
    let mut rep = InvarianceReport {
        samples: seeds.len(),
        escaped_to_infinity: 0,
        max_level_excess: f64::NEG_INFINITY,
        max_plus_excess: f64::NEG_INFINITY,
        max_envelope_excess: f64::NEG_INFINITY,
        max_j_increase_above_c1: 0.0,
        violations: Vec::new(),
    };
    for r in results {
        rep.escaped_to_infinity += usize::from(r.escaped);
        rep.max_level_excess = rep.max_level_excess.max(r.level);
        rep.max_plus_excess = rep.max_plus_excess.max(r.plus);
        rep.max_envelope_excess = rep.max_envelope_excess.max(r.envelope);
        rep.max_j_increase_above_c1 = rep.max_j_increase_above_c1.max(r.j_increase);
        rep.violations.extend(r.violations);
    }
    Ok(rep)
}

/// Discrete linking of the `W = V⁻ ⊕ V⁰` sphere `S_r` with the `V⁺` slice:
/// a segment from a `V⁺` point `p` to `p + 2r·e` (with `e` the first kernel
/// mode, normalized) must cross `S_r` measured by the `W`-component norm.
pub fn w_sphere_linking(model: &SpectralModel, plus_point: &StateVector, r: f64) -> Result<LinkingCheck> {
    let m = model.modes();
    let kern = *model.indices(Sector::Zero).first().expect("resonant model has a kernel");
    let mut e = vec![0.0; m];
    e[kern] = 1.0;
    let ne = model.v_norm(&e);
    let mut end = model.project(plus_point, Sector::Plus).into_coords();
    end[kern] += 2.0 * r / ne;
    let start = model.project(plus_point, Sector::Plus);
    let end = model.state(end)?;
    let path = DiscretePath::segment(&start, &end, 33, r)?;
    let w_dist = |a: &[f64], b: &[f64]| {
        let d: Vec<f64> = a
            .iter()
            .zip(b)
            .enumerate()
            .map(|(k, (x, y))| if model.sector(k) == Sector::Plus { 0.0 } else { x - y })
            .collect();
        model.v_norm(&d)
    };
    linking_check_sphere_with(&path, &start, r, w_dist)
}
