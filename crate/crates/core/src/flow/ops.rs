use log::warn;

use super::integrator::{run, Outcome, RawRun, Sampling};
use super::{FlowModel, Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::region::Region;
use crate::state::StateVector;

fn check_horizon(horizon: f64) -> Result<()> {
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Precondition(format!("horizon must be finite and >= 0, got {horizon}")));
    }
    Ok(())
}

fn into_trajectory(model: &FlowModel, t0: f64, raw: RawRun) -> Trajectory {
    let space = model.space();
    let status = match raw.outcome {
        Outcome::Completed => TrajectoryStatus::Completed,
        Outcome::Exploded(t) => TrajectoryStatus::Exploded(t),
        Outcome::Escaped(t) => TrajectoryStatus::EscapedRegion(t),
    };
    let mut times = Vec::with_capacity(raw.times.len());
    let mut states = Vec::with_capacity(raw.states.len());
    for (t, s) in raw.times.into_iter().zip(raw.states) {
        // a bisected event can land on the previous sample's time
        if times.last().is_some_and(|&last| t <= last) {
            times.pop();
            states.pop();
        }
        times.push(t);
        states.push(StateVector::from_raw(s, space));
    }
    Trajectory { start_time: t0, times, states, status }
}

/// Integrates `x` over `[0, horizon]`, recording every accepted step.
pub fn evolve(model: &FlowModel, x: &StateVector, horizon: f64) -> Result<Trajectory> {
    evolve_from(model, 0.0, x, horizon)
}

/// Like [`evolve`] but for non-autonomous fields started at time `t0`; the
/// returned times are relative to `t0`.
pub fn evolve_from(model: &FlowModel, t0: f64, x: &StateVector, horizon: f64) -> Result<Trajectory> {
    model.check_state(x)?;
    check_horizon(horizon)?;
    let raw = run(model, t0, x.coords(), horizon, Sampling::Steps, None);
    Ok(into_trajectory(model, t0, raw))
}

/// Integrates with samples at multiples of `dt` (plus the horizon).
pub fn evolve_sampled(model: &FlowModel, t0: f64, x: &StateVector, horizon: f64, dt: f64) -> Result<Trajectory> {
    model.check_state(x)?;
    check_horizon(horizon)?;
    if !(dt > 0.0) {
        return Err(Error::Precondition(format!("sample interval must be positive, got {dt}")));
    }
    let raw = run(model, t0, x.coords(), horizon, Sampling::Uniform(dt), None);
    Ok(into_trajectory(model, t0, raw))
}

/// Integrates until the trajectory leaves `region`, blows up, or reaches the
/// horizon. On escape the last state is the bisected exit state.
pub fn evolve_in_region(model: &FlowModel, x: &StateVector, region: &Region, horizon: f64) -> Result<Trajectory> {
    model.check_state(x)?;
    check_horizon(horizon)?;
    let margin = |y: &[f64]| region.margin_raw(y);
    let raw = run(model, 0.0, x.coords(), horizon, Sampling::Steps, Some(&margin));
    Ok(into_trajectory(model, 0.0, raw))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EscapeResult {
    /// First time the margin became positive.
    Finite(f64),
    /// Stayed in the region up to the probed horizon.
    NotBefore(f64),
    /// Blew up while still inside the region.
    BlowUpInside(f64),
}

/// Escape time of `x` from `region`, localized by bisection to `abs_tol`.
pub fn escape_time(model: &FlowModel, x: &StateVector, region: &Region, t_max: f64) -> Result<EscapeResult> {
    let m = region.margin(x);
    if m > 0.0 {
        return Err(Error::Precondition(format!(
            "start lies outside region '{}' (margin {m})",
            region.label()
        )));
    }
    let traj = evolve_in_region(model, x, region, t_max)?;
    Ok(match traj.status {
        TrajectoryStatus::Completed => EscapeResult::NotBefore(t_max),
        TrajectoryStatus::EscapedRegion(t) => EscapeResult::Finite(t),
        TrajectoryStatus::Exploded(t) => EscapeResult::BlowUpInside(t),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SemigroupCheck {
    Checked { deviation: f64, pass: bool },
    /// The trajectory blew up before `s + t`.
    Inapplicable { blow_up_time: f64 },
}

impl SemigroupCheck {
    pub fn deviation(&self) -> Option<f64> {
        match self {
            SemigroupCheck::Checked { deviation, .. } => Some(*deviation),
            SemigroupCheck::Inapplicable { .. } => None,
        }
    }

    /// Inapplicable checks count as passing.
    pub fn passed(&self) -> bool {
        match self {
            SemigroupCheck::Checked { pass, .. } => *pass,
            SemigroupCheck::Inapplicable { .. } => true,
        }
    }
}

/// Compares `G(s+t)x` with `G(t)G(s)x` in the model norm.
pub fn check_semigroup(model: &FlowModel, x: &StateVector, s: f64, t: f64, tol: f64) -> Result<SemigroupCheck> {
    if s < 0.0 || t < 0.0 {
        return Err(Error::Precondition("semigroup check needs s, t >= 0".into()));
    }
    let direct = evolve(model, x, s + t)?;
    if let TrajectoryStatus::Exploded(bt) = direct.status {
        return Ok(SemigroupCheck::Inapplicable { blow_up_time: bt });
    }
    let first = evolve(model, x, s)?;
    if let TrajectoryStatus::Exploded(bt) = first.status {
        return Ok(SemigroupCheck::Inapplicable { blow_up_time: bt });
    }
    let second = evolve_from(model, s, first.last(), t)?;
    if let TrajectoryStatus::Exploded(bt) = second.status {
        warn!("semigroup legs disagree on blow-up: direct survived, split exploded at {}", s + bt);
        return Ok(SemigroupCheck::Inapplicable { blow_up_time: s + bt });
    }
    let deviation = model.distance(direct.last().coords(), second.last().coords());
    Ok(SemigroupCheck::Checked { deviation, pass: deviation <= tol })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;

    #[test]
    fn linear_decay_halves_at_ln2() {
        let m = builtin::linear_decay();
        let tr = evolve(&m, &StateVector::euclidean(&[1.0]), 2f64.ln()).unwrap();
        assert_eq!(tr.status, TrajectoryStatus::Completed);
        assert!((tr.last()[0] - 0.5).abs() < 1e-8);
        assert_eq!(tr.final_time(), 2f64.ln());
    }

    #[test]
    fn zero_horizon_is_identity() {
        let m = builtin::hopf();
        let x = StateVector::euclidean(&[0.3, -0.7]);
        let tr = evolve(&m, &x, 0.0).unwrap();
        assert_eq!(tr.len(), 1);
        assert_eq!(tr.first(), &x);
    }

    #[test]
    fn quadratic_blow_up_time() {
        let m = builtin::quadratic_blow_up();
        let tr = evolve(&m, &StateVector::euclidean(&[1.0]), 2.0).unwrap();
        let TrajectoryStatus::Exploded(t) = tr.status else { panic!("{:?}", tr.status) };
        assert!((t - (1.0 - 1e-6)).abs() < 1e-8, "t = {t}");
        assert!(tr.last()[0] >= 1e6);
    }

    #[test]
    fn unit_speed_escape() {
        let m = builtin::unit_speed(1);
        let r = Region::boxed(vec![0.0], vec![2.0]);
        match escape_time(&m, &StateVector::euclidean(&[0.0]), &r, 10.0).unwrap() {
            EscapeResult::Finite(t) => assert!((t - 2.0).abs() <= 2.0 * m.abs_tol),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn contraction_never_escapes() {
        let m = builtin::linear_decay();
        let r = Region::euclidean_ball(1.0);
        let res = escape_time(&m, &StateVector::euclidean(&[0.5]), &r, 20.0).unwrap();
        assert_eq!(res, EscapeResult::NotBefore(20.0));
    }

    #[test]
    fn escape_from_blow_up_ball() {
        let m = builtin::quadratic_blow_up();
        let r = Region::euclidean_ball(1e6);
        match escape_time(&m, &StateVector::euclidean(&[1.0]), &r, 2.0).unwrap() {
            EscapeResult::Finite(t) => assert!((t - (1.0 - 1e-6)).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn start_outside_is_precondition_error() {
        let m = builtin::unit_speed(1);
        let r = Region::boxed(vec![0.0], vec![2.0]);
        assert!(matches!(
            escape_time(&m, &StateVector::euclidean(&[3.0]), &r, 1.0),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_error() {
        let m = builtin::hopf();
        assert!(matches!(
            evolve(&m, &StateVector::euclidean(&[1.0]), 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn semigroup_identity_and_decay() {
        let m = builtin::linear_decay();
        let x = StateVector::euclidean(&[1.0]);
        assert_eq!(check_semigroup(&m, &x, 0.0, 1.3, 0.0).unwrap().deviation(), Some(0.0));
        let c = check_semigroup(&m, &x, 1.0, 1.0, 10.0 * m.abs_tol).unwrap();
        assert!(c.passed(), "{c:?}");
    }

    #[test]
    fn semigroup_inapplicable_after_blow_up() {
        let m = builtin::quadratic_blow_up();
        let c = check_semigroup(&m, &StateVector::euclidean(&[1.0]), 0.5, 1.0, 1e-8).unwrap();
        assert!(matches!(c, SemigroupCheck::Inapplicable { .. }));
    }

    #[test]
    fn sampled_grid_is_uniform() {
        let m = builtin::hopf();
        let tr = evolve_sampled(&m, 0.0, &StateVector::euclidean(&[0.5, 0.0]), 1.05, 0.25).unwrap();
        assert_eq!(tr.times, vec![0.0, 0.25, 0.5, 0.75, 1.0, 1.05]);
    }

    #[test]
    fn deterministic_and_blow_up_consistent() {
        let m = builtin::quadratic_blow_up();
        let x = StateVector::euclidean(&[0.7]);
        let a = evolve(&m, &x, 3.0).unwrap();
        let b = evolve(&m, &x, 3.0).unwrap();
        assert_eq!(a, b);
        let TrajectoryStatus::Exploded(t1) = a.status else { panic!() };
        let m2 = m.clone().with_blow_up_norm(2e6);
        let TrajectoryStatus::Exploded(t2) = evolve(&m2, &x, 3.0).unwrap().status else { panic!() };
        assert!(t2 >= t1);
    }
}
