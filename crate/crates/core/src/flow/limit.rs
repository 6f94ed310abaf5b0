use rayon::prelude::*;

use super::integrator::{run, Outcome, Sampling};
use super::{evolve, FlowModel, Trajectory, TrajectoryStatus};
use crate::error::{Error, Result};
use crate::state::StateVector;

/// Finite cover of a trajectory tail by `cluster_tol`-balls.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSetEstimate {
    pub points: Vec<StateVector>,
    pub sample_window: (f64, f64),
    pub cluster_tol: f64,
}

impl LimitSetEstimate {
    /// Distance from `x` to the nearest representative, in the model norm.
    pub fn distance(&self, model: &FlowModel, x: &[f64]) -> f64 {
        self.points
            .iter()
            .map(|p| model.distance(p.coords(), x))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Greedy farthest-point clustering: representatives are pairwise more than
/// `tol` apart and every sample is within `tol` of one of them.
pub(crate) fn farthest_point_cluster(
    samples: &[Vec<f64>],
    tol: f64,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Vec<usize> {
    if samples.is_empty() {
        return Vec::new();
    }
    let mut reps = vec![0];
    let mut nearest: Vec<f64> = samples.iter().map(|s| dist(s, &samples[0])).collect();
    loop {
        let (far, &d) = nearest
            .iter()
            .enumerate()
            .fold((0, &f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best });
        if d <= tol {
            return reps;
        }
        reps.push(far);
        for (i, s) in samples.iter().enumerate() {
            let di = dist(s, &samples[far]);
            if di < nearest[i] {
                nearest[i] = di;
            }
        }
    }
}

/// Estimates the ω-limit set of `x` by clustering samples of the tail
/// `[burn_in, burn_in + window]`. Samples are spaced so that consecutive
/// points are within half the cluster radius.
pub fn omega_limit(
    model: &FlowModel,
    x: &StateVector,
    burn_in: f64,
    window: f64,
    cluster_tol: f64,
) -> Result<LimitSetEstimate> {
    if !(cluster_tol > 0.0 && window > 0.0 && burn_in >= 0.0) {
        return Err(Error::Precondition("omega_limit needs burn_in >= 0, window > 0, cluster_tol > 0".into()));
    }
    let head = evolve(model, x, burn_in)?;
    if let TrajectoryStatus::Exploded(t) = head.status {
        return Err(Error::UnboundedTail(format!("blow-up at t={t} during burn-in")));
    }
    let start = head.last().clone();
    // Coarse pass for a speed bound, then a uniform pass at the needed density.
    let coarse = run(model, burn_in, start.coords(), window, Sampling::Steps, None);
    if let Outcome::Exploded(t) = coarse.outcome {
        return Err(Error::UnboundedTail(format!("blow-up at t={} inside the window", burn_in + t)));
    }
    let mut vmax = 0.0_f64;
    let mut f = vec![0.0; model.dim()];
    for (t, s) in coarse.times.iter().zip(&coarse.states) {
        model.field().eval(burn_in + t, s, &mut f);
        vmax = vmax.max(model.norm(&f));
    }
    let n0 = model.norm(start.coords());
    let n1 = model.norm(coarse.states.last().expect("non-empty"));
    if n1 > 2.0 * n0 && n1 > cluster_tol {
        return Err(Error::UnboundedTail(format!("norm grew from {n0} to {n1} across the window")));
    }
    let dt = (0.5 * cluster_tol / (1.5 * vmax).max(1e-300)).min(window / 16.0);
    let samples_needed = window / dt;
    if samples_needed > 5e6 {
        return Err(Error::Precondition(format!(
            "cluster_tol {cluster_tol} needs {samples_needed:.0} samples; enlarge it"
        )));
    }
    let fine = run(model, burn_in, start.coords(), window, Sampling::Uniform(dt), None);
    let reps = farthest_point_cluster(&fine.states, cluster_tol, |a, b| model.distance(a, b));
    let space = model.space();
    Ok(LimitSetEstimate {
        points: reps.into_iter().map(|i| StateVector::from_raw(fine.states[i].clone(), space)).collect(),
        sample_window: (burn_in, burn_in + window),
        cluster_tol,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovReport {
    pub max_increase: f64,
    /// Index of the later sample of the worst pair.
    pub worst_index: Option<usize>,
    pub pairs_checked: usize,
    pub pass: bool,
}

/// Largest increase of `phi` between consecutive samples. With `floor`, only
/// pairs whose earlier sample has `phi >= floor` are examined.
pub fn lyapunov_monotonicity(
    phi: &dyn Fn(&StateVector) -> f64,
    traj: &Trajectory,
    tol: f64,
    floor: Option<f64>,
) -> LyapunovReport {
    let values: Vec<f64> = traj.states.iter().map(phi).collect();
    let mut max_increase = 0.0_f64;
    let mut worst_index = None;
    let mut pairs_checked = 0;
    for i in 1..values.len() {
        if floor.is_some_and(|fl| values[i - 1] < fl) {
            continue;
        }
        pairs_checked += 1;
        let inc = values[i] - values[i - 1];
        if inc > max_increase {
            max_increase = inc;
            worst_index = Some(i);
        }
    }
    LyapunovReport { max_increase, worst_index, pairs_checked, pass: max_increase <= tol }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttractionOutcome {
    /// Entered the eps-neighborhood at `entry_time` and stayed until the horizon.
    Attracted { entry_time: f64 },
    NotAttracted { final_distance: f64 },
    Exploded { time: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttractionReport {
    pub outcomes: Vec<AttractionOutcome>,
    pub fraction_attracted: f64,
}

/// Checks which starts are eventually captured by the eps-neighborhood of
/// `target`. Starts are processed in parallel; results keep input order.
pub fn attraction_probe(
    model: &FlowModel,
    target: &LimitSetEstimate,
    starts: &[StateVector],
    horizon: f64,
    eps: f64,
) -> Result<AttractionReport> {
    for s in starts {
        model.check_state(s)?;
    }
    let outcomes: Vec<AttractionOutcome> = starts
        .par_iter()
        .map(|x| {
            let tr = evolve(model, x, horizon)?;
            if let TrajectoryStatus::Exploded(t) = tr.status {
                return Ok(AttractionOutcome::Exploded { time: t });
            }
            let d: Vec<f64> = tr.states.iter().map(|s| target.distance(model, s.coords())).collect();
            let last = *d.last().expect("non-empty");
            if last > eps {
                return Ok(AttractionOutcome::NotAttracted { final_distance: last });
            }
            let mut k = d.len() - 1;
            while k > 0 && d[k - 1] <= eps {
                k -= 1;
            }
            let entry_time = if k == 0 {
                0.0
            } else {
                // linear interpolation of the distance across the entering step
                let (t0, t1) = (tr.times[k - 1], tr.times[k]);
                let w = (d[k - 1] - eps) / (d[k - 1] - d[k]);
                t0 + w * (t1 - t0)
            };
            Ok(AttractionOutcome::Attracted { entry_time })
        })
        .collect::<Result<_>>()?;
    let attracted = outcomes.iter().filter(|o| matches!(o, AttractionOutcome::Attracted { .. })).count();
    let fraction_attracted = if outcomes.is_empty() { 0.0 } else { attracted as f64 / outcomes.len() as f64 };
    Ok(AttractionReport { outcomes, fraction_attracted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use proptest::prelude::*;

    #[test]
    fn decay_has_single_cluster_at_zero() {
        let m = builtin::linear_decay();
        let est = omega_limit(&m, &StateVector::euclidean(&[1.0]), 30.0, 5.0, 1e-3).unwrap();
        assert_eq!(est.points.len(), 1);
        assert!(est.points[0][0].abs() < 1e-3);
    }

    #[test]
    fn saddle_stable_manifold_goes_to_origin() {
        let m = builtin::saddle();
        let est = omega_limit(&m, &StateVector::euclidean(&[0.0, 1.0]), 30.0, 5.0, 1e-3).unwrap();
        assert_eq!(est.points.len(), 1);
        assert!(est.points[0].euclidean_norm() < 1e-3);
    }

    #[test]
    fn repeller_tail_is_unbounded() {
        let m = builtin::saddle();
        let r = omega_limit(&m, &StateVector::euclidean(&[1e-3, 0.0]), 1.0, 5.0, 1e-2);
        assert!(matches!(r, Err(Error::UnboundedTail(_))));
    }

    #[test]
    fn double_well_gradient_flow_is_monotone() {
        let m = builtin::double_well();
        let tr = evolve(&m, &StateVector::euclidean(&[1.9]), 5.0).unwrap();
        let rep = lyapunov_monotonicity(&|s| builtin::double_well_energy(s[0]), &tr, 10.0 * m.abs_tol, None);
        assert!(rep.pass, "{rep:?}");
        let eq = evolve(&m, &StateVector::euclidean(&[1.0]), 5.0).unwrap();
        let rep = lyapunov_monotonicity(&|s| builtin::double_well_energy(s[0]), &eq, 0.0, None);
        assert_eq!(rep.max_increase, 0.0);
    }

    #[test]
    fn decay_attracts_sphere_at_log_time() {
        let m = builtin::linear_decay_nd(2);
        let target = LimitSetEstimate {
            points: vec![StateVector::euclidean(&[0.0, 0.0])],
            sample_window: (0.0, 0.0),
            cluster_tol: 1e-6,
        };
        let starts: Vec<_> = (0..8)
            .map(|k| {
                let a = k as f64 * std::f64::consts::FRAC_PI_4;
                StateVector::euclidean(&[a.cos(), a.sin()])
            })
            .collect();
        let eps = 1e-2;
        let rep = attraction_probe(&m, &target, &starts, 10.0, eps).unwrap();
        assert_eq!(rep.fraction_attracted, 1.0);
        for o in rep.outcomes {
            let AttractionOutcome::Attracted { entry_time } = o else { panic!() };
            assert!((entry_time - (1.0 / eps).ln()).abs() < 0.05, "{entry_time}");
        }
    }

    #[test]
    fn saddle_unstable_start_not_attracted() {
        let m = builtin::saddle();
        let target = LimitSetEstimate {
            points: vec![StateVector::euclidean(&[0.0, 0.0])],
            sample_window: (0.0, 0.0),
            cluster_tol: 1e-6,
        };
        let rep = attraction_probe(&m, &target, &[StateVector::euclidean(&[1.0, 0.0])], 5.0, 0.1).unwrap();
        assert!(matches!(rep.outcomes[0], AttractionOutcome::NotAttracted { .. }));
    }

    proptest! {
        #[test]
        fn clustering_invariants(pts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 1..80), tol in 0.05..0.5f64) {
            let samples: Vec<Vec<f64>> = pts.iter().map(|&(a, b)| vec![a, b]).collect();
            let reps = farthest_point_cluster(&samples, tol, crate::linalg::dist2);
            for (i, &a) in reps.iter().enumerate() {
                for &b in &reps[i + 1..] {
                    prop_assert!(crate::linalg::dist2(&samples[a], &samples[b]) > tol);
                }
            }
            for s in &samples {
                prop_assert!(reps.iter().any(|&r| crate::linalg::dist2(s, &samples[r]) <= tol));
            }
        }
    }
}
