//! Ważewski pairs, the collapsed quotient flow, and probes of behavior at
//! infinity.
//!
//! A pair `(N, E)` consists of two margin regions with `E ⊂ N`. The quotient
//! flow of `N/E` is represented by [`QuotientState`]: a trajectory stays
//! `Interior` while it lives in `N \ E` and becomes `Collapsed` (absorbing) once
//! it reaches `E`, leaves `N`, or blows up.

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::csv::Cell;
use crate::error::{Error, Result};
use crate::flow::{evolve_in_region, FlowModel, Trajectory, TrajectoryStatus};
use crate::region::Region;
use crate::state::StateVector;

#[derive(Debug, Clone)]
pub struct WazewskiPairSpec {
    pub n: Region,
    pub e: Region,
    pub description: String,
    /// E-membership tolerance; `None` means `100 * abs_tol` of the model.
    pub e_tol: Option<f64>,
}

impl WazewskiPairSpec {
    pub fn new(n: Region, e: Region, description: impl Into<String>) -> Self {
        Self { n, e, description: description.into(), e_tol: None }
    }

    pub fn e_tolerance(&self, model: &FlowModel) -> f64 {
        self.e_tol.unwrap_or(100.0 * model.abs_tol)
    }

    /// `N \ E` as a region: leaves when `N` is left or `E` is entered strictly.
    pub fn interior_region(&self) -> Region {
        self.n.intersect(&self.e.complement())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A trajectory starting in `E` drifted away from `E` while inside `N`.
    EInvariance,
    /// A trajectory left `N` at a point not in `E`.
    Exit,
}

#[derive(Debug, Clone)]
pub struct ExitViolation {
    pub sample: usize,
    pub kind: ViolationKind,
    pub witness: StateVector,
    pub witness_time: f64,
    pub e_margin: f64,
    pub trajectory: Trajectory,
}

#[derive(Debug, Clone)]
pub struct ExitSetReport {
    pub samples: usize,
    /// Samples outside `N`, skipped.
    pub precondition_failures: Vec<usize>,
    pub exits: usize,
    pub violations: Vec<ExitViolation>,
    /// Largest observed `|Δ margin_N| / |Δx|` between consecutive samples.
    pub margin_lipschitz: f64,
    pub tol: f64,
}

impl ExitSetReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty() && self.precondition_failures.is_empty()
    }
}

/// Checks that `E` is `N`-invariant and that `N` is only ever left through `E`.
pub fn exit_set_check(
    model: &FlowModel,
    pair: &WazewskiPairSpec,
    samples: &[StateVector],
    horizon: f64,
    tol: f64,
) -> Result<ExitSetReport> {
    for s in samples {
        model.check_state(s)?;
    }
    struct Outcome {
        outside: bool,
        exited: bool,
        violation: Option<ExitViolation>,
        lipschitz: f64,
    }
    let outcomes: Vec<Outcome> = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<Outcome> {
            if !pair.n.contains(x) {
                return Ok(Outcome { outside: true, exited: false, violation: None, lipschitz: 0.0 });
            }
            let tr = evolve_in_region(model, x, &pair.n, horizon)?;
            let mut lipschitz = 0.0_f64;
            for w in tr.states.windows(2) {
                let dx = model.distance(w[0].coords(), w[1].coords());
                if dx > 0.0 {
                    lipschitz = lipschitz.max((pair.n.margin(&w[1]) - pair.n.margin(&w[0])).abs() / dx);
                }
            }
            let mut violation = None;
            if pair.e.margin(x) <= tol {
                let worst = tr
                    .iter()
                    .map(|(t, s)| (t, s, pair.e.margin(s)))
                    .fold(None, |acc: Option<(f64, &StateVector, f64)>, cur| match acc {
                        Some(a) if a.2 >= cur.2 => Some(a),
                        _ => Some(cur),
                    })
                    .expect("non-empty trajectory");
                if worst.2 > tol {
                    violation = Some(ExitViolation {
                        sample: i,
                        kind: ViolationKind::EInvariance,
                        witness: worst.1.clone(),
                        witness_time: worst.0,
                        e_margin: worst.2,
                        trajectory: tr.clone(),
                    });
                }
            }
            let exited = matches!(tr.status, TrajectoryStatus::EscapedRegion(_));
            if let (None, TrajectoryStatus::EscapedRegion(t)) = (&violation, tr.status) {
                let m = pair.e.margin(tr.last());
                if m > tol {
                    violation = Some(ExitViolation {
                        sample: i,
                        kind: ViolationKind::Exit,
                        witness: tr.last().clone(),
                        witness_time: t,
                        e_margin: m,
                        trajectory: tr,
                    });
                }
            }
            Ok(Outcome { outside: false, exited, violation, lipschitz })
        })
        .collect::<Result<_>>()?;

    let mut report = ExitSetReport {
        samples: samples.len(),
        precondition_failures: Vec::new(),
        exits: 0,
        violations: Vec::new(),
        margin_lipschitz: 0.0,
        tol,
    };
    for (i, o) in outcomes.into_iter().enumerate() {
        if o.outside {
            report.precondition_failures.push(i);
        }
        report.exits += usize::from(o.exited);
        report.margin_lipschitz = report.margin_lipschitz.max(o.lipschitz);
        report.violations.extend(o.violation);
    }
    debug!("N-margin Lipschitz estimate along trajectories: {}", report.margin_lipschitz);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub enum QuotientState {
    Interior(StateVector),
    /// The class `[E]`. Absorbing.
    Collapsed { collapse_time: f64 },
}

impl QuotientState {
    pub fn is_collapsed(&self) -> bool {
        matches!(self, QuotientState::Collapsed { .. })
    }
}

/// Quotient flow on `N/E` from `x` over time `t`.
///
/// Returns `Collapsed` with the time `x` reached `E`, left `N`, or blew up; a
/// start already in `E` collapses at time 0.
pub fn quotient_evolve(model: &FlowModel, pair: &WazewskiPairSpec, x: &StateVector, t: f64) -> Result<QuotientState> {
    model.check_state(x)?;
    if pair.e.contains(x) {
        return Ok(QuotientState::Collapsed { collapse_time: 0.0 });
    }
    if !pair.n.contains(x) {
        return Err(Error::Precondition(format!("start lies outside N (margin {})", pair.n.margin(x))));
    }
    let tr = evolve_in_region(model, x, &pair.interior_region(), t)?;
    Ok(match tr.status {
        TrajectoryStatus::Completed => QuotientState::Interior(tr.last().clone()),
        TrajectoryStatus::EscapedRegion(te) | TrajectoryStatus::Exploded(te) => {
            QuotientState::Collapsed { collapse_time: te }
        }
    })
}

/// Continues a quotient state that is already `elapsed` time old by `t`.
/// Collapse times stay measured from the original start.
pub fn quotient_continue(
    model: &FlowModel,
    pair: &WazewskiPairSpec,
    state: &QuotientState,
    elapsed: f64,
    t: f64,
) -> Result<QuotientState> {
    match state {
        QuotientState::Collapsed { .. } => Ok(state.clone()),
        QuotientState::Interior(y) => Ok(match quotient_evolve(model, pair, y, t)? {
            QuotientState::Collapsed { collapse_time } => {
                QuotientState::Collapsed { collapse_time: elapsed + collapse_time }
            }
            interior => interior,
        }),
    }
}

/// Parameters of [`stability_at_infinity_probe`].
#[derive(Debug, Clone)]
pub struct StabilityProbeSpec {
    /// Radii `r` of the balls `B₀` that must be avoided.
    pub inner_radii: Vec<f64>,
    /// Increasing start radii `R` tested for each `r`.
    pub start_radii: Vec<f64>,
    pub samples_per_radius: usize,
    pub horizon: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityRow {
    pub r: f64,
    /// Smallest tested `R` that works, if any.
    pub big_r: Option<f64>,
    /// Samples with start norm above the reported `R` (or above the largest
    /// tested radius when none works).
    pub samples: usize,
    pub violations: usize,
}

#[derive(Debug, Clone)]
pub struct StabilitySample {
    pub start: StateVector,
    pub start_norm: f64,
    /// Minimum norm while inside the region.
    pub min_norm: f64,
}

#[derive(Debug, Clone)]
pub struct StabilityTable {
    pub rows: Vec<StabilityRow>,
    pub samples: Vec<StabilitySample>,
    /// For the first `r` without a sufficient `R`: that radius and the
    /// offending trajectory from the largest start norm.
    pub counterexample: Option<(f64, Trajectory)>,
}

impl StabilityTable {
    /// `R(r)` nondecreasing in `r`, treating a missing `R` as infinite.
    pub fn is_monotone(&self) -> bool {
        self.rows.windows(2).all(|w| {
            let a = w[0].big_r.unwrap_or(f64::INFINITY);
            let b = w[1].big_r.unwrap_or(f64::INFINITY);
            a <= b
        })
    }

    pub fn csv_rows(&self) -> Vec<Vec<Cell>> {
        self.rows
            .iter()
            .map(|row| {
                vec![
                    Cell::from(row.r),
                    row.big_r.map_or(Cell::from("inf"), Cell::from),
                    Cell::from(row.samples),
                    Cell::from(row.violations),
                ]
            })
            .collect()
    }
}

pub const STABILITY_CSV_HEADER: [&str; 4] = ["r", "R", "samples", "violations"];

/// Standard normal direction in coordinates.
pub fn gaussian_direction(dim: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Finds a point of `region` on the ray `s·d`, `s ∈ [lo, hi]` (model norm of
/// `d` normalized to 1): the left end if it qualifies, otherwise the
/// golden-section minimizer of the margin.
fn region_point_on_ray(region: &Region, d: &[f64], lo: f64, hi: f64) -> Option<Vec<f64>> {
    let at = |s: f64| -> Vec<f64> { d.iter().map(|v| v * s).collect() };
    let margin = |s: f64| region.margin_raw(&at(s));
    let left = lo * (1.0 + 1e-9);
    if margin(left) <= 0.0 {
        return Some(at(left));
    }
    // coarse scan then golden section on the best bracket
    let scan = 16;
    let grid: Vec<f64> = (0..=scan).map(|k| left + (hi - left) * k as f64 / scan as f64).collect();
    let vals: Vec<f64> = grid.iter().map(|&s| margin(s)).collect();
    if let Some(k) = vals.iter().position(|&m| m <= 0.0) {
        return Some(at(grid[k]));
    }
    let kbest = (0..vals.len()).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).expect("non-empty");
    let (mut a, mut b) = (grid[kbest.saturating_sub(1)], grid[(kbest + 1).min(scan)]);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut e = a + g * (b - a);
    let (mut fc, mut fe) = (margin(c), margin(e));
    for _ in 0..60 {
        if fc.min(fe) <= 0.0 {
            break;
        }
        if fc < fe {
            b = e;
            e = c;
            fe = fc;
            c = b - g * (b - a);
            fc = margin(c);
        } else {
            a = c;
            c = e;
            fc = fe;
            e = a + g * (b - a);
            fe = margin(e);
        }
    }
    if fc <= 0.0 {
        Some(at(c))
    } else if fe <= 0.0 {
        Some(at(e))
    } else {
        None
    }
}

/// Estimates, for each inner radius `r`, the smallest tested start radius `R`
/// such that sampled trajectories starting in `region` with norm above `R`
/// keep norm above `r` for as long as they stay in the region.
///
/// `direction` draws ray directions; starts lie on the ray between
/// consecutive start radii (the last interval is `[R_max, 2 R_max]`).
pub fn stability_at_infinity_probe(
    model: &FlowModel,
    region: &Region,
    spec: &StabilityProbeSpec,
    direction: &(dyn Fn(&mut ChaCha8Rng) -> Vec<f64> + Sync),
) -> Result<StabilityTable> {
    let radii = &spec.start_radii;
    if radii.is_empty() || radii.iter().any(|&r| !(r > 0.0)) || radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("start radii must be positive and increasing".into()));
    }
    if spec.inner_radii.iter().any(|&r| !(r > 0.0)) || spec.inner_radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Precondition("inner radii must be positive and increasing".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut jobs = Vec::new();
    for (j, &lo) in radii.iter().enumerate() {
        let hi = radii.get(j + 1).copied().unwrap_or(2.0 * lo);
        for _ in 0..spec.samples_per_radius {
            let mut d = direction(&mut rng);
            let nd = model.norm(&d);
            if nd == 0.0 || !nd.is_finite() {
                continue;
            }
            d.iter_mut().for_each(|v| *v /= nd);
            jobs.push((d, lo, hi));
        }
    }
    let space = model.space();
    let samples: Vec<Option<(StabilitySample, Trajectory)>> = jobs
        .par_iter()
        .map(|(d, lo, hi)| -> Result<_> {
            let Some(x) = region_point_on_ray(region, d, *lo, *hi) else {
                return Ok(None);
            };
            let start = StateVector::new(x, space)?;
            let tr = evolve_in_region(model, &start, region, spec.horizon)?;
            // the bisected exit state lies just outside the region
            let inside = if matches!(tr.status, TrajectoryStatus::EscapedRegion(_)) {
                &tr.states[..tr.len() - 1]
            } else {
                &tr.states[..]
            };
            let min_norm = inside.iter().map(|s| model.norm(s.coords())).fold(f64::INFINITY, f64::min);
            let start_norm = model.norm(start.coords());
            Ok(Some((StabilitySample { start, start_norm, min_norm }, tr)))
        })
        .collect::<Result<_>>()?;
    let samples: Vec<(StabilitySample, Trajectory)> = samples.into_iter().flatten().collect();
    info!("stability probe: {} of {} rays met the region", samples.len(), jobs.len());

    let mut rows = Vec::new();
    let mut counterexample = None;
    for &r in &spec.inner_radii {
        let mut row = None;
        for &big_r in radii {
            let above: Vec<&(StabilitySample, Trajectory)> =
                samples.iter().filter(|(s, _)| s.start_norm > big_r).collect();
            let violations = above.iter().filter(|(s, _)| s.min_norm <= r).count();
            if violations == 0 && !above.is_empty() {
                row = Some(StabilityRow { r, big_r: Some(big_r), samples: above.len(), violations: 0 });
                break;
            }
        }
        let row = row.unwrap_or_else(|| {
            let last = *radii.last().expect("non-empty");
            let above: Vec<&(StabilitySample, Trajectory)> =
                samples.iter().filter(|(s, _)| s.start_norm > last).collect();
            let bad: Vec<&&(StabilitySample, Trajectory)> = above.iter().filter(|(s, _)| s.min_norm <= r).collect();
            if counterexample.is_none() {
                if let Some(worst) = bad.iter().max_by(|a, b| a.0.start_norm.total_cmp(&b.0.start_norm)) {
                    counterexample = Some((r, worst.1.clone()));
                }
            }
            StabilityRow { r, big_r: None, samples: above.len(), violations: bad.len() }
        });
        rows.push(row);
    }
    Ok(StabilityTable { rows, samples: samples.into_iter().map(|(s, _)| s).collect(), counterexample })
}

#[derive(Debug, Clone)]
pub struct NonexplosionReport {
    pub samples: usize,
    /// Largest sample norm; the region's sampled circumradius.
    pub circumradius_estimate: f64,
    /// Samples that blew up while inside the region, with the time.
    pub explosions: Vec<(usize, f64)>,
}

impl NonexplosionReport {
    pub fn passed(&self) -> bool {
        self.explosions.is_empty()
    }
}

/// Confirms that no sampled trajectory blows up while it remains inside a
/// bounded region.
pub fn nonexplosion_probe(
    model: &FlowModel,
    bounded_region: &Region,
    samples: &[StateVector],
    horizon: f64,
) -> Result<NonexplosionReport> {
    let mut circumradius_estimate = 0.0_f64;
    for s in samples {
        model.check_state(s)?;
        let n = model.norm(s.coords());
        circumradius_estimate = circumradius_estimate.max(n);
        if n > 0.0 {
            // the region must end before the blow-up threshold along this ray
            let far: Vec<f64> = s.coords().iter().map(|v| v / n * model.blow_up_norm).collect();
            if bounded_region.margin_raw(&far) <= 0.0 {
                return Err(Error::Precondition(format!(
                    "region '{}' reaches the blow-up norm; it is not bounded",
                    bounded_region.label()
                )));
            }
        }
    }
    let explosions: Vec<Option<(usize, f64)>> = samples
        .par_iter()
        .enumerate()
        .map(|(i, x)| -> Result<_> {
            if !bounded_region.contains(x) {
                return Ok(None);
            }
            let tr = evolve_in_region(model, x, bounded_region, horizon)?;
            Ok(match tr.status {
                TrajectoryStatus::Exploded(t) => Some((i, t)),
                _ => None,
            })
        })
        .collect::<Result<_>>()?;
    Ok(NonexplosionReport {
        samples: samples.len(),
        circumradius_estimate,
        explosions: explosions.into_iter().flatten().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use proptest::prelude::*;

    fn unit_interval_pair(e_point: f64) -> WazewskiPairSpec {
        WazewskiPairSpec::new(
            Region::boxed(vec![0.0], vec![1.0]),
            Region::new("point", move |x| (x[0] - e_point).abs()),
            "unit interval",
        )
    }

    #[test]
    fn unit_flow_exits_through_right_end() {
        let m = builtin::unit_speed(1);
        let samples: Vec<_> = (0..10).map(|k| StateVector::euclidean(&[k as f64 / 10.0])).collect();
        let pair = unit_interval_pair(1.0);
        let rep = exit_set_check(&m, &pair, &samples, 5.0, pair.e_tolerance(&m)).unwrap();
        assert!(rep.passed(), "{:?}", rep.violations.first().map(|v| v.e_margin));
        assert_eq!(rep.exits, 10);
    }

    #[test]
    fn wrong_exit_set_yields_witness() {
        let m = builtin::unit_speed(1);
        let pair = unit_interval_pair(0.0);
        let rep = exit_set_check(&m, &pair, &[StateVector::euclidean(&[0.5])], 5.0, pair.e_tolerance(&m)).unwrap();
        assert_eq!(rep.violations.len(), 1);
        let v = &rep.violations[0];
        assert_eq!(v.kind, ViolationKind::Exit);
        assert!((v.witness[0] - 1.0).abs() < 1e-6);
        assert!((v.e_margin - 1.0).abs() < 1e-6);
    }

    #[test]
    fn quotient_examples() {
        let m = builtin::unit_speed(1);
        let pair = unit_interval_pair(1.0);
        let x = StateVector::euclidean(&[0.0]);
        match quotient_evolve(&m, &pair, &x, 0.5).unwrap() {
            QuotientState::Interior(y) => assert!((y[0] - 0.5).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
        match quotient_evolve(&m, &pair, &x, 1.5).unwrap() {
            QuotientState::Collapsed { collapse_time } => assert!((collapse_time - 1.0).abs() < 1e-8),
            other => panic!("{other:?}"),
        }
        assert_eq!(
            quotient_evolve(&m, &pair, &StateVector::euclidean(&[1.0]), 3.0).unwrap(),
            QuotientState::Collapsed { collapse_time: 0.0 }
        );
    }

    #[test]
    fn quotient_blow_up_collapses() {
        let m = builtin::quadratic_blow_up();
        let pair = WazewskiPairSpec::new(
            Region::new("u<=1e6", |x| x[0] - 1e6),
            Region::new("u<=0", |x| x[0]),
            "blow-up",
        );
        match quotient_evolve(&m, &pair, &StateVector::euclidean(&[1.0]), 2.0).unwrap() {
            QuotientState::Collapsed { collapse_time } => assert!((collapse_time - 1.0).abs() < 1e-4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn repeller_has_identity_table_and_decay_has_counterexample() {
        let spec = StabilityProbeSpec {
            inner_radii: vec![1.0, 2.0, 4.0],
            start_radii: vec![0.5, 1.0, 2.0, 4.0, 8.0],
            samples_per_radius: 4,
            horizon: 5.0,
            seed: 7,
        };
        let dir = |rng: &mut ChaCha8Rng| gaussian_direction(1, rng);
        let rep = stability_at_infinity_probe(&builtin::repeller(), &Region::everything(), &spec, &dir).unwrap();
        assert!(rep.is_monotone());
        for row in &rep.rows {
            assert_eq!(row.big_r, Some(row.r), "{row:?}");
        }
        let dec = stability_at_infinity_probe(&builtin::linear_decay(), &Region::everything(), &spec, &dir).unwrap();
        assert!(dec.rows.iter().all(|r| r.big_r.is_none()));
        assert!(dec.counterexample.is_some());
    }

    #[test]
    fn nonexplosion_examples() {
        let samples: Vec<_> = [-0.9, -0.3, 0.2, 0.8].iter().map(|&v| StateVector::euclidean(&[v])).collect();
        let rep = nonexplosion_probe(&builtin::linear_decay(), &Region::euclidean_ball(1.0), &samples, 10.0).unwrap();
        assert!(rep.passed());
        let samples: Vec<_> = [0.5, 1.0, 1.9].iter().map(|&v| StateVector::euclidean(&[v])).collect();
        let rep = nonexplosion_probe(&builtin::quadratic_blow_up(), &Region::euclidean_ball(2.0), &samples, 3.0).unwrap();
        assert!(rep.passed());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn quotient_semigroup_on_unit_flow(x in 0.0..0.99f64, s in 0.0..1.5f64, t in 0.0..1.5f64) {
            let m = builtin::unit_speed(1);
            let pair = unit_interval_pair(1.0);
            let x = StateVector::euclidean(&[x]);
            let direct = quotient_evolve(&m, &pair, &x, s + t).unwrap();
            let first = quotient_evolve(&m, &pair, &x, s).unwrap();
            let split = quotient_continue(&m, &pair, &first, s, t).unwrap();
            match (direct, split) {
                (QuotientState::Interior(a), QuotientState::Interior(b)) => {
                    prop_assert!((a[0] - b[0]).abs() <= 10.0 * m.abs_tol);
                }
                (QuotientState::Collapsed { collapse_time: a }, QuotientState::Collapsed { collapse_time: b }) => {
                    prop_assert!((a - b).abs() <= 10.0 * m.abs_tol);
                }
                (a, b) => prop_assert!(false, "branches differ: {:?} vs {:?}", a, b),
            }
        }
    }
}
