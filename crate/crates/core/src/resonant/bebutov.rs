//! Truncated compact-open (Bebutov) metric on sampled records and the
//! recurrence test built on it.

use rayon::prelude::*;

use crate::csv::Cell;
use crate::error::{Error, Result};
use crate::flow::Trajectory;
use crate::state::StateVector;

pub const RECURRENCE_CSV_HEADER: &str = "l,eps,worst_gap,pass";

/// States on the uniform grid `t0 + i·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeRecord {
    pub t0: f64,
    pub dt: f64,
    pub states: Vec<StateVector>,
}

impl TimeRecord {
    pub fn new(t0: f64, dt: f64, states: Vec<StateVector>) -> Result<Self> {
        if !(dt > 0.0) || !t0.is_finite() {
            return Err(Error::Precondition(format!("record grid needs finite t0 and dt > 0 (t0 = {t0}, dt = {dt})")));
        }
        if states.is_empty() {
            return Err(Error::Precondition("record has no samples".into()));
        }
        Ok(Self { t0, dt, states })
    }

    /// Samples a trajectory with strictly increasing times onto a uniform
    /// grid by linear interpolation. Absolute times are used.
    pub fn from_trajectory(traj: &Trajectory, dt: f64) -> Result<Self> {
        let span = traj.final_time();
        let n = (span / dt + 1e-9).floor() as usize;
        let mut states = Vec::with_capacity(n + 1);
        let mut j = 0;
        for i in 0..=n {
            let t = i as f64 * dt;
            while j + 2 < traj.times.len() && traj.times[j + 1] < t {
                j += 1;
            }
            let (ta, tb) = (traj.times[j], traj.times[(j + 1).min(traj.len() - 1)]);
            let s = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
            states.push(traj.states[j].lerp(&traj.states[(j + 1).min(traj.len() - 1)], s));
        }
        Self::new(traj.start_time, dt, states)
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t0 + i as f64 * self.dt
    }

    pub fn end_time(&self) -> f64 {
        self.time(self.len() - 1)
    }

    /// The record of `t ↦ u(t + tau)`.
    pub fn shifted(&self, tau: f64) -> Self {
        Self { t0: self.t0 - tau, dt: self.dt, states: self.states.clone() }
    }

    /// Index of the sample at time `t`, if `t` lies on the grid.
    fn index_of(&self, t: f64) -> Option<usize> {
        let x = (t - self.t0) / self.dt;
        let i = x.round();
        ((x - i).abs() < 1e-6 && i >= 0.0 && (i as usize) < self.len()).then_some(i as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BebutovDistance {
    pub value: f64,
    /// Bound on the omitted tail `Σ_{n > n_max} 2^{-n}`.
    pub truncation_bound: f64,
}

/// `Σ_{n=1}^{n_max} 2^{-n} d_n/(1+d_n)` with `d_n` the largest state distance
/// over common samples in `[-n, n]`.
pub fn bebutov_distance(
    u: &TimeRecord,
    v: &TimeRecord,
    n_max: usize,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<BebutovDistance> {
    if n_max == 0 {
        return Err(Error::Precondition("n_max must be positive".into()));
    }
    if (u.dt - v.dt).abs() > 1e-12 * u.dt {
        return Err(Error::Precondition(format!("records use different steps ({} vs {})", u.dt, v.dt)));
    }
    let reach = n_max as f64;
    let lo = (-reach / u.dt - 1e-9).ceil() as i64;
    let hi = (reach / u.dt + 1e-9).floor() as i64;
    // d[i] = distance at grid time i·dt
    let mut max_at = vec![0.0_f64; n_max];
    for i in lo..=hi {
        let t = i as f64 * u.dt;
        let (a, b) = match (u.index_of(t), v.index_of(t)) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::Precondition(format!(
                    "records must both cover [-{n_max}, {n_max}] on a common grid; missing t = {t}"
                )))
            }
        };
        let d = dist(u.states[a].coords(), v.states[b].coords());
        let first = ((t.abs() - 1e-9).ceil().max(1.0)) as usize;
        for m in max_at.iter_mut().skip(first - 1) {
            *m = m.max(d);
        }
    }
    let value = max_at
        .iter()
        .enumerate()
        .map(|(k, &d)| 0.5f64.powi(k as i32 + 1) * d / (1.0 + d))
        .sum();
    Ok(BebutovDistance { value, truncation_bound: 0.5f64.powi(n_max as i32) })
}

/// Distances `D(c)` between the record shifted to center `c` and the record
/// centered at `n_max`, for every grid center `c ∈ [n_max, T - n_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceProfile {
    pub first_center: f64,
    pub dt: f64,
    pub values: Vec<f64>,
    pub n_max: usize,
    pub truncation_bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceRow {
    pub l: f64,
    pub eps: f64,
    pub worst_gap: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecurrenceReport {
    pub rows: Vec<RecurrenceRow>,
    pub smallest_l: Option<f64>,
    pub worst_gap: f64,
    /// Number of centers within `eps` of the reference.
    pub returns: usize,
    pub truncation_bound: f64,
}

impl RecurrenceReport {
    pub fn passed(&self) -> bool {
        self.smallest_l.is_some()
    }

    pub fn csv_rows(&self) -> Vec<Vec<Cell>> {
        self.rows.iter().map(|r| vec![r.l.into(), r.eps.into(), r.worst_gap.into(), r.pass.into()]).collect()
    }
}

/// Computes the recurrence profile of a record. `D(c)` is evaluated with the
/// same formula as [`bebutov_distance`].
pub fn bebutov_profile(
    record: &TimeRecord,
    n_max: usize,
    dist: impl Fn(&[f64], &[f64]) -> f64 + Sync,
) -> Result<RecurrenceProfile> {
    if n_max == 0 {
        return Err(Error::Precondition("n_max must be positive".into()));
    }
    let w = (n_max as f64 / record.dt + 1e-9).floor() as usize;
    if record.len() < 2 * w + 1 {
        return Err(Error::Precondition(format!(
            "record of length {} cannot hold a window of half-width {n_max}",
            record.end_time() - record.t0
        )));
    }
    // last sample index at distance <= n from the center, per n
    let radius: Vec<usize> = (1..=n_max).map(|n| (n as f64 / record.dt + 1e-9).floor() as usize).collect();
    let centers = record.len() - 2 * w;
    let values = (0..centers)
        .into_par_iter()
        .map(|ci| {
            let c = ci + w;
            let mut running = 0.0_f64;
            let mut out = 0.0;
            let mut s = 0usize;
            for (k, &r) in radius.iter().enumerate() {
                while s <= r {
                    let d1 = dist(record.states[c + s].coords(), record.states[w + s].coords());
                    let d2 = dist(record.states[c - s].coords(), record.states[w - s].coords());
                    running = running.max(d1).max(d2);
                    s += 1;
                }
                out += 0.5f64.powi(k as i32 + 1) * running / (1.0 + running);
            }
            out
        })
        .collect();
    Ok(RecurrenceProfile {
        first_center: record.time(w),
        dt: record.dt,
        values,
        n_max,
        truncation_bound: 0.5f64.powi(n_max as i32),
    })
}

impl RecurrenceProfile {
    pub fn span(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 * self.dt
    }

    /// Largest stretch of centers with no return closer than `eps`, including
    /// the stretches at both ends. Infinite if there is no return at all.
    pub fn worst_gap(&self, eps: f64) -> (f64, usize) {
        self.gap_where(|d| d < eps)
    }

    fn gap_where(&self, good: impl Fn(f64) -> bool) -> (f64, usize) {
        let good: Vec<usize> = (0..self.values.len()).filter(|&i| good(self.values[i])).collect();
        let (Some(&first), Some(&last)) = (good.first(), good.last()) else {
            return (f64::INFINITY, 0);
        };
        let mut gap = first.max(self.values.len() - 1 - last);
        for w in good.windows(2) {
            gap = gap.max(w[1] - w[0]);
        }
        (gap as f64 * self.dt, good.len())
    }

    /// Every window `[a, a+l]` inside the center range holds a return iff the
    /// worst gap is at most `l`.
    pub fn test(&self, eps: f64, l_grid: &[f64]) -> RecurrenceReport {
        let (worst_gap, returns) = self.worst_gap(eps);
        let rows: Vec<RecurrenceRow> = l_grid
            .iter()
            .map(|&l| RecurrenceRow { l, eps, worst_gap, pass: worst_gap <= l + 1e-9 * self.dt })
            .collect();
        let smallest_l = rows.iter().filter(|r| r.pass).map(|r| r.l).fold(None, |a: Option<f64>, l| Some(a.map_or(l, |a| a.min(l))));
        RecurrenceReport { rows, smallest_l, worst_gap, returns, truncation_bound: self.truncation_bound }
    }

    /// Recurrence defect at window length `l`: the infimum of the `eps` that
    /// pass, so exactly the `eps > defect` pass.
    pub fn defect(&self, l: f64) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        sorted.dedup();
        let passes = |v: f64| self.gap_where(|d| d <= v).0 <= l + 1e-9 * self.dt;
        if sorted.is_empty() || !passes(sorted[sorted.len() - 1]) {
            return f64::INFINITY;
        }
        let (mut lo, mut hi) = (0usize, sorted.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if passes(sorted[mid]) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        sorted[lo]
    }
}

/// Checks, for each `l`, that every window of length `l` of admissible shifts
/// contains one that returns within `eps` in the truncated metric.
pub fn recurrence_test(
    record: &TimeRecord,
    eps: f64,
    l_grid: &[f64],
    n_max: usize,
    dist: impl Fn(&[f64], &[f64]) -> f64 + Sync,
) -> Result<RecurrenceReport> {
    let max_l = l_grid.iter().copied().fold(0.0, f64::max);
    let span = record.end_time() - record.t0;
    if span < 3.0 * max_l {
        return Err(Error::Precondition(format!("record length {span} is shorter than 3 x max l = {}", 3.0 * max_l)));
    }
    Ok(bebutov_profile(record, n_max, dist)?.test(eps, l_grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist2;
    use crate::state::SpaceId;
    use proptest::prelude::*;

    fn record(t0: f64, dt: f64, f: impl Fn(f64) -> Vec<f64>, n: usize) -> TimeRecord {
        let states = (0..n).map(|i| StateVector::new(f(t0 + i as f64 * dt), SpaceId::EUCLIDEAN).unwrap()).collect();
        TimeRecord::new(t0, dt, states).unwrap()
    }

    #[test]
    fn constant_offset_closed_form() {
        for &delta in &[0.0, 0.3, 1.0, 7.5] {
            let u = record(-6.0, 0.1, |_| vec![1.0, 2.0], 121);
            let v = record(-6.0, 0.1, |_| vec![1.0 + delta, 2.0], 121);
            let d = bebutov_distance(&u, &v, 5, dist2).unwrap();
            let expected = (1.0 - 0.5f64.powi(5)) * delta / (1.0 + delta);
            assert!((d.value - expected).abs() < 1e-12);
            assert_eq!(d.truncation_bound, 1.0 / 32.0);
        }
    }

    #[test]
    fn identical_records_are_at_zero_and_coverage_is_checked() {
        let u = record(-5.0, 0.25, |t| vec![t.sin()], 41);
        assert_eq!(bebutov_distance(&u, &u, 5, dist2).unwrap().value, 0.0);
        let short = record(-3.0, 0.25, |t| vec![t.sin()], 25);
        assert!(matches!(bebutov_distance(&u, &short, 5, dist2), Err(Error::Precondition(_))));
    }

    #[test]
    fn periodic_record_recurs_at_its_period() {
        let p = 2.0;
        let dt = 0.05;
        let rec = record(0.0, dt, |t| vec![(std::f64::consts::PI * t).sin(), (std::f64::consts::PI * t).cos()], 4001);
        let rep = recurrence_test(&rec, 1e-6, &[1.0, 1.5, 2.0, 3.0, 10.0], 5, dist2).unwrap();
        assert!(rep.smallest_l.unwrap() <= p + dt);
        assert!(!rep.rows[0].pass);
    }

    #[test]
    fn constant_record_passes_everywhere() {
        let rec = record(0.0, 0.1, |_| vec![3.0], 500);
        let rep = recurrence_test(&rec, 1e-12, &[0.1, 1.0, 10.0], 5, dist2).unwrap();
        assert!(rep.rows.iter().all(|r| r.pass));
        assert_eq!(rep.smallest_l, Some(0.1));
    }

    #[test]
    fn noise_record_fails() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let vals: Vec<f64> = (0..3001).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rec = record(0.0, 0.1, |t| vec![vals[(t / 0.1).round() as usize]], 3001);
        let rep = recurrence_test(&rec, 0.05, &[10.0, 50.0, 100.0], 5, dist2).unwrap();
        assert!(rep.rows.iter().all(|r| !r.pass));
        assert!(matches!(recurrence_test(&rec, 0.05, &[101.0], 5, dist2), Err(Error::Precondition(_))));
    }

    #[test]
    fn defect_is_the_passing_threshold() {
        let dt = 0.05;
        let rec = record(0.0, dt, |t| vec![t.sin(), (2f64.sqrt() * t).sin()], 6000);
        let prof = bebutov_profile(&rec, 5, dist2).unwrap();
        for &l in &[5.0, 20.0, 60.0] {
            let e = prof.defect(l);
            assert!(prof.test(e * (1.0 + 1e-12) + 1e-300, &[l]).rows[0].pass);
            assert!(!prof.test(e, &[l]).rows[0].pass);
        }
    }

    proptest! {
        #[test]
        fn metric_axioms(seed in 0u64..1000) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let mut rand_rec = || {
                let (a, w, ph): (f64, f64, f64) = (rng.random_range(0.0..3.0), rng.random_range(0.0..2.0), rng.random_range(0.0..6.0));
                record(-5.0, 0.1, move |t| vec![a * (w * t + ph).sin(), a * t.cos()], 101)
            };
            let (u, v, w) = (rand_rec(), rand_rec(), rand_rec());
            let d = |a: &TimeRecord, b: &TimeRecord| bebutov_distance(a, b, 5, dist2).unwrap().value;
            prop_assert_eq!(d(&u, &v), d(&v, &u));
            prop_assert!(d(&u, &w) <= d(&u, &v) + d(&v, &w) + 1e-12);
            prop_assert!(d(&u, &v) <= 1.0);
        }
    }
}
