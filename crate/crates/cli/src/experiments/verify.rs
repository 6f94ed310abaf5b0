//! Built-in self-checks: semigroup law, Hopf limit cycle, quotient flow,
//! spectral projections and the Bebutov metric.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiflow::builtin;
use semiflow::flow::{check_semigroup, evolve, omega_limit, SemigroupCheck};
use semiflow::resonant::{bebutov_distance, Nonlinearity, Sector, SpectralModel, TimeRecord};
use semiflow::wazewski::{quotient_continue, quotient_evolve, QuotientState, WazewskiPairSpec};
use semiflow::{Region, SpaceId, StateVector};

use crate::config::{at_least, positive, ConfigError, Params};
use crate::report::RunReport;

pub const KEYS: &[&str] = &["triples", "time_max", "hopf_cluster_tol", "hopf_tol", "metric_triples", "n_max"];

#[derive(Debug, Clone)]
pub struct Setup {
    triples: usize,
    time_max: f64,
    hopf_cluster_tol: f64,
    hopf_tol: f64,
    metric_triples: usize,
    n_max: usize,
}

pub fn configure(p: &mut Params) -> Result<Setup, ConfigError> {
    Ok(Setup {
        triples: p.get("triples", 100, at_least(1))?,
        time_max: p.get("time_max", 2.0, positive)?,
        hopf_cluster_tol: p.get("hopf_cluster_tol", 2e-3, positive)?,
        hopf_tol: p.get("hopf_tol", 5e-3, positive)?,
        metric_triples: p.get("metric_triples", 1000, at_least(1))?,
        n_max: p.get("n_max", 5, at_least(1))?,
    })
}

pub fn run(s: &Setup, seed: u64, report: &mut RunReport) -> semiflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    semigroup(s, &mut rng, report)?;
    hopf(s, report)?;
    quotient(s, &mut rng, report)?;
    projections(&mut rng, report)?;
    metric(s, &mut rng, report)?;
    Ok(())
}

fn semigroup(s: &Setup, rng: &mut ChaCha8Rng, report: &mut RunReport) -> semiflow::Result<()> {
    let models = builtin::catalogue();
    let (mut checked, mut skipped, mut worst, mut margin) = (0, 0, 0.0_f64, f64::INFINITY);
    let mut failures = Vec::new();
    for _ in 0..s.triples {
        let (name, model) = &models[rng.random_range(0..models.len())];
        let x: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let (a, b) = (rng.random_range(0.0..s.time_max), rng.random_range(0.0..s.time_max));
        let tol = 10.0 * model.abs_tol;
        match check_semigroup(model, &StateVector::euclidean(&x), a, b, tol)? {
            SemigroupCheck::Checked { deviation, pass } => {
                checked += 1;
                worst = worst.max(deviation);
                margin = margin.min(tol - deviation);
                if !pass {
                    failures.push(format!("{name} at {x:?}"));
                }
            }
            SemigroupCheck::Inapplicable { .. } => skipped += 1,
        }
    }
    report.value("semigroup.worst_deviation", format!("{worst:e}"));
    report.check(
        "semigroup",
        failures.is_empty() && checked > 0,
        margin,
        format!("{checked} triples checked, {skipped} blew up first, failures: {}", failures.len()),
    );
    Ok(())
}

fn hopf(s: &Setup, report: &mut RunReport) -> semiflow::Result<()> {
    let m = builtin::hopf();
    let start = StateVector::euclidean(&[0.5, 0.0]);
    let est = omega_limit(&m, &start, 25.0, 2.0 * PI + 1.0, s.hopf_cluster_tol)?;
    let off = est.points.iter().map(|p| (p.euclidean_norm() - 1.0).abs()).fold(0.0, f64::max);
    let probes = (4.0 * PI / s.hopf_cluster_tol).ceil() as usize;
    let uncovered = (0..probes)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / probes as f64;
            est.distance(&m, &[a.cos(), a.sin()])
        })
        .fold(0.0, f64::max);
    let hausdorff = off.max(uncovered);
    report.value("hopf.hausdorff", format!("{hausdorff:e}"));
    report.check(
        "hopf_omega_limit",
        hausdorff <= s.hopf_tol,
        s.hopf_tol - hausdorff,
        format!("{} representatives, Hausdorff distance to the unit circle {hausdorff:e}", est.points.len()),
    );
    report.write_trajectory("trajectory.csv", &evolve(&m, &start, 10.0)?)?;
    Ok(())
}

fn unit_pair() -> WazewskiPairSpec {
    WazewskiPairSpec::new(Region::boxed(vec![0.0], vec![1.0]), Region::new("u=1", |x| (x[0] - 1.0).abs()), "unit flow on [0,1]")
}

fn quotient(s: &Setup, rng: &mut ChaCha8Rng, report: &mut RunReport) -> semiflow::Result<()> {
    let m = builtin::unit_speed(1);
    let pair = unit_pair();
    let tol = 10.0 * m.abs_tol;
    let (mut worst, mut failures) = (0.0_f64, 0);
    for _ in 0..s.triples {
        let x = StateVector::euclidean(&[rng.random_range(0.0..0.99)]);
        let (a, b) = (rng.random_range(0.0..s.time_max), rng.random_range(0.0..s.time_max));
        let direct = quotient_evolve(&m, &pair, &x, a + b)?;
        let first = quotient_evolve(&m, &pair, &x, a)?;
        let split = quotient_continue(&m, &pair, &first, a, b)?;
        match (&direct, &split) {
            (QuotientState::Interior(p), QuotientState::Interior(q)) => {
                let d = m.distance(p.coords(), q.coords());
                worst = worst.max(d);
                failures += usize::from(d > tol);
            }
            (QuotientState::Collapsed { .. }, QuotientState::Collapsed { .. }) => {
                if first.is_collapsed() && split != first {
                    failures += 1;
                }
            }
            _ => failures += 1,
        }
    }
    report.check(
        "quotient_semigroup",
        failures == 0,
        tol - worst,
        format!("{} triples, worst interior deviation {worst:e}, failures {failures}", s.triples),
    );
    Ok(())
}

fn projections(rng: &mut ChaCha8Rng, report: &mut RunReport) -> semiflow::Result<()> {
    let model = SpectralModel::new(16, 4.0, Nonlinearity::TwoArctan)?;
    let sectors = [Sector::Minus, Sector::Zero, Sector::Plus];
    let mut failures = 0;
    for _ in 0..100 {
        let u = model.state((0..16).map(|_| rng.random_range(-3.0..3.0)).collect())?;
        let mut sum = vec![0.0; 16];
        for &a in &sectors {
            let pa = model.project(&u, a);
            failures += usize::from(model.project(&pa, a) != pa);
            for &b in sectors.iter().filter(|&&b| b != a) {
                failures += usize::from(model.project(&pa, b).coords().iter().any(|&v| v != 0.0));
            }
            sum.iter_mut().zip(pa.coords()).for_each(|(s, v)| *s += v);
        }
        failures += usize::from(sum.as_slice() != u.coords());
    }
    report.check("projections", failures == 0, -(failures as f64), format!("100 states, {failures} identity failures"));
    Ok(())
}

fn metric(s: &Setup, rng: &mut ChaCha8Rng, report: &mut RunReport) -> semiflow::Result<()> {
    let reach = s.n_max as f64 + 1.0;
    let dt = 0.1;
    let n = (2.0 * reach / dt).round() as usize + 1;
    let random_record = |rng: &mut ChaCha8Rng| -> semiflow::Result<TimeRecord> {
        let (a, w, ph): (f64, f64, f64) = (rng.random_range(0.0..3.0), rng.random_range(0.0..2.0), rng.random_range(0.0..6.0));
        let states = (0..n)
            .map(|i| {
                let t = -reach + i as f64 * dt;
                StateVector::new(vec![a * (w * t + ph).sin(), a * t.cos()], SpaceId::EUCLIDEAN)
            })
            .collect::<semiflow::Result<_>>()?;
        TimeRecord::new(-reach, dt, states)
    };
    let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let (mut asym, mut tri) = (0.0_f64, f64::NEG_INFINITY);
    for _ in 0..s.metric_triples {
        let (u, v, w) = (random_record(rng)?, random_record(rng)?, random_record(rng)?);
        let d = |a: &TimeRecord, b: &TimeRecord| bebutov_distance(a, b, s.n_max, dist).map(|d| d.value);
        let (uv, vu, uw, vw) = (d(&u, &v)?, d(&v, &u)?, d(&u, &w)?, d(&v, &w)?);
        asym = asym.max((uv - vu).abs());
        tri = tri.max(uw - uv - vw);
    }
    report.check("metric_symmetry", asym == 0.0, -asym, format!("{} triples, largest asymmetry {asym:e}", s.metric_triples));
    report.check(
        "metric_triangle",
        tri <= 1e-12,
        1e-12 - tri,
        format!("largest triangle excess {tri:e}"),
    );
    let mut worst = 0.0_f64;
    for &delta in &[0.0, 0.3, 1.0, 7.5] {
        let base = random_record(rng)?;
        let offset = TimeRecord::new(
            base.t0,
            base.dt,
            base.states
                .iter()
                .map(|x| StateVector::new(vec![x[0] + delta, x[1]], SpaceId::EUCLIDEAN))
                .collect::<semiflow::Result<_>>()?,
        )?;
        let got = bebutov_distance(&base, &offset, s.n_max, dist)?.value;
        let expected = (1.0 - 0.5f64.powi(s.n_max as i32)) * delta / (1.0 + delta);
        worst = worst.max((got - expected).abs());
    }
    report.check("metric_closed_form", worst <= 1e-12, 1e-12 - worst, format!("constant offsets, largest error {worst:e}"));
    Ok(())
}
