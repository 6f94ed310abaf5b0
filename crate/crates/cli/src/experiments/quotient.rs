//! The collapsed quotient flow on three small examples, each checked
//! against random splits `t = s + (t - s)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiflow::builtin;
use semiflow::flow::evolve;
use semiflow::wazewski::{quotient_continue, quotient_evolve, QuotientState, WazewskiPairSpec};
use semiflow::{FlowModel, Region, StateVector};

use crate::config::{at_least, positive, ConfigError, Params};
use crate::report::RunReport;

pub const KEYS: &[&str] = &["splits", "blow_up_tol"];

#[derive(Debug, Clone)]
pub struct Setup {
    splits: usize,
    blow_up_tol: f64,
}

pub fn configure(p: &mut Params) -> Result<Setup, ConfigError> {
    Ok(Setup {
        splits: p.get("splits", 50, at_least(1))?,
        blow_up_tol: p.get("blow_up_tol", 1e-4, positive)?,
    })
}

struct Example {
    name: &'static str,
    model: FlowModel,
    pair: WazewskiPairSpec,
    x: f64,
    t: f64,
}

fn unit_pair() -> WazewskiPairSpec {
    WazewskiPairSpec::new(Region::boxed(vec![0.0], vec![1.0]), Region::new("u=1", |x| (x[0] - 1.0).abs()), "unit flow")
}

fn examples() -> Vec<Example> {
    vec![
        Example { name: "unit_interior", model: builtin::unit_speed(1), pair: unit_pair(), x: 0.0, t: 0.5 },
        Example { name: "unit_collapse", model: builtin::unit_speed(1), pair: unit_pair(), x: 0.0, t: 1.5 },
        Example {
            name: "blow_up",
            model: builtin::quadratic_blow_up(),
            pair: WazewskiPairSpec::new(Region::new("u<=1e6", |x| x[0] - 1e6), Region::new("u<=0", |x| x[0]), "u'=u^2"),
            x: 1.0,
            t: 2.0,
        },
    ]
}

pub fn run(s: &Setup, seed: u64, report: &mut RunReport) -> semiflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for ex in examples() {
        let x = StateVector::euclidean(&[ex.x]);
        let tol = 10.0 * ex.model.abs_tol;
        let direct = quotient_evolve(&ex.model, &ex.pair, &x, ex.t)?;
        let (mut worst, mut failures, mut drift) = (0.0_f64, 0, 0.0_f64);
        for _ in 0..s.splits {
            let a = rng.random_range(0.0..ex.t);
            let first = quotient_evolve(&ex.model, &ex.pair, &x, a)?;
            let split = quotient_continue(&ex.model, &ex.pair, &first, a, ex.t - a)?;
            match (&direct, &split) {
                (QuotientState::Interior(p), QuotientState::Interior(q)) => {
                    let d = ex.model.distance(p.coords(), q.coords());
                    worst = worst.max(d);
                    failures += usize::from(d > tol);
                }
                (QuotientState::Collapsed { collapse_time: c0 }, QuotientState::Collapsed { collapse_time: c1 }) => {
                    drift = drift.max((c0 - c1).abs());
                    // absorbing: continuing a collapsed state changes nothing
                    if first.is_collapsed() && split != first {
                        failures += 1;
                    }
                    let later = quotient_continue(&ex.model, &ex.pair, &split, ex.t, 10.0)?;
                    failures += usize::from(later != split);
                }
                _ => failures += 1,
            }
        }
        report.check(
            &format!("quotient_semigroup.{}", ex.name),
            failures == 0,
            tol - worst,
            format!(
                "{} splits of t = {}, worst interior deviation {worst:e}, collapse-time spread {drift:e}",
                s.splits, ex.t
            ),
        );
    }

    let ex = examples();
    let at = |i: usize| -> semiflow::Result<QuotientState> {
        quotient_evolve(&ex[i].model, &ex[i].pair, &StateVector::euclidean(&[ex[i].x]), ex[i].t)
    };
    let interior = match at(0)? {
        QuotientState::Interior(y) => (y[0] - 0.5).abs(),
        QuotientState::Collapsed { .. } => f64::INFINITY,
    };
    report.check("unit_interior", interior <= 1e-8, 1e-8 - interior, format!("G(0.5)0 differs from 0.5 by {interior:e}"));
    let collapse = match at(1)? {
        QuotientState::Collapsed { collapse_time } => (collapse_time - 1.0).abs(),
        QuotientState::Interior(_) => f64::INFINITY,
    };
    report.check("unit_collapse", collapse <= 1e-8, 1e-8 - collapse, format!("collapse time off by {collapse:e}"));
    let err = match at(2)? {
        QuotientState::Collapsed { collapse_time } => {
            report.value("blow_up.collapse_time", collapse_time);
            (collapse_time - 1.0).abs()
        }
        QuotientState::Interior(_) => f64::INFINITY,
    };
    report.check(
        "blow_up_collapse",
        err <= s.blow_up_tol,
        s.blow_up_tol - err,
        format!("collapse time differs from 1 by {err:e}"),
    );
    report.write_trajectory("trajectory.csv", &evolve(&ex[2].model, &StateVector::euclidean(&[1.0]), 2.0)?)?;
    Ok(())
}
