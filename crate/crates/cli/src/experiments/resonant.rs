//! Resonant Galerkin model: sign conditions, forward invariance of
//! `N_{c,ρ}` and a bounded recurrent record.

use std::f64::consts::SQRT_2;
use std::sync::Arc;

use semiflow::csv::Cell;
use semiflow::flow::Trajectory;
use semiflow::resonant::{
    bounded_solution_search, invariance_thresholds, invariant_region_check, kappa_bound_check,
    landesman_lazer_margins, sample_seeds, ForcingSignal, Nonlinearity, Profile, SpectralModel, SweepOptions,
    RECURRENCE_CSV_HEADER,
};
use semiflow::TrajectoryStatus;

use crate::config::{any, at_least, increasing_positive, nonnegative, positive, ConfigError, Params};
use crate::report::RunReport;

pub const KEYS: &[&str] = &[
    "modes",
    "mu",
    "f",
    "g.frequencies",
    "g.amplitudes",
    "g.profile",
    "c",
    "rho",
    "horizon",
    "seeds",
    "tol",
    "threshold_samples",
    "search",
    "search_seeds",
    "transient",
    "record_horizon",
    "eps",
    "l_grid",
    "n_max",
    "step",
    "trajectory_stride",
];

#[derive(Debug, Clone)]
pub struct Setup {
    modes: usize,
    mu: f64,
    f: Nonlinearity,
    forcing: ForcingSignal,
    c: f64,
    rho: f64,
    horizon: f64,
    seeds: usize,
    tol: f64,
    threshold_samples: usize,
    search: bool,
    search_seeds: usize,
    transient: f64,
    record_horizon: f64,
    sweep: SweepOptions,
    trajectory_stride: usize,
}

pub fn configure(p: &mut Params) -> Result<Setup, ConfigError> {
    let modes = p.get("modes", 16, at_least(2))?;
    let mu = p.get("mu", 4.0, nonnegative)?;
    let f = p.get("f", Nonlinearity::TwoArctan, any)?;
    let frequencies = p.get_list("g.frequencies", vec![1.0, SQRT_2], |v| {
        if v.iter().all(|x| x.is_finite()) { Ok(()) } else { Err("frequencies must be finite".into()) }
    })?;
    let amplitudes = p.get_list("g.amplitudes", vec![0.25, 0.25], |v| {
        if v.iter().all(|x| x.is_finite()) { Ok(()) } else { Err("amplitudes must be finite".into()) }
    })?;
    let profile = p.get("g.profile", Profile::Sine, any)?;
    let forcing = ForcingSignal::quasiperiodic(frequencies, amplitudes, profile)
        .map_err(|e| ConfigError::key("g.amplitudes", None, e.to_string()))?;
    let defaults = SweepOptions::default();
    let sweep = SweepOptions {
        eps: p.get("eps", defaults.eps, positive)?,
        l_grid: p.get_list("l_grid", defaults.l_grid.clone(), increasing_positive)?,
        n_max: p.get("n_max", defaults.n_max, at_least(1))?,
        step: p.get("step", defaults.step, positive)?,
        ..defaults
    };
    let setup = Setup {
        modes,
        mu,
        f,
        forcing,
        c: p.get("c", 40.0, positive)?,
        rho: p.get("rho", 5.0, positive)?,
        horizon: p.get("horizon", 100.0, positive)?,
        seeds: p.get("seeds", 200, at_least(1))?,
        tol: p.get("tol", 1e-6, positive)?,
        threshold_samples: p.get("threshold_samples", 20_000, at_least(1))?,
        search: p.get("search", true, any)?,
        search_seeds: p.get("search_seeds", 3, at_least(1))?,
        transient: p.get("transient", 1e3, nonnegative)?,
        record_horizon: p.get("record_horizon", 1e4, positive)?,
        sweep,
        trajectory_stride: p.get("trajectory_stride", 20, at_least(1))?,
    };
    let max_l = setup.sweep.l_grid.iter().copied().fold(setup.sweep.reference_l, f64::max);
    if setup.search && setup.record_horizon < 3.0 * max_l {
        return Err(ConfigError::key("record_horizon", None, format!("must be at least 3 x max l = {}", 3.0 * max_l)));
    }
    Ok(setup)
}

pub fn run(s: &Setup, seed: u64, report: &mut RunReport) -> semiflow::Result<()> {
    let model = Arc::new(SpectralModel::new(s.modes, s.mu, s.f)?);
    let forcing = &s.forcing;

    let ll = landesman_lazer_margins(&model, forcing);
    let (m1, m2) = match &ll {
        Ok(m) => *m,
        Err(_) => {
            let f = model.nonlinearity();
            (f.f_bar() + forcing.inf_g, f.f_under() - forcing.sup_g)
        }
    };
    report.check(
        "sign_conditions",
        ll.is_ok(),
        m1.min(m2),
        format!("f_bar + inf g = {m1:.6}, f_under - sup g = {m2:.6}"),
    );
    if ll.is_err() {
        return Ok(());
    }
    let grid: Vec<f64> = (0..=200_000).map(|i| -1000.0 + i as f64 * 0.01).collect();
    let kappa = kappa_bound_check(model.nonlinearity(), &grid)?;
    report.check(
        "primitive_lower_bound",
        kappa.pass,
        kappa.min_slack,
        format!("kappa = {:.6}, c0 = {:.6}, verified at {} points", kappa.kappa, kappa.c0, kappa.verify_points),
    );

    let th = invariance_thresholds(&model, forcing, s.threshold_samples, seed)?;
    report.value("lambda", th.lambda);
    report.value("rho1", th.rho1);
    report.value("c1", th.c1);
    report.value("c1_bound", th.c1_bound);
    let level_ok = s.c > th.c1 && s.rho > th.rho1;
    report.check(
        "region_parameters",
        level_ok,
        (s.c - th.c1).min(s.rho - th.rho1),
        format!("c = {} against c1 = {:.4}, rho = {} against rho1 = {:.4}", s.c, th.c1, s.rho, th.rho1),
    );
    if !level_ok {
        return Ok(());
    }

    let seeds = sample_seeds(&model, s.c, s.rho, s.seeds, seed)?;
    let inv = invariant_region_check(&model, forcing, &th, s.c, s.rho, &seeds, s.horizon, s.tol)?;
    report.value("escaped_to_infinity", inv.escaped_to_infinity);
    report.check(
        "invariance",
        inv.max_level_excess <= s.tol && inv.max_plus_excess <= s.tol,
        s.tol - inv.max_level_excess.max(inv.max_plus_excess),
        format!(
            "{} seeds over horizon {}, worst level excess {:e}, worst plus-norm excess {:e}",
            inv.samples, s.horizon, inv.max_level_excess, inv.max_plus_excess
        ),
    );
    report.check(
        "decay_envelope",
        inv.max_envelope_excess <= s.tol,
        s.tol - inv.max_envelope_excess,
        format!("worst envelope excess {:e}", inv.max_envelope_excess),
    );
    if let Some(v) = inv.violations.first() {
        report.value("violation", format!("seed {} {:?} at t = {} (excess {:e})", v.seed, v.kind, v.time, v.excess));
        report.write_trajectory("violation_trajectory.csv", &v.trajectory)?;
    }

    if !s.search {
        return Ok(());
    }
    let search_seeds = &seeds[..s.search_seeds.min(seeds.len())];
    let found = bounded_solution_search(&model, forcing, search_seeds, s.transient, s.record_horizon, &s.sweep)?;
    let best = &found.best;
    report.value("record.sup_norm", best.sup_norm);
    report.value("record.j_min", best.j_min);
    report.value("record.j_max", best.j_max);
    report.value("record.shadow_defect", format!("{:e}", best.shadow_defect));
    let bounded = best.sup_norm.is_finite() && best.j_min >= -s.c && best.j_max <= s.c;
    report.check(
        "bounded_record",
        bounded,
        s.c - best.j_max.abs().max(best.j_min.abs()),
        format!("sup norm {:.6}, J in [{:.6}, {:.6}]", best.sup_norm, best.j_min, best.j_max),
    );
    let rec = &best.recurrence;
    report.check(
        "recurrence",
        rec.passed(),
        s.sweep.eps - best.defect,
        match rec.smallest_l {
            Some(l) => format!("passes at eps = {} with l = {l}", s.sweep.eps),
            None => format!("no tested l passes at eps = {}", s.sweep.eps),
        },
    );
    let header: Vec<&str> = RECURRENCE_CSV_HEADER.split(',').collect();
    report.write_csv("recurrence.csv", &header, &rec.csv_rows())?;

    let stride = s.trajectory_stride;
    let record = &best.record;
    let picked: Vec<usize> = (0..record.len()).step_by(stride).collect();
    let traj = Trajectory {
        start_time: record.t0,
        times: picked.iter().map(|&i| i as f64 * record.dt).collect(),
        states: picked.iter().map(|&i| record.states[i].clone()).collect(),
        status: TrajectoryStatus::Completed,
    };
    report.write_trajectory("trajectory.csv", &traj)?;
    let defects: Vec<Vec<Cell>> = found.defects.iter().map(|&(i, d)| vec![Cell::from(i), Cell::from(d)]).collect();
    report.write_csv("seed_defects.csv", &["seed", "defect"], &defects)?;
    Ok(())
}
