//! Radial elliptic model: positive solution by mountain pass, energy
//! identity, dissipativity and stability at infinity on the energy band.

use std::fmt;
use std::sync::Arc;

use semiflow::csv::Cell;
use semiflow::elliptic::{
    bump_direction_sampler, dissipativity_check, energy_identity_check, positive_solution_search, validate_conditions,
    EllipticModel, EllipticSpec, EnergyBand, Potential, SearchOptions, Weight,
};
use semiflow::flow::evolve_sampled;
use semiflow::linking::{minimax_csv_rows, MINIMAX_CSV_HEADER};
use semiflow::wazewski::{stability_at_infinity_probe, StabilityProbeSpec, STABILITY_CSV_HEADER};
use semiflow::Trajectory;

use crate::config::{any, at_least, increasing_positive, parse_list, positive, ConfigError, Params};
use crate::report::RunReport;

pub const KEYS: &[&str] = &[
    "n",
    "R_max",
    "grid_points",
    "a",
    "gamma",
    "b",
    "omega_radius",
    "trial_count",
    "path_nodes",
    "path_gap",
    "deform_dt",
    "max_iterations",
    "residual_tol",
    "energy_amplitude",
    "energy_horizon",
    "energy_dt",
    "energy_tol",
    "dissipativity_tol",
    "probe",
    "inner_radii",
    "start_radii",
    "samples_per_radius",
    "probe_horizon",
    "probe_centre_max",
];

/// `const:a0` or `dip:base,depth,width`.
struct PotentialText(Potential);

impl fmt::Display for PotentialText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Potential::Constant(a) => write!(f, "const:{a:?}"),
            Potential::Dip { base, depth, width } => write!(f, "dip:{base:?},{depth:?},{width:?}"),
        }
    }
}

fn parse_potential(s: &str) -> Result<PotentialText, String> {
    let (kind, args) = s.split_once(':').ok_or_else(|| format!("expected const:<a> or dip:<base>,<depth>,<width>, got '{s}'"))?;
    let v = parse_list(args)?;
    match (kind.trim(), v.as_slice()) {
        ("const", &[a]) => Ok(PotentialText(Potential::Constant(a))),
        ("dip", &[base, depth, width]) if width > 0.0 => Ok(PotentialText(Potential::Dip { base, depth, width })),
        _ => Err(format!("malformed potential '{s}'")),
    }
}

/// `zero` or `gaussian:amplitude,width`.
struct WeightText(Weight);

impl fmt::Display for WeightText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.0 {
            Weight::Zero => f.write_str("zero"),
            Weight::Gaussian { amplitude, width } => write!(f, "gaussian:{amplitude:?},{width:?}"),
        }
    }
}

fn parse_weight(s: &str) -> Result<WeightText, String> {
    if s == "zero" {
        return Ok(WeightText(Weight::Zero));
    }
    let malformed = || format!("expected zero or gaussian:<amplitude>,<width>, got '{s}'");
    let (kind, args) = s.split_once(':').ok_or_else(malformed)?;
    match (kind.trim(), parse_list(args)?.as_slice()) {
        ("gaussian", &[amplitude, width]) if amplitude >= 0.0 && width > 0.0 => {
            Ok(WeightText(Weight::Gaussian { amplitude, width }))
        }
        _ => Err(malformed()),
    }
}

#[derive(Debug, Clone)]
pub struct Setup {
    spec: EllipticSpec,
    search: SearchOptions,
    energy_amplitude: f64,
    energy_horizon: f64,
    energy_dt: f64,
    energy_tol: f64,
    dissipativity_tol: f64,
    probe: bool,
    probe_spec: StabilityProbeSpec,
    probe_centre_max: f64,
}

pub fn configure(p: &mut Params) -> Result<Setup, ConfigError> {
    let d = EllipticSpec::default();
    let spec = EllipticSpec {
        n: p.get("n", d.n, at_least(1))?,
        r_max: p.get("R_max", d.r_max, positive)?,
        grid_points: p.get("grid_points", d.grid_points, at_least(10))?,
        a: p.get_with("a", PotentialText(d.a), parse_potential, any)?.0,
        gamma: p.get("gamma", d.gamma, positive)?,
        b: p.get_with("b", WeightText(d.b), parse_weight, any)?.0,
        omega_radius: p.get("omega_radius", d.omega_radius, positive)?,
    };
    if spec.omega_radius >= spec.r_max {
        return Err(ConfigError::key("omega_radius", None, "must be smaller than R_max"));
    }
    let ds = SearchOptions::default();
    let search = SearchOptions {
        trial_count: p.get("trial_count", ds.trial_count, at_least(1))?,
        path_nodes: p.get("path_nodes", ds.path_nodes, at_least(3))?,
        path_gap: p.get("path_gap", ds.path_gap, positive)?,
        deform_dt: p.get("deform_dt", ds.deform_dt, positive)?,
        max_iterations: p.get("max_iterations", ds.max_iterations, at_least(1))?,
        residual_tol: p.get("residual_tol", ds.residual_tol, positive)?,
        ..ds
    };
    Ok(Setup {
        spec,
        search,
        energy_amplitude: p.get("energy_amplitude", 2.0, positive)?,
        energy_horizon: p.get("energy_horizon", 1.0, positive)?,
        energy_dt: p.get("energy_dt", 1e-3, positive)?,
        energy_tol: p.get("energy_tol", 1e-2, positive)?,
        dissipativity_tol: p.get("dissipativity_tol", 1e-6, positive)?,
        probe: p.get("probe", true, any)?,
        probe_spec: StabilityProbeSpec {
            inner_radii: p.get_list("inner_radii", vec![1.0, 2.0, 4.0, 8.0], increasing_positive)?,
            start_radii: p.get_list("start_radii", vec![2.0, 4.0, 8.0, 16.0, 32.0], increasing_positive)?,
            samples_per_radius: p.get("samples_per_radius", 16, at_least(1))?,
            horizon: p.get("probe_horizon", 20.0, positive)?,
            seed: 0,
        },
        probe_centre_max: p.get("probe_centre_max", 4.0, positive)?,
    })
}

pub fn run(s: &Setup, seed: u64, report: &mut RunReport) -> semiflow::Result<()> {
    let model = Arc::new(EllipticModel::new(s.spec.clone())?);
    let s_grid: Vec<f64> = (-100..=100).map(|i| i as f64 * 0.37).collect();
    match validate_conditions(&model, &s_grid, model.nodes()) {
        Ok(rep) => report.check("structural_conditions", true, rep.rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min), {
            let names: Vec<&str> = rep.rows.iter().map(|r| r.name).collect();
            format!("sampled {}", names.join(", "))
        }),
        Err(semiflow::Error::Rejected(msg)) => {
            report.check("structural_conditions", false, -1.0, msg);
            return Ok(());
        }
        Err(e) => return Err(e),
    }

    let opts = SearchOptions { seed, ..s.search.clone() };
    let sol = positive_solution_search(&model, &opts)?;
    let u = sol.u_star.coords();
    let min_u = u.iter().copied().fold(f64::INFINITY, f64::min);
    let norm = model.v_norm(u);
    report.value("u_star.at_origin", u[0]);
    report.value("u_star.norm", norm);
    report.value("J", sol.j_value);
    report.value("c", sol.c);
    report.value("beta", sol.beta);
    report.value("rho", sol.radius.rho);
    report.value("residual", format!("{:e}", sol.residual));
    report.value("path_nodes", sol.path_nodes);
    report.value("iterations", sol.records.len() - 1);
    report.check(
        "positive_solution",
        min_u >= 0.0 && norm > 0.0,
        min_u.min(norm),
        format!("min u* = {min_u:e}, norm {norm:.6}"),
    );
    report.check(
        "stationary_residual",
        sol.residual <= s.search.residual_tol,
        s.search.residual_tol - sol.residual,
        format!("residual {:e} after {} Newton steps", sol.residual, sol.newton_iterations),
    );
    let (lo, hi) = (sol.beta - 1e-3, sol.c + 1e-3);
    report.check(
        "energy_level",
        lo <= sol.j_value && sol.j_value <= hi,
        (sol.j_value - lo).min(hi - sol.j_value),
        format!("J(u*) = {:.6} in [{lo:.6}, {hi:.6}]", sol.j_value),
    );
    report.write_csv("profile.csv", &["r", "u"], &sol.profile_rows(&model))?;
    report.write_csv("minimax.csv", &MINIMAX_CSV_HEADER, &minimax_csv_rows(&sol.records))?;

    // Energy identity on a smooth transient, at dt and dt/2.
    let amp = s.energy_amplitude;
    let u0 = model.sample(|r| amp * (-r * r / 2.0).exp());
    let fm = model.flow_model().with_tolerances(1e-12, 1e-12);
    let coarse = evolve_sampled(&fm, 0.0, &u0, s.energy_horizon, s.energy_dt)?;
    let fine = evolve_sampled(&fm, 0.0, &u0, s.energy_horizon, s.energy_dt / 2.0)?;
    let e1 = energy_identity_check(&model, &coarse, s.energy_tol)?;
    let e2 = energy_identity_check(&model, &fine, s.energy_tol)?;
    let order = (e1.relative_error / e2.relative_error).log2();
    report.value("energy.relative_error", format!("{:e}", e1.relative_error));
    report.value("energy.relative_error_half_step", format!("{:e}", e2.relative_error));
    report.check(
        "energy_identity",
        e1.pass,
        s.energy_tol - e1.relative_error,
        format!("relative error {:e} at dt = {}", e1.relative_error, s.energy_dt),
    );
    report.check("energy_order", order >= 1.0, order - 1.0, format!("observed order {order:.3} under dt halving"));
    write_energy(report, &model, &coarse)?;

    let c = sol.c;
    let mut checked = 0;
    let mut worst = f64::INFINITY;
    let mut bad = 0;
    for tr in [&coarse, &fine] {
        let d = dissipativity_check(&model, tr, c, s.dissipativity_tol)?;
        checked += d.checked;
        worst = worst.min(d.min_slack.min(d.min_far_slack));
        bad += usize::from(!d.passed());
    }
    report.check(
        "dissipativity",
        bad == 0 && checked > 0,
        worst + s.dissipativity_tol,
        format!("{checked} samples in the band |J| <= {c:.4}, smallest scaled slack {worst:e}"),
    );

    if s.probe {
        let band = EnergyBand::new(-c, c)?;
        let region = band.region(&model);
        let probe = StabilityProbeSpec { seed, ..s.probe_spec.clone() };
        let dir = bump_direction_sampler(&model, s.probe_centre_max);
        let table = stability_at_infinity_probe(&model.flow_model(), &region, &probe, &dir)?;
        let found = table.rows.iter().filter(|r| r.big_r.is_some()).count();
        report.check(
            "stability_table",
            table.is_monotone() && found > 0,
            found as f64,
            format!("{} of {} radii have a sufficient R, monotone: {}", found, table.rows.len(), table.is_monotone()),
        );
        report.write_csv("stability.csv", &STABILITY_CSV_HEADER, &table.csv_rows())?;
    }
    Ok(())
}

fn write_energy(report: &mut RunReport, model: &EllipticModel, tr: &Trajectory) -> semiflow::Result<()> {
    let rows: Vec<Vec<Cell>> = tr
        .iter()
        .map(|(t, u)| vec![Cell::from(t), Cell::from(model.j_eval(u.coords())), Cell::from(model.residual_norm(u.coords()).powi(2))])
        .collect();
    report.write_csv("energy.csv", &["t", "J", "dissipation"], &rows)?;
    Ok(())
}
