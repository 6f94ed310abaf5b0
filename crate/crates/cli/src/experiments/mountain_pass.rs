//! Minimax by path deformation on the two analytic test landscapes.

use std::f64::consts::PI;

use semiflow::builtin;
use semiflow::csv::Cell;
use semiflow::linking::{invariant_candidates, minimax_csv_rows, minimax_estimate, DiscretePath, MINIMAX_CSV_HEADER};
use semiflow::{FlowModel, StateVector};

use crate::config::{any, at_least, finite, nonnegative, positive, ConfigError, Params};
use crate::report::RunReport;

pub const KEYS: &[&str] = &[
    "model",
    "nodes",
    "bulge",
    "max_gap",
    "dt",
    "max_iters",
    "stall_tol",
    "tol",
    "band",
    "residual_tol",
    "candidate_radius",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Landscape {
    DoubleWell,
    QuarticSaddle,
}

impl std::str::FromStr for Landscape {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "double-well" => Ok(Landscape::DoubleWell),
            "quartic-saddle" => Ok(Landscape::QuarticSaddle),
            other => Err(format!("unknown model '{other}' (expected double-well or quartic-saddle)")),
        }
    }
}

impl std::fmt::Display for Landscape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Landscape::DoubleWell => "double-well",
            Landscape::QuarticSaddle => "quartic-saddle",
        })
    }
}

#[derive(Debug, Clone)]
pub struct Setup {
    landscape: Landscape,
    nodes: usize,
    bulge: f64,
    max_gap: f64,
    dt: f64,
    max_iters: usize,
    stall_tol: f64,
    tol: f64,
    band: f64,
    residual_tol: f64,
    candidate_radius: f64,
}

pub fn configure(p: &mut Params) -> Result<Setup, ConfigError> {
    Ok(Setup {
        landscape: p.get("model", Landscape::DoubleWell, any)?,
        nodes: p.get("nodes", 20, at_least(3))?,
        bulge: p.get("bulge", 0.5, finite)?,
        max_gap: p.get("max_gap", 0.02, positive)?,
        dt: p.get("dt", 0.05, positive)?,
        max_iters: p.get("max_iters", 500, at_least(1))?,
        stall_tol: p.get("stall_tol", 1e-9, nonnegative)?,
        tol: p.get("tol", 1e-3, positive)?,
        band: p.get("band", 1e-3, positive)?,
        residual_tol: p.get("residual_tol", 1e-3, positive)?,
        candidate_radius: p.get("candidate_radius", 1e-2, positive)?,
    })
}

struct Problem {
    model: FlowModel,
    phi: fn(&StateVector) -> f64,
    path: DiscretePath,
    saddle: Vec<f64>,
    saddle_value: f64,
}

fn double_well_phi(s: &StateVector) -> f64 {
    builtin::double_well_energy(s[0])
}

fn quartic_phi(s: &StateVector) -> f64 {
    builtin::quartic_saddle_energy(s.coords())
}

fn problem(s: &Setup) -> semiflow::Result<Problem> {
    Ok(match s.landscape {
        Landscape::DoubleWell => Problem {
            model: builtin::double_well(),
            phi: double_well_phi,
            path: DiscretePath::segment(&StateVector::euclidean(&[-1.0]), &StateVector::euclidean(&[1.0]), s.nodes, s.max_gap)?,
            saddle: vec![0.0],
            saddle_value: 1.0,
        },
        Landscape::QuarticSaddle => {
            let a = 0.5f64.sqrt();
            let n = s.nodes;
            let nodes = (0..n)
                .map(|k| {
                    let t = k as f64 / (n - 1) as f64;
                    StateVector::euclidean(&[-a + 2.0 * a * t, s.bulge * (PI * t).sin()])
                })
                .collect();
            let mut pinned = vec![false; n];
            pinned[0] = true;
            pinned[n - 1] = true;
            Problem {
                model: builtin::quartic_saddle(),
                phi: quartic_phi,
                path: DiscretePath::new(nodes, pinned, s.max_gap)?,
                saddle: vec![0.0, 0.0],
                saddle_value: 0.0,
            }
        }
    })
}

pub fn run(s: &Setup, _seed: u64, report: &mut RunReport) -> semiflow::Result<()> {
    let pb = problem(s)?;
    let out = minimax_estimate(&pb.model, &pb.phi, &pb.path, s.max_iters, s.dt, s.stall_tol)?;
    let iterations = out.records.len() - 1;
    report.value("c", format!("{:.6}", out.c));
    report.value("iterations", iterations);
    report.value("termination", format!("{:?}", out.termination));
    report.value("final_nodes", out.final_path.len());
    let err = (out.c - pb.saddle_value).abs();
    report.check(
        "minimax_value",
        err <= s.tol,
        s.tol - err,
        format!("c = {:.6} against saddle value {} after {iterations} iterations", out.c, pb.saddle_value),
    );
    let cands = invariant_candidates(&pb.model, &pb.phi, &out.final_path, out.c, s.band, s.residual_tol);
    let nearest = cands
        .iter()
        .map(|(x, _)| pb.model.distance(x.coords(), &pb.saddle))
        .fold(f64::INFINITY, f64::min);
    report.value("candidates", cands.len());
    report.check(
        "invariant_candidate",
        nearest <= s.candidate_radius,
        s.candidate_radius - nearest,
        format!("{} candidates, nearest at distance {nearest:e} from the saddle", cands.len()),
    );
    report.write_csv("minimax.csv", &MINIMAX_CSV_HEADER, &minimax_csv_rows(&out.records))?;
    let dim = pb.model.dim();
    let mut header = vec!["node".to_string()];
    header.extend((0..dim).map(|i| format!("c{i}")));
    header.push("phi".to_string());
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows: Vec<Vec<Cell>> = out
        .final_path
        .nodes
        .iter()
        .enumerate()
        .map(|(i, x)| {
            let mut row = vec![Cell::from(i)];
            row.extend(x.coords().iter().map(|&v| Cell::from(v)));
            row.push(Cell::from((pb.phi)(x)));
            row
        })
        .collect();
    report.write_csv("path.csv", &header, &rows)?;
    Ok(())
}
