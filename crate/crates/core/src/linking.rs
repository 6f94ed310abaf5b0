//! Flow deformation of discrete paths and minimax level estimation.
//!
//! A [`DiscretePath`] stands for a curve `h(Q)`; its pinned nodes play the
//! role of the fixed set `S`. Deforming the unpinned nodes by the flow of a
//! gradient-like field never raises the supremum of the Lyapunov functional
//! (up to refinement error), so iterating the deformation estimates the
//! minimax value from above.

use std::fmt;

use log::{debug, warn};
use rayon::prelude::*;

use crate::csv::Cell;
use crate::error::{Error, Result};
use crate::flow::{evolve, FlowModel, TrajectoryStatus};
use crate::linalg::dist2;
use crate::state::StateVector;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePath {
    pub nodes: Vec<StateVector>,
    pub pinned: Vec<bool>,
    pub max_gap: f64,
}

impl DiscretePath {
    /// Both endpoints must be pinned.
    pub fn new(nodes: Vec<StateVector>, pinned: Vec<bool>, max_gap: f64) -> Result<Self> {
        if nodes.len() < 2 {
            return Err(Error::Precondition("a path needs at least two nodes".into()));
        }
        if pinned.len() != nodes.len() {
            return Err(Error::DimensionMismatch { expected: nodes.len(), got: pinned.len() });
        }
        if !(pinned[0] && pinned[pinned.len() - 1]) {
            return Err(Error::Precondition("path endpoints must be pinned".into()));
        }
        if !(max_gap > 0.0) {
            return Err(Error::Precondition("max_gap must be positive".into()));
        }
        let (d, space) = (nodes[0].dim(), nodes[0].space());
        if let Some(bad) = nodes.iter().find(|n| n.dim() != d || n.space() != space) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.dim() });
        }
        Ok(Self { nodes, pinned, max_gap })
    }

    /// Straight segment `a → b` with `n >= 2` nodes and pinned endpoints.
    pub fn segment(a: &StateVector, b: &StateVector, n: usize, max_gap: f64) -> Result<Self> {
        let n = n.max(2);
        let nodes: Vec<StateVector> = (0..n).map(|k| a.lerp(b, k as f64 / (n - 1) as f64)).collect();
        let mut pinned = vec![false; n];
        pinned[0] = true;
        pinned[n - 1] = true;
        Self::new(nodes, pinned, max_gap)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn max_gap_observed(&self, dist: impl Fn(&[f64], &[f64]) -> f64) -> f64 {
        self.nodes.windows(2).map(|w| dist(w[0].coords(), w[1].coords())).fold(0.0, f64::max)
    }

    /// Inserts evenly spaced straight-line points into every gap longer than
    /// `max_gap`. Never removes nodes. Returns the number inserted.
    pub fn refine(&mut self, dist: impl Fn(&[f64], &[f64]) -> f64) -> usize {
        let mut nodes = Vec::with_capacity(self.nodes.len());
        let mut pinned = Vec::with_capacity(self.nodes.len());
        let mut inserted = 0;
        for i in 0..self.nodes.len() {
            nodes.push(self.nodes[i].clone());
            pinned.push(self.pinned[i]);
            if let Some(next) = self.nodes.get(i + 1) {
                let gap = dist(self.nodes[i].coords(), next.coords());
                if gap > self.max_gap {
                    let pieces = (gap / self.max_gap).ceil() as usize;
                    for k in 1..pieces {
                        nodes.push(self.nodes[i].lerp(next, k as f64 / pieces as f64));
                        pinned.push(false);
                        inserted += 1;
                    }
                }
            }
        }
        self.nodes = nodes;
        self.pinned = pinned;
        inserted
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinkingCheck {
    pub linked: bool,
    /// Indices `i` where the signed distance changes sign between `i` and `i+1`.
    pub crossings: Vec<usize>,
}

/// Discrete linking of a path with the Euclidean sphere `|x - center| = radius`.
pub fn linking_check_sphere(path: &DiscretePath, center: &StateVector, radius: f64) -> Result<LinkingCheck> {
    linking_check_sphere_with(path, center, radius, dist2)
}

/// [`linking_check_sphere`] with a caller-supplied distance.
pub fn linking_check_sphere_with(
    path: &DiscretePath,
    center: &StateVector,
    radius: f64,
    dist: impl Fn(&[f64], &[f64]) -> f64,
) -> Result<LinkingCheck> {
    let signed: Vec<f64> = path.nodes.iter().map(|n| dist(n.coords(), center.coords()) - radius).collect();
    let (first, last) = (signed[0], signed[signed.len() - 1]);
    if !(first < 0.0 && last > 0.0) {
        return Err(Error::Precondition(format!(
            "path must start strictly inside and end strictly outside the sphere (signed distances {first}, {last})"
        )));
    }
    // zero entries are skipped so that touching the sphere counts once
    let mut crossings = Vec::new();
    let mut prev = (0, first);
    for (i, &s) in signed.iter().enumerate().skip(1) {
        if s == 0.0 {
            continue;
        }
        if s.signum() != prev.1.signum() {
            crossings.push(prev.0.max(i - 1));
        }
        prev = (i, s);
    }
    Ok(LinkingCheck { linked: !crossings.is_empty(), crossings })
}

/// Optional behavior of [`deform_path_with`].
#[derive(Default)]
pub struct DeformOptions<'a> {
    /// Nodes where `phi < floor` are treated as pinned for this step.
    pub freeze_below: Option<(&'a (dyn Fn(&StateVector) -> f64 + Sync), f64)>,
    /// Projection applied to each advanced node; returns the size of the
    /// correction it made.
    pub project: Option<&'a (dyn Fn(&mut [f64]) -> f64 + Sync)>,
    /// Refuse to grow beyond this many nodes.
    pub max_nodes: Option<usize>,
}

impl fmt::Debug for DeformOptions<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DeformOptions")
            .field("freeze_below", &self.freeze_below.map(|(_, fl)| fl))
            .field("project", &self.project.is_some())
            .field("max_nodes", &self.max_nodes)
            .finish()
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DeformStats {
    pub advanced: usize,
    pub frozen: usize,
    pub blown_up: usize,
    pub inserted: usize,
    pub max_projection: f64,
}

/// Advances every unpinned node by the flow for time `dt`, repairs blown-up
/// nodes from their neighbors and refines to `max_gap`.
pub fn deform_path(model: &FlowModel, path: &DiscretePath, dt: f64) -> Result<DiscretePath> {
    deform_path_with(model, path, dt, &DeformOptions::default()).map(|(p, _)| p)
}

pub fn deform_path_with(
    model: &FlowModel,
    path: &DiscretePath,
    dt: f64,
    opts: &DeformOptions<'_>,
) -> Result<(DiscretePath, DeformStats)> {
    if !(dt > 0.0) {
        return Err(Error::Precondition("deformation step must be positive".into()));
    }
    enum Moved {
        Kept,
        Frozen,
        To(Vec<f64>, f64),
        BlewUp,
    }
    let moved: Vec<Moved> = path
        .nodes
        .par_iter()
        .zip(path.pinned.par_iter())
        .map(|(node, &pinned)| -> Result<Moved> {
            if pinned {
                return Ok(Moved::Kept);
            }
            if let Some((phi, floor)) = opts.freeze_below {
                if phi(node) < floor {
                    return Ok(Moved::Frozen);
                }
            }
            let tr = evolve(model, node, dt)?;
            if let TrajectoryStatus::Exploded(_) = tr.status {
                return Ok(Moved::BlewUp);
            }
            let mut y = tr.last().coords().to_vec();
            let clip = opts.project.map_or(0.0, |p| p(&mut y));
            Ok(Moved::To(y, clip))
        })
        .collect::<Result<_>>()?;

    let n = path.len();
    let mut stats = DeformStats::default();
    let mut coords: Vec<Option<Vec<f64>>> = Vec::with_capacity(n);
    for (node, m) in path.nodes.iter().zip(moved) {
        coords.push(match m {
            Moved::Kept => Some(node.coords().to_vec()),
            Moved::Frozen => {
                stats.frozen += 1;
                Some(node.coords().to_vec())
            }
            Moved::To(y, clip) => {
                stats.advanced += 1;
                stats.max_projection = stats.max_projection.max(clip);
                Some(y)
            }
            Moved::BlewUp => {
                stats.blown_up += 1;
                None
            }
        });
    }
    let interior = path.pinned.iter().filter(|&&p| !p).count();
    if interior > 0 && stats.blown_up == interior {
        return Err(Error::DeformationCollapse { iterations: 1 });
    }
    if stats.blown_up > 0 {
        debug!("{} path nodes blew up; replacing by neighbor midpoints", stats.blown_up);
        let survivors: Vec<Vec<f64>> = coords.iter().flatten().cloned().collect();
        let alive: Vec<usize> = (0..n).filter(|&i| coords[i].is_some()).collect();
        for i in 0..n {
            if coords[i].is_none() {
                // endpoints are pinned, so both neighbors exist
                let left = alive.iter().rposition(|&j| j < i).expect("pinned left endpoint");
                let right = left + 1;
                let mid = survivors[left].iter().zip(&survivors[right]).map(|(a, b)| 0.5 * (a + b)).collect();
                coords[i] = Some(mid);
            }
        }
    }
    let space = path.nodes[0].space();
    let mut out = DiscretePath {
        nodes: coords.into_iter().map(|c| StateVector::from_raw(c.expect("repaired"), space)).collect(),
        pinned: path.pinned.clone(),
        max_gap: path.max_gap,
    };
    stats.inserted = out.refine(|a, b| model.distance(a, b));
    if let Some(cap) = opts.max_nodes {
        if out.len() > cap {
            return Err(Error::SearchFailed(format!("path grew to {} nodes (cap {cap})", out.len())));
        }
    }
    Ok((out, stats))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MinimaxRecord {
    pub iteration: usize,
    pub c_estimate: f64,
    pub arg_node: usize,
    pub flow_residual: f64,
}

pub const MINIMAX_CSV_HEADER: [&str; 4] = ["iter", "c_estimate", "arg_node", "flow_residual"];

pub fn minimax_csv_rows(records: &[MinimaxRecord]) -> Vec<Vec<Cell>> {
    records
        .iter()
        .map(|r| {
            vec![
                Cell::from(r.iteration),
                Cell::from(r.c_estimate),
                Cell::from(r.arg_node),
                Cell::from(r.flow_residual),
            ]
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    MaxIterations,
    Stalled,
}

#[derive(Debug, Clone)]
pub struct MinimaxOutcome {
    pub c: f64,
    pub records: Vec<MinimaxRecord>,
    pub final_path: DiscretePath,
    pub termination: Termination,
    /// Total nodes inserted by refinement over the run.
    pub refinements: usize,
    /// Largest projection correction applied (0 without a projection).
    pub max_projection: f64,
}

/// A failed run with the records gathered before the failure.
#[derive(Debug)]
pub struct MinimaxError {
    pub error: Error,
    pub records: Vec<MinimaxRecord>,
}

impl fmt::Display for MinimaxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} recorded iterations)", self.error, self.records.len())
    }
}

impl std::error::Error for MinimaxError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<MinimaxError> for Error {
    fn from(e: MinimaxError) -> Self {
        e.error
    }
}

/// Window over which the stall criterion measures the decrease.
pub const STALL_WINDOW: usize = 10;

fn record(model: &FlowModel, phi: &(dyn Fn(&StateVector) -> f64 + Sync), path: &DiscretePath, iteration: usize) -> MinimaxRecord {
    let values: Vec<f64> = path.nodes.par_iter().map(phi).collect();
    let (arg_node, &c_estimate) = values
        .iter()
        .enumerate()
        .fold((0, &f64::NEG_INFINITY), |best, cur| if *cur.1 > *best.1 { cur } else { best });
    let flow_residual = model.residual(0.0, &path.nodes[arg_node]);
    MinimaxRecord { iteration, c_estimate, arg_node, flow_residual }
}

/// Iterated flow deformation of `path`, recording `sup φ` per iteration.
///
/// Stops after `max_iters` deformations or once `c` has dropped by less than
/// `stall_tol` over the last [`STALL_WINDOW`] iterations.
pub fn minimax_estimate(
    model: &FlowModel,
    phi: &(dyn Fn(&StateVector) -> f64 + Sync),
    path: &DiscretePath,
    max_iters: usize,
    dt: f64,
    stall_tol: f64,
) -> std::result::Result<MinimaxOutcome, MinimaxError> {
    minimax_estimate_with(model, phi, path, max_iters, dt, stall_tol, &DeformOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn minimax_estimate_with(
    model: &FlowModel,
    phi: &(dyn Fn(&StateVector) -> f64 + Sync),
    path: &DiscretePath,
    max_iters: usize,
    dt: f64,
    stall_tol: f64,
    opts: &DeformOptions<'_>,
) -> std::result::Result<MinimaxOutcome, MinimaxError> {
    let pinned_max = path
        .nodes
        .iter()
        .zip(&path.pinned)
        .filter(|(_, &p)| p)
        .map(|(n, _)| phi(n))
        .fold(f64::NEG_INFINITY, f64::max);
    debug!("minimax: max of phi over pinned nodes = {pinned_max}");

    let mut current = path.clone();
    current.refine(|a, b| model.distance(a, b));
    let mut records = vec![record(model, phi, &current, 0)];
    let mut refinements = 0;
    let mut max_projection = 0.0_f64;
    let mut termination = Termination::MaxIterations;
    for it in 1..=max_iters {
        match deform_path_with(model, &current, dt, opts) {
            Ok((next, stats)) => {
                refinements += stats.inserted;
                max_projection = max_projection.max(stats.max_projection);
                current = next;
            }
            Err(Error::DeformationCollapse { .. }) => {
                warn!("minimax: deformation collapsed at iteration {it}");
                return Err(MinimaxError { error: Error::DeformationCollapse { iterations: it }, records });
            }
            Err(error) => return Err(MinimaxError { error, records }),
        }
        records.push(record(model, phi, &current, it));
        if it >= STALL_WINDOW {
            let drop = records[it - STALL_WINDOW].c_estimate - records[it].c_estimate;
            if drop < stall_tol {
                termination = Termination::Stalled;
                break;
            }
        }
    }
    let c = records.last().expect("non-empty").c_estimate;
    Ok(MinimaxOutcome { c, records, final_path: current, termination, refinements, max_projection })
}

/// Nodes at level `c ± band` where the field is nearly zero: numerical
/// members of the invariant set at the minimax level.
pub fn invariant_candidates(
    model: &FlowModel,
    phi: &(dyn Fn(&StateVector) -> f64 + Sync),
    path: &DiscretePath,
    c: f64,
    band: f64,
    residual_tol: f64,
) -> Vec<(StateVector, f64)> {
    path.nodes
        .iter()
        .filter(|n| (phi(n) - c).abs() <= band)
        .map(|n| (n.clone(), model.residual(0.0, n)))
        .filter(|(_, r)| *r <= residual_tol)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use proptest::prelude::*;

    fn e(v: &[f64]) -> StateVector {
        StateVector::euclidean(v)
    }

    #[test]
    fn radial_segment_crosses_once() {
        let p = DiscretePath::segment(&e(&[0.0, 0.0]), &e(&[2.0, 0.0]), 10, 1.0).unwrap();
        let c = linking_check_sphere(&p, &e(&[0.0, 0.0]), 1.0).unwrap();
        assert!(c.linked);
        assert_eq!(c.crossings.len(), 1);
    }

    #[test]
    fn both_endpoints_inside_is_rejected() {
        let p = DiscretePath::segment(&e(&[0.0, 0.0]), &e(&[0.5, 0.0]), 5, 1.0).unwrap();
        assert!(matches!(linking_check_sphere(&p, &e(&[0.0, 0.0]), 1.0), Err(Error::Precondition(_))));
    }

    #[test]
    fn spiral_crossings_match_brute_force() {
        // r(s) = 1 - 0.6 cos(3πs) crosses 1 at s = 1/6, 1/2, 5/6
        let n = 400;
        let nodes: Vec<_> = (0..n)
            .map(|k| {
                let s = k as f64 / (n - 1) as f64;
                let r = 1.0 - 0.6 * (3.0 * std::f64::consts::PI * s).cos();
                let a = 6.0 * s;
                e(&[r * a.cos(), r * a.sin()])
            })
            .collect();
        let mut pinned = vec![false; n];
        pinned[0] = true;
        pinned[n - 1] = true;
        let p = DiscretePath::new(nodes, pinned, 1.0).unwrap();
        let c = linking_check_sphere(&p, &e(&[0.0, 0.0]), 1.0).unwrap();
        let brute = p
            .nodes
            .windows(2)
            .filter(|w| (w[0].euclidean_norm() - 1.0) * (w[1].euclidean_norm() - 1.0) < 0.0)
            .count();
        assert_eq!(brute, 3);
        assert_eq!(c.crossings.len(), brute);
    }

    #[test]
    fn equilibria_path_is_fixed() {
        let m = builtin::double_well();
        let p = DiscretePath::new(vec![e(&[-1.0]), e(&[0.0]), e(&[1.0])], vec![true, false, true], 2.0).unwrap();
        assert_eq!(deform_path(&m, &p, 0.1).unwrap(), p);
        let cands = invariant_candidates(&m, &|s| builtin::double_well_energy(s[0]), &p, 1.0, 1e-9, 0.0);
        assert_eq!(cands.len(), 1);
        assert_eq!(cands[0].1, 0.0);
    }

    #[test]
    fn double_well_nodes_move_outward_and_sup_drops() {
        let m = builtin::double_well();
        let p = DiscretePath::segment(&e(&[-1.0]), &e(&[1.0]), 12, 1.0).unwrap();
        let q = deform_path(&m, &p, 0.1).unwrap();
        let phi = |s: &StateVector| builtin::double_well_energy(s[0]);
        for (a, b) in p.nodes.iter().zip(&q.nodes).take(11).skip(1) {
            assert!(b[0].abs() > a[0].abs());
            // dense reference integration of the scalar gradient flow
            let reference = evolve(&m.clone().with_tolerances(1e-13, 1e-13), a, 0.1).unwrap();
            assert!((reference.last()[0] - b[0]).abs() < 1e-7);
        }
        let sup = |p: &DiscretePath| p.nodes.iter().map(phi).fold(f64::MIN, f64::max);
        assert!(sup(&q) <= sup(&p));
    }

    #[test]
    fn pinned_middle_node_stays() {
        let m = builtin::double_well();
        let p = DiscretePath::new(
            vec![e(&[-1.0]), e(&[-0.5]), e(&[0.3]), e(&[0.5]), e(&[1.0])],
            vec![true, false, true, false, true],
            5.0,
        )
        .unwrap();
        let q = deform_path(&m, &p, 0.2).unwrap();
        assert_eq!(q.nodes[2], p.nodes[2]);
        assert_ne!(q.nodes[1], p.nodes[1]);
    }

    #[test]
    fn blown_up_node_is_replaced_by_neighbor_midpoint() {
        let m = builtin::quadratic_blow_up();
        let p = DiscretePath::new(vec![e(&[-1.0]), e(&[-0.5]), e(&[5.0]), e(&[6.0])], vec![true, false, false, true], 100.0)
            .unwrap();
        let (q, stats) = deform_path_with(&m, &p, 1.0, &DeformOptions::default()).unwrap();
        assert_eq!(stats.blown_up, 1);
        let left = q.nodes[1][0];
        assert!((q.nodes[2][0] - 0.5 * (left + 6.0)).abs() < 1e-12);
    }

    #[test]
    fn all_interior_blow_up_collapses() {
        let m = builtin::quadratic_blow_up();
        let p = DiscretePath::new(vec![e(&[1.0]), e(&[2.0]), e(&[3.0])], vec![true, false, true], 100.0).unwrap();
        assert!(matches!(deform_path(&m, &p, 5.0), Err(Error::DeformationCollapse { .. })));
    }

    #[test]
    fn path_through_saddle_keeps_level() {
        let m = builtin::double_well();
        let p = DiscretePath::segment(&e(&[-1.0]), &e(&[1.0]), 21, 0.02).unwrap();
        let out = minimax_estimate(&m, &|s| builtin::double_well_energy(s[0]), &p, 50, 0.05, 1e-9).unwrap();
        assert!(out.records.iter().all(|r| r.c_estimate == 1.0));
        assert_eq!(out.termination, Termination::Stalled);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn minimax_is_monotone_pinned_and_above_barrier(bulge in 0.05..0.6f64, n in 5usize..30) {
            let m = builtin::quartic_saddle();
            let phi = |s: &StateVector| builtin::quartic_saddle_energy(s.coords());
            let a = 1.0 / 2f64.sqrt();
            let nodes: Vec<_> = (0..n)
                .map(|k| {
                    let s = k as f64 / (n - 1) as f64;
                    let x = -a + 2.0 * a * s;
                    e(&[x, bulge * (std::f64::consts::PI * s).sin()])
                })
                .collect();
            let mut pinned = vec![false; n];
            pinned[0] = true;
            pinned[n - 1] = true;
            let max_gap = 0.05;
            let path = DiscretePath::new(nodes, pinned, max_gap).unwrap();
            // barrier: inf of phi on the circle of radius 0.3 around the origin
            let beta = (0..720)
                .map(|k| {
                    let t = k as f64 * std::f64::consts::PI / 360.0;
                    builtin::quartic_saddle_energy(&[0.3 * t.cos(), 0.3 * t.sin()])
                })
                .fold(f64::INFINITY, f64::min);
            let out = minimax_estimate(&m, &phi, &path, 40, 0.05, 0.0).unwrap();
            // Lipschitz bound of phi on the relevant box, times the gap
            let budget = max_gap * 4.0 * (1 + out.refinements) as f64;
            for w in out.records.windows(2) {
                prop_assert!(w[1].c_estimate <= w[0].c_estimate + budget);
            }
            for r in &out.records {
                prop_assert!(r.c_estimate >= beta - 1e-9);
            }
            prop_assert_eq!(&out.final_path.nodes[0], &path.nodes[0]);
            prop_assert_eq!(out.final_path.nodes.last(), path.nodes.last());
            prop_assert!(out.final_path.max_gap_observed(dist2) <= max_gap * (1.0 + 1e-12));
        }
    }
}
