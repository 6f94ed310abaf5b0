use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use semiflow::builtin;
use semiflow::flow::{check_semigroup, evolve, omega_limit, SemigroupCheck};
use semiflow::{StateVector, TrajectoryStatus};

#[test]
fn semigroup_on_random_triples() {
    let models = builtin::catalogue();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut checked = 0;
    let mut worst = 0.0_f64;
    for _ in 0..100 {
        let (name, model) = &models[rng.random_range(0..models.len())];
        let x: Vec<f64> = (0..model.dim()).map(|_| rng.random_range(-1.5..1.5)).collect();
        let s = rng.random_range(0.0..2.0);
        let t = rng.random_range(0.0..2.0);
        let tol = 10.0 * model.abs_tol;
        let res = check_semigroup(model, &StateVector::euclidean(&x), s, t, tol).unwrap();
        match res {
            SemigroupCheck::Checked { deviation, pass } => {
                checked += 1;
                worst = worst.max(deviation);
                assert!(pass, "{name} x={x:?} s={s} t={t}: deviation {deviation:e} > {tol:e}");
            }
            SemigroupCheck::Inapplicable { blow_up_time } => {
                assert_eq!(*name, "quadratic-blow-up");
                // u' = u² explodes at 1/u0; the detector fires slightly earlier.
                assert!(blow_up_time <= 1.0 / x[0] + 1e-6);
            }
        }
    }
    assert!(checked >= 80, "only {checked} triples were applicable");
    eprintln!("worst semigroup deviation {worst:e} over {checked} triples");
}

#[test]
fn hopf_radius_matches_closed_form() {
    let m = builtin::hopf();
    for &r0 in &[0.1, 0.5, 1.0, 1.7] {
        let tr = evolve(&m, &StateVector::euclidean(&[r0, 0.0]), 3.0).unwrap();
        assert_eq!(tr.status, TrajectoryStatus::Completed);
        let r = tr.last().euclidean_norm();
        assert!((r - builtin::hopf_radius(r0, 3.0)).abs() < 1e-7, "r0={r0}: {r}");
    }
}

#[test]
fn hopf_omega_limit_is_the_unit_circle() {
    let m = builtin::hopf();
    let est = omega_limit(&m, &StateVector::euclidean(&[0.5, 0.0]), 25.0, 8.0, 4e-4).unwrap();
    let off_circle = est.points.iter().map(|p| (p.euclidean_norm() - 1.0).abs()).fold(0.0, f64::max);
    let uncovered = (0..20_000)
        .map(|k| {
            let a = 2.0 * PI * k as f64 / 20_000.0;
            est.distance(&m, &[a.cos(), a.sin()])
        })
        .fold(0.0, f64::max);
    let hausdorff = off_circle.max(uncovered);
    assert!(hausdorff <= 1e-3, "Hausdorff distance {hausdorff:e}");
}
