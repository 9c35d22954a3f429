mod common;

use common::*;
use homp_core::diagnostics::{
    jacobian_spectrum_check, restricted_merit, strong_gap, trajectory_bound_monitor, ReferenceRegion,
};
use homp_core::homp::{homp_general_run, homp_p2_run, SolverConfig};
use homp_core::linalg::{eigenvalues, singular_values};
use homp_core::mirror_prox::{mp_run, MpConfig};
use homp_core::problems::ProblemKind;
use homp_core::report::IterateRecord;
use homp_core::{Branch, Matrix, Vector};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn power_mean_bound_as_stated() {
    let mut r = rng(40);
    for _ in 0..1000 {
        let t = r.gen_range(1..=50usize);
        let xi: Vec<f64> = (0..t).map(|_| r.gen_range(1e-3..2.0)).collect();
        let sum_sq: f64 = xi.iter().map(|x| x * x).sum();
        // any R at least the sum of squares
        let radius = sum_sq * r.gen_range(1.0..3.0);
        for p in [2i32, 3, 4] {
            let lhs: f64 = xi.iter().map(|x| x.powi(-p)).sum();
            let rhs = (t as f64).powf(p as f64 / 2.0 + 1.0) / radius.powf(p as f64 / 2.0);
            assert!(lhs >= rhs - 1e-9, "T={t} p={p}: {lhs} < {rhs}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn sum_of_squares(a in prop::collection::vec(1e-6f64..1e3, 1..40)) {
        let n = a.len() as f64;
        let s: f64 = a.iter().sum();
        let sq: f64 = a.iter().map(|x| x * x).sum();
        prop_assert!(s * s <= n * sq * (1.0 + 1e-12));
    }
}

#[test]
fn psd_symmetric_part_controls_spectrum() {
    let mut r = rng(41);
    for _ in 0..200 {
        let n = r.gen_range(2..7);
        let m = monotone_matrix(&mut r, n);
        let report = jacobian_spectrum_check(&m).unwrap();
        assert!(report.min_symmetric_eigenvalue >= -1e-12);
        assert!(report.min_real_eigenvalue >= -1e-10);
        assert!(report.holds());
        let re_min = eigenvalues(&m).unwrap().iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
        assert!(re_min >= -1e-10);
        if report.min_symmetric_eigenvalue > 0.0 {
            for k in -3..=3 {
                let gamma = 10f64.powi(k);
                let shifted = Matrix::identity(n, n) + &m * gamma;
                assert!(*singular_values(&shifted).unwrap().last().unwrap() > 0.0);
            }
        }
    }
}

#[test]
fn spectrum_examples() {
    let rot = jacobian_spectrum_check(&rotation()).unwrap();
    assert!(rot.min_symmetric_eigenvalue.abs() < 1e-15 && rot.min_real_eigenvalue.abs() < 1e-12);
    let damped = jacobian_spectrum_check(&Matrix::from_row_slice(2, 2, &[1.0, 2.0, -2.0, 1.0])).unwrap();
    assert!((damped.min_real_eigenvalue - 1.0).abs() < 1e-12);
    assert_eq!(damped.sampled_invertible, Some(true));
    let indefinite = jacobian_spectrum_check(&Matrix::from_diagonal(&Vector::from_vec(vec![-1.0, 1.0]))).unwrap();
    assert_eq!(indefinite.real_parts_nonnegative, None);
    assert!(indefinite.holds());
}

#[test]
fn trajectory_bounds_hold_on_runs() {
    for p in shipped() {
        if p.spec.kind == ProblemKind::MatrixGame {
            continue;
        }
        let z1 = e1(p.dim());
        let z_star = p.known_solution.clone().unwrap();
        let l1 = p.smoothness.lipschitz(1).unwrap();
        let mut reports = vec![homp_p2_run(p.field.as_ref(), &p.smoothness, &z1, &SolverConfig::new(2, 64).unwrap()).unwrap()];
        if p.spec.kind == ProblemKind::QuarticReg {
            reports.push(homp_general_run(p.field.as_ref(), 3, &p.smoothness, &z1, &SolverConfig::new(3, 64).unwrap()).unwrap());
        }
        for report in reports {
            let check = trajectory_bound_monitor(&report.records, &z1, &z_star, l1);
            assert!(check.ok(), "{:?}: {check:?}", p.spec.kind);
        }
    }
}

#[test]
fn fabricated_trajectory_is_flagged() {
    let z1 = Vector::from_vec(vec![1.0, 0.0]);
    let far = Vector::from_vec(vec![10.0, 0.0]);
    let rec = IterateRecord {
        t: 1,
        z: z1.clone(),
        zhat: far.clone(),
        z_next: far.clone(),
        gamma: 1.0,
        step_norm: 9.0,
        eg_norm: 0.0,
        branch: Branch::Fixed,
        inner_iters: 0,
        implicit_residual: 0.0,
        field_at_z: Vector::from_vec(vec![0.0, 1.0]),
        field_at_zhat: Vector::from_vec(vec![0.0, 10.0]),
    };
    let check = trajectory_bound_monitor(&[rec], &z1, &Vector::zeros(2), 1.0);
    assert!(!check.ok());
    assert_eq!(check.step_violations, vec![1]);
}

#[test]
fn strong_residual_of_average_decreases() {
    let mut r = rng(42);
    for p in shipped() {
        if p.spec.kind == ProblemKind::MatrixGame {
            continue;
        }
        let z1 = e1(p.dim());
        let region = ReferenceRegion::around_start(&z1, p.known_solution.as_ref());
        let ReferenceRegion::Ball { center, radius } = &region else { unreachable!() };
        let mut previous = f64::INFINITY;
        for horizon in [16usize, 64, 256] {
            let report = mp_run(p.field.as_ref(), p.geometry, &p.set, &z1, &MpConfig::default_for(&p.smoothness, horizon).unwrap()).unwrap();
            let gap = strong_gap(p.field.as_ref(), &report.z_bar, &region).unwrap();
            let f = p.field.eval(&report.z_bar);
            let sampled = (0..1000)
                .map(|_| f.dot(&(&report.z_bar - in_ball(&mut r, center, *radius))))
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(sampled <= gap + 1e-12);
            assert!(gap < previous, "{:?} T={horizon}: {gap} !< {previous}", p.spec.kind);
            previous = gap;
        }
    }
}

#[test]
fn merit_closed_form_matches_sampling() {
    let mut r = rng(43);
    for _ in 0..20 {
        let n = r.gen_range(2..4);
        let records: Vec<IterateRecord> = (0..r.gen_range(1..6))
            .map(|t| {
                let zhat = gaussian_ish(&mut r, n, 1.0);
                IterateRecord {
                    t: t + 1,
                    z: zhat.clone(),
                    zhat: zhat.clone(),
                    z_next: zhat,
                    gamma: r.gen_range(0.1..2.0),
                    step_norm: 0.0,
                    eg_norm: 0.0,
                    branch: Branch::Fixed,
                    inner_iters: 0,
                    implicit_residual: 0.0,
                    field_at_z: Vector::zeros(n),
                    field_at_zhat: gaussian_ish(&mut r, n, 1.0),
                }
            })
            .collect();
        let center = gaussian_ish(&mut r, n, 1.0);
        let radius = r.gen_range(0.5..2.0);
        let exact = restricted_merit(&records, &ReferenceRegion::ball(center.clone(), radius).unwrap()).unwrap();
        let cloud: Vec<Vector> = (0..10_000)
            .map(|_| {
                // sphere points: the affine maximum sits on the boundary
                let d = gaussian_ish(&mut r, n, 1.0);
                &center + d.normalize() * radius
            })
            .collect();
        let sampled = restricted_merit(&records, &ReferenceRegion::cloud(cloud).unwrap()).unwrap();
        assert!(sampled <= exact + 1e-12);
        assert!((exact - sampled).abs() <= 0.02 * exact.abs().max(1e-12), "{exact} vs {sampled}");
    }
}
