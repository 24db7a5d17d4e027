use proptest::prelude::*;
use slabmom::harness::{compare, RunConfig, Solution};
use slabmom::optimizer::regularize;
use slabmom::standard::source_step_analytic;
use slabmom::transformed::{embedded_error, hf_clip, StepController};
use slabmom::{BasisKind, MomentBasis};

fn kind(i: usize) -> BasisKind {
    match i % 3 {
        0 => BasisKind::FullMoment { order: 1 + i % 7 },
        1 => BasisKind::HatFunction { intervals: 1 + i % 9 },
        _ => BasisKind::PartialMoment { intervals: 1 + i % 5 },
    }
}

fn iso_state(basis: &MomentBasis, rho: f64, tilt: f64) -> Vec<f64> {
    // density rho, mildly forward-peaked: ⟨b (1 + tilt μ)⟩ rho / 2
    let quad = basis.quadrature();
    let mut u = vec![0.0; basis.n()];
    for (&mu, &w) in quad.points().iter().zip(quad.weights()) {
        let b = basis.evaluate(mu).unwrap();
        for (uj, bj) in u.iter_mut().zip(&b) {
            *uj += 0.5 * rho * w * (1.0 + tilt * mu) * bj;
        }
    }
    u
}

proptest! {
    #[test]
    fn controller_respects_clamp(dt in 1e-12f64..10.0, err in 0.0f64..1e6) {
        let c = StepController::default();
        let next = c.propose(dt, err);
        prop_assert!(next >= 0.2 * dt * (1.0 - 1e-15));
        prop_assert!(next <= 5.0 * dt * (1.0 + 1e-15));
    }

    #[test]
    fn embedded_error_is_symmetric_and_vanishes_on_equal(
        a in prop::collection::vec(-50.0f64..50.0, 1..12),
        shift in -1.0f64..1.0,
        tol in 1e-8f64..1e-1,
    ) {
        let b: Vec<f64> = a.iter().map(|x| x + shift).collect();
        prop_assert_eq!(embedded_error(&a, &a, tol), 0.0);
        prop_assert_eq!(embedded_error(&a, &b, tol), embedded_error(&b, &a, tol));
        prop_assert!(embedded_error(&a, &b, tol) >= 0.0);
    }

    #[test]
    fn clipping_is_idempotent(mut a in prop::collection::vec(-3000.0f64..10.0, 1..20), min in -2000.0f64..-10.0) {
        let before = a.clone();
        let changed = hf_clip(&mut a, min);
        prop_assert_eq!(changed, before.iter().any(|&x| x < min));
        prop_assert!(a.iter().all(|&x| x >= min));
        for (x, y) in a.iter().zip(&before) {
            prop_assert!(*y < min || x == y);
        }
        let again = a.clone();
        prop_assert!(!hf_clip(&mut a, min));
        prop_assert_eq!(a, again);
    }

    #[test]
    fn source_step_composes(
        ki in 0usize..30,
        rho in 1e-3f64..10.0,
        tilt in -1.0f64..1.0,
        sigma_s in 0.0f64..5.0,
        sigma_a in 0.0f64..5.0,
        q in 0.0f64..2.0,
        t1 in 0.0f64..1.0,
        t2 in 0.0f64..1.0,
    ) {
        let basis = MomentBasis::new(kind(ki)).unwrap();
        let u = iso_state(&basis, rho, tilt);
        let two = source_step_analytic(&basis, &source_step_analytic(&basis, &u, sigma_s, sigma_a, q, t1), sigma_s, sigma_a, q, t2);
        let one = source_step_analytic(&basis, &u, sigma_s, sigma_a, q, t1 + t2);
        let scale = one.iter().fold(1.0f64, |m, x| m.max(x.abs()));
        for (a, b) in one.iter().zip(&two) {
            prop_assert!((a - b).abs() <= 1e-12 * scale, "{a} vs {b}");
        }
        // absorption-free and source-free: density is conserved
        let pure = source_step_analytic(&basis, &u, sigma_s, 0.0, 0.0, t1);
        prop_assert!((basis.density(&pure) - basis.density(&u)).abs() <= 1e-12 * rho);
    }

    #[test]
    fn regularization_keeps_density(ki in 0usize..30, rho in 1e-3f64..10.0, tilt in -1.0f64..1.0, r in 0.0f64..1.0) {
        let basis = MomentBasis::new(kind(ki)).unwrap();
        let u = iso_state(&basis, rho, tilt);
        let v = regularize(&basis, &u, r);
        prop_assert!((basis.density(&v) - basis.density(&u)).abs() <= 1e-12 * rho);
        let full = regularize(&basis, &u, 1.0);
        let iso = basis.iso_projection(&u);
        for (a, b) in full.iter().zip(&iso) {
            prop_assert!((a - b).abs() <= 1e-12 * rho);
        }
    }

    #[test]
    fn compare_is_a_metric(
        rows in 2usize..8,
        n in 1usize..4,
        seed in prop::collection::vec(-5.0f64..5.0, 96),
    ) {
        let dx = 1.0 / rows as f64;
        let x: Vec<f64> = (0..rows).map(|i| (i as f64 + 0.5) * dx).collect();
        let mk = |off: usize| Solution { x: x.clone(), dx, n, values: seed[off..off + rows * n].to_vec() };
        let (a, b, c) = (mk(0), mk(32), mk(64));
        let (ab, ab_inf) = compare(&a, &b).unwrap();
        prop_assert_eq!(compare(&b, &a).unwrap(), (ab, ab_inf));
        prop_assert_eq!(compare(&a, &a).unwrap(), (0.0, 0.0));
        let (ac, _) = compare(&a, &c).unwrap();
        let (cb, _) = compare(&c, &b).unwrap();
        prop_assert!(ab <= ac + cb + 1e-12);
        prop_assert!(ab_inf <= ab / dx + 1e-12);
    }

    #[test]
    fn config_echo_round_trips(nx in 1usize..500, tol in 1e-8f64..1e-1, relaxed: bool, reg in 0.0f64..1e-3, seed: u64) {
        let mut c = RunConfig::default();
        c.n_x = nx;
        c.transformed.tol = tol;
        c.transformed.relaxed = relaxed;
        c.transformed.hessian_reg = reg;
        c.seed = seed;
        c.tf = Some(c.problem_spec().tf);
        let mut d = RunConfig::default();
        d.apply_file_contents(&c.echo()).unwrap();
        prop_assert_eq!(c, d);
    }
}
