// Randomized invariants of the model, stability analysis and calibration.

use nhdimer::calibration::{s11_fit, s11_model, S11FitResult};
use nhdimer::config::PhysicalBlock;
use nhdimer::model::{self, FieldState, OperatingPoint, PhysicalParams};
use nhdimer::{stability, units};
use proptest::prelude::*;
use std::f64::consts::{PI, TAU};

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

proptest! {
    #[test]
    fn hopping_is_continuous_at_saturation(dg in -10.0f64..14.0, k in 6u32..14) {
        let p = PhysicalParams::default();
        let ns = p.n_sat();
        let d = ns * 10f64.powi(-(k as i32));
        let below = model::hopping_j(&p, dg, ns - d).unwrap();
        let above = model::hopping_j(&p, dg, ns + d).unwrap();
        prop_assert!(rel(above, below) < 1e-9 * 10f64.powi(14 - k as i32).max(1.0));
    }

    #[test]
    fn hopping_is_monotone(dg in -10.0f64..14.0, a in 0.0f64..50.0, b in 0.0f64..50.0) {
        let p = PhysicalParams::default();
        let (lo, hi) = (a.min(b) * p.n_sat(), a.max(b) * p.n_sat());
        let (j_lo, j_hi) = (model::hopping_j(&p, dg, lo).unwrap(), model::hopping_j(&p, dg, hi).unwrap());
        prop_assert!(j_hi <= j_lo);
        if lo > p.n_sat() && hi > lo * (1.0 + 1e-9) {
            prop_assert!(j_hi < j_lo);
        }
    }

    #[test]
    fn hopping_is_linear_below_saturation(dg in -10.0f64..14.0, x in 0.0f64..=1.0) {
        let p = PhysicalParams::default();
        let j = model::hopping_j(&p, dg, x * p.n_sat()).unwrap();
        prop_assert_eq!(j, p.kappa_c * 10f64.powf(dg / 20.0));
    }

    #[test]
    fn zero_field_gives_linear_matrix(dg in -10.0f64..14.0, phi in 0.0f64..TAU, det_mhz in -50.0f64..50.0) {
        let p = PhysicalParams::default();
        let op = OperatingPoint::new(dg, phi, p.omega_c + units::mhz(det_mhz), Some(-20.0));
        let a = model::dynamical_matrix(&p, &op, &FieldState::zero());
        let b = model::linear_matrix(&p, &op);
        for i in 0..2 {
            for j in 0..2 {
                prop_assert_eq!(a[(i, j)], b[(i, j)]);
            }
        }
    }

    #[test]
    fn config_units_round_trip(
        f in 1.0f64..20.0, k1 in 0.1f64..20.0, k2 in 0.1f64..20.0, kin in 0.1f64..10.0,
        kout in 0.1f64..10.0, kc in 0.1f64..30.0, jc in 0.0f64..30.0,
    ) {
        let b = PhysicalBlock {
            omega_c_ghz: f,
            kappa_int_mhz: [k1, k2],
            kappa_in_mhz: kin,
            kappa_out_mhz: kout,
            kappa_c_mhz: kc,
            j_c_mhz: jc,
            ..PhysicalBlock::default()
        };
        let back = PhysicalBlock::from_params(&b.to_params());
        for (x, y) in [(back.omega_c_ghz, f), (back.kappa_int_mhz[0], k1), (back.kappa_int_mhz[1], k2),
                       (back.kappa_in_mhz, kin), (back.kappa_out_mhz, kout), (back.kappa_c_mhz, kc)] {
            prop_assert!(rel(x, y) < 1e-12);
        }
        prop_assert!((back.j_c_mhz - jc).abs() <= 1e-12 * jc.max(1.0));
    }

    #[test]
    fn criterion_agrees_with_eigenvalues(dg in -10.0f64..14.0, phi in 0.0f64..TAU, jc in 0.0f64..30.0) {
        let p = PhysicalParams { j_c: units::mhz(jc), ..PhysicalParams::symmetric() };
        let rep = stability::is_stable(&p, &OperatingPoint::undriven(&p, dg, phi));
        if let Some(verdict) = rep.criterion_stable() {
            if rep.max_re_eigenvalue.abs() > 1e-9 * p.kappa_c {
                prop_assert_eq!(verdict, rep.stable);
            }
        }
        let no_jc = stability::is_stable(&PhysicalParams { j_c: 0.0, ..p }, &OperatingPoint::undriven(&p, dg, phi));
        prop_assert!((rep.max_re_eigenvalue - no_jc.max_re_eigenvalue).abs() <= 1e-9 * rep.max_re_eigenvalue.abs().max(1.0));
    }

    #[test]
    fn threshold_is_symmetric_and_minimal_at_pi(phi in 1e-3f64..(TAU - 1e-3)) {
        let p = PhysicalParams::symmetric();
        let a = stability::threshold_gain(&p, phi).unwrap();
        let b = stability::threshold_gain(&p, TAU - phi).unwrap();
        prop_assert!((a - b).abs() < 1e-9);
        prop_assert!(a >= stability::threshold_gain(&p, PI).unwrap() - 1e-12);
    }
}

#[test]
fn s11_round_trip_over_random_draws() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let truth = S11FitResult::from_rates(
            units::ghz(rng.random_range(5.5..6.5)),
            units::mhz(rng.random_range(1.0..10.0)),
            units::mhz(rng.random_range(1.0..12.0)),
            rng.random_range(0.5..1.0),
        );
        let k_tot = units::to_hz(truth.kappa_int() + 2.0 * truth.kappa_c());
        let f0 = units::to_hz(truth.omega_res);
        let f: Vec<f64> = (0..301).map(|i| f0 + k_tot * (-10.0 + 20.0 * i as f64 / 300.0)).collect();
        let m: Vec<f64> = f.iter().map(|&x| s11_model(units::hz(x), &truth)).collect();
        let fit = s11_fit(&f, &m).unwrap();
        worst = worst
            .max(rel(fit.kappa_c(), truth.kappa_c()))
            .max(rel(fit.kappa_int(), truth.kappa_int()));
    }
    assert!(worst < 1e-3, "worst relative error {worst}");
}
