// Integrator and sweep invariants that need real trajectories.

use nhdimer::experiments::{self, lc_phase_diagram, linspace, transmission_sweep};
use nhdimer::integrator::{integrate, IntegratorConfig};
use nhdimer::model::{FieldState, OperatingPoint, PhysicalParams};
use nhdimer::{spectral, stability, units};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use std::f64::consts::{PI, TAU};

fn short(span: f64, n: usize) -> IntegratorConfig {
    IntegratorConfig {
        span_kappa_c: span,
        n_samples: n,
        ..IntegratorConfig::default()
    }
}

#[test]
fn halving_tolerance_barely_moves_the_cycle() {
    let p = PhysicalParams::default();
    let op = OperatingPoint::undriven(&p, 8.0, 2.0);
    let coarse = IntegratorConfig {
        rel_tol: 1e-6,
        ..short(500.0, 5_000)
    };
    let fine = IntegratorConfig {
        rel_tol: 5e-7,
        ..coarse
    };
    let a = integrate(&p, &op, &coarse).unwrap().last().unwrap().a2.norm();
    let b = integrate(&p, &op, &fine).unwrap().last().unwrap().a2.norm();
    assert!(((a - b) / b).abs() < 1e-6, "{a} vs {b}");
}

#[test]
fn random_starts_reach_the_same_cycle() {
    let p = PhysicalParams::default();
    let op = OperatingPoint::undriven(&p, 8.4, PI);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut finals = Vec::new();
    for _ in 0..5 {
        let mut z = || Complex64::from_polar(10f64.powf(rng.random_range(3.0..7.5)), rng.random_range(0.0..TAU));
        let cfg = IntegratorConfig {
            initial_state: FieldState::new(z(), z()),
            ..short(2_000.0, 4_000)
        };
        finals.push(integrate(&p, &op, &cfg).unwrap().last().unwrap().a2.norm_sqr());
    }
    let mean = finals.iter().sum::<f64>() / finals.len() as f64;
    for f in &finals {
        assert!(((f - mean) / mean).abs() < 5e-3, "{finals:?}");
    }
}

#[test]
fn rotating_frame_only_rotates_phases() {
    let p = PhysicalParams::default();
    let cfg = short(300.0, 3_000);
    for (dg, phi) in [(8.4, PI), (2.0, 1.0)] {
        let a = integrate(&p, &OperatingPoint::new(dg, phi, p.omega_c, None), &cfg).unwrap();
        let b = integrate(&p, &OperatingPoint::new(dg, phi, p.omega_c + units::mhz(7.0), None), &cfg).unwrap();
        // the decaying case ends near one photon, where abs_tol is what counts
        for (x, y) in a.states.iter().zip(&b.states).step_by(50) {
            let tol = |v: f64| 1e3 * cfg.rel_tol * v + 10.0 * cfg.abs_tol;
            assert!((x.a1.norm() - y.a1.norm()).abs() < tol(x.a1.norm()));
            assert!((x.a2.norm() - y.a2.norm()).abs() < tol(x.a2.norm()));
        }
    }
}

#[test]
fn synthetic_tone_is_recovered() {
    let p = PhysicalParams::default();
    let n = 50_000;
    let dt = 1e-8;
    // off-bin on purpose
    let f_tone = 123.4 / (0.8 * n as f64 * dt);
    let r = (p.n_sat() * 3.0).sqrt();
    let traj = nhdimer::integrator::Trajectory {
        t: (0..n).map(|i| i as f64 * dt).collect(),
        states: (0..n)
            .map(|i| {
                let z = Complex64::from_polar(r, TAU * f_tone * i as f64 * dt);
                FieldState::new(z, z)
            })
            .collect(),
        dt,
        epsilon: 0.0,
        detuning: 0.0,
    };
    let obs = spectral::lc_extract(&p, &traj).unwrap();
    let bin = 1.0 / (0.8 * n as f64 * dt);
    assert!((obs.freq_offset - f_tone).abs() <= bin);
    let expected = spectral::photons_to_dbm(&p, r * r).unwrap();
    assert!((obs.amp_dbm - expected).abs() < 0.1);
}

#[test]
fn cycle_frequency_does_not_depend_on_gain() {
    let p = PhysicalParams::symmetric();
    let cfg = IntegratorConfig::default();
    let bin = p.kappa_c / cfg.span_kappa_c;
    let phi = 2.2;
    let mut offsets = Vec::new();
    for dg in [6.5, 7.5, 8.4] {
        let traj = integrate(&p, &OperatingPoint::undriven(&p, dg, phi), &cfg).unwrap();
        offsets.push(spectral::lc_extract(&p, &traj).unwrap().freq_offset);
    }
    for o in &offsets {
        assert!((o - offsets[0]).abs() <= 2.0 * bin, "{offsets:?}");
    }
}

#[test]
fn simulated_boundary_follows_threshold() {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let phis = [PI / 2.0, 2.5, PI, 4.4];
    let gains = experiments::default_delta_g_grid();
    let step = gains[1] - gains[0];
    let pd = lc_phase_diagram(&p, &phis, &gains, &cfg, 2).unwrap();
    for (i, &phi) in phis.iter().enumerate() {
        let first = (0..gains.len()).find(|&j| pd.amp_dbm.get(i, j) > spectral::LC_FLOOR_DBM);
        let th = stability::threshold_gain(&p, phi).unwrap();
        let first = gains[first.expect("a cycle somewhere on the column")];
        assert!((first - th).abs() <= step + 1e-9, "φ {phi}: first unstable {first}, threshold {th}");
    }
}

#[test]
fn transmission_at_phi_zero_is_mirror_symmetric() {
    let p = PhysicalParams::symmetric();
    let cfg = IntegratorConfig::default();
    let offsets = [units::mhz(3.0), units::mhz(17.0), units::mhz(34.0)];
    let grid: Vec<f64> = offsets
        .iter()
        .flat_map(|&d| [p.omega_c - d, p.omega_c + d])
        .collect();
    let g = transmission_sweep(&p, 0.0, &[0.0, 6.0], &grid, -30.0, &cfg, 2).unwrap();
    let lin = |db: f64| 10f64.powf(db / 20.0);
    for k in 0..offsets.len() {
        for j in 0..2 {
            let (lo, hi) = (lin(g.get(2 * k, j)), lin(g.get(2 * k + 1, j)));
            assert!(((lo - hi) / hi).abs() < 1e-2, "offset {k}, gain {j}: {lo} vs {hi}");
        }
    }
}

#[test]
fn sweeps_are_bitwise_repeatable() {
    let p = PhysicalParams::default();
    let cfg = short(1_000.0, 5_000);
    let grid = linspace(units::ghz(6.0), units::ghz(6.05), 5);
    let a = transmission_sweep(&p, 1.0, &[2.0, 4.0], &grid, -30.0, &cfg, 1).unwrap();
    let b = transmission_sweep(&p, 1.0, &[2.0, 4.0], &grid, -30.0, &cfg, 3).unwrap();
    assert_eq!(a.to_csv_string(), b.to_csv_string());
}
