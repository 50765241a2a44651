//! Closed-form results for the undriven dimer: normal modes, their linear
//! rates, and the limit cycle's amplitude, frequency and convergence rate.
//!
//! All closed forms use cavity-averaged dissipation rates.

use num_complex::Complex64;
use std::f64::consts::SQRT_2;

use crate::error::{Error, Result};
use crate::model::{self, FieldState, OperatingPoint, PhysicalParams};
use crate::stability;
use crate::units;

/// Linear decay rates and frequencies of the two normal modes, rad/s.
///
/// The eigenvalues of the linear matrix are −κ±,₀ − i δω±,₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalModeRates {
    pub kappa_plus0: f64,
    pub kappa_minus0: f64,
    pub domega_plus0: f64,
    pub domega_minus0: f64,
}

impl NormalModeRates {
    /// |δω₊,₀ − δω₋,₀|, the normal-mode splitting.
    pub fn splitting(&self) -> f64 {
        (self.domega_plus0 - self.domega_minus0).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcSolution {
    /// Steady photon number of each cavity on the limit cycle.
    pub n_lc: f64,
    /// ω_c − ω_LC, rad/s.
    pub domega_lc: f64,
    /// Local convergence rate towards the cycle, 1/s.
    pub kappa_lc: f64,
}

/// β± = (±e^(iφ/2) α₁ − α₂)/√2.
pub fn normal_modes(state: &FieldState, phi: f64) -> (Complex64, Complex64) {
    let rot = Complex64::from_polar(1.0, 0.5 * phi);
    let plus = (rot * state.a1 - state.a2) / SQRT_2;
    let minus = (-rot * state.a1 - state.a2) / SQRT_2;
    (plus, minus)
}

/// Inverse of [`normal_modes`].
pub fn from_normal_modes(beta_plus: Complex64, beta_minus: Complex64, phi: f64) -> FieldState {
    let a1 = Complex64::from_polar(1.0, -0.5 * phi) * (beta_plus - beta_minus) / SQRT_2;
    let a2 = -(beta_plus + beta_minus) / SQRT_2;
    FieldState::new(a1, a2)
}

pub fn normal_mode_rates(params: &PhysicalParams, op: &OperatingPoint) -> NormalModeRates {
    let p = params.symmetrized();
    let (s, c) = (0.5 * op.phi).sin_cos();
    let j0 = p.j0(op.delta_g_db);
    let k0 = model::kappa0(&p, op.delta_g_db);
    let detuning = p.omega_c - op.omega_d;
    NormalModeRates {
        kappa_plus0: k0 - j0 * s,
        kappa_minus0: k0 + j0 * s,
        domega_plus0: detuning - (j0 + p.j_c) * c,
        domega_minus0: detuning + (j0 + p.j_c) * c,
    }
}

fn is_vacuum_unstable(params: &PhysicalParams, op: &OperatingPoint) -> bool {
    let p = params.symmetrized();
    let undriven = OperatingPoint {
        p_drive_dbm: None,
        ..*op
    };
    !stability::is_stable(&p, &undriven).stable
}

/// Limit-cycle photon number per cavity, or `None` if the vacuum is stable.
pub fn lc_amplitude(params: &PhysicalParams, op: &OperatingPoint) -> Option<f64> {
    if !is_vacuum_unstable(params, op) {
        return None;
    }
    let p = params.symmetrized();
    let k = p.kappa_total_avg();
    let g = units::db_amplitude(op.delta_g_db);
    let s = (0.5 * op.phi).sin();
    let e = p.hbar * p.omega_c;
    let ns = p.n_sat();
    let num = g * (1.0 + s) * (p.kappa_c * p.kappa_c * e * ns + p.kappa_c * p.b_g) - 2.0 * p.b_g * k;
    let n = num / (2.0 * p.kappa_c * e * k);
    // guards against round-off right at the bifurcation
    Some(n.max(ns))
}

/// ω_c − ω_LC in rad/s. Depends only on φ.
pub fn lc_frequency(params: &PhysicalParams, phi: f64) -> f64 {
    let p = params.symmetrized();
    let (s, c) = (0.5 * units::wrap_phase(phi)).sin_cos();
    p.j_c * c + 2.0 * p.kappa_total_avg() * c / (1.0 + s)
}

/// Local exponential rate at which perturbations of the cycle radius decay.
pub fn lc_convergence_rate(params: &PhysicalParams, op: &OperatingPoint) -> Result<f64> {
    if !is_vacuum_unstable(params, op) {
        return Err(Error::domain("no limit cycle: the vacuum is stable"));
    }
    let p = params.symmetrized();
    let k = p.kappa_total_avg();
    let g = units::db_amplitude(op.delta_g_db);
    let s = (0.5 * op.phi).sin();
    let x = g * p.kappa_c * (p.kappa_c * p.omega_c * p.hbar * p.n_sat() + p.b_g) * (1.0 + s);
    Ok(4.0 * (x - 2.0 * p.b_g * k) * k / x)
}

pub fn lc_solution(params: &PhysicalParams, op: &OperatingPoint) -> Option<LcSolution> {
    let n_lc = lc_amplitude(params, op)?;
    Some(LcSolution {
        n_lc,
        domega_lc: lc_frequency(params, op.phi),
        kappa_lc: lc_convergence_rate(params, op).ok()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrator::{dopri5, integrate, IntegratorConfig, SolverOptions};
    use crate::model::Cavity;
    use crate::stability::eig2;
    use proptest::prelude::*;
    use std::f64::consts::{PI, TAU};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Solves f_G(m) = target for m > n_sat by bisection.
    fn invert_compression(p: &PhysicalParams, target: f64) -> f64 {
        let (mut lo, mut hi) = (p.n_sat(), p.n_sat() * 1e6);
        for _ in 0..300 {
            let mid = 0.5 * (lo + hi);
            if model::gain_compression(p, mid) > target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }

    #[test]
    fn normal_mode_examples() {
        let (bp, bm) = normal_modes(&FieldState::zero(), 1.0);
        assert_eq!((bp, bm), (c(0.0, 0.0), c(0.0, 0.0)));
        let (bp, bm) = normal_modes(&FieldState::new(c(1.0, 0.0), c(-1.0, 0.0)), 0.0);
        assert!((bp - c(SQRT_2, 0.0)).norm() < 1e-15);
        assert!(bm.norm() < 1e-15);
    }

    proptest! {
        #[test]
        fn normal_modes_preserve_norm_and_invert(
            re1 in -1e7..1e7f64, im1 in -1e7..1e7f64,
            re2 in -1e7..1e7f64, im2 in -1e7..1e7f64,
            phi in 0.0..TAU,
        ) {
            let s = FieldState::new(c(re1, im1), c(re2, im2));
            let (bp, bm) = normal_modes(&s, phi);
            let (n1, n2) = s.photons();
            let total = n1 + n2;
            prop_assert!((bp.norm_sqr() + bm.norm_sqr() - total).abs() <= 1e-12 * total.max(1.0));
            let back = from_normal_modes(bp, bm, phi);
            let scale = total.sqrt().max(1.0);
            prop_assert!((back.a1 - s.a1).norm() <= 1e-12 * scale);
            prop_assert!((back.a2 - s.a2).norm() <= 1e-12 * scale);
        }

        #[test]
        fn eigenvalues_match_normal_mode_rates(
            dg in -4.6..8.4f64, phi in 0.0..TAU, detune_mhz in -50.0..50.0f64,
        ) {
            let p = PhysicalParams::symmetric();
            let op = OperatingPoint::undriven(&p, dg, phi);
            let op = OperatingPoint { omega_d: p.omega_c + units::mhz(detune_mhz), ..op };
            let r = normal_mode_rates(&p, &op);
            let e = eig2(&model::linear_matrix(&p, &op)).unwrap();
            let expected = [c(-r.kappa_plus0, -r.domega_plus0), c(-r.kappa_minus0, -r.domega_minus0)];
            let scale = p.kappa_c;
            // pair up regardless of ordering
            let direct = (e[0] - expected[0]).norm() + (e[1] - expected[1]).norm();
            let swapped = (e[0] - expected[1]).norm() + (e[1] - expected[0]).norm();
            prop_assert!(direct.min(swapped) < 1e-9 * scale);
            prop_assert!(r.kappa_plus0 <= r.kappa_minus0);
        }

        #[test]
        fn lc_amplitude_none_iff_stable(dg in -4.6..8.4f64, phi in 0.0..TAU) {
            let p = PhysicalParams::symmetric();
            let op = OperatingPoint::undriven(&p, dg, phi);
            let stable = stability::is_stable(&p, &op).stable;
            let n = lc_amplitude(&p, &op);
            prop_assert_eq!(n.is_none(), stable);
            if let Some(n) = n {
                prop_assert!(n >= p.n_sat());
            }
        }

        #[test]
        fn lc_amplitude_matches_inverse_route(phi in 0.0..TAU) {
            let p = PhysicalParams::symmetric();
            let dg = 8.4;
            let op = OperatingPoint::undriven(&p, dg, phi);
            if let Some(n) = lc_amplitude(&p, &op) {
                let s = (0.5 * phi).sin();
                let target = 2.0 * p.kappa_total_avg() / (p.j0(dg) * (1.0 + s));
                let m = invert_compression(&p, target);
                prop_assert!(((n - m) / m).abs() < 1e-9);
                // κ₊ vanishes on the cycle
                let j = model::hopping_j(&p, dg, n).unwrap();
                let k_plus = 2.0 * p.kappa_total(Cavity::One) - j - j * s;
                prop_assert!(k_plus.abs() < 1e-9 * p.kappa_c);
            }
        }
    }

    #[test]
    fn normal_mode_rate_examples() {
        let p = PhysicalParams::symmetric();
        let op = OperatingPoint::undriven(&p, 3.0, PI);
        let r = normal_mode_rates(&p, &op);
        let k0 = model::kappa0(&p, 3.0);
        let j0 = p.j0(3.0);
        assert!((r.kappa_plus0 - (k0 - j0)).abs() < 1e-6);
        assert!(r.domega_plus0.abs() < 1e-6 * p.kappa_c);

        let r = normal_mode_rates(&p, &OperatingPoint::undriven(&p, 8.4, 0.0));
        assert_eq!(r.kappa_plus0, r.kappa_minus0);
        let split = r.splitting();
        assert!((split - 2.0 * (p.j0(8.4) + p.j_c)).abs() < 1e-6 * split);
        assert!((units::to_mhz(split) - 68.7667).abs() < 1e-3);
    }

    #[test]
    fn lc_amplitude_examples() {
        let p = PhysicalParams::symmetric();
        let n = lc_amplitude(&p, &OperatingPoint::undriven(&p, 8.4, PI)).unwrap();
        assert!(((n - 2.701_52e13) / 2.701_52e13).abs() < 1e-5);
        assert!(n > p.n_sat());

        for phi in [0.3, 1.0, PI, 5.0] {
            let t = stability::threshold_gain(&p, phi).unwrap();
            let n = lc_amplitude(&p, &OperatingPoint::undriven(&p, t + 1e-9, phi)).unwrap();
            assert!(((n - p.n_sat()) / p.n_sat()).abs() < 1e-6);
        }
        assert!(lc_amplitude(&p, &OperatingPoint::undriven(&p, 0.0, PI)).is_none());
    }

    #[test]
    fn lc_frequency_examples() {
        let p = PhysicalParams::symmetric();
        assert!(lc_frequency(&p, PI).abs() < 1e-6);
        let f = units::to_mhz(lc_frequency(&p, PI / 2.0));
        let by_hand = 11.5 * 0.5f64.sqrt() + 30.3 * 0.5f64.sqrt() / (1.0 + 0.5f64.sqrt());
        assert!((f - by_hand).abs() < 1e-9);
        assert!((f - 20.6824).abs() < 1e-3);
        for x in [0.1, 0.7, 1.5, 3.0] {
            let a = lc_frequency(&p, PI + x);
            let b = lc_frequency(&p, PI - x);
            assert!((a + b).abs() < 1e-6 * p.kappa_c);
        }
        for phi in [0.2, 2.0, 4.4] {
            assert!((lc_frequency(&p, phi) - lc_frequency(&p, phi + 2.0 * TAU)).abs() < 1e-6);
        }
    }

    #[test]
    fn lc_frequency_is_unstable_mode_frequency_at_threshold() {
        let p = PhysicalParams::symmetric();
        for phi in [0.4, 1.2, 2.0, 4.0, 5.5] {
            let t = stability::threshold_gain(&p, phi).unwrap();
            let r = normal_mode_rates(&p, &OperatingPoint::undriven(&p, t, phi));
            assert!((r.domega_plus0 + lc_frequency(&p, phi)).abs() < 1e-6 * p.kappa_c);
        }
    }

    #[test]
    fn convergence_rate_examples() {
        let p = PhysicalParams::symmetric();
        let stable = OperatingPoint::undriven(&p, 0.0, PI);
        assert!(lc_convergence_rate(&p, &stable).is_err());

        let op = OperatingPoint::undriven(&p, 8.4, PI);
        let k = lc_convergence_rate(&p, &op).unwrap();
        assert!(((k - 1.548_91e8) / 1.548_91e8).abs() < 1e-4);

        // 2 m K_eff c / (b + c m) with m on the cycle
        let n = lc_amplitude(&p, &op).unwrap();
        let cc = p.hbar * p.omega_c * p.kappa_c;
        let general = 2.0 * n * 2.0 * p.kappa_total_avg() * cc / (p.b_g + cc * n);
        assert!(((k - general) / k).abs() < 1e-9);

        let t = stability::threshold_gain(&p, PI).unwrap();
        let at_t = lc_convergence_rate(&p, &OperatingPoint::undriven(&p, t + 1e-12, PI)).unwrap();
        let ns = p.n_sat();
        let limit = 4.0 * p.kappa_total_avg() * cc * ns / (p.b_g + cc * ns);
        assert!(((at_t - limit) / limit).abs() < 1e-6);

        let mut prev = 0.0;
        for i in 1..=100 {
            let dg = t + (8.4 - t) * i as f64 / 100.0;
            let k = lc_convergence_rate(&p, &OperatingPoint::undriven(&p, dg, PI)).unwrap();
            assert!(k > prev);
            prev = k;
        }
    }

    fn cycle_cfg(n: f64, phi: f64, span: f64, samples: usize) -> IntegratorConfig {
        // β₋ = 0 start on the cycle ray, amplitude n per cavity
        let a2 = Complex64::new(n.sqrt(), 0.0);
        let a1 = -Complex64::from_polar(1.0, -0.5 * phi) * a2;
        IntegratorConfig {
            initial_state: FieldState::new(a1, a2),
            n_samples: samples,
            span_kappa_c: span,
            ..IntegratorConfig::default()
        }
    }

    #[test]
    fn simulated_amplitude_matches_closed_form() {
        let p = PhysicalParams::symmetric();
        let op = OperatingPoint::undriven(&p, 8.4, PI);
        let n = lc_amplitude(&p, &op).unwrap();
        let cfg = IntegratorConfig {
            n_samples: 10_000,
            span_kappa_c: 1_000.0,
            ..IntegratorConfig::default()
        };
        let tr = integrate(&p, &op, &cfg).unwrap();
        let got = tr.last().unwrap().a2.norm_sqr();
        assert!(((got - n) / n).abs() < 1e-2, "{got} vs {n}");
    }

    #[test]
    fn beta_minus_ansatz_is_invariant() {
        let p = PhysicalParams::symmetric();
        let phi = 2.0;
        let op = OperatingPoint::undriven(&p, 8.0, phi);
        let cfg = cycle_cfg(1e12, phi, 300.0, 3_000);
        let tr = integrate(&p, &op, &cfg).unwrap();
        for s in &tr.states {
            let (bp, bm) = normal_modes(s, phi);
            assert!(bm.norm() < 1e-6 * bp.norm());
        }
    }

    #[test]
    fn perturbation_decays_at_convergence_rate() {
        let p = PhysicalParams::symmetric();
        let phi = PI;
        let op = OperatingPoint::undriven(&p, 8.4, phi);
        let n = lc_amplitude(&p, &op).unwrap();
        let k_lc = lc_convergence_rate(&p, &op).unwrap();
        let r_lc = (2.0 * n).sqrt();

        // small radial kick along the β₊ direction, sampled over a few 1/κ_LC
        let t_end = 4.0 / k_lc;
        let a2 = Complex64::new((1.01 * n).sqrt(), 0.0);
        let a1 = -Complex64::from_polar(1.0, -0.5 * phi) * a2;
        let o = SolverOptions {
            rel_tol: 1e-11,
            abs_tol: 1e-3,
            max_step: t_end / 100.0,
        };
        let eq = crate::integrator::real_rhs(&p, &op);
        let ys = dopri5(|_t, y: &[f64; 4]| eq(y), FieldState::new(a1, a2).to_real(), t_end, 201, &o)
            .unwrap();
        // least-squares slope of ln|R₊ − R_LC|
        let pts: Vec<(f64, f64)> = ys
            .iter()
            .enumerate()
            .map(|(k, y)| {
                let (bp, _) = normal_modes(&FieldState::from_real(*y), phi);
                (t_end * k as f64 / 200.0, (bp.norm() - r_lc).abs().ln())
            })
            .collect();
        let m = pts.len() as f64;
        let (sx, sy) = pts.iter().fold((0.0, 0.0), |a, p| (a.0 + p.0, a.1 + p.1));
        let (mx, my) = (sx / m, sy / m);
        let num: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let den: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let rate = -num / den;
        assert!(((rate - k_lc) / k_lc).abs() < 0.1, "fit {rate:e}, closed form {k_lc:e}");
    }
}
