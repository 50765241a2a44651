//! Device parameters and the algebraic building blocks of the coupled-mode
//! equations of motion: saturable hopping, on-site dissipation, the
//! phase-dependent coherent coupling and the 2×2 dynamical matrices.
//!
//! Everything in here is stored in SI units with angular rates (rad/s).
//! Conversions from the MHz/GHz/mW values used in configuration files live in
//! [`crate::units`] and [`crate::config`].

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::units::{self, HBAR};

/// Soft bounds of the net hopping gain reachable on the device, dB.
pub const DELTA_G_RANGE_DB: (f64, f64) = (-4.6, 8.4);

/// Which on-site dissipation law enters the diagonal of the dynamical matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum DissipationModel {
    /// `2(κ_int + κ_in/out + κ_c) − J(ΔG, n)`: loss is partly compensated by the hopping gain.
    #[default]
    DeltaGDependent,
    /// `κ_int + κ_in/out + κ_c`, independent of gain and amplitude.
    Constant,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Cavity {
    /// Driven cavity (coupled to the input port).
    One,
    /// Read-out cavity (coupled to the output port).
    Two,
}

impl Cavity {
    fn index(self) -> usize {
        match self {
            Cavity::One => 0,
            Cavity::Two => 1,
        }
    }
}

/// Fixed device rates, gains and saturation constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalParams {
    /// Common cavity resonance, rad/s.
    pub omega_c: f64,
    /// Internal loss of cavity 1 and cavity 2, rad/s.
    pub kappa_int: [f64; 2],
    /// Drive-port coupling (cavity 1), rad/s.
    pub kappa_in: f64,
    /// Read-out-port coupling (cavity 2), rad/s.
    pub kappa_out: f64,
    /// Inter-cavity coupling, rad/s.
    pub kappa_c: f64,
    /// Strength of the additional coherent coupling, rad/s.
    pub j_c: f64,
    /// Characteristic amplifier gain, dB.
    pub g0_db: f64,
    /// Gain-curvature constant, W.
    pub b_g: f64,
    /// Amplifier saturation power, W.
    pub p_sat: f64,
    pub hbar: f64,
    pub dissipation: DissipationModel,
}

impl Default for PhysicalParams {
    /// The per-cavity values used for the time-domain simulations.
    fn default() -> Self {
        PhysicalParams {
            omega_c: units::ghz(6.027),
            kappa_int: [units::mhz(4.1), units::mhz(4.0)],
            kappa_in: units::mhz(2.5),
            kappa_out: units::mhz(2.3),
            kappa_c: units::mhz(8.7),
            j_c: units::mhz(11.5),
            g0_db: 20.3,
            b_g: 8.6e-3,
            p_sat: 0.9981e-3,
            hbar: HBAR,
            dissipation: DissipationModel::DeltaGDependent,
        }
    }
}

impl PhysicalParams {
    /// Equal-dissipation preset used by the closed-form analytics:
    /// κ_int/2π = 4.05 MHz and κ_in/out/2π = 2.4 MHz for both cavities.
    pub fn symmetric() -> Self {
        PhysicalParams {
            kappa_int: [units::mhz(4.05), units::mhz(4.05)],
            kappa_in: units::mhz(2.4),
            kappa_out: units::mhz(2.4),
            ..PhysicalParams::default()
        }
    }

    /// Copy of `self` with both cavities set to the average of their rates.
    pub fn symmetrized(&self) -> Self {
        let k_int = 0.5 * (self.kappa_int[0] + self.kappa_int[1]);
        let k_io = 0.5 * (self.kappa_in + self.kappa_out);
        PhysicalParams {
            kappa_int: [k_int, k_int],
            kappa_in: k_io,
            kappa_out: k_io,
            ..*self
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.kappa_int[0] == self.kappa_int[1] && self.kappa_in == self.kappa_out
    }

    /// Saturation photon number |α_sat|² = P_sat / (ħ ω_c κ_c).
    pub fn n_sat(&self) -> f64 {
        self.p_sat / (self.hbar * self.omega_c * self.kappa_c)
    }

    /// Port coupling attached to a cavity (κ_in for cavity 1, κ_out for cavity 2).
    pub fn kappa_port(&self, cavity: Cavity) -> f64 {
        match cavity {
            Cavity::One => self.kappa_in,
            Cavity::Two => self.kappa_out,
        }
    }

    /// κ_int + κ_in/out + κ_c of one cavity.
    pub fn kappa_total(&self, cavity: Cavity) -> f64 {
        self.kappa_int[cavity.index()] + self.kappa_port(cavity) + self.kappa_c
    }

    /// Cavity-averaged κ_int + κ_in/out + κ_c.
    pub fn kappa_total_avg(&self) -> f64 {
        0.5 * (self.kappa_total(Cavity::One) + self.kappa_total(Cavity::Two))
    }

    /// Linear hopping rate J₀(ΔG) = κ_c · 10^(ΔG/20).
    pub fn j0(&self, delta_g_db: f64) -> f64 {
        self.kappa_c * units::db_amplitude(delta_g_db)
    }

    /// Checks the physical invariants: positive rates, gains and powers.
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("omega_c", self.omega_c),
            ("kappa_int_1", self.kappa_int[0]),
            ("kappa_int_2", self.kappa_int[1]),
            ("kappa_in", self.kappa_in),
            ("kappa_out", self.kappa_out),
            ("kappa_c", self.kappa_c),
            ("b_g", self.b_g),
            ("p_sat", self.p_sat),
            ("hbar", self.hbar),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(self.j_c.is_finite() && self.j_c >= 0.0) {
            return Err(Error::Config(format!("j_c must be finite and >= 0, got {}", self.j_c)));
        }
        if !self.g0_db.is_finite() {
            return Err(Error::Config("g0_db must be finite".into()));
        }
        let n_sat = self.n_sat();
        if !(n_sat.is_finite() && n_sat > 0.0) {
            return Err(Error::Config(format!("derived n_sat = {n_sat} is not positive")));
        }
        Ok(())
    }
}

/// The tunable knobs: net gain, phase, drive tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperatingPoint {
    /// Net hopping gain ΔG = G₀ − Γ, dB.
    pub delta_g_db: f64,
    /// Phase of the backward hopping path, wrapped to [0, 2π).
    pub phi: f64,
    /// Drive angular frequency, rad/s (= ω_c for undriven runs).
    pub omega_d: f64,
    /// Drive power, dBm. `None` means no drive.
    pub p_drive_dbm: Option<f64>,
}

impl OperatingPoint {
    pub fn new(delta_g_db: f64, phi: f64, omega_d: f64, p_drive_dbm: Option<f64>) -> Self {
        let (lo, hi) = DELTA_G_RANGE_DB;
        if delta_g_db < lo || delta_g_db > hi {
            log::warn!("ΔG = {delta_g_db} dB is outside the device range [{lo}, {hi}] dB");
        }
        OperatingPoint {
            delta_g_db,
            phi: units::wrap_phase(phi),
            omega_d,
            p_drive_dbm,
        }
    }

    /// Undriven operating point in the frame rotating at ω_c.
    pub fn undriven(params: &PhysicalParams, delta_g_db: f64, phi: f64) -> Self {
        OperatingPoint::new(delta_g_db, phi, params.omega_c, None)
    }

    pub fn driven(delta_g_db: f64, phi: f64, omega_d: f64, p_drive_dbm: f64) -> Self {
        OperatingPoint::new(delta_g_db, phi, omega_d, Some(p_drive_dbm))
    }

    pub fn is_driven(&self) -> bool {
        self.p_drive_dbm.is_some()
    }
}

/// Complex field amplitudes of the two cavities (units of √photons).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FieldState {
    pub a1: Complex64,
    pub a2: Complex64,
}

impl FieldState {
    pub fn new(a1: Complex64, a2: Complex64) -> Self {
        FieldState { a1, a2 }
    }

    pub fn zero() -> Self {
        FieldState::default()
    }

    /// Real embedding `[Re α₁, Im α₁, Re α₂, Im α₂]`.
    pub fn to_real(self) -> [f64; 4] {
        [self.a1.re, self.a1.im, self.a2.re, self.a2.im]
    }

    pub fn from_real(y: [f64; 4]) -> Self {
        FieldState {
            a1: Complex64::new(y[0], y[1]),
            a2: Complex64::new(y[2], y[3]),
        }
    }

    pub fn as_array(self) -> [Complex64; 2] {
        [self.a1, self.a2]
    }

    /// Photon numbers (|α₁|², |α₂|²).
    pub fn photons(&self) -> (f64, f64) {
        (self.a1.norm_sqr(), self.a2.norm_sqr())
    }

    pub fn is_finite(&self) -> bool {
        self.a1.is_finite() && self.a2.is_finite()
    }
}

/// Drive strength ε = √(κ_in P_in / ħω_d), with P_in converted from dBm. Zero when undriven.
pub fn drive_strength(params: &PhysicalParams, op: &OperatingPoint) -> f64 {
    match op.p_drive_dbm {
        Some(p_dbm) => {
            (params.kappa_in * units::dbm_to_watts(p_dbm) / (params.hbar * op.omega_d)).sqrt()
        }
        None => 0.0,
    }
}

/// Amplifier compression factor f_G(n): 1 up to n_sat, then
/// (b_G + ħω_c n_sat κ_c) / (b_G + ħω_c n κ_c).
pub fn gain_compression(params: &PhysicalParams, n: f64) -> f64 {
    let n_sat = params.n_sat();
    if n <= n_sat {
        1.0
    } else {
        let e = params.hbar * params.omega_c * params.kappa_c;
        (params.b_g + e * n_sat) / (params.b_g + e * n)
    }
}

fn hopping_unchecked(params: &PhysicalParams, delta_g_db: f64, n: f64) -> f64 {
    params.j0(delta_g_db) * gain_compression(params, n)
}

/// Saturable hopping rate J(ΔG, n) = κ_c 10^(ΔG/20) f_G(n), rad/s.
pub fn hopping_j(params: &PhysicalParams, delta_g_db: f64, n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::domain(format!("photon number must be >= 0, got {n}")));
    }
    Ok(hopping_unchecked(params, delta_g_db, n))
}

fn kappa_unchecked(
    params: &PhysicalParams,
    delta_g_db: f64,
    n: f64,
    cavity: Cavity,
    model: DissipationModel,
) -> f64 {
    match model {
        DissipationModel::DeltaGDependent => {
            2.0 * params.kappa_total(cavity) - hopping_unchecked(params, delta_g_db, n)
        }
        DissipationModel::Constant => params.kappa_total(cavity),
    }
}

/// Effective on-site dissipation of one cavity, rad/s.
pub fn kappa_eff(
    params: &PhysicalParams,
    delta_g_db: f64,
    n: f64,
    cavity: Cavity,
    model: DissipationModel,
) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::domain(format!("photon number must be >= 0, got {n}")));
    }
    Ok(kappa_unchecked(params, delta_g_db, n, cavity, model))
}

/// Linear on-site dissipation κ₀(ΔG) with cavity-averaged rates.
pub fn kappa0(params: &PhysicalParams, delta_g_db: f64) -> f64 {
    match params.dissipation {
        DissipationModel::DeltaGDependent => {
            2.0 * params.kappa_total_avg() - params.j0(delta_g_db)
        }
        DissipationModel::Constant => params.kappa_total_avg(),
    }
}

/// Coherent coupling correction f(φ) = i J_c cos(φ/2) e^(iφ/2).
pub fn coherent_coupling_f(params: &PhysicalParams, phi: f64) -> Complex64 {
    Complex64::i() * params.j_c * (0.5 * phi).cos() * Complex64::from_polar(1.0, 0.5 * phi)
}

/// Full amplitude-dependent dynamical matrix A(|α₁|², |α₂|²) in the frame rotating at ω_d.
///
/// The 1←2 element carries J(|α₂|²) and the e^(−iφ) phase; the 2←1 element carries J(|α₁|²).
pub fn dynamical_matrix(params: &PhysicalParams, op: &OperatingPoint, state: &FieldState) -> Mat2 {
    let (n1, n2) = state.photons();
    let model = params.dissipation;
    let detuning = Complex64::new(0.0, -(params.omega_c - op.omega_d));
    let f = coherent_coupling_f(params, op.phi);
    let back_phase = Complex64::from_polar(1.0, -op.phi);
    let i = Complex64::i();

    let a11 = detuning - kappa_unchecked(params, op.delta_g_db, n1, Cavity::One, model);
    let a22 = detuning - kappa_unchecked(params, op.delta_g_db, n2, Cavity::Two, model);
    let a12 = (-i * hopping_unchecked(params, op.delta_g_db, n2) - f) * back_phase;
    let a21 = -i * hopping_unchecked(params, op.delta_g_db, n1) - f;
    Mat2::new(a11, a12, a21, a22)
}

/// Linear-model matrix A₀ = A(0, 0).
pub fn linear_matrix(params: &PhysicalParams, op: &OperatingPoint) -> Mat2 {
    dynamical_matrix(params, op, &FieldState::zero())
}

/// Steady state of the linear model, −A₀⁻¹ ε B with B = (1, 0). `None` if A₀ is singular.
pub fn linear_equilibrium(params: &PhysicalParams, op: &OperatingPoint) -> Option<FieldState> {
    let eps = drive_strength(params, op);
    let a0 = linear_matrix(params, op);
    let x = a0.solve([Complex64::new(-eps, 0.0), Complex64::new(0.0, 0.0)])?;
    Some(FieldState::new(x[0], x[1]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn defaults_match_device_table() {
        let p = PhysicalParams::default();
        assert!(rel(units::to_ghz(p.omega_c), 6.027) < 1e-12);
        assert!(rel(units::to_mhz(p.kappa_int[0]), 4.1) < 1e-12);
        assert!(rel(units::to_mhz(p.kappa_int[1]), 4.0) < 1e-12);
        assert!(rel(units::to_mhz(p.kappa_in), 2.5) < 1e-12);
        assert!(rel(units::to_mhz(p.kappa_out), 2.3) < 1e-12);
        assert!(rel(units::to_mhz(p.kappa_c), 8.7) < 1e-12);
        assert!(rel(units::to_mhz(p.j_c), 11.5) < 1e-12);
        assert_eq!(p.g0_db, 20.3);
        assert_eq!(p.b_g, 8.6e-3);
        assert_eq!(p.p_sat, 0.9981e-3);
        p.validate().unwrap();
        assert!(p.n_sat() > 0.0);
    }

    #[test]
    fn symmetric_preset_is_average_of_defaults() {
        let s = PhysicalParams::symmetric();
        let avg = PhysicalParams::default().symmetrized();
        assert!(s.is_symmetric());
        assert!(rel(s.kappa_int[0], avg.kappa_int[0]) < 1e-12);
        assert!(rel(s.kappa_in, avg.kappa_in) < 1e-12);
    }

    #[test]
    fn drive_strength_at_minus_30_dbm() {
        let p = PhysicalParams::default();
        let op = OperatingPoint::driven(0.0, 0.0, p.omega_c, -30.0);
        // independent calculator value
        assert!(rel(drive_strength(&p, &op), 1.983_267_651e12) < 1e-8);

        let op0 = OperatingPoint::driven(0.0, 0.0, p.omega_c, 0.0);
        let ratio = drive_strength(&p, &op0).powi(2) / drive_strength(&p, &op).powi(2);
        assert!(rel(ratio, 1e3) < 1e-12);

        let undriven = OperatingPoint::undriven(&p, 0.0, 0.0);
        assert_eq!(drive_strength(&p, &undriven), 0.0);
    }

    #[test]
    fn hopping_examples() {
        let p = PhysicalParams::default();
        assert_eq!(hopping_j(&p, 0.0, 0.0).unwrap(), p.kappa_c);
        let j = hopping_j(&p, 8.4, 0.0).unwrap();
        assert!(rel(units::to_mhz(j), 22.883_331_53) < 1e-9);
        assert!(hopping_j(&p, 0.0, -1.0).is_err());
        assert!(hopping_j(&p, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn hopping_continuous_at_saturation() {
        let p = PhysicalParams::default();
        let ns = p.n_sat();
        let at = hopping_j(&p, 3.0, ns).unwrap();
        let above = hopping_j(&p, 3.0, ns * (1.0 + 1e-12)).unwrap();
        assert!(rel(above, at) < 1e-9);
        assert!(above <= at);
    }

    #[test]
    fn hopping_reduced_at_twice_saturation() {
        let p = PhysicalParams::default();
        let ns = p.n_sat();
        let j = hopping_j(&p, 8.4, 2.0 * ns).unwrap();
        // f_G(2 n_sat) = (b + P_sat) / (b + 2 P_sat)
        let expected = p.j0(8.4) * (8.6e-3 + 0.9981e-3) / (8.6e-3 + 2.0 * 0.9981e-3);
        assert!(rel(j, expected) < 1e-12);
        let st = FieldState::new(
            Complex64::new((2.0 * ns).sqrt(), 0.0),
            Complex64::new(0.0, (2.0 * ns).sqrt()),
        );
        let op = OperatingPoint::undriven(&p, 8.4, 0.0);
        let a = dynamical_matrix(&p, &op, &st);
        // φ = 0: both off-diagonals are −i J − f(0)
        assert!((a[(0, 1)] - a[(1, 0)]).norm() < 1e-6 * a[(0, 1)].norm());
        assert!(a[(1, 0)].im.abs() < p.j0(8.4) + p.j_c);
    }

    #[test]
    fn kappa_eff_examples() {
        let p = PhysicalParams::default();
        let k = kappa_eff(&p, 0.0, 0.0, Cavity::One, DissipationModel::DeltaGDependent).unwrap();
        let expected = 2.0 * (p.kappa_int[0] + p.kappa_in + p.kappa_c) - p.kappa_c;
        assert!(rel(k, expected) < 1e-12);
        for dg in [-4.6, 0.0, 8.4] {
            let kc = kappa_eff(&p, dg, 1e13, Cavity::Two, DissipationModel::Constant).unwrap();
            assert_eq!(kc, p.kappa_int[1] + p.kappa_out + p.kappa_c);
        }
        assert!(kappa_eff(&p, 0.0, -1.0, Cavity::One, DissipationModel::Constant).is_err());
    }

    #[test]
    fn coherent_coupling_examples() {
        let p = PhysicalParams::default();
        assert!(coherent_coupling_f(&p, PI).norm() < 1e-9 * p.j_c);
        let f0 = coherent_coupling_f(&p, 0.0);
        assert!((f0 - Complex64::new(0.0, p.j_c)).norm() < 1e-12 * p.j_c);
        let fh = coherent_coupling_f(&p, FRAC_PI_2);
        let expected = Complex64::i() * p.j_c * FRAC_PI_4.cos() * Complex64::from_polar(1.0, FRAC_PI_4);
        assert!((fh - expected).norm() < 1e-12 * p.j_c);
        // i·J_c·(1/√2)·(1+i)/√2 = J_c(−1 + i)/2
        assert!((fh - Complex64::new(-0.5 * p.j_c, 0.5 * p.j_c)).norm() < 1e-9 * p.j_c);
    }

    #[test]
    fn linear_limit_without_coherent_term() {
        let p = PhysicalParams {
            j_c: 0.0,
            ..PhysicalParams::symmetric()
        };
        let op = OperatingPoint::undriven(&p, 3.0, 0.0);
        let a = linear_matrix(&p, &op);
        let k0 = 2.0 * p.kappa_total_avg() - p.j0(3.0);
        let j0 = p.j0(3.0);
        assert!((a[(0, 0)] - Complex64::new(-k0, 0.0)).norm() < 1e-6);
        assert!((a[(1, 1)] - Complex64::new(-k0, 0.0)).norm() < 1e-6);
        assert!((a[(0, 1)] - Complex64::new(0.0, -j0)).norm() < 1e-6);
        assert!((a[(1, 0)] - Complex64::new(0.0, -j0)).norm() < 1e-6);
    }

    #[test]
    fn skew_pair_at_pi() {
        let p = PhysicalParams::symmetric();
        let op = OperatingPoint::undriven(&p, 2.0, PI);
        let a = linear_matrix(&p, &op);
        let j0 = p.j0(2.0);
        assert!((a[(0, 1)] - Complex64::new(0.0, j0)).norm() < 1e-8 * j0);
        assert!((a[(1, 0)] - Complex64::new(0.0, -j0)).norm() < 1e-8 * j0);
    }

    #[test]
    fn linear_matrix_is_zero_amplitude_limit() {
        let p = PhysicalParams::default();
        let op = OperatingPoint::driven(5.0, 1.3, units::ghz(6.02), -30.0);
        assert_eq!(linear_matrix(&p, &op), dynamical_matrix(&p, &op, &FieldState::zero()));
    }

    #[test]
    fn phase_is_wrapped() {
        let p = PhysicalParams::default();
        let op = OperatingPoint::undriven(&p, 1.0, -0.5);
        assert!(op.phi >= 0.0 && op.phi < std::f64::consts::TAU);
    }

    #[test]
    fn linear_equilibrium_is_fixed_point() {
        let p = PhysicalParams::default();
        let op = OperatingPoint::driven(2.0, 0.7, units::ghz(6.03), -30.0);
        let eq = linear_equilibrium(&p, &op).unwrap();
        let eps = drive_strength(&p, &op);
        let a0 = linear_matrix(&p, &op);
        let r = a0.mul_vec(eq.as_array());
        assert!((r[0] + eps).norm() < 1e-6 * eps);
        assert!(r[1].norm() < 1e-6 * eps);
    }
}
