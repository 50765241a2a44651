//! Linear stability of the vacuum: eigenvalues of A₀, the closed-form
//! criterion J₀ sin(φ/2) / κ₀ < 1, and the instability threshold ΔG*(φ).

use num_complex::Complex64;
use std::f64::consts::TAU;

use crate::error::{Error, Result};
use crate::mat2::Mat2;
use crate::model::{self, DissipationModel, OperatingPoint, PhysicalParams};

/// Loss-dominated (I, always stable) or gain-dominated (II) part of the phase diagram.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Region {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// max Re σ(A₀), rad/s.
    pub max_re_eigenvalue: f64,
    /// Decided by the eigenvalues.
    pub stable: bool,
    pub region: Region,
    /// J₀ sin(φ/2) / κ₀.
    pub criterion_lhs: f64,
    /// κ₀(ΔG), rad/s.
    pub kappa0: f64,
    /// J₀(ΔG), rad/s.
    pub j0: f64,
}

impl StabilityReport {
    /// Verdict of the closed-form criterion; `None` where it does not apply (κ₀ ≤ 0).
    pub fn criterion_stable(&self) -> Option<bool> {
        (self.kappa0 > 0.0).then_some(self.criterion_lhs < 1.0)
    }
}

/// Eigenvalues of a 2×2 complex matrix, ordered by descending real part.
pub fn eig2(m: &Mat2) -> Result<[Complex64; 2]> {
    if !m.is_finite() {
        return Err(Error::domain("matrix has non-finite entries"));
    }
    let half_tr = 0.5 * m.trace();
    let half_diff = 0.5 * (m[(0, 0)] - m[(1, 1)]);
    let disc = (half_diff * half_diff + m[(0, 1)] * m[(1, 0)]).sqrt();
    let (l1, l2) = (half_tr + disc, half_tr - disc);
    Ok(if l1.re >= l2.re { [l1, l2] } else { [l2, l1] })
}

/// Stability of the vacuum (undriven) or of the linear equilibrium (driven) at `op`.
pub fn is_stable(params: &PhysicalParams, op: &OperatingPoint) -> StabilityReport {
    let a0 = model::linear_matrix(params, op);
    // A₀ has finite entries for any finite parameter set
    let eig = eig2(&a0).unwrap_or([Complex64::new(f64::NAN, 0.0); 2]);
    let max_re = eig[0].re;
    let j0 = params.j0(op.delta_g_db);
    let kappa0 = model::kappa0(params, op.delta_g_db);
    let criterion_lhs = j0 * (0.5 * op.phi).sin() / kappa0;
    StabilityReport {
        max_re_eigenvalue: max_re,
        stable: max_re < 0.0,
        region: if j0 <= kappa0 { Region::I } else { Region::II },
        criterion_lhs,
        kappa0,
        j0,
    }
}

/// Instability threshold ΔG*(φ) in dB.
///
/// Solves J₀(ΔG) sin(φ/2) = κ₀(ΔG) with cavity-averaged rates. Returns `None`
/// when no threshold exists with κ₀(ΔG*) > 0 (the second normal mode would
/// already be unstable), which for the ΔG-dependent model happens only at φ ≡ 0.
pub fn threshold_gain(params: &PhysicalParams, phi: f64) -> Option<f64> {
    let s = (0.5 * crate::units::wrap_phase(phi)).sin();
    let k = params.kappa_total_avg();
    let ratio = match params.dissipation {
        DissipationModel::DeltaGDependent => 2.0 * k / (params.kappa_c * (1.0 + s)),
        DissipationModel::Constant => {
            if s <= 0.0 {
                return None;
            }
            k / (params.kappa_c * s)
        }
    };
    let dg = 20.0 * ratio.log10();
    (model::kappa0(params, dg) > 0.0 && dg.is_finite()).then_some(dg)
}

/// [`threshold_gain`] restricted to thresholds not above `cap_db`.
pub fn threshold_gain_capped(params: &PhysicalParams, phi: f64, cap_db: f64) -> Option<f64> {
    threshold_gain(params, phi).filter(|&g| g <= cap_db)
}

/// Phase boundary sampled on `n` points of φ ∈ [0, 2π): (φ, ΔG*). Points
/// without a threshold are skipped.
pub fn boundary_curve(params: &PhysicalParams, n: usize) -> Vec<(f64, f64)> {
    (0..n)
        .map(|i| TAU * i as f64 / n as f64)
        .filter_map(|phi| threshold_gain(params, phi).map(|g| (phi, g)))
        .collect()
}
