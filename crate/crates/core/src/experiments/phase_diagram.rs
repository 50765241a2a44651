use std::collections::BTreeMap;
use std::f64::consts::TAU;

use super::{collect_grid, parallel_map, run_id, Axis, SweepGrid};
use crate::error::Result;
use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{OperatingPoint, PhysicalParams};
use crate::spectral::{self, LcObservation};
use crate::units;

/// 60 phases on [0, 2π).
pub fn default_phi_grid() -> Vec<f64> {
    (0..60).map(|i| TAU * i as f64 / 60.0).collect()
}

/// 23 gains on [4.0, 8.4] dB.
pub fn default_delta_g_grid() -> Vec<f64> {
    super::linspace(4.0, 8.4, 23)
}

/// Limit-cycle amplitude and frequency maps over φ × ΔG.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    /// Steady emitted power, dBm; the −44 dBm floor where no cycle is present.
    pub amp_dbm: SweepGrid,
    /// (ω_c − ω_LC)/2π in MHz; invalid (masked) where no cycle is present.
    pub freq_offset_mhz: SweepGrid,
}

/// Undriven runs on every (φ, ΔG) cell followed by limit-cycle extraction.
/// axis1 is φ in rad, axis2 is ΔG in dB.
pub fn lc_phase_diagram(
    params: &PhysicalParams,
    phi_grid: &[f64],
    delta_g_grid: &[f64],
    cfg: &IntegratorConfig,
    workers: usize,
) -> Result<PhaseDiagram> {
    params.validate()?;
    cfg.validate()?;
    let n2 = delta_g_grid.len();
    let obs: Vec<Result<LcObservation>> = parallel_map(phi_grid.len() * n2, workers, |k| {
        let op = OperatingPoint::undriven(params, delta_g_grid[k % n2], phi_grid[k / n2]);
        let traj = integrate(params, &op, cfg)?;
        spectral::lc_extract(params, &traj)
    })?;

    let id = run_id(&format!("phase-diagram|{params:?}|{phi_grid:?}|{delta_g_grid:?}|{cfg:?}"));
    let amp = obs.iter().map(|o| o.clone().map(|o| o.amp_dbm)).collect();
    let freq = obs
        .iter()
        .map(|o| {
            o.clone()
                .map(|o| if o.present { o.freq_offset * 1e-6 } else { f64::NAN })
        })
        .collect();
    let axis1 = Axis::new("phi_rad", phi_grid.to_vec());
    let axis2 = Axis::new("delta_g_db", delta_g_grid.to_vec());
    let mut fixed = BTreeMap::new();
    fixed.insert("drive_freq_ghz".to_string(), units::to_ghz(params.omega_c));
    fixed.insert("lc_floor_dbm".to_string(), spectral::LC_FLOOR_DBM);
    Ok(PhaseDiagram {
        amp_dbm: collect_grid("amp_dbm", axis1.clone(), axis2.clone(), amp, id.clone(), fixed.clone()),
        freq_offset_mhz: collect_grid("freq_offset_mhz", axis1, axis2, freq, id, fixed),
    })
}
