use std::collections::BTreeMap;

use super::{collect_grid, parallel_map, run_id, Axis, SweepGrid};
use crate::error::Result;
use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{self, OperatingPoint, PhysicalParams};
use crate::spectral::{self, DEFAULT_DISCARD};
use crate::stability;
use crate::units;

/// Drive frequencies from 5.98 to 6.09 GHz every `step_mhz`, rad/s.
pub fn default_drive_grid(step_mhz: f64) -> Vec<f64> {
    let n = ((6.09e3 - 5.98e3) / step_mhz).round() as usize + 1;
    super::linspace(units::ghz(5.98), units::ghz(6.09), n)
}

/// S21 of the linear model, from the closed-form steady state −A₀⁻¹εB.
pub fn linear_s21_db(params: &PhysicalParams, op: &OperatingPoint) -> Option<f64> {
    let eq = model::linear_equilibrium(params, op)?;
    spectral::s21_db(params, eq.a2, model::drive_strength(params, op)).ok()
}

/// S21 (dB) over drive frequency × ΔG at fixed φ and drive power.
///
/// axis1 is the drive frequency in GHz, axis2 is ΔG in dB.
pub fn transmission_sweep(
    params: &PhysicalParams,
    phi: f64,
    delta_g_list: &[f64],
    omega_d_grid: &[f64],
    p_d_dbm: f64,
    cfg: &IntegratorConfig,
    workers: usize,
) -> Result<SweepGrid> {
    params.validate()?;
    cfg.validate()?;
    for &dg in delta_g_list {
        let undriven = OperatingPoint::undriven(params, dg, phi);
        if !stability::is_stable(params, &undriven).stable {
            continue;
        }
        let saturating = omega_d_grid.iter().any(|&w| {
            let op = OperatingPoint::driven(dg, phi, w, p_d_dbm);
            model::linear_equilibrium(params, &op)
                .is_some_and(|eq| eq.a1.norm_sqr().max(eq.a2.norm_sqr()) > params.n_sat())
        });
        if saturating {
            log::warn!("P_d = {p_d_dbm} dBm drives ΔG = {dg} dB past saturation; S21 is not linear");
        }
    }

    let n2 = delta_g_list.len();
    let results = parallel_map(omega_d_grid.len() * n2, workers, |k| {
        let op = OperatingPoint::driven(delta_g_list[k % n2], phi, omega_d_grid[k / n2], p_d_dbm);
        let traj = integrate(params, &op, cfg)?;
        let dc = spectral::dc_component(&traj, DEFAULT_DISCARD)?;
        spectral::s21_db(params, dc, traj.epsilon)
    })?;

    let id = run_id(&format!(
        "transmission|{params:?}|{phi}|{delta_g_list:?}|{omega_d_grid:?}|{p_d_dbm}|{cfg:?}"
    ));
    let mut fixed = BTreeMap::new();
    fixed.insert("phi_rad".to_string(), phi);
    fixed.insert("p_d_dbm".to_string(), p_d_dbm);
    Ok(collect_grid(
        "s21_db",
        Axis::new("drive_freq_ghz", omega_d_grid.iter().map(|&w| units::to_ghz(w)).collect()),
        Axis::new("delta_g_db", delta_g_list.to_vec()),
        results,
        id,
        fixed,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> IntegratorConfig {
        IntegratorConfig {
            n_samples: 20_000,
            span_kappa_c: 2_000.0,
            ..IntegratorConfig::default()
        }
    }

    #[test]
    fn default_grid_covers_band() {
        let g = default_drive_grid(1.0);
        assert_eq!(g.len(), 111);
        assert!((units::to_ghz(g[0]) - 5.98).abs() < 1e-12);
        assert!((units::to_ghz(g[110]) - 6.09).abs() < 1e-12);
    }

    #[test]
    fn stable_cells_match_linear_solve() {
        let p = PhysicalParams::default();
        let grid: Vec<f64> = [6.00, 6.027, 6.05].iter().map(|&g| units::ghz(g)).collect();
        let dgs = [0.0, 3.0];
        for phi in [0.0, PI] {
            let g = transmission_sweep(&p, phi, &dgs, &grid, -30.0, &cfg(), 2).unwrap();
            assert_eq!(g.invalid_count(), 0);
            for (i, &w) in grid.iter().enumerate() {
                for (j, &dg) in dgs.iter().enumerate() {
                    let oracle = linear_s21_db(&p, &OperatingPoint::driven(dg, phi, w, -30.0)).unwrap();
                    let lin = |db: f64| 10f64.powf(db / 10.0);
                    let rel = (lin(g.get(i, j)) - lin(oracle)).abs() / lin(oracle);
                    assert!(rel < 1e-2, "φ {phi}, ω {w}, ΔG {dg}: {rel}");
                }
            }
        }
    }

    #[test]
    fn linear_transmission_symmetric_at_phi_zero() {
        let p = PhysicalParams::symmetric();
        for d in [5.0, 20.0, 34.0] {
            let lo = linear_s21_db(&p, &OperatingPoint::driven(6.0, 0.0, p.omega_c - units::mhz(d), -30.0));
            let hi = linear_s21_db(&p, &OperatingPoint::driven(6.0, 0.0, p.omega_c + units::mhz(d), -30.0));
            assert!((lo.unwrap() - hi.unwrap()).abs() < 1e-9);
        }
    }

    #[test]
    fn sweep_is_deterministic() {
        let p = PhysicalParams::default();
        let grid = vec![units::ghz(6.02), units::ghz(6.03)];
        let a = transmission_sweep(&p, 0.5, &[1.0], &grid, -30.0, &cfg(), 1).unwrap();
        let b = transmission_sweep(&p, 0.5, &[1.0], &grid, -30.0, &cfg(), 2).unwrap();
        assert_eq!(a.to_csv_string(), b.to_csv_string());
        assert_eq!(a.metadata.run_id, b.metadata.run_id);
    }
}
