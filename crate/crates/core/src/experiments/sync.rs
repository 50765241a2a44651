use std::collections::BTreeMap;

use super::{collect_grid, parallel_map, peaks, run_id, Axis, SweepGrid};
use crate::error::{Error, Result};
use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{OperatingPoint, PhysicalParams};
use crate::spectral::{self, Spectrum, Window, DEFAULT_DISCARD};
use crate::units;

fn driven_spectrum(
    params: &PhysicalParams,
    op: &OperatingPoint,
    cfg: &IntegratorConfig,
) -> Result<Spectrum> {
    let traj = integrate(params, op, cfg)?;
    spectral::spectrum_windowed(params, &traj, DEFAULT_DISCARD, Window::Hann)
}

/// Peak-count maps over φ × ΔG, one per drive power, with ω_d = ω_c.
/// Cells with two or more peaks hold coexisting drive and limit-cycle tones.
pub fn sync_power_contours(
    params: &PhysicalParams,
    phi_grid: &[f64],
    delta_g_grid: &[f64],
    p_d_list: &[f64],
    cfg: &IntegratorConfig,
    workers: usize,
) -> Result<Vec<SweepGrid>> {
    params.validate()?;
    cfg.validate()?;
    let n2 = delta_g_grid.len();
    p_d_list
        .iter()
        .map(|&p_d| {
            let counts = parallel_map(phi_grid.len() * n2, workers, |k| {
                let op = OperatingPoint::driven(delta_g_grid[k % n2], phi_grid[k / n2], params.omega_c, p_d);
                driven_spectrum(params, &op, cfg).map(|s| peaks::peak_count(&s) as f64)
            })?;
            let id = run_id(&format!("sync|{params:?}|{phi_grid:?}|{delta_g_grid:?}|{p_d}|{cfg:?}"));
            let mut fixed = BTreeMap::new();
            fixed.insert("p_d_dbm".to_string(), p_d);
            fixed.insert("drive_freq_ghz".to_string(), units::to_ghz(params.omega_c));
            Ok(collect_grid(
                "peak_count",
                Axis::new("phi_rad", phi_grid.to_vec()),
                Axis::new("delta_g_db", delta_g_grid.to_vec()),
                counts,
                id,
                fixed,
            ))
        })
        .collect()
}

/// Contiguous range of drive frequencies over which the output is a single tone.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LockingWindow {
    /// Lowest and highest locked grid point, rad/s.
    pub lo: f64,
    pub hi: f64,
    /// hi − lo plus one grid step, rad/s.
    pub width: f64,
}

/// Spectra of a sweep of the drive frequency at fixed (φ, ΔG, P_d).
#[derive(Debug, Clone, PartialEq)]
pub struct DriveSweep {
    pub omega_d: Vec<f64>,
    pub p_d_dbm: f64,
    /// Shared bin frequencies of all spectra, Hz (rotating frame).
    pub freq_hz: Vec<f64>,
    /// Hann-windowed power spectrum per drive frequency; empty on failure.
    pub power_dbm: Vec<Vec<f64>>,
    pub peak_counts: Vec<Option<usize>>,
    /// Power in the drive bin (DC of the rotating frame), dBm.
    pub drive_power_dbm: Vec<f64>,
    pub errors: Vec<(usize, String)>,
}

impl DriveSweep {
    /// The run of single-peak drive frequencies containing the grid point
    /// nearest `center`. `None` if that point is not single-peaked.
    pub fn locking_window(&self, center: f64) -> Option<LockingWindow> {
        let n = self.omega_d.len();
        let c = (0..n).min_by(|&a, &b| {
            (self.omega_d[a] - center)
                .abs()
                .total_cmp(&(self.omega_d[b] - center).abs())
        })?;
        let locked = |i: usize| self.peak_counts[i] == Some(1);
        if !locked(c) {
            return None;
        }
        let (mut lo, mut hi) = (c, c);
        while lo > 0 && locked(lo - 1) {
            lo -= 1;
        }
        while hi + 1 < n && locked(hi + 1) {
            hi += 1;
        }
        let step = if n > 1 {
            (self.omega_d[n - 1] - self.omega_d[0]).abs() / (n - 1) as f64
        } else {
            0.0
        };
        Some(LockingWindow {
            lo: self.omega_d[lo],
            hi: self.omega_d[hi],
            width: (self.omega_d[hi] - self.omega_d[lo]).abs() + step,
        })
    }

    /// Writes `drive_freq_ghz,peak_count,drive_power_dbm` rows.
    pub fn write_summary_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "drive_freq_ghz,peak_count,drive_power_dbm")?;
        for i in 0..self.omega_d.len() {
            let count = self.peak_counts[i].map(|c| c as i64).unwrap_or(-1);
            writeln!(w, "{},{},{}", units::to_ghz(self.omega_d[i]), count, self.drive_power_dbm[i])?;
        }
        Ok(())
    }
}

/// Driven runs across `omega_d_grid` at one operating point and power.
pub fn drive_frequency_sweep(
    params: &PhysicalParams,
    phi: f64,
    delta_g_db: f64,
    p_d_dbm: f64,
    omega_d_grid: &[f64],
    cfg: &IntegratorConfig,
    workers: usize,
) -> Result<DriveSweep> {
    params.validate()?;
    cfg.validate()?;
    if omega_d_grid.is_empty() {
        return Err(Error::domain("empty drive-frequency grid"));
    }
    let spectra = parallel_map(omega_d_grid.len(), workers, |i| {
        let op = OperatingPoint::driven(delta_g_db, phi, omega_d_grid[i], p_d_dbm);
        driven_spectrum(params, &op, cfg)
    })?;

    let mut out = DriveSweep {
        omega_d: omega_d_grid.to_vec(),
        p_d_dbm,
        freq_hz: Vec::new(),
        power_dbm: Vec::with_capacity(spectra.len()),
        peak_counts: Vec::with_capacity(spectra.len()),
        drive_power_dbm: Vec::with_capacity(spectra.len()),
        errors: Vec::new(),
    };
    for (i, s) in spectra.into_iter().enumerate() {
        match s {
            Ok(s) => {
                let dc = s.freq.iter().position(|&f| f == 0.0).unwrap_or(0);
                out.peak_counts.push(Some(peaks::peak_count(&s)));
                out.drive_power_dbm.push(s.power_dbm[dc]);
                if out.freq_hz.is_empty() {
                    out.freq_hz = s.freq;
                }
                out.power_dbm.push(s.power_dbm);
            }
            Err(e) => {
                log::warn!("drive point {i} failed: {e}");
                out.errors.push((i, e.to_string()));
                out.peak_counts.push(None);
                out.drive_power_dbm.push(f64::NAN);
                out.power_dbm.push(Vec::new());
            }
        }
    }
    Ok(out)
}
