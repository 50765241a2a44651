//! Batch drivers over (φ, ΔG, ω_d, P_d) grids and the post-processing they
//! need: peak counting and Lorentzian fits.

mod lorentzian;
mod peaks;
mod phase_diagram;
mod sync;
mod transmission;

pub use lorentzian::{lorentzian_fit, LorentzianFit, LorentzianPeak};
pub use peaks::{peak_count, peak_count_with, PeakOptions};
pub use phase_diagram::{default_delta_g_grid, default_phi_grid, lc_phase_diagram, PhaseDiagram};
pub use sync::{drive_frequency_sweep, sync_power_contours, DriveSweep, LockingWindow};
pub use transmission::{default_drive_grid, linear_s21_db, transmission_sweep};

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    /// Column name including the unit, e.g. `phi_rad`.
    pub name: String,
    pub values: Vec<f64>,
}

impl Axis {
    pub fn new(name: impl Into<String>, values: Vec<f64>) -> Self {
        Axis {
            name: name.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunMetadata {
    /// Hash of everything that determines the result.
    pub run_id: String,
    /// Fixed knobs of the sweep.
    pub fixed: BTreeMap<String, f64>,
    /// Per-cell failure messages, `(axis1 index, axis2 index, message)`.
    pub errors: Vec<(usize, usize, String)>,
}

/// Observable sampled on a 2-D grid, stored with axis1 as the slow index.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepGrid {
    /// Name and unit of the observable, e.g. `amp_dbm`.
    pub quantity: String,
    pub axis1: Axis,
    pub axis2: Axis,
    pub cells: Vec<f64>,
    pub valid: Vec<bool>,
    pub metadata: RunMetadata,
}

impl SweepGrid {
    pub fn shape(&self) -> (usize, usize) {
        (self.axis1.len(), self.axis2.len())
    }

    fn index(&self, i: usize, j: usize) -> usize {
        i * self.axis2.len() + j
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.cells[self.index(i, j)]
    }

    pub fn is_valid(&self, i: usize, j: usize) -> bool {
        self.valid[self.index(i, j)]
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// Long-form CSV: one row per cell.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{},{},{},valid", self.axis1.name, self.axis2.name, self.quantity)?;
        for (i, a) in self.axis1.values.iter().enumerate() {
            for (j, b) in self.axis2.values.iter().enumerate() {
                let k = self.index(i, j);
                writeln!(w, "{a},{b},{},{}", self.cells[k], self.valid[k] as u8)?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// JSON sidecar with the run metadata and a wall-clock stamp.
    pub fn metadata_json(&self) -> String {
        let created = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let doc = serde_json::json!({
            "run_id": self.metadata.run_id,
            "quantity": self.quantity,
            "axis1": self.axis1.name,
            "axis2": self.axis2.name,
            "shape": [self.axis1.len(), self.axis2.len()],
            "invalid_cells": self.invalid_count(),
            "fixed": self.metadata.fixed,
            "errors": self.metadata.errors,
            "created_unix_s": created,
            "version": env!("CARGO_PKG_VERSION"),
        });
        serde_json::to_string_pretty(&doc).expect("serializable metadata")
    }

    /// Full grid (values included) as JSON, without timestamps.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable grid")
    }
}

/// Short hex digest of a canonical description of a run.
pub fn run_id(description: &str) -> String {
    let digest = Sha256::digest(description.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

/// Evaluates `f` on `0..n` with at most `workers` threads, preserving order.
pub(crate) fn parallel_map<T, F>(n: usize, workers: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    Ok(pool.install(|| (0..n).into_par_iter().map(&f).collect()))
}

/// Assembles a grid from per-cell results; failed cells become invalid NaNs.
pub(crate) fn collect_grid(
    quantity: &str,
    axis1: Axis,
    axis2: Axis,
    results: Vec<Result<f64>>,
    run_id: String,
    fixed: BTreeMap<String, f64>,
) -> SweepGrid {
    let n2 = axis2.len();
    let mut cells = Vec::with_capacity(results.len());
    let mut valid = Vec::with_capacity(results.len());
    let mut errors = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(v) => {
                cells.push(v);
                valid.push(v.is_finite());
            }
            Err(e) => {
                log::warn!("cell ({}, {}) failed: {e}", k / n2, k % n2);
                errors.push((k / n2, k % n2, e.to_string()));
                cells.push(f64::NAN);
                valid.push(false);
            }
        }
    }
    SweepGrid {
        quantity: quantity.into(),
        axis1,
        axis2,
        cells,
        valid,
        metadata: RunMetadata {
            run_id,
            fixed,
            errors,
        },
    }
}

/// `n` evenly spaced points on [lo, hi], both ends included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> SweepGrid {
        collect_grid(
            "amp_dbm",
            Axis::new("phi_rad", vec![0.0, 1.0]),
            Axis::new("delta_g_db", vec![4.0, 5.0, 6.0]),
            vec![Ok(1.0), Ok(2.0), Err(Error::domain("boom")), Ok(4.0), Ok(f64::NAN), Ok(6.0)],
            run_id("x"),
            BTreeMap::new(),
        )
    }

    #[test]
    fn grid_layout_and_validity() {
        let g = grid();
        assert_eq!(g.shape(), (2, 3));
        assert_eq!(g.get(1, 0), 4.0);
        assert!(!g.is_valid(0, 2));
        assert!(!g.is_valid(1, 1));
        assert_eq!(g.invalid_count(), 2);
        assert_eq!(g.metadata.errors.len(), 1);
    }

    #[test]
    fn csv_long_form() {
        let csv = grid().to_csv_string();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "phi_rad,delta_g_db,amp_dbm,valid");
        assert_eq!(lines.len(), 7);
        assert_eq!(lines[1], "0,4,1,1");
        assert_eq!(lines[3], "0,6,NaN,0");
    }

    #[test]
    fn run_id_is_stable() {
        assert_eq!(run_id("abc"), run_id("abc"));
        assert_ne!(run_id("abc"), run_id("abd"));
        assert_eq!(run_id("abc").len(), 16);
    }

    #[test]
    fn linspace_ends() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
        assert!(linspace(0.0, 1.0, 0).is_empty());
    }

    #[test]
    fn parallel_map_keeps_order() {
        let v = parallel_map(100, 3, |i| i * i).unwrap();
        assert_eq!(v[7], 49);
        assert_eq!(v.len(), 100);
    }
}
