//! Spectra and scalar observables of simulated trajectories.
//!
//! Frequencies are reported in the rotating frame. A component of α₂ that
//! evolves as e^(+i 2π f t) sits at bin frequency +f and corresponds to the
//! physical frequency ω_d − 2πf, so for undriven runs (ω_d = ω_c) the bin
//! frequency is directly (ω_c − ω)/2π.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::integrator::Trajectory;
use crate::model::PhysicalParams;

/// Fraction of the trajectory dropped as transient before any analysis.
pub const DEFAULT_DISCARD: f64 = 0.2;
/// Detection threshold and baseline of the limit-cycle amplitude, dBm.
pub const LC_FLOOR_DBM: f64 = -44.0;
/// Value reported for zero power, dBm / dB.
pub const POWER_FLOOR_DB: f64 = -200.0;
/// Vacuum guard: mean |α₂|² below this fraction of n_sat counts as no oscillation.
pub const VACUUM_FRACTION: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// Bin frequencies in ascending order (negative bins first), Hz.
    pub freq: Vec<f64>,
    /// Normalized DFT amplitude y[k]/N of each bin.
    pub amp: Vec<Complex64>,
    /// Power emitted by cavity 2 at each bin, dBm.
    pub power_dbm: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.freq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.freq.is_empty()
    }

    /// Bin spacing, Hz.
    pub fn resolution(&self) -> f64 {
        if self.freq.len() < 2 {
            0.0
        } else {
            self.freq[1] - self.freq[0]
        }
    }

    /// Writes `freq_hz,power_dbm` rows.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "freq_hz,power_dbm")?;
        for (f, p) in self.freq.iter().zip(&self.power_dbm) {
            writeln!(w, "{f},{p}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LcObservation {
    pub present: bool,
    /// Steady emitted power of cavity 2, dBm. Equal to the floor when absent.
    pub amp_dbm: f64,
    /// (ω_c − ω_LC)/2π, Hz. Zero when absent.
    pub freq_offset: f64,
    /// Steady mean |α₂|².
    pub photons: f64,
}

/// Unnormalized forward DFT y[k] = Σ x[n] e^(−2πikn/N).
pub fn dft(x: &[Complex64]) -> Vec<Complex64> {
    let mut buf = x.to_vec();
    if buf.is_empty() {
        return buf;
    }
    let fft = FftPlanner::new().plan_fft_forward(buf.len());
    fft.process(&mut buf);
    buf
}

/// Signed frequency of DFT bin `k` for `n` samples spaced `dt`.
pub fn bin_frequency(k: usize, n: usize, dt: f64) -> f64 {
    let signed = if k < n.div_ceil(2) { k as f64 } else { k as f64 - n as f64 };
    signed / (n as f64 * dt)
}

fn retained(traj: &Trajectory, discard_fraction: f64) -> Result<&[crate::model::FieldState]> {
    if !(0.0..1.0).contains(&discard_fraction) {
        return Err(Error::domain(format!(
            "discard fraction must lie in [0, 1), got {discard_fraction}"
        )));
    }
    let start = (discard_fraction * traj.len() as f64).floor() as usize;
    let kept = &traj.states[start.min(traj.len())..];
    if kept.is_empty() {
        return Err(Error::domain("retained window is empty"));
    }
    Ok(kept)
}

/// Mean of α₂ over the retained window, i.e. y[0]/N_kept.
pub fn dc_component(traj: &Trajectory, discard_fraction: f64) -> Result<Complex64> {
    let kept = retained(traj, discard_fraction)?;
    let sum: Complex64 = kept.iter().map(|s| s.a2).sum();
    Ok(sum / kept.len() as f64)
}

/// Transmission 10 log₁₀(κ_in κ_out |α₂|² / ε²), dB.
pub fn s21_db(params: &PhysicalParams, dc: Complex64, epsilon: f64) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::domain("S21 needs a positive drive strength"));
    }
    let ratio = params.kappa_in * params.kappa_out * dc.norm_sqr() / (epsilon * epsilon);
    Ok(if ratio > 0.0 {
        (10.0 * ratio.log10()).max(POWER_FLOOR_DB)
    } else {
        POWER_FLOOR_DB
    })
}

/// Power ħω_c n κ_out leaving cavity 2, dBm.
pub fn photons_to_dbm(params: &PhysicalParams, n: f64) -> Result<f64> {
    if !(n >= 0.0) {
        return Err(Error::domain(format!("photon number must be >= 0, got {n}")));
    }
    Ok(photons_to_dbm_unchecked(params, n))
}

fn photons_to_dbm_unchecked(params: &PhysicalParams, n: f64) -> f64 {
    let p_w = params.hbar * params.omega_c * n * params.kappa_out;
    if p_w > 0.0 {
        (10.0 * (p_w / 1e-3).log10()).max(POWER_FLOOR_DB)
    } else {
        POWER_FLOOR_DB
    }
}

/// Taper applied to the retained samples before the DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rectangular,
    /// Periodic Hann taper; sidelobes fall off far faster than the
    /// rectangular window's, so off-bin tones stay compact.
    Hann,
}

/// Spectrum of α₂ over the retained window, rectangular window.
pub fn spectrum(params: &PhysicalParams, traj: &Trajectory, discard_fraction: f64) -> Result<Spectrum> {
    spectrum_windowed(params, traj, discard_fraction, Window::Rectangular)
}

/// Spectrum of α₂ over the retained window. Amplitudes are divided by the sum
/// of the window weights, so a bin-centred tone reads its true amplitude.
pub fn spectrum_windowed(
    params: &PhysicalParams,
    traj: &Trajectory,
    discard_fraction: f64,
    window: Window,
) -> Result<Spectrum> {
    let kept = retained(traj, discard_fraction)?;
    let n = kept.len();
    let (x, gain): (Vec<Complex64>, f64) = match window {
        Window::Rectangular => (kept.iter().map(|s| s.a2).collect(), n as f64),
        Window::Hann => {
            let w: Vec<f64> = (0..n)
                .map(|j| 0.5 - 0.5 * (std::f64::consts::TAU * j as f64 / n as f64).cos())
                .collect();
            let sum = w.iter().sum();
            (kept.iter().zip(&w).map(|(s, w)| s.a2 * *w).collect(), sum)
        }
    };
    let y = dft(&x);
    // fftshift: negative bins first
    let order = (n.div_ceil(2)..n).chain(0..n.div_ceil(2));
    let mut spec = Spectrum {
        freq: Vec::with_capacity(n),
        amp: Vec::with_capacity(n),
        power_dbm: Vec::with_capacity(n),
    };
    for k in order {
        let a = y[k] / gain;
        spec.freq.push(bin_frequency(k, n, traj.dt));
        spec.amp.push(a);
        spec.power_dbm.push(photons_to_dbm_unchecked(params, a.norm_sqr()));
    }
    Ok(spec)
}

/// Index of the largest |y[k]|, lowest index on exact ties.
pub fn argmax_abs(y: &[Complex64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (k, v) in y.iter().enumerate() {
        let m = v.norm_sqr();
        if best.is_none_or(|(_, b)| m > b) {
            best = Some((k, m));
        }
    }
    best.map(|(k, _)| k)
}

/// Dominant-peak analysis of an undriven trajectory.
pub fn lc_extract(params: &PhysicalParams, traj: &Trajectory) -> Result<LcObservation> {
    if traj.is_driven() {
        return Err(Error::domain("limit-cycle extraction needs an undriven trajectory"));
    }
    let kept = retained(traj, DEFAULT_DISCARD)?;
    let absent = LcObservation {
        present: false,
        amp_dbm: LC_FLOOR_DBM,
        freq_offset: 0.0,
        photons: 0.0,
    };
    let mean_n = kept.iter().map(|s| s.a2.norm_sqr()).sum::<f64>() / kept.len() as f64;
    if mean_n < VACUUM_FRACTION * params.n_sat() {
        return Ok(LcObservation {
            photons: mean_n,
            ..absent
        });
    }
    let tail = &kept[kept.len() - (kept.len() / 5).max(1)..];
    let steady = tail.iter().map(|s| s.a2.norm_sqr()).sum::<f64>() / tail.len() as f64;
    let amp_dbm = photons_to_dbm_unchecked(params, steady);
    if amp_dbm < LC_FLOOR_DBM {
        return Ok(LcObservation {
            photons: steady,
            ..absent
        });
    }
    let x: Vec<Complex64> = kept.iter().map(|s| s.a2).collect();
    let y = dft(&x);
    let k = argmax_abs(&y).unwrap_or(0);
    Ok(LcObservation {
        present: true,
        amp_dbm,
        freq_offset: bin_frequency(k, kept.len(), traj.dt),
        photons: steady,
    })
}

/// Strongest non-DC component of a driven run: limit-cycle emission that a
/// network analyser would pick up next to the homodyne tone. Reported only,
/// never folded into S21.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leakage {
    /// ω_c − ω of the leaking line minus the same for the drive, Hz.
    pub freq_offset: f64,
    pub power_dbm: f64,
}

/// Hann spectrum with the drive's main lobe (±2 bins around DC) excluded.
pub fn lc_leakage(params: &PhysicalParams, traj: &Trajectory) -> Result<Leakage> {
    let spec = spectrum_windowed(params, traj, DEFAULT_DISCARD, Window::Hann)?;
    let df = spec.resolution();
    let (i, p) = spec
        .freq
        .iter()
        .zip(&spec.power_dbm)
        .enumerate()
        .filter(|(_, (f, _))| f.abs() > 2.5 * df)
        .map(|(i, (_, p))| (i, *p))
        .fold(None, |best: Option<(usize, f64)>, (i, p)| match best {
            Some((_, b)) if b >= p => best,
            _ => Some((i, p)),
        })
        .ok_or_else(|| Error::domain("too few samples for a leakage estimate"))?;
    Ok(Leakage {
        freq_offset: spec.freq[i],
        power_dbm: p,
    })
}
