use crate::error::{Error, Result};
use crate::fit::{least_squares, FitOptions};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LorentzianPeak {
    /// Hz.
    pub center: f64,
    /// Full width at half maximum, Hz.
    pub fwhm: f64,
    /// Height above the baseline, linear units of the input.
    pub height: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzianFit {
    /// Sorted by center frequency.
    pub peaks: Vec<LorentzianPeak>,
    pub baseline: f64,
    /// RMS residual in linear units of the input.
    pub residual_rms: f64,
}

impl LorentzianFit {
    pub fn evaluate(&self, f: f64) -> f64 {
        self.baseline
            + self
                .peaks
                .iter()
                .map(|p| {
                    let hw2 = 0.25 * p.fwhm * p.fwhm;
                    p.height * hw2 / ((f - p.center).powi(2) + hw2)
                })
                .sum::<f64>()
    }

    /// Largest fitted peak value (baseline + height), linear.
    pub fn s21_max(&self) -> f64 {
        self.peaks
            .iter()
            .map(|p| self.evaluate(p.center))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The tallest peak.
    pub fn dominant(&self) -> &LorentzianPeak {
        self.peaks
            .iter()
            .max_by(|a, b| a.height.total_cmp(&b.height))
            .expect("a fit has at least one peak")
    }

    /// FWHM of the tallest peak, Hz.
    pub fn fwhm(&self) -> f64 {
        self.dominant().fwhm
    }
}

/// Indices of the `n` tallest local maxima of `y`, at least `sep` samples apart.
fn seed_peaks(y: &[f64], n: usize, sep: usize) -> Vec<usize> {
    let len = y.len();
    let mut maxima: Vec<usize> = (0..len)
        .filter(|&i| (i == 0 || y[i] > y[i - 1]) && (i + 1 == len || y[i] >= y[i + 1]))
        .collect();
    maxima.sort_by(|&a, &b| y[b].total_cmp(&y[a]));
    let mut chosen: Vec<usize> = Vec::new();
    for m in maxima {
        if chosen.iter().all(|&c| c.abs_diff(m) >= sep) {
            chosen.push(m);
        }
        if chosen.len() == n {
            break;
        }
    }
    chosen
}

/// Width estimate from the half-height crossings around `i`, in index units.
fn half_width_estimate(y: &[f64], i: usize, base: f64) -> f64 {
    let half = base + 0.5 * (y[i] - base);
    let mut l = i;
    while l > 0 && y[l] > half {
        l -= 1;
    }
    let mut r = i;
    while r + 1 < y.len() && y[r] > half {
        r += 1;
    }
    ((r - l) as f64).max(1.0)
}

/// Least-squares fit of `baseline + Σ h (w/2)² / ((f − c)² + (w/2)²)` with
/// `n_peaks` ∈ {1, 2} terms to linear-scale data.
pub fn lorentzian_fit(freq_hz: &[f64], y: &[f64], n_peaks: usize) -> Result<LorentzianFit> {
    if !(1..=2).contains(&n_peaks) {
        return Err(Error::domain("n_peaks must be 1 or 2"));
    }
    if freq_hz.len() != y.len() || freq_hz.len() < 8 * n_peaks {
        return Err(Error::domain(format!(
            "need at least {} matching samples, got {} frequencies and {} values",
            8 * n_peaks,
            freq_hz.len(),
            y.len()
        )));
    }
    if !freq_hz.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::domain("frequencies must be strictly increasing"));
    }
    let f0 = freq_hz[0];
    let span = freq_hz[freq_hz.len() - 1] - f0;
    let y_scale = y.iter().cloned().fold(0.0, |a: f64, b| a.max(b.abs()));
    if !(y_scale > 0.0 && y_scale.is_finite()) {
        return Err(Error::fit_failed("data are zero or non-finite", f64::NAN, 0));
    }
    // normalized coordinates: x ∈ [0, 1], values ≤ 1
    let x: Vec<f64> = freq_hz.iter().map(|f| (f - f0) / span).collect();
    let v: Vec<f64> = y.iter().map(|y| y / y_scale).collect();
    let min_bin = freq_hz
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min)
        / span;

    let base0 = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let seeds = seed_peaks(&v, n_peaks, 3);
    if seeds.len() < n_peaks {
        return Err(Error::fit_failed(
            format!("found {} local maxima, need {n_peaks}", seeds.len()),
            f64::NAN,
            0,
        ));
    }
    let mut p0 = vec![base0];
    let mut bounds = vec![(-1.0, 1.0)];
    for &s in &seeds {
        let w = half_width_estimate(&v, s, base0) * span.recip() * (freq_hz[1] - freq_hz[0]);
        p0.extend([x[s], w.clamp(min_bin, 1.0), (v[s] - base0).max(1e-6)]);
        bounds.extend([(0.0, 1.0), (min_bin, 1.0), (0.0, 10.0)]);
    }

    let model = |p: &[f64], xi: f64| -> f64 {
        p[0] + p[1..]
            .chunks(3)
            .map(|q| {
                let hw2 = 0.25 * q[1] * q[1];
                q[2] * hw2 / ((xi - q[0]).powi(2) + hw2)
            })
            .sum::<f64>()
    };
    let residuals = |p: &[f64]| -> Vec<f64> { x.iter().zip(&v).map(|(&xi, &vi)| model(p, xi) - vi).collect() };
    let out = least_squares(residuals, &p0, Some(&bounds), &FitOptions::default())?;
    if !out.converged {
        return Err(Error::fit_failed(
            "did not converge",
            out.residual_rms * y_scale,
            out.iterations,
        ));
    }
    let p = &out.params;
    let mut peaks: Vec<LorentzianPeak> = p[1..]
        .chunks(3)
        .map(|q| LorentzianPeak {
            center: f0 + q[0] * span,
            fwhm: q[1] * span,
            height: q[2] * y_scale,
        })
        .collect();
    peaks.sort_by(|a, b| a.center.total_cmp(&b.center));
    Ok(LorentzianFit {
        peaks,
        baseline: p[0] * y_scale,
        residual_rms: out.residual_rms * y_scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lorentz(f: f64, c: f64, w: f64, h: f64) -> f64 {
        h * (0.25 * w * w) / ((f - c).powi(2) + 0.25 * w * w)
    }

    #[test]
    fn single_peak_recovered() {
        let f: Vec<f64> = (0..200).map(|i| 5.98e9 + i as f64 * 0.5e6).collect();
        let y: Vec<f64> = f.iter().map(|&f| 0.01 + lorentz(f, 6.027e9, 7.3e6, 2.5)).collect();
        let fit = lorentzian_fit(&f, &y, 1).unwrap();
        let p = fit.peaks[0];
        assert!(((p.center - 6.027e9) / 6.027e9).abs() < 1e-6);
        assert!(((p.fwhm - 7.3e6) / 7.3e6).abs() < 1e-3);
        assert!(((p.height - 2.5) / 2.5).abs() < 1e-3);
        assert!((fit.baseline - 0.01).abs() < 1e-4);
        assert!(((fit.s21_max() - 2.51) / 2.51).abs() < 1e-3);
    }

    #[test]
    fn double_peak_centers() {
        let f: Vec<f64> = (0..221).map(|i| 5.98e9 + i as f64 * 0.5e6).collect();
        let (c1, c2) = (6.012e9, 6.042e9);
        let y: Vec<f64> = f
            .iter()
            .map(|&f| lorentz(f, c1, 6.0e6, 3.0) + lorentz(f, c2, 8.0e6, 1.0))
            .collect();
        let fit = lorentzian_fit(&f, &y, 2).unwrap();
        assert!(((fit.peaks[0].center - c1) / 30e6).abs() < 1e-2);
        assert!(((fit.peaks[1].center - c2) / 30e6).abs() < 1e-2);
        assert!((fit.fwhm() - 6.0e6).abs() < 0.05 * 6.0e6);
    }

    #[test]
    fn too_few_samples() {
        let f: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(lorentzian_fit(&f, &f, 2).is_err());
        assert!(lorentzian_fit(&f, &f, 3).is_err());
    }
}
