//! The acceptance checks: each returns a pass/fail verdict with a one-line
//! account of the numbers behind it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::{PI, TAU};

use crate::calibration::{self, GainProfile, HashMapOptions, S11FitResult};
use crate::error::Result;
use crate::experiments::{self, linear_s21_db, lorentzian_fit, transmission_sweep};
use crate::integrator::{integrate, IntegratorConfig};
use crate::model::{OperatingPoint, PhysicalParams};
use crate::{analytics, render, spectral, stability, units};

#[derive(Debug, Clone, PartialEq)]
pub struct CriterionResult {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CriterionResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let verdict = if self.passed { "PASS" } else { "FAIL" };
        write!(f, "[{verdict}] {:>2} {}: {}", self.id, self.name, self.detail)
    }
}

pub const NAMES: [&str; 11] = [
    "instability threshold",
    "bifurcation continuity",
    "limit-cycle amplitude vs closed form",
    "limit-cycle frequency vs closed form",
    "anti-symmetry about phi = pi",
    "stability criterion vs eigenvalues",
    "linear transmission and mode splitting",
    "linewidth narrowing below threshold",
    "injection locking window",
    "calibration fit round-trips",
    "determinism of phase-diagram output",
];

fn result(id: u8, passed: bool, detail: String) -> CriterionResult {
    CriterionResult {
        id,
        name: NAMES[id as usize - 1],
        passed,
        detail,
    }
}

fn from_err(id: u8, r: Result<CriterionResult>) -> CriterionResult {
    r.unwrap_or_else(|e| result(id, false, format!("error: {e}")))
}

/// Runs one criterion (1..=11).
pub fn run(id: u8, workers: usize) -> CriterionResult {
    match id {
        1 => threshold(),
        2 => continuity(),
        3 => from_err(3, lc_amplitude_check()),
        4 => from_err(4, lc_frequency_check()),
        5 => from_err(5, antisymmetry(workers)),
        6 => stability_agreement(),
        7 => from_err(7, transmission(workers)),
        8 => from_err(8, linewidth(workers)),
        9 => from_err(9, locking(workers)),
        10 => fits(),
        11 => from_err(11, determinism(workers)),
        _ => result(id.clamp(1, 11), false, format!("no criterion {id}")),
    }
}

pub fn run_all(workers: usize) -> Vec<CriterionResult> {
    (1..=11).map(|id| run(id, workers)).collect()
}

pub fn threshold() -> CriterionResult {
    match stability::threshold_gain(&PhysicalParams::symmetric(), PI) {
        Some(t) => result(1, (4.72..=4.92).contains(&t), format!("ΔG*(π) = {t:.4} dB, band [4.72, 4.92]")),
        None => result(1, false, "no threshold at φ = π".into()),
    }
}

/// Closed-form cycle amplitude right at the threshold. Round-off can leave
/// the vacuum marginally stable at the exact value; the gain is then nudged
/// up by 1e-12 dB steps.
fn amplitude_at_threshold(p: &PhysicalParams, phi: f64, t: f64) -> Option<f64> {
    (0..16).find_map(|k| analytics::lc_amplitude(p, &OperatingPoint::undriven(p, t + 1e-12 * k as f64, phi)))
}

pub fn continuity() -> CriterionResult {
    let p = PhysicalParams::symmetric();
    let mut worst: f64 = 0.0;
    let mut missing = 0;
    for k in 0..50 {
        let phi = TAU * (k as f64 + 0.5) / 50.0;
        match stability::threshold_gain(&p, phi).and_then(|t| amplitude_at_threshold(&p, phi, t)) {
            Some(n) => worst = worst.max(((n - p.n_sat()) / p.n_sat()).abs()),
            None => missing += 1,
        }
    }
    result(
        2,
        missing == 0 && worst < 1e-9,
        format!("max |n_LC − n_sat|/n_sat = {worst:.2e} over 50 φ, {missing} without a threshold"),
    )
}

/// Five operating points past threshold, one of them (π, 8.4 dB).
pub fn unstable_points() -> [(f64, f64); 5] {
    [(PI, 8.4), (PI, 6.0), (PI / 2.0, 8.0), (1.5 * PI, 8.0), (2.0 * PI / 3.0, 7.0)]
}

pub fn lc_amplitude_check() -> Result<CriterionResult> {
    let cfg = IntegratorConfig::default();
    let mut worst = [0.0f64; 2];
    for (slot, (p, _)) in [(PhysicalParams::symmetric(), 0.01), (PhysicalParams::default(), 0.03)]
        .into_iter()
        .enumerate()
    {
        for (phi, dg) in unstable_points() {
            let op = OperatingPoint::undriven(&p, dg, phi);
            let expected = analytics::lc_amplitude(&p, &op)
                .ok_or_else(|| crate::Error::domain(format!("({phi}, {dg}) is not past threshold")))?;
            let obs = spectral::lc_extract(&p, &integrate(&p, &op, &cfg)?)?;
            worst[slot] = worst[slot].max(((obs.photons - expected) / expected).abs());
        }
    }
    Ok(result(
        3,
        worst[0] < 0.01 && worst[1] < 0.03,
        format!(
            "max relative error {:.3}% symmetric (limit 1%), {:.3}% per-cavity (limit 3%)",
            100.0 * worst[0],
            100.0 * worst[1]
        ),
    ))
}

/// Nominal frequency bin 1/T at the default span, Hz.
pub fn nominal_bin(p: &PhysicalParams, cfg: &IntegratorConfig) -> f64 {
    p.kappa_c / cfg.span_kappa_c
}

pub fn lc_frequency_check() -> Result<CriterionResult> {
    let p = PhysicalParams::symmetric();
    let cfg = IntegratorConfig::default();
    let bin = nominal_bin(&p, &cfg);
    let mut worst: f64 = 0.0;
    let mut at_pi: f64 = 0.0;
    for (phi, dg) in unstable_points() {
        let op = OperatingPoint::undriven(&p, dg, phi);
        let obs = spectral::lc_extract(&p, &integrate(&p, &op, &cfg)?)?;
        let expected = units::to_hz(analytics::lc_frequency(&p, phi));
        let err = (obs.freq_offset - expected).abs() / bin;
        worst = worst.max(err);
        if phi == PI {
            at_pi = at_pi.max(obs.freq_offset.abs() / bin);
        }
    }
    Ok(result(
        4,
        worst <= 2.0 && at_pi <= 2.0,
        format!("max deviation {worst:.2} bins, |δω_LC(π)| = {at_pi:.2} bins (bin {bin:.0} Hz)"),
    ))
}

pub fn antisymmetry(workers: usize) -> Result<CriterionResult> {
    let p = PhysicalParams::symmetric();
    let mut worst_analytic: f64 = 0.0;
    for k in 0..100 {
        let x = 0.01 + (PI - 0.02) * k as f64 / 99.0;
        let (a, b) = (analytics::lc_frequency(&p, PI + x), analytics::lc_frequency(&p, PI - x));
        worst_analytic = worst_analytic.max((a + b).abs() / a.abs().max(b.abs()));
    }

    let cfg = IntegratorConfig::default();
    let bin = nominal_bin(&p, &cfg);
    let phis = experiments::default_phi_grid();
    let gains = [6.0, 7.2, 8.4];
    let pd = experiments::lc_phase_diagram(&p, &phis, &gains, &cfg, workers)?;
    let n = phis.len();
    let mut worst_bins: f64 = 0.0;
    let mut pairs = 0;
    let mut mismatched = 0;
    for i in 1..n / 2 {
        let j = n - i;
        for (g, &dg) in gains.iter().enumerate() {
            let (a, b) = (pd.freq_offset_mhz.is_valid(i, g), pd.freq_offset_mhz.is_valid(j, g));
            if a && b {
                pairs += 1;
                let sum = pd.freq_offset_mhz.get(i, g) + pd.freq_offset_mhz.get(j, g);
                worst_bins = worst_bins.max((sum * 1e6).abs() / bin);
            } else if a != b {
                // presence may differ only right at the threshold
                let near = stability::threshold_gain(&p, phis[i]).is_some_and(|t| (t - dg).abs() < 0.2);
                if !near {
                    mismatched += 1;
                }
            }
        }
    }
    Ok(result(
        5,
        worst_analytic < 1e-12 && worst_bins <= 2.0 && mismatched == 0 && pairs > 0,
        format!(
            "closed form {worst_analytic:.1e} relative over 100 x; simulated {pairs} pairs within {worst_bins:.2} bins, {mismatched} presence mismatches"
        ),
    ))
}

pub fn stability_agreement() -> CriterionResult {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut checked, mut disagree, mut skipped) = (0, 0, 0);
    let mut worst_jc: f64 = 0.0;
    while checked + skipped < 10_000 {
        let k_int = units::mhz(rng.random_range(1.0..8.0));
        let k_io = units::mhz(rng.random_range(0.5..5.0));
        let p = PhysicalParams {
            kappa_int: [k_int, k_int],
            kappa_in: k_io,
            kappa_out: k_io,
            kappa_c: units::mhz(rng.random_range(2.0..15.0)),
            j_c: units::mhz(rng.random_range(0.0..30.0)),
            ..PhysicalParams::default()
        };
        let op = OperatingPoint::undriven(&p, rng.random_range(-10.0..14.0), rng.random_range(0.0..TAU));
        let rep = stability::is_stable(&p, &op);
        let Some(verdict) = rep.criterion_stable() else {
            continue;
        };
        if rep.max_re_eigenvalue.abs() < 1e-9 * p.kappa_c {
            skipped += 1;
            continue;
        }
        checked += 1;
        if verdict != rep.stable {
            disagree += 1;
        }
        let no_jc = stability::is_stable(&PhysicalParams { j_c: 0.0, ..p }, &op);
        let scale = rep.max_re_eigenvalue.abs().max(1e-300);
        worst_jc = worst_jc.max((rep.max_re_eigenvalue - no_jc.max_re_eigenvalue).abs() / scale);
    }
    result(
        6,
        disagree == 0 && worst_jc < 1e-9,
        format!(
            "{disagree} disagreements on {checked} points ({skipped} in dead-band); J_c changes max Re σ by {worst_jc:.1e} relative"
        ),
    )
}

fn linear_power(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn transmission(workers: usize) -> Result<CriterionResult> {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let grid = experiments::default_drive_grid(2.0);
    let gains = [0.0, 2.0, 4.0];
    let mut worst: f64 = 0.0;
    for phi in [0.0, PI] {
        let g = transmission_sweep(&p, phi, &gains, &grid, -30.0, &cfg, workers)?;
        for (i, &w) in grid.iter().enumerate() {
            for (j, &dg) in gains.iter().enumerate() {
                let oracle = linear_s21_db(&p, &OperatingPoint::driven(dg, phi, w, -30.0))
                    .ok_or_else(|| crate::Error::domain("singular linear system"))?;
                let rel = (linear_power(g.get(i, j)) - linear_power(oracle)).abs() / linear_power(oracle);
                worst = worst.max(if rel.is_finite() { rel } else { f64::INFINITY });
            }
        }
    }

    let split = transmission_sweep(&p, 0.0, &[8.4], &grid, -30.0, &cfg, workers)?;
    let f: Vec<f64> = grid.iter().map(|&w| units::to_hz(w)).collect();
    let y: Vec<f64> = split.cells.iter().map(|&db| linear_power(db)).collect();
    let fit = lorentzian_fit(&f, &y, 2)?;
    let measured = fit.peaks[1].center - fit.peaks[0].center;
    let expected = units::to_hz(2.0 * (p.j0(8.4) + p.j_c));
    let split_err = (measured - expected).abs() / expected;
    Ok(result(
        7,
        worst < 0.01 && split_err < 0.05,
        format!(
            "max S21 deviation {:.3}% (limit 1%); splitting {:.2} MHz vs {:.2} MHz ({:+.1}%, limit 5%)",
            100.0 * worst,
            measured / 1e6,
            expected / 1e6,
            100.0 * (measured - expected) / expected
        ),
    ))
}

/// Gains below the φ = π threshold used for the linewidth check.
pub const LINEWIDTH_GAINS: [f64; 5] = [2.0, 3.0, 3.5, 4.0, 4.5];

pub fn linewidth(workers: usize) -> Result<CriterionResult> {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let mut widths = Vec::new();
    let mut worst: f64 = 0.0;
    for &dg in &LINEWIDTH_GAINS {
        let rates = analytics::normal_mode_rates(&p, &OperatingPoint::undriven(&p, dg, PI));
        let expected = units::to_hz(2.0 * rates.kappa_plus0);
        let grid = experiments::linspace(p.omega_c - TAU * 3.0 * expected, p.omega_c + TAU * 3.0 * expected, 61);
        let g = transmission_sweep(&p, PI, &[dg], &grid, -30.0, &cfg, workers)?;
        let f: Vec<f64> = grid.iter().map(|&w| units::to_hz(w)).collect();
        let y: Vec<f64> = g.cells.iter().map(|&db| linear_power(db)).collect();
        let fwhm = lorentzian_fit(&f, &y, 1)?.fwhm();
        worst = worst.max((fwhm - expected).abs() / expected);
        widths.push(fwhm);
    }
    let decreasing = widths.windows(2).all(|w| w[1] < w[0]);
    let listed: Vec<String> = widths.iter().map(|w| format!("{:.3}", w / 1e6)).collect();
    Ok(result(
        8,
        worst < 0.1 && decreasing,
        format!(
            "FWHM [{}] MHz at ΔG {:?} dB; max deviation from 2κ₊ {:.1}% (limit 10%), strictly decreasing: {decreasing}",
            listed.join(", "),
            LINEWIDTH_GAINS,
            100.0 * worst
        ),
    ))
}

pub fn locking(workers: usize) -> Result<CriterionResult> {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let grid = experiments::linspace(p.omega_c - units::mhz(4.0), p.omega_c + units::mhz(4.0), 41);
    let mut widths = Vec::new();
    let mut min_outside = usize::MAX;
    for p_d in [0.0, 4.0] {
        let sweep = experiments::drive_frequency_sweep(&p, PI, 8.4, p_d, &grid, &cfg, workers)?;
        let window = sweep.locking_window(p.omega_c);
        let width = window.map_or(0.0, |w| units::to_mhz(w.width));
        for (i, &w) in grid.iter().enumerate() {
            let inside = window.is_some_and(|win| w >= win.lo && w <= win.hi);
            if !inside {
                min_outside = min_outside.min(sweep.peak_counts[i].unwrap_or(0));
            }
        }
        widths.push(width);
    }
    let min_outside = if min_outside == usize::MAX { 0 } else { min_outside };
    Ok(result(
        9,
        widths[1] > widths[0] && widths[0] > 0.0 && min_outside >= 3,
        format!(
            "locking window {:.2} MHz at 0 dBm, {:.2} MHz at 4 dBm; fewest peaks outside: {min_outside}",
            widths[0], widths[1]
        ),
    ))
}

pub fn fits() -> CriterionResult {
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    let mut notes = Vec::new();
    let mut ok = true;

    // S11
    let truth = S11FitResult::from_rates(units::ghz(6.034), units::mhz(5.7), units::mhz(9.9), 0.95);
    let f0 = units::to_hz(truth.omega_res);
    let f: Vec<f64> = (0..401).map(|i| f0 - 80e6 + 160e6 * i as f64 / 400.0).collect();
    let clean: Vec<f64> = f.iter().map(|&x| calibration::s11_model(units::hz(x), &truth)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let noise = Normal::new(0.0, 0.01).expect("valid sigma");
    let noisy: Vec<f64> = clean.iter().map(|v| v + noise.sample(&mut rng)).collect();
    for (label, data, tol) in [("s11 clean", &clean, 0.01), ("s11 noisy", &noisy, 0.05)] {
        match calibration::s11_fit(&f, data) {
            Ok(fit) => {
                let e = rel(fit.kappa_c(), truth.kappa_c())
                    .max(rel(fit.kappa_int(), truth.kappa_int()))
                    .max(rel(fit.omega_res, truth.omega_res));
                ok &= e < tol;
                notes.push(format!("{label} {:.2}%", 100.0 * e));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{label} failed: {e}"));
            }
        }
    }

    // gain
    let truth = GainProfile::model_default();
    let p_in: Vec<f64> = (0..80).map(|i| units::dbm_to_watts(-30.0 + 43.0 * i as f64 / 79.0)).collect();
    let clean: Vec<f64> = p_in.iter().map(|&x| truth.output(x)).collect();
    let noisy: Vec<f64> = clean.iter().map(|v| v * (1.0 + noise.sample(&mut rng))).collect();
    for (label, data, tol) in [("gain clean", &clean, 0.01), ("gain noisy", &noisy, 0.05)] {
        match calibration::gain_profile_fit(&p_in, data) {
            Ok(fit) => {
                let e = rel(fit.p_sat, truth.p_sat).max(rel(fit.b_g, truth.b_g));
                ok &= e < tol;
                notes.push(format!("{label} {:.2}%", 100.0 * e));
            }
            Err(e) => {
                ok = false;
                notes.push(format!("{label} failed: {e}"));
            }
        }
    }

    // lookup table
    let targets = experiments::linspace(4.0, 8.4, 12);
    match calibration::hashmap_build(calibration::synthetic_profile(72, 0.8, 3.0), &targets, HashMapOptions::default()) {
        Ok(map) => {
            let res = map.phi_resolution();
            let (mut worst_dg, mut worst_phi): (f64, f64) = (0.0, 0.0);
            let mut failures = 0;
            for e in &map.entries {
                match calibration::hashmap_lookup(&map, e.delta_g_db, e.phi_rad)
                    .ok()
                    .and_then(|s| map.implied(&s))
                {
                    Some((dg, phi)) => {
                        worst_dg = worst_dg.max((dg - e.delta_g_db).abs());
                        let d = (phi - e.phi_rad).rem_euclid(TAU);
                        worst_phi = worst_phi.max(d.min(TAU - d));
                    }
                    None => failures += 1,
                }
            }
            ok &= failures == 0 && worst_dg < 0.1 && worst_phi <= res;
            notes.push(format!(
                "hash map {} entries, ΔG error {worst_dg:.2e} dB, φ error {worst_phi:.2e} rad (resolution {res:.3})",
                map.entries.len()
            ));
        }
        Err(e) => {
            ok = false;
            notes.push(format!("hash map failed: {e}"));
        }
    }
    result(10, ok, notes.join("; "))
}

/// Phase-diagram outputs (CSV and SVG of both maps) as strings.
pub fn phase_diagram_outputs(
    p: &PhysicalParams,
    phis: &[f64],
    gains: &[f64],
    cfg: &IntegratorConfig,
    workers: usize,
) -> Result<[String; 4]> {
    let pd = experiments::lc_phase_diagram(p, phis, gains, cfg, workers)?;
    let curve = stability::boundary_curve(p, 1000);
    Ok([
        pd.amp_dbm.to_csv_string(),
        pd.freq_offset_mhz.to_csv_string(),
        render::render_heatmap(&pd.amp_dbm, Some(&curve))?,
        render::render_heatmap(&pd.freq_offset_mhz, Some(&curve))?,
    ])
}

pub fn determinism(workers: usize) -> Result<CriterionResult> {
    let p = PhysicalParams::default();
    let cfg = IntegratorConfig::default();
    let phis: Vec<f64> = (0..12).map(|i| TAU * i as f64 / 12.0).collect();
    let gains = experiments::linspace(4.0, 8.4, 6);
    let a = phase_diagram_outputs(&p, &phis, &gains, &cfg, workers)?;
    let b = phase_diagram_outputs(&p, &phis, &gains, &cfg, workers.max(2))?;
    let same = a == b;
    Ok(result(
        11,
        same,
        format!(
            "two runs on a 12×6 grid ({} and {} workers): outputs {}",
            workers,
            workers.max(2),
            if same { "byte-identical" } else { "differ" }
        ),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fast_criteria_pass() {
        for r in [threshold(), continuity(), stability_agreement(), fits()] {
            assert!(r.passed, "{r}");
        }
    }

    #[test]
    fn display_line() {
        let r = result(1, true, "x".into());
        assert_eq!(r.to_string(), "[PASS]  1 instability threshold: x");
    }

    #[test]
    fn unknown_id() {
        assert!(!run(12, 1).passed);
    }
}
