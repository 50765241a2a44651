//! Instrument calibration: hanger-resonator S11 fits, saturable-amplifier
//! gain fits, and the lookup table that maps attenuator and phase-shifter
//! settings to (ΔG, φ).

use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::{Read, Write};

use crate::error::{Error, Result};
use crate::fit::{least_squares, FitOptions};
use crate::units;

// ---------------------------------------------------------------- S11

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct S11FitResult {
    /// Loaded resonance ω̃_c, rad/s.
    pub omega_res: f64,
    pub q_int: f64,
    pub q_c: f64,
    /// Off-resonance reflection magnitude, linear.
    pub baseline: f64,
}

impl S11FitResult {
    /// Builds a result from rates (rad/s) instead of quality factors.
    pub fn from_rates(omega_res: f64, kappa_int: f64, kappa_c: f64, baseline: f64) -> Self {
        S11FitResult {
            omega_res,
            q_int: omega_res / kappa_int,
            q_c: omega_res / (2.0 * kappa_c),
            baseline,
        }
    }

    /// κ̃_int = ω̃_c / Q_int.
    pub fn kappa_int(&self) -> f64 {
        self.omega_res / self.q_int
    }

    /// κ̃_c = ω̃_c / (2 Q_c).
    pub fn kappa_c(&self) -> f64 {
        self.omega_res / (2.0 * self.q_c)
    }
}

/// |S11(ω)| = −|κ_c / (i(ω̃ − ω) + κ_int + 2κ_c)| + baseline.
pub fn s11_model(omega_probe: f64, fit: &S11FitResult) -> f64 {
    let kc = fit.kappa_c();
    let denom = num_complex::Complex64::new(fit.kappa_int() + 2.0 * kc, fit.omega_res - omega_probe);
    fit.baseline - kc / denom.norm()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Fits [`s11_model`] to a reflection trace. `freq_hz` are probe frequencies
/// (ω/2π) in increasing order, `mag` linear magnitudes.
pub fn s11_fit(freq_hz: &[f64], mag: &[f64]) -> Result<S11FitResult> {
    let n = freq_hz.len();
    if n < 16 || mag.len() != n {
        return Err(Error::domain(format!(
            "need at least 16 matching samples, got {n} frequencies and {} magnitudes",
            mag.len()
        )));
    }
    if !freq_hz.windows(2).all(|w| w[1] > w[0]) {
        return Err(Error::domain("frequencies must be strictly increasing"));
    }
    let q = n / 4;
    let outer: Vec<f64> = mag[..q].iter().chain(&mag[n - q..]).cloned().collect();
    let baseline = median(outer.clone());
    let spread = {
        let m = outer.iter().sum::<f64>() / outer.len() as f64;
        (outer.iter().map(|v| (v - m).powi(2)).sum::<f64>() / outer.len() as f64).sqrt()
    };
    let (i_min, &y_min) = mag
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let depth = baseline - y_min;
    if !(depth > 5.0 * spread && depth > 1e-6 * baseline.abs()) {
        return Err(Error::fit_failed("no dip", spread, 0));
    }

    // half-depth crossings: |Δ| = √3 κ_tot there
    let half = baseline - 0.5 * depth;
    let mut l = i_min;
    while l > 0 && mag[l] < half {
        l -= 1;
    }
    let mut r = i_min;
    while r + 1 < n && mag[r] < half {
        r += 1;
    }
    let f0 = freq_hz[0];
    let span = freq_hz[n - 1] - f0;
    let k_tot = ((freq_hz[r] - freq_hz[l]) / (2.0 * 3f64.sqrt())).max(span / n as f64);
    let kc0 = depth * k_tot / baseline.abs().max(depth);
    let kc0 = (depth * k_tot).min(0.49 * k_tot).max(kc0.min(0.49 * k_tot));
    let kint0 = (k_tot - 2.0 * kc0).max(0.05 * k_tot);

    // parameters: baseline, centre, k_int, k_c (frequencies normalized by the span)
    let x: Vec<f64> = freq_hz.iter().map(|f| (f - f0) / span).collect();
    let model = |p: &[f64], xi: f64| {
        let d = num_complex::Complex64::new(p[2] + 2.0 * p[3], p[1] - xi);
        p[0] - p[3] / d.norm()
    };
    let residuals = |p: &[f64]| -> Vec<f64> { x.iter().zip(mag).map(|(&xi, &m)| model(p, xi) - m).collect() };
    let p0 = [baseline, x[i_min], kint0 / span, kc0 / span];
    let tiny = 1e-9;
    let bounds = [
        (baseline - 10.0 * depth.max(1e-12), baseline + 10.0 * depth.max(1e-12)),
        (0.0, 1.0),
        (tiny, 10.0),
        (tiny, 10.0),
    ];
    let out = least_squares(residuals, &p0, Some(&bounds), &FitOptions::default())?;
    if !out.converged {
        return Err(Error::fit_failed("did not converge", out.residual_rms, out.iterations));
    }
    let p = out.params;
    Ok(S11FitResult::from_rates(
        units::hz(f0 + p[1] * span),
        units::hz(p[2] * span),
        units::hz(p[3] * span),
        p[0],
    ))
}

// ---------------------------------------------------------------- gain

/// Saturable-amplifier parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainProfile {
    /// Small-signal gain, dB.
    pub g0_db: f64,
    /// Input saturation power, W.
    pub p_sat: f64,
    /// Gain-curvature constant, W.
    pub b_g: f64,
}

impl GainProfile {
    /// Values used by the simulator (P_sat = 0.9981 mW, b_G = 8.6 mW).
    pub fn model_default() -> Self {
        GainProfile {
            g0_db: 20.3,
            p_sat: 0.9981e-3,
            b_g: 8.6e-3,
        }
    }

    /// Values reported from the amplifier characterization (0.995 mW, 7.7 mW).
    pub fn measured() -> Self {
        GainProfile {
            g0_db: 20.3,
            p_sat: 0.995e-3,
            b_g: 7.7e-3,
        }
    }

    /// Amplitude compression f_G at input power `p_in` (W).
    pub fn compression(&self, p_in: f64) -> f64 {
        if p_in <= self.p_sat {
            1.0
        } else {
            (self.b_g + self.p_sat) / (self.b_g + p_in)
        }
    }

    /// Output power P_in · 10^(G₀/10) · f_G(P_in)², W.
    pub fn output(&self, p_in: f64) -> f64 {
        p_in * 10f64.powf(self.g0_db / 10.0) * self.compression(p_in).powi(2)
    }
}

/// Fits the piecewise saturable-gain model to an input/output power sweep (W).
pub fn gain_profile_fit(p_in: &[f64], p_out: &[f64]) -> Result<GainProfile> {
    let n = p_in.len();
    if n < 8 || p_out.len() != n {
        return Err(Error::domain(format!(
            "need at least 8 matching samples, got {n} inputs and {} outputs",
            p_out.len()
        )));
    }
    if p_in.iter().chain(p_out).any(|v| !(*v > 0.0 && v.is_finite())) {
        return Err(Error::domain("powers must be positive and finite"));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p_in[a].total_cmp(&p_in[b]));
    let pin: Vec<f64> = order.iter().map(|&i| p_in[i]).collect();
    let gain_db: Vec<f64> = order
        .iter()
        .map(|&i| 10.0 * (p_out[i] / p_in[i]).log10())
        .collect();

    let g0 = median(gain_db[..(n / 5).max(3)].to_vec());
    let compression = g0 - gain_db.iter().cloned().fold(f64::INFINITY, f64::min);
    if compression < 0.5 {
        return Err(Error::fit_failed("no knee detected", compression, 0));
    }
    // 1 dB compression point as the first guess of P_sat
    let p1db = gain_db
        .iter()
        .position(|&g| g <= g0 - 1.0)
        .map(|i| pin[i])
        .unwrap_or(pin[n - 1]);

    let out_db: Vec<f64> = order.iter().map(|&i| 10.0 * p_out[i].log10()).collect();
    let model = |p: &[f64]| GainProfile {
        g0_db: p[0],
        p_sat: 1e-3 * p[1].exp(),
        b_g: 1e-3 * p[2].exp(),
    };
    let residuals = |p: &[f64]| -> Vec<f64> {
        let m = model(p);
        pin.iter()
            .zip(&out_db)
            .map(|(&x, &y)| 10.0 * m.output(x).log10() - y)
            .collect()
    };
    let (lo, hi) = (pin[0], pin[n - 1]);
    let bounds = [
        (g0 - 10.0, g0 + 10.0),
        ((lo / 1e-3).ln(), (hi / 1e-3).ln()),
        ((1e-3 * lo / 1e-3).ln(), (1e3 * hi / 1e-3).ln()),
    ];
    // the knee makes the cost kinked in P_sat: start from a few guesses
    let mut best: Option<crate::fit::FitOutcome> = None;
    for frac in [0.5, 0.25, 0.75, 1.0] {
        for b_mult in [8.0, 2.0, 30.0] {
            let ps = (frac * p1db).clamp(lo, hi);
            let p0 = [g0, (ps / 1e-3).ln(), (b_mult * ps / 1e-3).ln()];
            if let Ok(out) = least_squares(residuals, &p0, Some(&bounds), &FitOptions::default()) {
                if best.as_ref().is_none_or(|b| out.cost < b.cost) {
                    best = Some(out);
                }
            }
        }
    }
    let best = best.ok_or_else(|| Error::fit_failed("no start converged", f64::NAN, 0))?;
    if !best.converged && best.residual_rms > 0.5 {
        return Err(Error::fit_failed("did not converge", best.residual_rms, best.iterations));
    }
    Ok(model(&best.params))
}

// ---------------------------------------------------------------- lookup table

/// Largest attenuation the attenuators can provide, dB.
pub const ATTENUATOR_MAX_DB: f64 = 50.0;

/// One phase-shifter setting of the insertion-loss profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileRow {
    pub phi_exp_deg: f64,
    /// Insertion loss L(φ_exp) of the backward arm, dB.
    pub loss_db: f64,
    /// Excluded from lookups.
    pub outlier: bool,
}

/// Attenuator and phase-shifter settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeviceSettings {
    pub gamma_fwd_db: f64,
    pub gamma_bwd_db: f64,
    pub phi_exp_deg: f64,
}

/// One table entry: settings and the (ΔG, φ) they realize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashMapEntry {
    pub settings: DeviceSettings,
    pub delta_g_db: f64,
    pub phi_rad: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashMapOptions {
    pub g0_db: f64,
    /// Insertion loss of the forward arm, dB.
    pub l_fwd_db: f64,
    /// φ = φ_exp + offset.
    pub phase_offset_rad: f64,
    /// A row deviating from the median of its four nearest cyclic
    /// neighbours by more than this is flagged as an outlier, dB.
    pub outlier_threshold_db: f64,
}

impl Default for HashMapOptions {
    fn default() -> Self {
        HashMapOptions {
            g0_db: 20.3,
            l_fwd_db: 0.0,
            phase_offset_rad: 0.0,
            outlier_threshold_db: 1.0,
        }
    }
}

/// Lookup table from device settings to model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HashMap {
    pub options: HashMapOptions,
    /// Sorted by φ_exp.
    pub profile: Vec<ProfileRow>,
    pub entries: Vec<HashMapEntry>,
}

fn attenuation(g0: f64, delta_g: f64, loss: f64) -> Result<f64> {
    let gamma = g0 - delta_g - loss;
    if !(0.0..=ATTENUATOR_MAX_DB).contains(&gamma) {
        return Err(Error::Range(format!(
            "ΔG = {delta_g} dB needs {gamma:.3} dB of attenuation, outside [0, {ATTENUATOR_MAX_DB}] dB"
        )));
    }
    Ok(gamma)
}

fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// Flags rows that stand out from the median of their four nearest cyclic
/// neighbours, so one spike does not drag the rows next to it along.
pub fn flag_outliers(rows: &mut [ProfileRow], threshold_db: f64) {
    let n = rows.len();
    if n < 5 {
        return;
    }
    let loss: Vec<f64> = rows.iter().map(|r| r.loss_db).collect();
    for i in 0..n {
        let around = [n - 2, n - 1, 1, 2].map(|d| loss[(i + d) % n]);
        if (loss[i] - median(around.to_vec())).abs() > threshold_db {
            rows[i].outlier = true;
        }
    }
}

/// Insertion-loss profile from calibration rows (φ_exp in degrees, S21 in dB
/// measured with both attenuators at 0 dB): L = G₀ − S21.
pub fn profile_from_calibration(rows: &[(f64, f64)], g0_db: f64) -> Vec<ProfileRow> {
    let mut out: Vec<ProfileRow> = rows
        .iter()
        .map(|&(phi, s21)| ProfileRow {
            phi_exp_deg: phi,
            loss_db: g0_db - s21,
            outlier: false,
        })
        .collect();
    out.sort_by(|a, b| a.phi_exp_deg.total_cmp(&b.phi_exp_deg));
    out
}

/// Smooth insertion-loss ripple on `n` settings over [0°, 360°) with a
/// single spike at the last setting before the wrap back to 0°.
pub fn synthetic_profile(n: usize, ripple_db: f64, spike_db: f64) -> Vec<ProfileRow> {
    (0..n)
        .map(|i| {
            let deg = 360.0 * i as f64 / n as f64;
            let x = deg.to_radians();
            let mut loss = 1.5 + ripple_db * (0.6 * x.sin() + 0.4 * (2.0 * x + 0.7).cos());
            if i + 1 == n {
                loss += spike_db;
            }
            ProfileRow {
                phi_exp_deg: deg,
                loss_db: loss,
                outlier: false,
            }
        })
        .collect()
}

/// Builds the table for every non-outlier φ_exp and every target ΔG.
pub fn hashmap_build(
    mut profile: Vec<ProfileRow>,
    delta_g_targets: &[f64],
    options: HashMapOptions,
) -> Result<HashMap> {
    if profile.is_empty() {
        return Err(Error::domain("empty insertion-loss profile"));
    }
    profile.sort_by(|a, b| a.phi_exp_deg.total_cmp(&b.phi_exp_deg));
    if profile.iter().any(|r| !(0.0..360.0).contains(&r.phi_exp_deg)) {
        return Err(Error::domain("phase-shifter settings must lie in [0°, 360°)"));
    }
    flag_outliers(&mut profile, options.outlier_threshold_db);
    let mut entries = Vec::new();
    for row in profile.iter().filter(|r| !r.outlier) {
        for &dg in delta_g_targets {
            entries.push(HashMapEntry {
                settings: DeviceSettings {
                    gamma_fwd_db: attenuation(options.g0_db, dg, options.l_fwd_db)?,
                    gamma_bwd_db: attenuation(options.g0_db, dg, row.loss_db)?,
                    phi_exp_deg: row.phi_exp_deg,
                },
                delta_g_db: dg,
                phi_rad: units::wrap_phase(row.phi_exp_deg.to_radians() + options.phase_offset_rad),
            });
        }
    }
    Ok(HashMap {
        options,
        profile,
        entries,
    })
}

impl HashMap {
    fn phi_of(&self, row: &ProfileRow) -> f64 {
        units::wrap_phase(row.phi_exp_deg.to_radians() + self.options.phase_offset_rad)
    }

    fn usable(&self) -> impl Iterator<Item = &ProfileRow> {
        self.profile.iter().filter(|r| !r.outlier)
    }

    /// Largest φ gap between consecutive usable rows, rad.
    pub fn phi_resolution(&self) -> f64 {
        let mut phis: Vec<f64> = self.usable().map(|r| self.phi_of(r)).collect();
        phis.sort_by(f64::total_cmp);
        match phis.len() {
            0 => f64::NAN,
            1 => TAU,
            n => (0..n)
                .map(|i| (phis[(i + 1) % n] - phis[i]).rem_euclid(TAU))
                .fold(0.0, f64::max),
        }
    }

    /// Loss of the row at `phi_exp_deg`, if present.
    pub fn loss_at(&self, phi_exp_deg: f64) -> Option<f64> {
        self.profile
            .iter()
            .find(|r| r.phi_exp_deg == phi_exp_deg)
            .map(|r| r.loss_db)
    }

    /// Net forward and backward gains realized by `settings`, dB.
    pub fn implied_gains(&self, settings: &DeviceSettings) -> Option<(f64, f64)> {
        let loss = self.loss_at(settings.phi_exp_deg)?;
        let g0 = self.options.g0_db;
        Some((
            g0 - settings.gamma_fwd_db - self.options.l_fwd_db,
            g0 - settings.gamma_bwd_db - loss,
        ))
    }

    /// (ΔG, φ) realized by `settings`: the mean of the two net gains and the phase.
    pub fn implied(&self, settings: &DeviceSettings) -> Option<(f64, f64)> {
        let (fwd, bwd) = self.implied_gains(settings)?;
        let phi = units::wrap_phase(settings.phi_exp_deg.to_radians() + self.options.phase_offset_rad);
        Some((0.5 * (fwd + bwd), phi))
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record([
            "phi_exp_deg",
            "loss_db",
            "outlier",
            "delta_g_db",
            "phi_rad",
            "gamma_fwd_db",
            "gamma_bwd_db",
        ])
        .map_err(csv_err)?;
        for row in &self.profile {
            let matching: Vec<&HashMapEntry> = self
                .entries
                .iter()
                .filter(|e| e.settings.phi_exp_deg == row.phi_exp_deg)
                .collect();
            if matching.is_empty() {
                wr.write_record([
                    row.phi_exp_deg.to_string(),
                    row.loss_db.to_string(),
                    (row.outlier as u8).to_string(),
                    String::new(),
                    String::new(),
                    String::new(),
                    String::new(),
                ])
                .map_err(csv_err)?;
            }
            for e in matching {
                wr.write_record([
                    row.phi_exp_deg.to_string(),
                    row.loss_db.to_string(),
                    (row.outlier as u8).to_string(),
                    e.delta_g_db.to_string(),
                    e.phi_rad.to_string(),
                    e.settings.gamma_fwd_db.to_string(),
                    e.settings.gamma_bwd_db.to_string(),
                ])
                .map_err(csv_err)?;
            }
        }
        wr.flush()?;
        Ok(())
    }

    /// Metadata sidecar: options, creation date and data source.
    pub fn metadata_json(&self, source: &str) -> String {
        let doc = serde_json::json!({
            "g0_db": self.options.g0_db,
            "l_fwd_db": self.options.l_fwd_db,
            "phase_offset_rad": self.options.phase_offset_rad,
            "outlier_threshold_db": self.options.outlier_threshold_db,
            "date": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
            "source": source,
        });
        serde_json::to_string_pretty(&doc).expect("serializable metadata")
    }

    /// Reads a table written by [`HashMap::write_csv`] with the options of its sidecar.
    pub fn read_csv<R: Read>(r: R, options: HashMapOptions) -> Result<HashMap> {
        let mut rd = csv::Reader::from_reader(r);
        let mut profile: Vec<ProfileRow> = Vec::new();
        let mut entries = Vec::new();
        for rec in rd.records() {
            let rec = rec.map_err(csv_err)?;
            let field = |i: usize| -> Result<Option<f64>> {
                let s = rec.get(i).unwrap_or("").trim();
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse::<f64>()
                        .map(Some)
                        .map_err(|e| Error::Config(format!("bad number {s:?}: {e}")))
                }
            };
            let need = |i: usize| field(i)?.ok_or_else(|| Error::Config(format!("missing column {i}")));
            let phi_exp = need(0)?;
            if !profile.iter().any(|p| p.phi_exp_deg == phi_exp) {
                profile.push(ProfileRow {
                    phi_exp_deg: phi_exp,
                    loss_db: need(1)?,
                    outlier: need(2)? != 0.0,
                });
            }
            if let Some(dg) = field(3)? {
                entries.push(HashMapEntry {
                    settings: DeviceSettings {
                        gamma_fwd_db: need(5)?,
                        gamma_bwd_db: need(6)?,
                        phi_exp_deg: phi_exp,
                    },
                    delta_g_db: dg,
                    phi_rad: need(4)?,
                });
            }
        }
        profile.sort_by(|a, b| a.phi_exp_deg.total_cmp(&b.phi_exp_deg));
        Ok(HashMap {
            options,
            profile,
            entries,
        })
    }
}

fn csv_err(e: csv::Error) -> Error {
    Error::Io(e.to_string())
}

/// Settings realizing (ΔG, φ): the nearest usable φ row, with attenuations
/// computed for the exact ΔG.
pub fn hashmap_lookup(map: &HashMap, delta_g_db: f64, phi: f64) -> Result<DeviceSettings> {
    let target = units::wrap_phase(phi);
    let row = map
        .usable()
        .min_by(|a, b| {
            cyclic_distance(map.phi_of(a), target).total_cmp(&cyclic_distance(map.phi_of(b), target))
        })
        .ok_or_else(|| Error::Range("lookup table has no usable rows".into()))?;
    if cyclic_distance(map.phi_of(row), target) > 0.5 * map.phi_resolution() + 1e-12 {
        return Err(Error::Range(format!("φ = {phi} rad is not covered by the table")));
    }
    Ok(DeviceSettings {
        gamma_fwd_db: attenuation(map.options.g0_db, delta_g_db, map.options.l_fwd_db)?,
        gamma_bwd_db: attenuation(map.options.g0_db, delta_g_db, row.loss_db)?,
        phi_exp_deg: row.phi_exp_deg,
    })
}

/// Reads `phi_exp_deg,s21_db_at_gamma0` calibration rows.
pub fn read_calibration_csv<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    read_two_columns(r, ["phi_exp_deg", "s21_db_at_gamma0"])
}

/// Reads `freq_hz,mag_linear` reflection data.
pub fn read_s11_csv<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    read_two_columns(r, ["freq_hz", "mag_linear"])
}

/// Reads `p_in_w,p_out_w` amplifier data.
pub fn read_gain_csv<R: Read>(r: R) -> Result<Vec<(f64, f64)>> {
    read_two_columns(r, ["p_in_w", "p_out_w"])
}

fn read_two_columns<R: Read>(r: R, names: [&str; 2]) -> Result<Vec<(f64, f64)>> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers().map_err(csv_err)?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Config(format!("missing column {name:?}")))
    };
    let (a, b) = (col(names[0])?, col(names[1])?);
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            let s = rec.get(i).unwrap_or("").trim();
            s.parse()
                .map_err(|_| Error::Config(format!("row {}: bad number {s:?}", line + 2)))
        };
        out.push((parse(a)?, parse(b)?));
    }
    Ok(out)
}
