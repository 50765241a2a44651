//! Conversions between the ordinary frequencies used for I/O (MHz, GHz, ω/2π)
//! and the angular rates used internally (rad/s), plus dB helpers.

use std::f64::consts::TAU;

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;

/// ω/2π in MHz → ω in rad/s.
pub fn mhz(f_mhz: f64) -> f64 {
    TAU * 1e6 * f_mhz
}

/// ω/2π in GHz → ω in rad/s.
pub fn ghz(f_ghz: f64) -> f64 {
    TAU * 1e9 * f_ghz
}

/// ω/2π in Hz → ω in rad/s.
pub fn hz(f_hz: f64) -> f64 {
    TAU * f_hz
}

pub fn to_mhz(omega: f64) -> f64 {
    omega / (TAU * 1e6)
}

pub fn to_ghz(omega: f64) -> f64 {
    omega / (TAU * 1e9)
}

pub fn to_hz(omega: f64) -> f64 {
    omega / TAU
}

/// Power in dBm → watts.
pub fn dbm_to_watts(p_dbm: f64) -> f64 {
    10f64.powf((p_dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(p_w: f64) -> f64 {
    10.0 * (p_w / 1e-3).log10()
}

/// Amplitude ratio for a gain in dB (10^(g/20)).
pub fn db_amplitude(g_db: f64) -> f64 {
    10f64.powf(g_db / 20.0)
}

/// Wrap an angle into [0, 2π).
pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if w >= TAU {
        0.0
    } else {
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mhz_round_trip() {
        for f in [0.1, 2.3, 8.7, 11.5, 6027.0] {
            let back = to_mhz(mhz(f));
            assert!(((back - f) / f).abs() < 1e-12);
        }
        assert!(((to_ghz(ghz(6.027)) - 6.027) / 6.027).abs() < 1e-12);
    }

    #[test]
    fn dbm_conversions() {
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-18);
        assert!((dbm_to_watts(-30.0) - 1e-6).abs() < 1e-21);
        assert!((watts_to_dbm(1e-3)).abs() < 1e-12);
    }

    #[test]
    fn wrap_phase_range() {
        assert_eq!(wrap_phase(0.0), 0.0);
        assert!((wrap_phase(-0.5) - (TAU - 0.5)).abs() < 1e-12);
        assert!((wrap_phase(TAU + 1.0) - 1.0).abs() < 1e-12);
        assert_eq!(wrap_phase(TAU), 0.0);
        assert!(wrap_phase(-1e-300) < TAU);
    }
}
