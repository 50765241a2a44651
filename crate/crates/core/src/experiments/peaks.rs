use crate::spectral::{Spectrum, LC_FLOOR_DBM};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeakOptions {
    pub floor_dbm: f64,
    pub min_separation_bins: usize,
    pub prominence_db: f64,
}

impl Default for PeakOptions {
    fn default() -> Self {
        PeakOptions {
            floor_dbm: LC_FLOOR_DBM,
            min_separation_bins: 5,
            prominence_db: 3.0,
        }
    }
}

/// Number of distinct peaks in `spectrum.power_dbm` with the default options.
pub fn peak_count(spectrum: &Spectrum) -> usize {
    peak_count_with(&spectrum.power_dbm, &PeakOptions::default()).len()
}

/// Indices of the distinct peaks of `power`, highest first.
///
/// A peak is a local maximum above the floor whose topographic prominence
/// (height above the higher of the lowest points separating it from taller
/// terrain on either side) is at least `prominence_db`. Peaks closer than
/// `min_separation_bins` to a taller accepted peak are merged into it.
pub fn peak_count_with(power: &[f64], opts: &PeakOptions) -> Vec<usize> {
    let n = power.len();
    let mut candidates: Vec<usize> = (0..n)
        .filter(|&i| {
            let p = power[i];
            p >= opts.floor_dbm
                && (i == 0 || p > power[i - 1])
                && (i + 1 == n || p >= power[i + 1])
        })
        .filter(|&i| prominence(power, i) >= opts.prominence_db)
        .collect();
    candidates.sort_by(|&a, &b| power[b].total_cmp(&power[a]).then(a.cmp(&b)));
    let mut accepted: Vec<usize> = Vec::new();
    for c in candidates {
        if accepted.iter().all(|&a| a.abs_diff(c) > opts.min_separation_bins) {
            accepted.push(c);
        }
    }
    accepted
}

fn prominence(power: &[f64], i: usize) -> f64 {
    let p = power[i];
    let mut left_min = p;
    let mut j = i;
    while j > 0 {
        j -= 1;
        if power[j] > p {
            break;
        }
        left_min = left_min.min(power[j]);
    }
    let mut right_min = p;
    let mut j = i;
    while j + 1 < power.len() {
        j += 1;
        if power[j] > p {
            break;
        }
        right_min = right_min.min(power[j]);
    }
    p - left_min.max(right_min)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(power: Vec<f64>) -> Spectrum {
        Spectrum {
            freq: (0..power.len()).map(|i| i as f64).collect(),
            amp: vec![Default::default(); power.len()],
            power_dbm: power,
        }
    }

    #[test]
    fn flat_spectrum_has_no_peaks() {
        assert_eq!(peak_count(&spec(vec![-200.0; 64])), 0);
    }

    #[test]
    fn single_tone() {
        let mut p = vec![-120.0; 64];
        p[20] = 0.0;
        p[19] = -20.0;
        p[21] = -25.0;
        assert_eq!(peak_count(&spec(p)), 1);
    }

    #[test]
    fn three_separated_tones() {
        let mut p = vec![-120.0; 100];
        for (k, h) in [(10, -10.0), (30, 2.0), (55, -30.0)] {
            p[k] = h;
            p[k - 1] = h - 8.0;
            p[k + 1] = h - 9.0;
        }
        assert_eq!(peak_count(&spec(p)), 3);
    }

    #[test]
    fn close_and_shallow_peaks_are_merged() {
        let mut p = vec![-120.0; 100];
        p[30] = 0.0;
        p[33] = -5.0; // within 5 bins of a taller peak
        p[60] = -10.0;
        p[61] = -11.0;
        p[62] = -9.0; // only 2 dB above the saddle at 61
        assert_eq!(peak_count_with(&p, &PeakOptions::default()), vec![30, 62]);
        let shallow = PeakOptions {
            prominence_db: 1.0,
            min_separation_bins: 0,
            ..PeakOptions::default()
        };
        assert_eq!(peak_count_with(&p, &shallow), vec![30, 33, 62, 60]);
    }

    #[test]
    fn floor_is_respected() {
        let mut p = vec![-120.0; 50];
        p[25] = -50.0;
        assert_eq!(peak_count(&spec(p)), 0);
    }
}
