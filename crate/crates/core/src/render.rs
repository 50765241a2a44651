//! Deterministic SVG heatmaps of sweep grids.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::experiments::SweepGrid;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 150.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 60.0;
const INVALID: &str = "#9e9e9e";

// viridis, sampled at five points and interpolated linearly
const STOPS: [(f64, [f64; 3]); 5] = [
    (0.0, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.5, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.0, [253.0, 231.0, 37.0]),
];

fn colour(t: f64) -> String {
    let t = if t.is_finite() { t.clamp(0.0, 1.0) } else { 0.0 };
    let k = STOPS.iter().position(|s| s.0 >= t).unwrap_or(4).max(1);
    let (t0, c0) = STOPS[k - 1];
    let (t1, c1) = STOPS[k];
    let u = (t - t0) / (t1 - t0);
    let ch = |i: usize| (c0[i] + u * (c1[i] - c0[i])).round() as u8;
    format!("#{:02x}{:02x}{:02x}", ch(0), ch(1), ch(2))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// `delta_g_db` → `ΔG (dB)`; unknown names are shown with their unit suffix.
pub fn axis_label(name: &str) -> String {
    let (stem, unit) = match name.rsplit_once('_') {
        Some((s, u)) if matches!(u, "rad" | "db" | "dbm" | "ghz" | "mhz" | "hz") => (s, u),
        _ => (name, ""),
    };
    let stem = match stem {
        "phi" => "φ".to_string(),
        "delta_g" => "ΔG".to_string(),
        "drive_freq" => "drive frequency".to_string(),
        "amp" => "LC power".to_string(),
        "freq_offset" => "LC frequency offset".to_string(),
        "peak_count" => "peak count".to_string(),
        other => other.replace('_', " "),
    };
    let unit = match unit {
        "rad" => "rad",
        "db" => "dB",
        "dbm" => "dBm",
        "ghz" => "GHz",
        "mhz" => "MHz",
        "hz" => "Hz",
        _ => return stem,
    };
    format!("{stem} ({unit})")
}

/// Cell edges around axis samples: midpoints inside, half a step outside.
fn edges(v: &[f64]) -> Vec<f64> {
    if v.len() == 1 {
        return vec![v[0] - 0.5, v[0] + 0.5];
    }
    let n = v.len();
    let mut e = Vec::with_capacity(n + 1);
    e.push(v[0] - 0.5 * (v[1] - v[0]));
    for w in v.windows(2) {
        e.push(0.5 * (w[0] + w[1]));
    }
    e.push(v[n - 1] + 0.5 * (v[n - 1] - v[n - 2]));
    e
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        HEIGHT - BOTTOM - (y - self.y0) / (self.y1 - self.y0) * (HEIGHT - TOP - BOTTOM)
    }
}

/// Splits a polyline into the pieces inside [y0, y1], cutting at the crossings.
fn clip_polyline(points: &[(f64, f64)], y0: f64, y1: f64, x0: f64, x1: f64) -> Vec<Vec<(f64, f64)>> {
    let inside = |p: &(f64, f64)| p.1 >= y0 && p.1 <= y1 && p.0 >= x0 && p.0 <= x1;
    let cross = |a: (f64, f64), b: (f64, f64)| {
        let y = if (a.1 - y1) * (b.1 - y1) <= 0.0 && a.1 != b.1 { y1 } else { y0 };
        let t = if a.1 == b.1 { 0.0 } else { (y - a.1) / (b.1 - a.1) };
        (a.0 + t.clamp(0.0, 1.0) * (b.0 - a.0), y)
    };
    let mut out: Vec<Vec<(f64, f64)>> = Vec::new();
    let mut cur: Vec<(f64, f64)> = Vec::new();
    for (i, p) in points.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| points[j]);
        match (inside(p), prev.map(|q| inside(&q))) {
            (true, Some(false)) => {
                let q = prev.unwrap();
                if q.0 >= x0 && q.0 <= x1 {
                    cur.push(cross(q, *p));
                }
                cur.push(*p);
            }
            (true, _) => cur.push(*p),
            (false, Some(true)) => {
                if p.0 >= x0 && p.0 <= x1 {
                    cur.push(cross(prev.unwrap(), *p));
                }
                out.push(std::mem::take(&mut cur));
            }
            (false, _) => {}
        }
    }
    out.push(cur);
    out.retain(|s| s.len() >= 2);
    out
}

/// Renders `grid` as an SVG heatmap: axis1 horizontal, axis2 vertical, linear
/// colour scale between the finite min and max, invalid cells grey. `overlay`
/// points are given in axis units and drawn as a polyline clipped to the plot.
pub fn render_heatmap(grid: &SweepGrid, overlay: Option<&[(f64, f64)]>) -> Result<String> {
    let (n1, n2) = grid.shape();
    if n1 == 0 || n2 == 0 || grid.cells.len() != n1 * n2 {
        return Err(Error::domain("cannot render an empty grid"));
    }
    let finite: Vec<f64> = grid
        .cells
        .iter()
        .zip(&grid.valid)
        .filter(|(v, ok)| **ok && v.is_finite())
        .map(|(v, _)| *v)
        .collect();
    let lo = finite.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = finite.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let invalid = grid.cells.len() - finite.len();

    let e1 = edges(&grid.axis1.values);
    let e2 = edges(&grid.axis2.values);
    let f = Frame {
        x0: e1[0],
        x1: e1[n1],
        y0: e2[0],
        y1: e2[n2],
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="14">{}</text>"#,
        0.5 * (LEFT + WIDTH - RIGHT),
        escape(&axis_label(&grid.quantity))
    );

    let _ = writeln!(s, r#"<g id="cells" shape-rendering="crispEdges">"#);
    for i in 0..n1 {
        for j in 0..n2 {
            let v = grid.get(i, j);
            let fill = if grid.is_valid(i, j) && v.is_finite() {
                let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
                colour(t)
            } else {
                INVALID.to_string()
            };
            let (xa, xb) = (f.px(e1[i]), f.px(e1[i + 1]));
            let (ya, yb) = (f.py(e2[j + 1]), f.py(e2[j]));
            let _ = writeln!(
                s,
                r#"<rect x="{xa:.2}" y="{ya:.2}" width="{:.2}" height="{:.2}" fill="{fill}"/>"#,
                (xb - xa).abs(),
                (yb - ya).abs()
            );
        }
    }
    let _ = writeln!(s, "</g>");

    // frame, ticks and labels
    let (pl, pr, pt, pb) = (f.px(f.x0), f.px(f.x1), f.py(f.y1), f.py(f.y0));
    let _ = writeln!(
        s,
        r#"<rect x="{pl:.2}" y="{pt:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="black"/>"#,
        pr - pl,
        pb - pt
    );
    for k in 0..5 {
        let u = k as f64 / 4.0;
        let x = grid.axis1.values[0] + u * (grid.axis1.values[n1 - 1] - grid.axis1.values[0]);
        let y = grid.axis2.values[0] + u * (grid.axis2.values[n2 - 1] - grid.axis2.values[0]);
        let (px, py) = (f.px(x), f.py(y));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{pb:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/><text x="{px:.2}" y="{:.2}" text-anchor="middle">{x:.3}</text>"#,
            pb + 5.0,
            pb + 18.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{pl:.2}" y1="{py:.2}" x2="{:.2}" y2="{py:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3}</text>"#,
            pl - 5.0,
            pl - 8.0,
            py + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        0.5 * (pl + pr),
        HEIGHT - 15.0,
        escape(&axis_label(&grid.axis1.name))
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        0.5 * (pt + pb),
        0.5 * (pt + pb),
        escape(&axis_label(&grid.axis2.name))
    );

    if let Some(points) = overlay {
        for seg in clip_polyline(points, f.y0, f.y1, f.x0, f.x1) {
            let pts: Vec<String> = seg
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", f.px(*x), f.py(*y)))
                .collect();
            let _ = writeln!(
                s,
                r#"<polyline class="overlay" points="{}" fill="none" stroke="white" stroke-width="2" stroke-dasharray="6 3"/>"#,
                pts.join(" ")
            );
        }
    }

    // legend: colour bar with the extremes, and the invalid count
    let bx = WIDTH - RIGHT + 30.0;
    let _ = writeln!(s, r#"<g id="legend">"#);
    let steps = 50;
    let bar_h = (pb - pt) / steps as f64;
    for k in 0..steps {
        let t = 1.0 - (k as f64 + 0.5) / steps as f64;
        let _ = writeln!(
            s,
            r#"<rect x="{bx:.2}" y="{:.2}" width="20" height="{:.2}" fill="{}"/>"#,
            pt + k as f64 * bar_h,
            bar_h + 0.5,
            colour(t)
        );
    }
    let fmt = |v: f64| if v.is_finite() { format!("{v:.4}") } else { "n/a".into() };
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">max {}</text>"#,
        bx + 25.0,
        pt + 10.0,
        fmt(hi)
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}">min {}</text>"#,
        bx + 25.0,
        pb,
        fmt(lo)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{bx:.2}" y="{:.2}" width="20" height="12" fill="{INVALID}"/><text x="{:.2}" y="{:.2}">invalid: {invalid}</text>"#,
        pb + 20.0,
        bx + 25.0,
        pb + 30.0
    );
    let _ = writeln!(s, "</g>");
    let _ = writeln!(s, "</svg>");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{default_delta_g_grid, default_phi_grid, run_id, Axis, RunMetadata};
    use crate::model::{OperatingPoint, PhysicalParams};
    use crate::{analytics, spectral, stability};
    use std::collections::BTreeMap;

    fn grid(a1: Vec<f64>, a2: Vec<f64>, cells: Vec<f64>, valid: Vec<bool>) -> SweepGrid {
        SweepGrid {
            quantity: "amp_dbm".into(),
            axis1: Axis::new("phi_rad", a1),
            axis2: Axis::new("delta_g_db", a2),
            cells,
            valid,
            metadata: RunMetadata {
                run_id: run_id("t"),
                fixed: BTreeMap::new(),
                errors: vec![],
            },
        }
    }

    #[test]
    fn single_cell() {
        let svg = render_heatmap(&grid(vec![1.0], vec![2.0], vec![-10.0], vec![true]), None).unwrap();
        assert_eq!(svg.matches("<rect x=").count(), 1 + 1 + 50 + 1);
        assert!(svg.contains("max -10.0000") && svg.contains("min -10.0000"));
        assert!(svg.contains("φ (rad)") && svg.contains("ΔG (dB)"));
        assert!(svg.contains("invalid: 0"));
    }

    #[test]
    fn invalid_cells_are_grey_and_counted() {
        let g = grid(
            vec![0.0, 1.0],
            vec![0.0, 1.0],
            vec![1.0, f64::NAN, 3.0, 4.0],
            vec![true, false, false, true],
        );
        let svg = render_heatmap(&g, None).unwrap();
        let cells = svg.split("<g id=\"cells\"").nth(1).unwrap().split("</g>").next().unwrap();
        assert_eq!(cells.matches(INVALID).count(), 2);
        assert!(svg.contains("invalid: 2"));
        assert!(svg.contains("min 1.0000") && svg.contains("max 4.0000"));
    }

    #[test]
    fn empty_grid_is_an_error() {
        assert!(render_heatmap(&grid(vec![], vec![1.0], vec![], vec![]), None).is_err());
    }

    #[test]
    fn deterministic_output() {
        let g = grid(vec![0.0, 1.0, 2.0], vec![5.0, 6.0], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], vec![true; 6]);
        let o = [(0.0, 5.5), (2.0, 5.7)];
        assert_eq!(render_heatmap(&g, Some(&o)).unwrap(), render_heatmap(&g, Some(&o)).unwrap());
    }

    #[test]
    fn colour_map_ends() {
        assert_eq!(colour(0.0), "#440154");
        assert_eq!(colour(1.0), "#fde725");
        assert_eq!(colour(f64::NAN), colour(0.0));
    }

    #[test]
    fn clipping_cuts_at_the_frame() {
        let segs = clip_polyline(&[(0.0, 0.0), (1.0, 2.0), (2.0, 0.0)], -1.0, 1.0, 0.0, 2.0);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0], vec![(0.0, 0.0), (0.5, 1.0)]);
        assert_eq!(segs[1], vec![(1.5, 1.0), (2.0, 0.0)]);
    }

    #[test]
    fn boundary_separates_floor_cells() {
        // analytic amplitude map: floor where stable, emitted power where a cycle exists
        let p = PhysicalParams::symmetric();
        let phis = default_phi_grid();
        let gains = default_delta_g_grid();
        let mut cells = Vec::new();
        for &phi in &phis {
            for &dg in &gains {
                let op = OperatingPoint::undriven(&p, dg, phi);
                let v = analytics::lc_amplitude(&p, &op)
                    .and_then(|n| spectral::photons_to_dbm(&p, n).ok())
                    .map_or(spectral::LC_FLOOR_DBM, |d| d.max(spectral::LC_FLOOR_DBM));
                cells.push(v);
            }
        }
        let n = cells.len();
        let g = grid(phis.clone(), gains.clone(), cells, vec![true; n]);
        let curve = stability::boundary_curve(&p, 1000);
        let svg = render_heatmap(&g, Some(&curve)).unwrap();
        assert!(svg.contains("class=\"overlay\""));
        let step = gains[1] - gains[0];
        for (i, &phi) in phis.iter().enumerate() {
            let Some(th) = stability::threshold_gain(&p, phi) else { continue };
            for (j, &dg) in gains.iter().enumerate() {
                let above_floor = g.get(i, j) > spectral::LC_FLOOR_DBM;
                if (dg - th).abs() > step {
                    assert_eq!(above_floor, dg > th, "φ = {phi}, ΔG = {dg}, threshold {th}");
                }
            }
        }
    }
}
