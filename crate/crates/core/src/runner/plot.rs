//! Minimal SVG line charts for trajectory panels.

use std::fmt::Write;

const PANEL_W: f64 = 420.0;
const PANEL_H: f64 = 220.0;
const MARGIN_L: f64 = 62.0;
const MARGIN_R: f64 = 12.0;
const MARGIN_T: f64 = 26.0;
const MARGIN_B: f64 = 30.0;
const COLS: usize = 2;

/// One channel of a panel figure.
pub struct PanelData<'a> {
    pub title: &'a str,
    pub truth: Vec<f64>,
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    let pad = if hi > lo { 0.05 * (hi - lo) } else { 0.5 * lo.abs().max(1e-12) };
    (lo - pad, hi + pad)
}

fn polyline(out: &mut String, xs: &[f64], ys: &[f64], map: &dyn Fn(f64, f64) -> (f64, f64), style: &str) {
    let mut pts = String::new();
    for (x, y) in xs.iter().zip(ys) {
        let (px, py) = map(*x, *y);
        let _ = write!(pts, "{px:.2},{py:.2} ");
    }
    let _ = writeln!(out, r#"<polyline fill="none" {style} points="{}"/>"#, pts.trim_end());
}

/// Grid of panels with two columns: band, truth and prediction per channel.
pub fn panel_svg(title: &str, t: &[f64], panels: &[PanelData<'_>]) -> String {
    let rows = panels.len().div_ceil(COLS);
    let width = PANEL_W * COLS as f64;
    let height = PANEL_H * rows as f64 + 30.0;
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="14">{title}</text>"#, width / 2.0);
    let (t0, t1) = bounds(t.iter().copied());
    for (i, p) in panels.iter().enumerate() {
        let ox = PANEL_W * (i % COLS) as f64;
        let oy = 30.0 + PANEL_H * (i / COLS) as f64;
        let (x0, x1) = (ox + MARGIN_L, ox + PANEL_W - MARGIN_R);
        let (y0, y1) = (oy + MARGIN_T, oy + PANEL_H - MARGIN_B);
        let (lo, hi) = bounds(p.truth.iter().chain(&p.mean).chain(&p.lower).chain(&p.upper).copied());
        let map = |x: f64, y: f64| {
            (
                x0 + (x - t0) / (t1 - t0) * (x1 - x0),
                y1 - (y.clamp(lo, hi) - lo) / (hi - lo) * (y1 - y0),
            )
        };
        let _ = writeln!(
            out,
            r##"<rect x="{x0:.1}" y="{y0:.1}" width="{:.1}" height="{:.1}" fill="none" stroke="#888"/>"##,
            x1 - x0,
            y1 - y0
        );
        let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, oy + 16.0, p.title);
        for (v, y) in [(hi, y0), (lo, y1)] {
            let _ = writeln!(out, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3e}</text>"#, x0 - 4.0, y + 4.0);
        }
        for (v, x, anchor) in [(t0, x0, "start"), (t1, x1, "end")] {
            let _ = writeln!(out, r#"<text x="{x:.1}" y="{:.1}" text-anchor="{anchor}">{v:.0} s</text>"#, y1 + 14.0);
        }
        if !p.lower.is_empty() {
            let mut pts = String::new();
            for (x, y) in t.iter().zip(&p.upper) {
                let (px, py) = map(*x, *y);
                let _ = write!(pts, "{px:.2},{py:.2} ");
            }
            for (x, y) in t.iter().zip(&p.lower).rev() {
                let (px, py) = map(*x, *y);
                let _ = write!(pts, "{px:.2},{py:.2} ");
            }
            let _ = writeln!(out, r##"<polygon fill="#9ecae1" fill-opacity="0.5" stroke="none" points="{}"/>"##, pts.trim_end());
        }
        polyline(&mut out, t, &p.truth, &map, r##"stroke="#222" stroke-width="1.2""##);
        polyline(&mut out, t, &p.mean, &map, r##"stroke="#d62728" stroke-width="1" stroke-dasharray="4 2""##);
    }
    let _ = writeln!(out, "</svg>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panel_has_one_band_and_two_lines_per_channel() {
        let t = [0.0, 1.0, 2.0];
        let panel = || PanelData {
            title: "u",
            truth: vec![0.0, 1.0, 0.5],
            mean: vec![0.1, 0.9, 0.5],
            lower: vec![-0.1, 0.7, 0.3],
            upper: vec![0.3, 1.1, 0.7],
        };
        let svg = panel_svg("test", &t, &[panel(), panel(), panel()]);
        assert!(svg.starts_with("<svg"));
        assert_eq!(svg.matches("<polygon").count(), 3);
        assert_eq!(svg.matches("<polyline").count(), 6);
    }
}
