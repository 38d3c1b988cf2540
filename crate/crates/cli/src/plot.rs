//! Minimal SVG figures: trajectory overlay and error CDFs.

use std::fmt::Write as _;

use dualtrack::eval::ErrorReport;
use dualtrack::geometry::{Arena, Point2D};
use dualtrack::trajectory::SampledTrajectory;

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;
const PALETTE: [&str; 6] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(s: &mut String, title: &str) {
    let full = SIZE + 2.0 * MARGIN;
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{full}" height="{full}" viewBox="0 0 {full} {full}">"#
    );
    let _ = writeln!(s, "<title>{}</title>", escape(title));
    let _ = writeln!(s, r#"<rect x="0" y="0" width="{full}" height="{full}" fill="white"/>"#);
}

fn polyline(s: &mut String, pts: impl Iterator<Item = (f64, f64)>, color: &str, width: f64) {
    let mut coords = String::new();
    for (x, y) in pts {
        let _ = write!(coords, "{x:.2},{y:.2} ");
    }
    let _ = writeln!(
        s,
        r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="{width}"/>"#,
        coords.trim_end()
    );
}

fn legend(s: &mut String, entries: &[(&str, &str)]) {
    for (i, (name, color)) in entries.iter().enumerate() {
        let y = MARGIN + 14.0 * i as f64;
        let x = MARGIN + SIZE - 120.0;
        let _ = writeln!(
            s,
            r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#,
            x + 16.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif">{}</text>"#,
            x + 20.0,
            y + 4.0,
            escape(name)
        );
    }
}

/// Truth (black) under every estimate, drawn in arena coordinates with y up.
pub fn overlay_svg(arena: &Arena, truth: &SampledTrajectory, estimates: &[(String, SampledTrajectory)]) -> String {
    let scale = SIZE / arena.width().max(arena.height());
    let map = |p: &Point2D| {
        (
            MARGIN + (p.x - arena.x_min) * scale,
            MARGIN + SIZE - (p.y - arena.y_min) * scale,
        )
    };
    let mut s = String::new();
    open(&mut s, "trajectory overlay");
    let (x0, y1) = map(&Point2D::new(arena.x_min, arena.y_min));
    let (x1, y0) = map(&Point2D::new(arena.x_max, arena.y_max));
    let _ = writeln!(
        s,
        r##"<rect x="{x0:.2}" y="{y0:.2}" width="{:.2}" height="{:.2}" fill="none" stroke="#999"/>"##,
        x1 - x0,
        y1 - y0
    );
    polyline(&mut s, truth.positions.iter().map(map), "black", 2.0);
    let mut entries = vec![("truth", "black")];
    for (i, (name, est)) in estimates.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut s, est.positions.iter().map(map), color, 1.0);
        entries.push((name.as_str(), color));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

/// Empirical CDF per method; the error axis spans the largest error seen.
pub fn cdf_svg(reports: &[(String, ErrorReport)]) -> String {
    let max_err = reports
        .iter()
        .flat_map(|(_, r)| r.cdf.iter().map(|&(e, _)| e))
        .fold(0.0f64, f64::max);
    let span = if max_err > 0.0 { max_err } else { 1.0 };
    let map = |e: f64, q: f64| (MARGIN + e / span * SIZE, MARGIN + SIZE - q * SIZE);
    let mut s = String::new();
    open(&mut s, "error CDF");
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{0}" x2="{1}" y2="{0}" stroke="black"/>"#,
        MARGIN + SIZE,
        MARGIN + SIZE
    );
    let _ = writeln!(
        s,
        r#"<line x1="{MARGIN}" y1="{MARGIN}" x2="{MARGIN}" y2="{}" stroke="black"/>"#,
        MARGIN + SIZE
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="11" font-family="sans-serif" text-anchor="end">{span:.3} m</text>"#,
        MARGIN + SIZE,
        MARGIN + SIZE + 16.0
    );
    let mut entries = Vec::new();
    for (i, (name, r)) in reports.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        polyline(&mut s, r.cdf.iter().map(|&(e, q)| map(e, q)), color, 1.5);
        entries.push((name.as_str(), color));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(n: usize, y: f64) -> SampledTrajectory {
        let ts = (0..n).map(|k| k as f64 * 0.01).collect();
        let ps = (0..n).map(|k| Point2D::new(1.0 + k as f64 * 0.01, y)).collect();
        SampledTrajectory::from_positions(0.01, ts, ps, Vec::new())
    }

    #[test]
    fn overlay_has_one_polyline_per_track() {
        let arena = Arena::new(0.0, 6.0, 0.0, 6.0).unwrap();
        let svg = overlay_svg(&arena, &line(10, 1.0), &[("a<b".into(), line(10, 1.2))]);
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("a&lt;b"));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn zero_errors_draw_a_flat_cdf() {
        let r = ErrorReport::from_errors(vec![0.0; 5], &[]).unwrap();
        let svg = cdf_svg(&[("same".into(), r)]);
        assert!(svg.contains("<polyline"));
        assert!(svg.contains("1.000 m"));
    }
}
