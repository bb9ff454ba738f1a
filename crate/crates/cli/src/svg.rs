//! Minimal 2-D scatter plot writer.

use std::fmt::Write;

const SIZE: f64 = 800.0;
const MARGIN: f64 = 40.0;

/// Renders labelled points into a standalone SVG document. Axes are scaled
/// independently to fill the canvas.
pub fn scatter(points: &[(String, f64, f64)], x_label: &str, y_label: &str) -> String {
    let range = |sel: fn(&(String, f64, f64)) -> f64| {
        let (lo, hi) = points
            .iter()
            .map(sel)
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        if lo < hi {
            (lo, hi)
        } else {
            (lo - 1.0, lo + 1.0)
        }
    };
    let (x0, x1) = range(|p| p.1);
    let (y0, y1) = range(|p| p.2);
    let span = SIZE - 2.0 * MARGIN;
    let sx = |x: f64| MARGIN + (x - x0) / (x1 - x0) * span;
    let sy = |y: f64| SIZE - MARGIN - (y - y0) / (y1 - y0) * span;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">{}</text>"#,
        SIZE / 2.0,
        SIZE - 8.0,
        escape(x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="12" y="{}" font-size="12" text-anchor="middle" transform="rotate(-90 12 {})">{}</text>"#,
        SIZE / 2.0,
        SIZE / 2.0,
        escape(y_label)
    );
    for (id, x, y) in points {
        let (px, py) = (sx(*x), sy(*y));
        let _ = writeln!(out, r#"<circle cx="{px:.2}" cy="{py:.2}" r="3" fill="steelblue"/>"#);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" font-size="8">{}</text>"#,
            px + 4.0,
            py - 4.0,
            escape(id)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_circle_per_point() {
        let pts = vec![("a".into(), 0.0, 1.0), ("b<".into(), 2.0, -1.0), ("c".into(), 2.0, -1.0)];
        let svg = scatter(&pts, "d0", "d1");
        assert_eq!(svg.matches("<circle").count(), 3);
        assert!(svg.contains("b&lt;"));
    }

    #[test]
    fn degenerate_range_stays_finite() {
        let svg = scatter(&[("x".into(), 1.0, 1.0)], "d0", "d1");
        assert!(!svg.contains("NaN"));
    }
}
