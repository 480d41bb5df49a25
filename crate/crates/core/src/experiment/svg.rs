//! Standalone SVG scatter plots of the first two coordinates.

use std::fmt::Write;

use crate::math::Matrix;

pub struct Series<'a> {
    pub label: &'a str,
    pub color: &'a str,
    pub points: &'a Matrix,
}

const SIZE: f64 = 480.0;
const MARGIN: f64 = 40.0;

/// Renders every series into one square plot sharing a common, equal-aspect
/// frame. Output depends only on the inputs.
pub fn scatter(title: &str, series: &[Series]) -> String {
    let coords = |m: &Matrix, r: usize| (m.get(r, 0), if m.cols() > 1 { m.get(r, 1) } else { 0.0 });
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for s in series {
        for r in 0..s.points.rows() {
            let (x, y) = coords(s.points, r);
            lo = [lo[0].min(x), lo[1].min(y)];
            hi = [hi[0].max(x), hi[1].max(y)];
        }
    }
    if !lo[0].is_finite() {
        lo = [-1.0, -1.0];
        hi = [1.0, 1.0];
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]).max(1e-9) * 1.1;
    let cx = 0.5 * (lo[0] + hi[0]);
    let cy = 0.5 * (lo[1] + hi[1]);
    let (x0, y0) = (cx - span / 2.0, cy - span / 2.0);
    let inner = SIZE - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / span * inner;
    let py = |y: f64| SIZE - MARGIN - (y - y0) / span * inner;

    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="13">{}</text>"#, SIZE / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{inner}" height="{inner}" fill="none" stroke="black"/>"#
    );
    for (v, anchor, x, y) in [
        (x0, "start", MARGIN, SIZE - MARGIN + 14.0),
        (x0 + span, "end", SIZE - MARGIN, SIZE - MARGIN + 14.0),
    ] {
        let _ = writeln!(out, r#"<text x="{x}" y="{y}" text-anchor="{anchor}">{v:.2}</text>"#);
    }
    for (v, y) in [(y0, SIZE - MARGIN), (y0 + span, MARGIN + 8.0)] {
        let _ = writeln!(out, r#"<text x="{}" y="{y}" text-anchor="end">{v:.2}</text>"#, MARGIN - 4.0);
    }
    for (k, s) in series.iter().enumerate() {
        let _ = writeln!(out, r#"<g fill="{}" fill-opacity="0.45">"#, escape(s.color));
        for r in 0..s.points.rows() {
            let (x, y) = coords(s.points, r);
            let _ = writeln!(out, r#"<circle cx="{:.2}" cy="{:.2}" r="1.3"/>"#, px(x), py(y));
        }
        let _ = writeln!(out, "</g>");
        let ly = MARGIN + 14.0 + 14.0 * k as f64;
        let _ = writeln!(out, r#"<circle cx="{}" cy="{}" r="4" fill="{}"/>"#, MARGIN + 10.0, ly - 4.0, escape(s.color));
        let _ = writeln!(out, r#"<text x="{}" y="{ly}">{}</text>"#, MARGIN + 18.0, escape(s.label));
    }
    out.push_str("</svg>\n");
    out
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_circle_per_point_and_escaped_labels() {
        let a = Matrix::from_vec(3, 2, vec![0.0, 0.0, 1.0, 1.0, -1.0, 2.0]).unwrap();
        let b = Matrix::from_vec(2, 2, vec![0.5, 0.5, 0.2, 0.1]).unwrap();
        let svg = scatter("a < b", &[
            Series { label: "data", color: "#444", points: &a },
            Series { label: "model & co", color: "#c33", points: &b },
        ]);
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        // Five points plus two legend markers.
        assert_eq!(svg.matches("<circle").count(), 7);
        assert!(svg.contains("a &lt; b") && svg.contains("model &amp; co"));
    }

    #[test]
    fn empty_plot_is_well_formed() {
        let svg = scatter("empty", &[]);
        assert!(svg.contains("</svg>") && !svg.contains("NaN"));
    }
}
