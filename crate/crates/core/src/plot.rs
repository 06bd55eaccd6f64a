//! Fairness/accuracy tradeoff scatter as a standalone SVG.
//!
//! Output is a pure function of the input: numbers are printed with fixed
//! precision and points in input order.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::sweep::SweepRow;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;
const TICKS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct PlotPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

/// Successful sweep rows as (bias amplification, accuracy) points.
pub fn points_from_rows(rows: &[SweepRow]) -> Vec<PlotPoint> {
    rows.iter()
        .filter_map(|r| {
            Some(PlotPoint {
                label: r.setting_id.clone(),
                x: r.bias_amp_mean?,
                y: r.accuracy?,
            })
        })
        .collect()
}

/// Data range padded by 10% on each side.
fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    let span = hi - lo;
    let pad = if span > 0.0 {
        0.1 * span
    } else if lo != 0.0 {
        0.1 * lo.abs()
    } else {
        0.01
    };
    (lo - pad, hi + pad)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

pub fn tradeoff_svg(points: &[PlotPoint], x_label: &str, y_label: &str) -> Result<String> {
    if points.is_empty() {
        return Err(Error::Empty("plot points"));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::InvalidParameter("plot points must be finite".into()));
    }
    let (x0, x1) = axis_range(points.iter().map(|p| p.x));
    let (y0, y1) = axis_range(points.iter().map(|p| p.y));
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * (WIDTH - 2.0 * MARGIN);
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * (HEIGHT - 2.0 * MARGIN);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        s,
        r#"<path d="M{l:.1},{t:.1} L{l:.1},{b:.1} L{r:.1},{b:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=TICKS {
        let f = i as f64 / TICKS as f64;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let (tx, ty) = (px(xv), py(yv));
        let _ = writeln!(
            s,
            r#"<line x1="{tx:.1}" y1="{b:.1}" x2="{tx:.1}" y2="{:.1}" stroke="black"/><text x="{tx:.1}" y="{:.1}" text-anchor="middle">{xv:.4}</text>"#,
            b + 4.0,
            b + 16.0
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ty:.1}" x2="{l:.1}" y2="{ty:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{yv:.4}</text>"#,
            l - 4.0,
            l - 6.0,
            ty + 4.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        WIDTH / 2.0,
        HEIGHT - 15.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text x="15" y="{:.1}" text-anchor="middle" transform="rotate(-90 15 {:.1})">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );
    for p in points {
        let (cx, cy) = (px(p.x), py(p.y));
        let _ = writeln!(
            s,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="4" fill="steelblue"/><text x="{:.2}" y="{:.2}">{}</text>"#,
            cx + 6.0,
            cy - 6.0,
            escape(&p.label)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

/// Scatter of sweep rows: bias amplification on x, accuracy on y.
pub fn emit_tradeoff_plot(rows: &[SweepRow]) -> Result<String> {
    tradeoff_svg(&points_from_rows(rows), "bias amplification", "accuracy")
}
