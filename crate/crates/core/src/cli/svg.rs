//! Dependency-free SVG charts on a fixed 800×600 canvas.

use crate::error::{MopoError, Result};
use std::fmt::Write as _;
use std::path::Path;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 50.0;
const BOTTOM: f64 = 70.0;
const PALETTE: &[&str] = &[
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    Line,
    Markers,
    LineMarkers,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    /// Optional shaded band `(x, lo, hi)`, drawn under the line.
    pub band: Vec<(f64, f64, f64)>,
    pub style: Style,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, style: Style) -> Self {
        Series {
            label: label.into(),
            points,
            band: Vec::new(),
            style,
        }
    }

    pub fn with_band(mut self, band: Vec<(f64, f64, f64)>) -> Self {
        self.band = band;
        self
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Axes {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
}

impl Axes {
    pub fn new(title: impl Into<String>, x: impl Into<String>, y: impl Into<String>) -> Self {
        Axes {
            title: title.into(),
            x_label: x.into(),
            y_label: y.into(),
        }
    }
}

pub fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

/// About `target` evenly spaced ticks at 1, 2 or 5 × 10ᵏ covering `[lo, hi]`.
pub fn nice_ticks(lo: f64, hi: f64, target: usize) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| *s >= raw)
        .unwrap_or(10.0 * mag);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step + 1e-9).floor() as i64;
    (first..=last).map(|i| i as f64 * step).collect()
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{:.6}", v);
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.to_string()
    }
}

fn check_finite(series: &[Series]) -> Result<()> {
    for s in series {
        let bad = s.points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite())
            || s
                .band
                .iter()
                .any(|(x, a, b)| !x.is_finite() || !a.is_finite() || !b.is_finite());
        if bad {
            return Err(MopoError::NonFiniteInput(format!("series {:?}", s.label)));
        }
    }
    Ok(())
}

fn range(vals: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
        (lo.min(v), hi.max(v))
    });
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi > lo {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.1 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn render(series: &[Series], axes: &Axes) -> Result<String> {
    check_finite(series)?;
    let xs = series
        .iter()
        .flat_map(|s| s.points.iter().map(|p| p.0).chain(s.band.iter().map(|b| b.0)));
    let ys = series.iter().flat_map(|s| {
        s.points
            .iter()
            .map(|p| p.1)
            .chain(s.band.iter().flat_map(|b| [b.1, b.2]))
    });
    let (x0, x1) = range(xs);
    let (y0, y1) = range(ys);
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut o = String::new();
    let w = &mut o;
    let _ = writeln!(w, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="800" height="600" viewBox="0 0 800 600">"#
    );
    let _ = writeln!(w, r#"<rect x="0" y="0" width="800" height="600" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="30" font-family="sans-serif" font-size="18" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        escape_xml(&axes.title)
    );

    let _ = writeln!(w, r#"<g id="axes" stroke="black" stroke-width="1">"#);
    let _ = writeln!(
        w,
        r#"<line x1="{LEFT:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}"/>"#,
        TOP + ph,
        LEFT + pw,
        TOP + ph
    );
    let _ = writeln!(
        w,
        r#"<line x1="{LEFT:.2}" y1="{TOP:.2}" x2="{LEFT:.2}" y2="{:.2}"/>"#,
        TOP + ph
    );
    let _ = writeln!(w, "</g>");

    let _ = writeln!(w, r#"<g id="ticks" font-family="sans-serif" font-size="12">"#);
    for t in nice_ticks(x0, x1, 6) {
        let px = sx(t);
        let _ = writeln!(
            w,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            TOP + ph + 20.0,
            fmt_tick(t)
        );
    }
    for t in nice_ticks(y0, y1, 6) {
        let py = sy(t);
        let _ = writeln!(
            w,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/>"#,
            LEFT - 5.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 8.0,
            py + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle">{}</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 20.0,
        escape_xml(&axes.x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="20" y="{:.2}" font-family="sans-serif" font-size="14" text-anchor="middle" transform="rotate(-90 20 {:.2})">{}</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0,
        escape_xml(&axes.y_label)
    );

    let _ = writeln!(w, r#"<g id="data">"#);
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        if !s.band.is_empty() {
            let mut pts: Vec<String> = s
                .band
                .iter()
                .map(|(x, _, hi)| format!("{:.2},{:.2}", sx(*x), sy(*hi)))
                .collect();
            pts.extend(
                s.band
                    .iter()
                    .rev()
                    .map(|(x, lo, _)| format!("{:.2},{:.2}", sx(*x), sy(*lo))),
            );
            let _ = writeln!(
                w,
                r#"<polygon points="{}" fill="{color}" fill-opacity="0.2" stroke="none"/>"#,
                pts.join(" ")
            );
        }
        if matches!(s.style, Style::Line | Style::LineMarkers) && !s.points.is_empty() {
            let pts: Vec<String> = s
                .points
                .iter()
                .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
                .collect();
            let _ = writeln!(
                w,
                r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
                pts.join(" ")
            );
        }
        if matches!(s.style, Style::Markers | Style::LineMarkers) {
            for (x, y) in &s.points {
                let _ = writeln!(
                    w,
                    r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="{color}"/>"#,
                    sx(*x),
                    sy(*y)
                );
            }
        }
    }
    let _ = writeln!(w, "</g>");

    let _ = writeln!(w, r#"<g id="legend" font-family="sans-serif" font-size="12">"#);
    let lx = WIDTH - RIGHT + 15.0;
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ly = TOP + 10.0 + 20.0 * i as f64;
        let _ = writeln!(
            w,
            r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="10" fill="{color}"/>"#,
            ly - 9.0
        );
        let _ = writeln!(
            w,
            r#"<text x="{:.2}" y="{ly:.2}">{}</text>"#,
            lx + 20.0,
            escape_xml(&s.label)
        );
    }
    let _ = writeln!(w, "</g>");
    let _ = writeln!(w, "</svg>");
    Ok(o)
}

/// Line chart; series styles other than `Markers` are drawn as polylines.
pub fn svg_lines(series: &[Series], axes: &Axes) -> Result<String> {
    render(series, axes)
}

/// Scatter chart; `Line` series still connect their points.
pub fn svg_scatter(series: &[Series], axes: &Axes) -> Result<String> {
    let s: Vec<Series> = series
        .iter()
        .map(|s| Series {
            style: if s.style == Style::Line { Style::Line } else { Style::Markers },
            ..s.clone()
        })
        .collect();
    render(&s, axes)
}

pub fn emit_svg_lines(series: &[Series], axes: &Axes, path: &Path) -> Result<()> {
    let text = svg_lines(series, axes)?;
    std::fs::write(path, text).map_err(|e| MopoError::io(path, e))
}

pub fn emit_svg_scatter(series: &[Series], axes: &Axes, path: &Path) -> Result<()> {
    let text = svg_scatter(series, axes)?;
    std::fs::write(path, text).map_err(|e| MopoError::io(path, e))
}
