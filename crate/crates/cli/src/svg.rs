//! Minimal SVG 1.1 writer for line and scatter plots.

use std::fmt::Write as _;

const PANEL_W: f64 = 480.0;
const PANEL_H: f64 = 360.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 36.0;
const BOTTOM: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mark {
    Line,
    Dashed,
    Dots,
}

#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub mark: Mark,
    pub color: &'static str,
}

impl Series {
    pub fn new(label: impl Into<String>, points: Vec<(f64, f64)>, mark: Mark, color: &'static str) -> Self {
        Self {
            label: label.into(),
            points,
            mark,
            color,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Panel {
    pub title: String,
    pub x_label: String,
    pub y_label: String,
    pub series: Vec<Series>,
}

impl Panel {
    pub fn new(title: impl Into<String>, x_label: impl Into<String>, y_label: impl Into<String>) -> Self {
        Self {
            title: title.into(),
            x_label: x_label.into(),
            y_label: y_label.into(),
            series: Vec::new(),
        }
    }

    pub fn with(mut self, series: Series) -> Self {
        self.series.push(series);
        self
    }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Tick spacing of 1, 2 or 5 times a power of ten giving about five ticks.
fn tick_step(span: f64) -> f64 {
    let raw = span / 5.0;
    let base = 10f64.powf(raw.log10().floor());
    let m = raw / base;
    let nice = if m < 1.5 {
        1.0
    } else if m < 3.5 {
        2.0
    } else if m < 7.5 {
        5.0
    } else {
        10.0
    };
    nice * base
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    (first..=last).map(|k| k as f64 * step).collect()
}

fn tick_label(v: f64, step: f64) -> String {
    let digits = (-step.log10().floor()).max(0.0) as usize;
    let s = format!("{v:.digits$}");
    if s.starts_with('-') && s.trim_start_matches(['-', '0', '.']).is_empty() {
        s[1..].to_string()
    } else {
        s
    }
}

/// Data range padded by 5 percent; degenerate ranges are widened.
fn range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for v in values.filter(|v| v.is_finite()) {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if lo > hi {
        return (0.0, 1.0);
    }
    if hi - lo <= 1e-12 * (1.0 + lo.abs()) {
        let pad = 0.5 * (1.0 + lo.abs()) * 0.1;
        return (lo - pad, hi + pad);
    }
    let pad = 0.05 * (hi - lo);
    (lo - pad, hi + pad)
}

fn render_panel(out: &mut String, panel: &Panel, x0: f64) {
    let points = || panel.series.iter().flat_map(|s| s.points.iter());
    let (xmin, xmax) = range(points().map(|p| p.0));
    let (ymin, ymax) = range(points().map(|p| p.1));
    let (pw, ph) = (PANEL_W - LEFT - RIGHT, PANEL_H - TOP - BOTTOM);
    let sx = |x: f64| x0 + LEFT + (x - xmin) / (xmax - xmin) * pw;
    let sy = |y: f64| TOP + (ymax - y) / (ymax - ymin) * ph;

    let _ = writeln!(
        out,
        r#"<rect x="{:.2}" y="{TOP}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#,
        x0 + LEFT
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="20" text-anchor="middle" font-size="14">{}</text>"#,
        x0 + LEFT + 0.5 * pw,
        escape(&panel.title)
    );
    let xstep = tick_step(xmax - xmin);
    for t in ticks(xmin, xmax) {
        let x = sx(t);
        let _ = writeln!(
            out,
            r#"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="black"/><text x="{x:.2}" y="{:.2}" text-anchor="middle" font-size="11">{}</text>"#,
            TOP + ph,
            TOP + ph + 5.0,
            TOP + ph + 18.0,
            tick_label(t, xstep)
        );
    }
    let ystep = tick_step(ymax - ymin);
    for t in ticks(ymin, ymax) {
        let y = sy(t);
        let _ = writeln!(
            out,
            r#"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="black"/><text x="{:.2}" y="{:.2}" text-anchor="end" font-size="11">{}</text>"#,
            x0 + LEFT - 5.0,
            x0 + LEFT,
            x0 + LEFT - 8.0,
            y + 4.0,
            tick_label(t, ystep)
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
        x0 + LEFT + 0.5 * pw,
        PANEL_H - 10.0,
        escape(&panel.x_label)
    );
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="12" transform="rotate(-90 {:.2} {:.2})">{}</text>"#,
        x0 + 16.0,
        TOP + 0.5 * ph,
        x0 + 16.0,
        TOP + 0.5 * ph,
        escape(&panel.y_label)
    );

    for s in &panel.series {
        let finite = s.points.iter().filter(|p| p.0.is_finite() && p.1.is_finite());
        match s.mark {
            Mark::Line | Mark::Dashed => {
                let coords: Vec<String> = finite.map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
                if coords.is_empty() {
                    continue;
                }
                let dash = if s.mark == Mark::Dashed { r#" stroke-dasharray="6 4""# } else { "" };
                let _ = writeln!(
                    out,
                    r#"<polyline fill="none" stroke="{}" stroke-width="1.5"{dash} points="{}"/>"#,
                    s.color,
                    coords.join(" ")
                );
            }
            Mark::Dots => {
                for &(x, y) in finite {
                    let _ = writeln!(
                        out,
                        r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#,
                        sx(x),
                        sy(y),
                        s.color
                    );
                }
            }
        }
    }

    for (i, s) in panel.series.iter().enumerate() {
        let y = TOP + 14.0 + 16.0 * i as f64;
        let x = x0 + PANEL_W - RIGHT - 150.0;
        let swatch = match s.mark {
            Mark::Dots => format!(r#"<circle cx="{:.2}" cy="{:.2}" r="3" fill="{}"/>"#, x + 10.0, y - 4.0, s.color),
            _ => format!(
                r#"<line x1="{x:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="1.5"/>"#,
                y - 4.0,
                x + 20.0,
                y - 4.0,
                s.color
            ),
        };
        let _ = writeln!(
            out,
            r#"{swatch}<text x="{:.2}" y="{y:.2}" font-size="11">{}</text>"#,
            x + 26.0,
            escape(&s.label)
        );
    }
}

/// Renders the panels side by side into one SVG document.
pub fn render(panels: &[Panel]) -> String {
    let width = PANEL_W * panels.len().max(1) as f64;
    let mut out = String::new();
    let _ = writeln!(out, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{PANEL_H}" viewBox="0 0 {width} {PANEL_H}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    for (i, panel) in panels.iter().enumerate() {
        render_panel(&mut out, panel, PANEL_W * i as f64);
    }
    out.push_str("</svg>\n");
    out
}
