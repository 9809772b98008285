//! Miss-rate/FPPI curves as CSV, and their log-log SVG plot.

use std::fmt::Write as _;
use std::path::Path;

use mscsp_core::eval::{CurvePoint, MrFppiCurve};

use crate::error::{read_to_string, IoError, LineError};
use crate::formats::format_sig;

pub const CSV_HEADER: &str = "fppi,miss_rate";

pub fn format_curve_csv(curve: &MrFppiCurve) -> String {
    let mut out = format!("{CSV_HEADER}\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{}", format_sig(p.fppi), format_sig(p.miss_rate));
    }
    out
}

pub fn parse_curve_csv(text: &str) -> Result<MrFppiCurve, LineError> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, header)) if header.trim() == CSV_HEADER => {}
        Some((i, _)) => return Err(LineError::new(i + 1, format!("expected header `{CSV_HEADER}`"))),
        None => return Err(LineError::new(1, "empty curve file")),
    }
    let mut points = Vec::new();
    for (i, line) in lines {
        let (f, m) = line
            .split_once(',')
            .ok_or_else(|| LineError::new(i + 1, "expected two comma-separated values"))?;
        let num = |s: &str| {
            s.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| LineError::new(i + 1, format!("invalid value `{}`", s.trim())))
        };
        points.push(CurvePoint {
            fppi: num(f)?,
            miss_rate: num(m)?,
        });
    }
    Ok(MrFppiCurve { points })
}

pub fn read_curve_csv(path: &Path) -> Result<MrFppiCurve, IoError> {
    parse_curve_csv(&read_to_string(path)?).map_err(|e| IoError::parse(path, e))
}

/// One plotted series.
pub struct Series {
    pub label: String,
    pub curve: MrFppiCurve,
}

const WIDTH: f64 = 560.0;
const HEIGHT: f64 = 420.0;
const LEFT: f64 = 64.0;
const RIGHT: f64 = 180.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const X_RANGE: (f64, f64) = (1e-3, 1e1);
const Y_RANGE: (f64, f64) = (0.05, 1.0);
const COLORS: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn log_pos(v: f64, (lo, hi): (f64, f64), start: f64, len: f64) -> f64 {
    let v = v.clamp(lo, hi);
    start + (v.log10() - lo.log10()) / (hi.log10() - lo.log10()) * len
}

fn px(fppi: f64) -> f64 {
    log_pos(fppi, X_RANGE, LEFT, WIDTH - LEFT - RIGHT)
}

fn py(mr: f64) -> f64 {
    HEIGHT - BOTTOM - (log_pos(mr, Y_RANGE, 0.0, HEIGHT - TOP - BOTTOM))
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Miss rate against FPPI on log-log axes, drawn as step curves.
pub fn render_svg(series: &[Series], title: &str) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="11">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let (x0, x1, y0, y1) = (LEFT, WIDTH - RIGHT, TOP, HEIGHT - BOTTOM);
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="18" text-anchor="middle" font-size="13">{}</text>"#,
        (x0 + x1) / 2.0,
        escape(title)
    );
    for e in -3..=1 {
        let x = px(10f64.powi(e));
        let _ = writeln!(s, r##"<line x1="{x:.1}" y1="{y0}" x2="{x:.1}" y2="{y1}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{:.1}" text-anchor="middle">1e{e}</text>"#, y1 + 16.0);
    }
    for mr in [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.64, 0.8, 1.0] {
        let y = py(mr);
        let _ = writeln!(s, r##"<line x1="{x0}" y1="{y:.1}" x2="{x1}" y2="{y:.1}" stroke="#ddd"/>"##);
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{mr}</text>"#, x0 - 6.0, y + 4.0);
    }
    let _ = writeln!(
        s,
        r#"<rect x="{x0}" y="{y0}" width="{:.1}" height="{:.1}" fill="none" stroke="black"/>"#,
        x1 - x0,
        y1 - y0
    );
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">false positives per image</text>"#,
        (x0 + x1) / 2.0,
        HEIGHT - 12.0
    );
    let _ = writeln!(
        s,
        r#"<text x="16" y="{:.1}" text-anchor="middle" transform="rotate(-90 16 {:.1})">miss rate</text>"#,
        (y0 + y1) / 2.0,
        (y0 + y1) / 2.0
    );
    for (i, series) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = Vec::new();
        let mut prev: Option<f64> = None;
        for p in &series.curve.points {
            if let Some(m) = prev {
                pts.push(format!("{:.1},{:.1}", px(p.fppi), py(m)));
            }
            pts.push(format!("{:.1},{:.1}", px(p.fppi), py(p.miss_rate)));
            prev = Some(p.miss_rate);
        }
        if let Some(m) = prev {
            pts.push(format!("{:.1},{:.1}", px(X_RANGE.1), py(m)));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="2" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = y0 + 14.0 + 18.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{color}" stroke-width="2"/>"#,
            x1 + 10.0,
            x1 + 30.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">{}</text>"#,
            x1 + 36.0,
            ly + 4.0,
            escape(&series.label)
        );
    }
    s.push_str("</svg>\n");
    s
}
