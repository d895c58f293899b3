//! Minimal static SVG line and scatter plots.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::metrics::Predictor;
use crate::datagen::{Dataset, TargetFn};
use crate::error::{Error, Result};
use crate::optim::TrainTrace;

const W: f64 = 800.0;
const H: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 160.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf",
];
const GRID: usize = 1000;

struct Frame {
    x: (f64, f64),
    y: (f64, f64),
}

impl Frame {
    fn px(&self, x: f64) -> f64 {
        LEFT + (x - self.x.0) / (self.x.1 - self.x.0) * (W - LEFT - RIGHT)
    }

    fn py(&self, y: f64) -> f64 {
        H - BOTTOM - (y - self.y.0) / (self.y.1 - self.y.0) * (H - TOP - BOTTOM)
    }

    fn inside(&self, y: f64) -> bool {
        y >= self.y.0 && y <= self.y.1
    }
}

fn svg_open(title: &str, x_label: &str, y_label: &str, frame: &Frame, y_fmt: impl Fn(f64) -> String) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(s, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, (W - RIGHT + LEFT) / 2.0, escape(title));
    let (x0, x1) = (LEFT, W - RIGHT);
    let (y0, y1) = (H - BOTTOM, TOP);
    let _ = writeln!(s, r#"<rect x="{x0}" y="{y1}" width="{}" height="{}" fill="none" stroke="black"/>"#, x1 - x0, y0 - y1);
    for k in 0..=5 {
        let t = k as f64 / 5.0;
        let xv = frame.x.0 + t * (frame.x.1 - frame.x.0);
        let yv = frame.y.0 + t * (frame.y.1 - frame.y.0);
        let (px, py) = (frame.px(xv), frame.py(yv));
        let _ = writeln!(s, r#"<line x1="{px:.2}" y1="{y0}" x2="{px:.2}" y2="{}" stroke="black"/>"#, y0 + 5.0);
        let _ = writeln!(s, r#"<text x="{px:.2}" y="{}" text-anchor="middle">{}</text>"#, y0 + 18.0, fmt_tick(xv));
        let _ = writeln!(s, r#"<line x1="{}" y1="{py:.2}" x2="{x0}" y2="{py:.2}" stroke="black"/>"#, x0 - 5.0);
        let _ = writeln!(s, r#"<text x="{}" y="{:.2}" text-anchor="end">{}</text>"#, x0 - 8.0, py + 4.0, y_fmt(yv));
    }
    let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, (x0 + x1) / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        s,
        r#"<text x="16" y="{0}" text-anchor="middle" transform="rotate(-90 16 {0})">{1}</text>"#,
        (y0 + y1) / 2.0,
        escape(y_label)
    );
    s
}

fn legend(s: &mut String, entries: &[(String, &str)]) {
    for (i, (label, color)) in entries.iter().enumerate() {
        let y = TOP + 15.0 + 18.0 * i as f64;
        let x = W - RIGHT + 12.0;
        let _ = writeln!(s, r#"<line x1="{x}" y1="{y}" x2="{}" y2="{y}" stroke="{color}" stroke-width="2"/>"#, x + 20.0);
        let _ = writeln!(s, r#"<text x="{}" y="{}">{}</text>"#, x + 26.0, y + 4.0, escape(label));
    }
}

fn polyline(s: &mut String, frame: &Frame, pts: &[(f64, f64)], color: &str) {
    let mut path = String::new();
    let mut pen_down = false;
    for &(x, y) in pts {
        if !frame.inside(y) || !y.is_finite() {
            pen_down = false;
            continue;
        }
        let _ = write!(path, "{}{:.2},{:.2} ", if pen_down { "L" } else { "M" }, frame.px(x), frame.py(y));
        pen_down = true;
    }
    let _ = writeln!(s, r#"<path d="{}" fill="none" stroke="{color}" stroke-width="1.5"/>"#, path.trim_end());
}

fn fmt_tick(v: f64) -> String {
    let a = v.abs();
    if a != 0.0 && !(1e-3..1e4).contains(&a) {
        format!("{v:.1e}")
    } else {
        format!("{:.3}", v).trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn write(path: &Path, svg: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(path, svg).map_err(|e| Error::io(path, e))
}

/// Training data, `f0` and fitted curves on a 1000-point grid. The vertical
/// range follows `f0` (with margin) so heavy-tailed responses do not flatten
/// the curves; points outside it are not drawn.
pub fn fit_svg(fits: &[(String, &dyn Predictor)], target: &TargetFn, data: &Dataset) -> Result<String> {
    if target.dim() != 1 || data.d != 1 || fits.iter().any(|(_, f)| f.dim() != 1) {
        return Err(Error::invalid("fit plots are univariate only"));
    }
    let grid: Vec<f64> = (0..GRID).map(|i| i as f64 / (GRID - 1) as f64).collect();
    let truth = target.predict(&grid)?;
    let lo = truth.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = truth.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.5 * (hi - lo).max(1.0);
    let frame = Frame {
        x: (0.0, 1.0),
        y: (lo - pad, hi + pad),
    };
    let mut s = svg_open(&format!("{} fit", target.name()), "x", "y", &frame, fmt_tick);
    for (x, y) in data.xs.iter().zip(&data.ys) {
        if frame.inside(*y) {
            let _ = writeln!(s, r##"<circle cx="{:.2}" cy="{:.2}" r="1.8" fill="#999999"/>"##, frame.px(*x), frame.py(*y));
        }
    }
    let mut entries = vec![("f0".to_string(), "black")];
    polyline(&mut s, &frame, &grid.iter().copied().zip(truth).collect::<Vec<_>>(), "black");
    for (i, (label, f)) in fits.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let ys = f.predict(&grid)?;
        polyline(&mut s, &frame, &grid.iter().copied().zip(ys).collect::<Vec<_>>(), color);
        entries.push((label.clone(), color));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_fit_svg(fits: &[(String, &dyn Predictor)], target: &TargetFn, data: &Dataset, path: &Path) -> Result<()> {
    write(path, &fit_svg(fits, target, data)?)
}

/// Training loss against epoch, one curve per trace, log10 vertical axis.
pub fn trace_svg(traces: &[(String, &TrainTrace)]) -> Result<String> {
    if traces.is_empty() || traces.iter().any(|(_, t)| t.is_empty()) {
        return Err(Error::invalid("trace plot needs non-empty traces"));
    }
    let epochs = traces.iter().map(|(_, t)| t.len()).max().unwrap();
    let logs: Vec<Vec<f64>> = traces
        .iter()
        .map(|(_, t)| t.losses.iter().map(|l| l.max(1e-300).log10()).collect())
        .collect();
    let lo = logs.iter().flatten().copied().fold(f64::INFINITY, f64::min);
    let hi = logs.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max);
    let pad = 0.05 * (hi - lo).max(0.1);
    let frame = Frame {
        x: (1.0, epochs.max(2) as f64),
        y: (lo - pad, hi + pad),
    };
    let mut s = svg_open("training loss", "epoch", "mean training loss", &frame, |v| fmt_tick(10f64.powf(v)));
    let mut entries = Vec::new();
    for (i, ((label, _), ys)) in traces.iter().zip(&logs).enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let pts: Vec<(f64, f64)> = ys.iter().enumerate().map(|(e, &y)| ((e + 1) as f64, y)).collect();
        polyline(&mut s, &frame, &pts, color);
        entries.push((label.clone(), color));
    }
    legend(&mut s, &entries);
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_trace_svg(traces: &[(String, &TrainTrace)], path: &Path) -> Result<()> {
    write(path, &trace_svg(traces)?)
}
