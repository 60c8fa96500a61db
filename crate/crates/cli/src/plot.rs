//! Self-contained SVG line plots of trace columns.

use std::fmt::Write as _;

use ibvs_core::sim::Trace;
use ibvs_core::{Error, Result};

pub struct Series {
    pub label: String,
    pub column: String,
}

pub struct Figure {
    pub number: u8,
    pub caption: &'static str,
    pub y_label: &'static str,
    pub series: Vec<Series>,
}

fn series(pairs: &[(&str, &str)]) -> Vec<Series> {
    pairs.iter().map(|(c, l)| Series { column: c.to_string(), label: l.to_string() }).collect()
}

/// Figures 2–4 show the inverse-Jacobian run and 5–7 repeat them for the
/// transpose run; the content depends only on the number modulo that pairing.
pub fn figure(number: u8) -> Option<Figure> {
    let (caption, y_label, s) = match number {
        2 | 5 => ("Image-space position tracking errors", "error (pixels)", series(&[("dx_1", "Δu"), ("dx_2", "Δv")])),
        3 | 6 => ("Actual and estimated depths", "depth (m)", series(&[("z", "z"), ("z_hat", "ẑ")])),
        4 | 7 => (
            "Control torques",
            "torque (N·m)",
            series(&[("tau_1", "τ₁"), ("tau_2", "τ₂"), ("tau_3", "τ₃")]),
        ),
        _ => return None,
    };
    Some(Figure { number, caption, y_label, series: s })
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 40.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 3] = ["#1f77b4", "#d62728", "#2ca02c"];

/// Round tick spacing giving roughly `target` intervals over `span`.
fn tick_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let nice = if norm < 1.5 {
        1.0
    } else if norm < 3.0 {
        2.0
    } else if norm < 7.0 {
        5.0
    } else {
        10.0
    };
    nice * mag
}

fn ticks(lo: f64, hi: f64) -> Vec<f64> {
    let step = tick_step(hi - lo, 6.0);
    let mut v = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while v <= hi + step * 1e-9 {
        out.push(if v.abs() < step * 1e-9 { 0.0 } else { v });
        v += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    let s = format!("{v:.6}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".into()
    } else {
        s.into()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Renders one figure. Fails on an empty trace or a missing column.
pub fn render(trace: &Trace, fig: &Figure) -> Result<String> {
    if trace.is_empty() {
        return Err(Error::TraceFormat("trace has no rows to plot".into()));
    }
    let t = trace.times();
    let data: Vec<Vec<f64>> = fig.series.iter().map(|s| trace.column(&s.column)).collect::<Result<_>>()?;

    let (t0, t1) = (t[0], *t.last().unwrap());
    let (t0, t1) = if t1 > t0 { (t0, t1) } else { (t0, t0 + 1.0) };
    let finite = data.iter().flatten().copied().filter(|v| v.is_finite());
    let (mut y0, mut y1) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !y0.is_finite() {
        (y0, y1) = (-1.0, 1.0);
    }
    if y1 - y0 < 1e-12 {
        (y0, y1) = (y0 - 1.0, y1 + 1.0);
    }
    let pad = 0.05 * (y1 - y0);
    let (y0, y1) = (y0 - pad, y1 + pad);

    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |v: f64| LEFT + (v - t0) / (t1 - t0) * pw;
    let sy = |v: f64| TOP + (y1 - v) / (y1 - y0) * ph;

    let mut svg = String::new();
    let w = &mut svg;
    // Writing to a String cannot fail.
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<title>Fig. {}: {}</title>"#, fig.number, escape(fig.caption));
    let _ = writeln!(w, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="14">Fig. {}. {}</text>"#,
        WIDTH / 2.0,
        fig.number,
        escape(fig.caption)
    );

    let _ = writeln!(w, r##"<g class="grid" stroke="#ddd" stroke-width="1">"##);
    for v in ticks(t0, t1) {
        let _ = writeln!(w, r#"<line x1="{0:.2}" y1="{TOP}" x2="{0:.2}" y2="{1:.2}"/>"#, sx(v), TOP + ph);
    }
    for v in ticks(y0, y1) {
        let _ = writeln!(w, r#"<line x1="{LEFT}" y1="{0:.2}" x2="{1:.2}" y2="{0:.2}"/>"#, sy(v), LEFT + pw);
    }
    let _ = writeln!(w, "</g>");

    let _ = writeln!(w, r#"<g class="axes" fill="black">"#);
    let _ = writeln!(w, r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    for v in ticks(t0, t1) {
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, sx(v), TOP + ph + 16.0, fmt_tick(v));
    }
    for v in ticks(y0, y1) {
        let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#, LEFT - 6.0, sy(v) + 4.0, fmt_tick(v));
    }
    let _ = writeln!(w, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">time (s)</text>"#, LEFT + pw / 2.0, HEIGHT - 12.0);
    let _ = writeln!(
        w,
        r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">{}</text>"#,
        TOP + ph / 2.0,
        escape(fig.y_label)
    );
    let _ = writeln!(w, "</g>");

    for (i, (s, ys)) in fig.series.iter().zip(&data).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut pts = String::new();
        for (tv, yv) in t.iter().zip(ys) {
            if yv.is_finite() {
                let _ = write!(pts, "{:.2},{:.2} ", sx(*tv), sy(*yv));
            }
        }
        let _ = writeln!(
            w,
            r#"<polyline class="series" data-column="{}" fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            escape(&s.column),
            pts.trim_end()
        );
        let ly = TOP + 14.0 + 16.0 * i as f64;
        let lx = LEFT + pw - 70.0;
        let _ = writeln!(
            w,
            r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&s.label)
        );
    }
    let _ = writeln!(w, "</svg>");
    Ok(svg)
}
