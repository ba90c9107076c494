//! Negativity-versus-hops charts rendered straight to SVG text.

use std::collections::BTreeMap;
use std::fmt::Write;

use super::decay::DecayRow;
use super::results::ResultRow;

const WIDTH: f64 = 820.0;
const HEIGHT: f64 = 500.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 240.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;
const Y_MAX: f64 = 0.5;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesPoint {
    pub hops: usize,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(count)`; 0 for a single value.
    pub stderr: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeriesStats {
    pub label: String,
    pub points: Vec<SeriesPoint>,
}

fn series_label(r: &ResultRow) -> String {
    let mut s = r.mode.clone();
    if r.protocol != "none" {
        s.push_str(" / ");
        s.push_str(&r.protocol);
    }
    s.push_str(if r.qrem == "on" { " / qrem" } else { " / raw" });
    s
}

/// Per-series, per-hop statistics over every `ok` row with a negativity.
/// Series are sorted by label.
pub fn aggregate(rows: &[ResultRow]) -> Vec<SeriesStats> {
    let mut groups: BTreeMap<String, BTreeMap<usize, Vec<f64>>> = BTreeMap::new();
    for r in rows {
        if r.status != "ok" {
            continue;
        }
        if let Some(n) = r.negativity {
            groups
                .entry(series_label(r))
                .or_default()
                .entry(r.hops)
                .or_default()
                .push(n);
        }
    }
    groups
        .into_iter()
        .map(|(label, by_hop)| SeriesStats {
            label,
            points: by_hop
                .into_iter()
                .map(|(hops, v)| {
                    let count = v.len();
                    let mean = v.iter().sum::<f64>() / count as f64;
                    let stderr = if count > 1 {
                        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
                        (var / count as f64).sqrt()
                    } else {
                        0.0
                    };
                    SeriesPoint {
                        hops,
                        count,
                        mean,
                        stderr,
                        min: v.iter().copied().fold(f64::INFINITY, f64::min),
                        max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                    }
                })
                .collect(),
        })
        .collect()
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

struct Frame {
    x0: f64,
    x1: f64,
}

impl Frame {
    fn x(&self, hops: f64) -> f64 {
        LEFT + (hops - self.x0) / (self.x1 - self.x0) * (WIDTH - LEFT - RIGHT)
    }

    fn y(&self, v: f64) -> f64 {
        let v = v.clamp(0.0, Y_MAX);
        HEIGHT - BOTTOM - v / Y_MAX * (HEIGHT - TOP - BOTTOM)
    }
}

fn open_chart(w: &mut String, f: &Frame, title: &str, x_label: &str, x_ticks: &[(f64, String)]) {
    let _ = writeln!(
        w,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(w, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        (LEFT + WIDTH - RIGHT) / 2.0,
        escape(title)
    );

    let (xa, xb, ya, yb) = (LEFT, WIDTH - RIGHT, f.y(0.0), f.y(Y_MAX));
    let _ = writeln!(w, r##"<g stroke="#000" stroke-width="1">"##);
    let _ = writeln!(w, r#"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xb:.2}" y2="{ya:.2}"/>"#);
    let _ = writeln!(w, r#"<line x1="{xa:.2}" y1="{ya:.2}" x2="{xa:.2}" y2="{yb:.2}"/>"#);
    let _ = writeln!(w, "</g>");
    for k in 0..=5 {
        let v = k as f64 * 0.1;
        let y = f.y(v);
        let _ = writeln!(
            w,
            r##"<line x1="{xa:.2}" y1="{y:.2}" x2="{xb:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{v:.1}</text>"##,
            xa - 6.0,
            y + 4.0
        );
    }
    for (value, text) in x_ticks {
        let x = f.x(*value);
        let _ = writeln!(
            w,
            r##"<line x1="{x:.2}" y1="{ya:.2}" x2="{x:.2}" y2="{:.2}" stroke="#000"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{text}</text>"##,
            ya + 5.0,
            ya + 18.0
        );
    }
    let _ = writeln!(
        w,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
        (xa + xb) / 2.0,
        HEIGHT - 20.0,
        escape(x_label)
    );
    let _ = writeln!(
        w,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">negativity</text>"#,
        (ya + yb) / 2.0,
        (ya + yb) / 2.0
    );
}

/// Chart of mean negativity per series with a shaded min-max band and error
/// bars of two standard errors. Output depends only on the arguments.
pub fn render_svg(series: &[SeriesStats], title: &str) -> String {
    let hops: Vec<usize> = series.iter().flat_map(|s| s.points.iter().map(|p| p.hops)).collect();
    let mut ticks = Vec::new();
    let f = match (hops.iter().min(), hops.iter().max()) {
        (Some(&first), Some(&last)) => {
            let step = ((last - first) / 10).max(1);
            ticks = (first..=last).step_by(step).map(|h| (h as f64, h.to_string())).collect();
            Frame {
                x0: first as f64 - 0.5,
                x1: last as f64 + 0.5,
            }
        }
        _ => Frame { x0: 0.0, x1: 1.0 },
    };
    let mut s = String::new();
    let w = &mut s;
    open_chart(w, &f, title, "hops", &ticks);

    for (k, ser) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let _ = writeln!(w, r#"<g class="series" data-label="{}">"#, escape(&ser.label));
        let upper: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p.hops as f64), f.y(p.max)))
            .collect();
        let lower: Vec<String> = ser
            .points
            .iter()
            .rev()
            .map(|p| format!("{:.2},{:.2}", f.x(p.hops as f64), f.y(p.min)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polygon points="{} {}" fill="{color}" fill-opacity="0.15" stroke="none"/>"#,
            upper.join(" "),
            lower.join(" ")
        );
        let line: Vec<String> = ser
            .points
            .iter()
            .map(|p| format!("{:.2},{:.2}", f.x(p.hops as f64), f.y(p.mean)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for p in &ser.points {
            let x = f.x(p.hops as f64);
            let (y0, y1) = (f.y(p.mean - 2.0 * p.stderr), f.y(p.mean + 2.0 * p.stderr));
            let _ = writeln!(
                w,
                r#"<path d="M{:.2},{y0:.2}H{:.2}M{x:.2},{y0:.2}V{y1:.2}M{:.2},{y1:.2}H{:.2}" stroke="{color}" fill="none"/><circle cx="{x:.2}" cy="{:.2}" r="3" fill="{color}"/>"#,
                x - 4.0,
                x + 4.0,
                x - 4.0,
                x + 4.0,
                f.y(p.mean)
            );
        }
        let _ = writeln!(w, "</g>");
    }

    if !series.is_empty() {
        let lx = WIDTH - RIGHT + 20.0;
        let _ = writeln!(w, r#"<g class="legend">"#);
        for (k, ser) in series.iter().enumerate() {
            let y = TOP + 10.0 + 20.0 * k as f64;
            let color = PALETTE[k % PALETTE.len()];
            let _ = writeln!(
                w,
                r#"<rect x="{lx:.2}" y="{:.2}" width="14" height="10" fill="{color}"/><text x="{:.2}" y="{:.2}">{}</text>"#,
                y - 9.0,
                lx + 20.0,
                y,
                escape(&ser.label)
            );
        }
        let _ = writeln!(w, "</g>");
    }
    let _ = writeln!(w, "</svg>");
    s
}

/// Negativity against idle delay, with dashed guides at `levels`.
pub fn render_decay_svg(rows: &[DecayRow], levels: &[f64], title: &str) -> String {
    let x1 = rows.iter().map(|r| r.delay_us).fold(0.0, f64::max);
    let f = Frame {
        x0: 0.0,
        x1: if x1 > 0.0 { x1 } else { 1.0 },
    };
    let ticks: Vec<(f64, String)> = (0..=5)
        .map(|k| {
            let t = f.x1 * k as f64 / 5.0;
            (t, format!("{t:.2}"))
        })
        .collect();
    let mut s = String::new();
    let w = &mut s;
    open_chart(w, &f, title, "delay (µs)", &ticks);
    for &level in levels {
        let y = f.y(level);
        let _ = writeln!(
            w,
            r##"<line x1="{LEFT:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#888" stroke-dasharray="4 3"/>"##,
            WIDTH - RIGHT
        );
    }
    if !rows.is_empty() {
        let line: Vec<String> = rows
            .iter()
            .map(|r| format!("{:.2},{:.2}", f.x(r.delay_us), f.y(r.negativity)))
            .collect();
        let _ = writeln!(
            w,
            r#"<polyline points="{}" fill="none" stroke="{}" stroke-width="2"/>"#,
            line.join(" "),
            PALETTE[0]
        );
    }
    let _ = writeln!(w, "</svg>");
    s
}
