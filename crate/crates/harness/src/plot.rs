//! Minimal SVG line charts: stacked panels sharing a time axis.

use std::fmt::Write;

const WIDTH: f64 = 900.0;
const PANEL_HEIGHT: f64 = 240.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 50.0;
const GAP: f64 = 70.0;
const PALETTE: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];

#[derive(Debug, Clone)]
pub struct Series<'a> {
    pub name: &'a str,
    pub xs: &'a [f64],
    pub ys: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Panel<'a> {
    pub title: String,
    pub y_label: String,
    pub series: Vec<Series<'a>>,
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Tick step of the form {1, 2, 5}·10^k giving about `target` ticks.
fn nice_step(span: f64, target: f64) -> f64 {
    let raw = span / target;
    let mag = 10f64.powf(raw.log10().floor());
    let r = raw / mag;
    mag * if r < 1.5 {
        1.0
    } else if r < 3.5 {
        2.0
    } else if r < 7.5 {
        5.0
    } else {
        10.0
    }
}

fn bounds<'a>(values: impl Iterator<Item = &'a f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (-1.0, 1.0);
    }
    if hi - lo < 1e-300 {
        let pad = lo.abs().max(1.0) * 0.5;
        return (lo - pad, hi + pad);
    }
    (lo, hi)
}

fn ticks(lo: f64, hi: f64) -> (Vec<f64>, f64) {
    let step = nice_step(hi - lo, 5.0);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    ((first..=last).map(|k| k as f64 * step).collect(), step)
}

fn label(v: f64, step: f64) -> String {
    if v == 0.0 {
        return "0".into();
    }
    if step >= 1e-2 && v.abs() < 1e5 {
        let digits = (-step.log10().floor()).max(0.0) as usize;
        format!("{v:.digits$}")
    } else {
        format!("{v:.1e}")
    }
}

/// Renders the panels into one SVG document.
pub fn figure(title: &str, x_label: &str, panels: &[Panel<'_>]) -> String {
    let plot_w = WIDTH - LEFT - RIGHT;
    let height = TOP + panels.len() as f64 * (PANEL_HEIGHT + GAP);
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" viewBox="0 0 {WIDTH} {height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{height}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="28" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
    for (p, panel) in panels.iter().enumerate() {
        let y0 = TOP + p as f64 * (PANEL_HEIGHT + GAP);
        let (xlo, xhi) = bounds(panel.series.iter().flat_map(|s| s.xs.iter()));
        let (ylo, yhi) = bounds(panel.series.iter().flat_map(|s| s.ys.iter()));
        let ypad = 0.05 * (yhi - ylo);
        let (ylo, yhi) = (ylo - ypad, yhi + ypad);
        let px = |x: f64| LEFT + (x - xlo) / (xhi - xlo) * plot_w;
        let py = |y: f64| y0 + PANEL_HEIGHT - (y - ylo) / (yhi - ylo) * PANEL_HEIGHT;

        let _ = writeln!(s, r#"<g class="panel">"#);
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" text-anchor="middle" font-size="13">{}</text>"#,
            LEFT + plot_w / 2.0,
            y0 - 8.0,
            escape(&panel.title)
        );
        let _ = writeln!(
            s,
            r#"<rect x="{LEFT}" y="{y0}" width="{plot_w}" height="{PANEL_HEIGHT}" fill="none" stroke="black"/>"#
        );
        let (xt, xs) = ticks(xlo, xhi);
        for v in xt {
            let x = px(v);
            let _ = writeln!(
                s,
                r##"<line x1="{x:.2}" y1="{:.2}" x2="{x:.2}" y2="{:.2}" stroke="#ddd"/><text x="{x:.2}" y="{:.2}" text-anchor="middle">{}</text>"##,
                y0,
                y0 + PANEL_HEIGHT,
                y0 + PANEL_HEIGHT + 16.0,
                label(v, xs)
            );
        }
        let (yt, ys) = ticks(ylo, yhi);
        for v in yt {
            let y = py(v);
            let _ = writeln!(
                s,
                r##"<line x1="{LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/><text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"##,
                LEFT + plot_w,
                LEFT - 6.0,
                y + 4.0,
                label(v, ys)
            );
        }
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" class="x-label">{}</text>"#,
            LEFT + plot_w / 2.0,
            y0 + PANEL_HEIGHT + 36.0,
            escape(x_label)
        );
        let cy = y0 + PANEL_HEIGHT / 2.0;
        let _ = writeln!(
            s,
            r#"<text x="22" y="{cy:.2}" text-anchor="middle" transform="rotate(-90 22 {cy:.2})" class="y-label">{}</text>"#,
            escape(&panel.y_label)
        );
        for (k, series) in panel.series.iter().enumerate() {
            let colour = PALETTE[k % PALETTE.len()];
            let mut pts = String::new();
            for (&x, &y) in series.xs.iter().zip(&series.ys) {
                if x.is_finite() && y.is_finite() {
                    let _ = write!(pts, "{:.2},{:.2} ", px(x), py(y));
                }
            }
            let _ = writeln!(
                s,
                r#"<polyline fill="none" stroke="{colour}" stroke-width="1.2" points="{}"/>"#,
                pts.trim_end()
            );
            let ly = y0 + 16.0 + 18.0 * k as f64;
            let lx = LEFT + plot_w + 14.0;
            let _ = writeln!(
                s,
                r#"<g class="legend"><line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{colour}" stroke-width="2"/><text x="{}" y="{}">{}</text></g>"#,
                lx + 22.0,
                lx + 28.0,
                ly + 4.0,
                escape(series.name)
            );
        }
        let _ = writeln!(s, "</g>");
    }
    s.push_str("</svg>\n");
    s
}
