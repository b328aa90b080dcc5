//! Minimal hand-written SVG charts. Output depends only on the inputs, with
//! coordinates printed at fixed precision, so figures diff cleanly.

use std::fmt::Write;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 60.0;
const MARGIN_RIGHT: f64 = 20.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 60.0;

pub const INSIDE_COLOR: &str = "#1f77b4";
pub const OUTSIDE_COLOR: &str = "#d62728";

/// One bar series of a grouped bar chart.
pub struct Series<'a> {
    pub name: &'a str,
    pub color: &'a str,
    pub values: Vec<f64>,
    /// Optional symmetric error bar per value.
    pub errors: Option<Vec<f64>>,
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
        .replace('"', "&quot;")
}

fn open(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="24" text-anchor="middle" font-size="15">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String) {
    let (x0, y0) = (MARGIN_LEFT, HEIGHT - MARGIN_BOTTOM);
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{:.2}" y2="{y0:.2}" stroke="black"/>"#,
        WIDTH - MARGIN_RIGHT
    );
    let _ = writeln!(
        out,
        r#"<line x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{MARGIN_TOP:.2}" stroke="black"/>"#
    );
}

fn legend(out: &mut String, entries: &[(&str, &str)]) {
    for (k, (name, color)) in entries.iter().enumerate() {
        let x = WIDTH - MARGIN_RIGHT - 130.0;
        let y = MARGIN_TOP + 4.0 + 18.0 * k as f64;
        let _ = writeln!(
            out,
            r#"<rect x="{x:.2}" y="{y:.2}" width="12" height="12" fill="{color}"/>"#
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
            x + 18.0,
            y + 10.0,
            escape(name)
        );
    }
}

/// Scatter plot of `points`, colored by group index into `groups`.
pub fn scatter(title: &str, points: &[[f64; 2]], group_of: &[usize], groups: &[(&str, &str)]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out);
    let (mut xmin, mut xmax, mut ymin, mut ymax) =
        (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for p in points {
        xmin = xmin.min(p[0]);
        xmax = xmax.max(p[0]);
        ymin = ymin.min(p[1]);
        ymax = ymax.max(p[1]);
    }
    let span = |lo: f64, hi: f64| if hi > lo { hi - lo } else { 1.0 };
    let (sx, sy) = (span(xmin, xmax), span(ymin, ymax));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT - 20.0;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM - 20.0;
    for (p, &g) in points.iter().zip(group_of) {
        let cx = MARGIN_LEFT + 10.0 + (p[0] - xmin) / sx * plot_w;
        let cy = HEIGHT - MARGIN_BOTTOM - 10.0 - (p[1] - ymin) / sy * plot_h;
        let _ = writeln!(
            out,
            r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="2.5" fill="{}" fill-opacity="0.7"/>"#,
            groups[g].1
        );
    }
    legend(&mut out, groups);
    let _ = writeln!(
        out,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">z1</text>"#,
        WIDTH / 2.0,
        HEIGHT - 20.0
    );
    out.push_str("</svg>\n");
    out
}

/// Grouped bar chart. A `*` is drawn above every category whose `stars`
/// entry is true.
pub fn bar_chart(title: &str, y_label: &str, categories: &[String], series: &[Series<'_>], stars: &[bool]) -> String {
    let mut out = String::new();
    open(&mut out, title);
    axes(&mut out);

    let top = series
        .iter()
        .flat_map(|s| {
            s.values.iter().enumerate().map(move |(i, v)| {
                v + s.errors.as_ref().map_or(0.0, |e| e[i])
            })
        })
        .fold(0.0f64, f64::max);
    let y_max = if top > 0.0 { top * 1.15 } else { 1.0 };
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let y_of = |v: f64| HEIGHT - MARGIN_BOTTOM - v.max(0.0) / y_max * plot_h;

    for k in 0..=4 {
        let v = y_max * k as f64 / 4.0;
        let y = y_of(v);
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{v:.3}</text>"#,
            MARGIN_LEFT - 6.0,
            y + 4.0
        );
    }
    let _ = writeln!(
        out,
        r#"<text x="16" y="{:.2}" transform="rotate(-90 16 {:.2})" text-anchor="middle">{}</text>"#,
        HEIGHT / 2.0,
        HEIGHT / 2.0,
        escape(y_label)
    );

    let n_cat = categories.len().max(1) as f64;
    let group_w = plot_w / n_cat;
    let bar_w = group_w * 0.7 / series.len().max(1) as f64;
    for (c, category) in categories.iter().enumerate() {
        let gx = MARGIN_LEFT + group_w * c as f64 + group_w * 0.15;
        let mut peak = 0.0f64;
        for (s, ser) in series.iter().enumerate() {
            let v = ser.values[c];
            let x = gx + bar_w * s as f64;
            let y = y_of(v);
            let _ = writeln!(
                out,
                r#"<rect x="{x:.2}" y="{y:.2}" width="{bar_w:.2}" height="{:.2}" fill="{}"/>"#,
                HEIGHT - MARGIN_BOTTOM - y,
                ser.color
            );
            let mut hi = v;
            if let Some(errors) = &ser.errors {
                let e = errors[c];
                let xm = x + bar_w / 2.0;
                let _ = writeln!(
                    out,
                    r#"<line x1="{xm:.2}" y1="{:.2}" x2="{xm:.2}" y2="{:.2}" stroke="black"/>"#,
                    y_of(v - e),
                    y_of(v + e)
                );
                hi = v + e;
            }
            peak = peak.max(hi);
        }
        if stars.get(c).copied().unwrap_or(false) {
            let _ = writeln!(
                out,
                r#"<text x="{:.2}" y="{:.2}" text-anchor="middle" font-size="18">*</text>"#,
                gx + group_w * 0.35,
                y_of(peak) - 6.0
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            gx + group_w * 0.35,
            HEIGHT - MARGIN_BOTTOM + 16.0,
            escape(category)
        );
    }
    let entries: Vec<(&str, &str)> = series.iter().map(|s| (s.name, s.color)).collect();
    legend(&mut out, &entries);
    out.push_str("</svg>\n");
    out
}
