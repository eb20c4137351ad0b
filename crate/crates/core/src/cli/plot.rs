//! Minimal SVG line plots of CSV tables.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::sweep::SweepResult;

const W: f64 = 640.0;
const H: f64 = 420.0;
const LEFT: f64 = 70.0;
const RIGHT: f64 = 20.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 50.0;
const COLORS: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
];

#[derive(Debug, Clone)]
pub struct PlotSpec<'a> {
    pub title: &'a str,
    pub x: &'a str,
    pub y: Vec<&'a str>,
    pub log_x: bool,
    pub log_y: bool,
}

fn ticks(lo: f64, hi: f64, log: bool) -> Vec<f64> {
    if log {
        let (a, b) = (lo.log10().floor() as i32, hi.log10().ceil() as i32);
        return (a..=b)
            .map(|e| 10f64.powi(e))
            .filter(|v| *v >= lo * 0.999 && *v <= hi * 1.001)
            .collect();
    }
    let span = hi - lo;
    if span <= 0.0 {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let mut t = (lo / step).ceil() * step;
    let mut out = Vec::new();
    while t <= hi + 1e-9 * step {
        out.push(t);
        t += step;
    }
    out
}

fn fmt_tick(v: f64) -> String {
    if v != 0.0 && (v.abs() >= 1e4 || v.abs() < 1e-2) {
        format!("{v:.0e}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

/// Renders the selected columns as polylines. Non-finite points (and
/// non-positive ones on log axes) are skipped.
pub fn render(table: &SweepResult, spec: &PlotSpec) -> Result<String> {
    let xi = table.column_index(spec.x)?;
    let yi: Vec<usize> = spec
        .y
        .iter()
        .map(|c| table.column_index(c))
        .collect::<Result<_>>()?;
    let tx = |v: f64| if spec.log_x { v.log10() } else { v };
    let ty = |v: f64| if spec.log_y { v.log10() } else { v };
    let ok = |v: f64, log: bool| v.is_finite() && (!log || v > 0.0);

    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for row in &table.rows {
        if ok(row[xi], spec.log_x) {
            xs.push(row[xi]);
            for &i in &yi {
                if ok(row[i], spec.log_y) {
                    ys.push(row[i]);
                }
            }
        }
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(Error::Computation(format!(
            "nothing to plot for `{}`",
            spec.title
        )));
    }
    let (mut x0, mut x1) = xs
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    let (mut y0, mut y1) = ys
        .iter()
        .fold((f64::MAX, f64::MIN), |(a, b), v| (a.min(*v), b.max(*v)));
    if x1 <= x0 {
        x1 = x0 + 1.0;
        x0 -= 1.0;
    }
    if y1 <= y0 {
        y1 = y0 + 0.5 * y0.abs().max(1.0);
        y0 -= 0.5 * y0.abs().max(1.0);
    } else if !spec.log_y {
        let pad = 0.05 * (y1 - y0);
        y0 -= pad;
        y1 += pad;
    }
    let (px0, px1, py0, py1) = (tx(x0), tx(x1), ty(y0), ty(y1));
    let sx = |v: f64| LEFT + (tx(v) - px0) / (px1 - px0) * (W - LEFT - RIGHT);
    let sy = |v: f64| H - BOTTOM - (ty(v) - py0) / (py1 - py0) * (H - TOP - BOTTOM);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#,
        W / 2.0,
        escape(spec.title)
    );
    let (bx, by, bw, bh) = (LEFT, TOP, W - LEFT - RIGHT, H - TOP - BOTTOM);
    let _ = writeln!(
        s,
        r#"<rect x="{bx}" y="{by}" width="{bw}" height="{bh}" fill="none" stroke="black"/>"#
    );
    for t in ticks(x0, x1, spec.log_x) {
        let x = sx(t);
        let _ = writeln!(
            s,
            r##"<line x1="{x:.2}" y1="{}" x2="{x:.2}" y2="{by}" stroke="#ddd"/><text x="{x:.2}" y="{}" text-anchor="middle">{}</text>"##,
            by + bh,
            by + bh + 16.0,
            fmt_tick(t)
        );
    }
    for t in ticks(y0, y1, spec.log_y) {
        let y = sy(t);
        let _ = writeln!(
            s,
            r##"<line x1="{bx}" y1="{y:.2}" x2="{}" y2="{y:.2}" stroke="#ddd"/><text x="{}" y="{:.2}" text-anchor="end">{}</text>"##,
            bx + bw,
            bx - 6.0,
            y + 4.0,
            fmt_tick(t)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#,
        bx + bw / 2.0,
        H - 12.0,
        escape(spec.x)
    );
    for (k, (&i, name)) in yi.iter().zip(&spec.y).enumerate() {
        let color = COLORS[k % COLORS.len()];
        let pts: Vec<String> = table
            .rows
            .iter()
            .filter(|r| ok(r[xi], spec.log_x) && ok(r[i], spec.log_y))
            .map(|r| format!("{:.2},{:.2}", sx(r[xi]), sy(r[i])))
            .collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.6" points="{}"/>"#,
            pts.join(" ")
        );
        let ly = by + 16.0 + 16.0 * k as f64;
        let _ = writeln!(
            s,
            r#"<line x1="{}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/><text x="{}" y="{}">{}</text>"#,
            bx + 10.0,
            bx + 30.0,
            bx + 36.0,
            ly + 4.0,
            escape(name)
        );
    }
    s.push_str("</svg>\n");
    Ok(s)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_lines_and_skips_bad_points() {
        let mut t = SweepResult::new(["x", "y"]);
        for (x, y) in [(1.0, 2.0), (10.0, f64::NAN), (100.0, 3.0)] {
            t.push(vec![x, y]);
        }
        let svg = render(
            &t,
            &PlotSpec {
                title: "t",
                x: "x",
                y: vec!["y"],
                log_x: true,
                log_y: false,
            },
        )
        .unwrap();
        assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
        assert!(render(
            &t,
            &PlotSpec {
                title: "t",
                x: "x",
                y: vec!["zz"],
                log_x: false,
                log_y: false
            }
        )
        .is_err());
    }

    #[test]
    fn linear_ticks_are_round() {
        assert_eq!(
            ticks(0.0, 1.0, false),
            vec![0.0, 0.2, 0.4, 0.6000000000000001, 0.8, 1.0]
        );
        assert_eq!(ticks(1.0, 1000.0, true), vec![1.0, 10.0, 100.0, 1000.0]);
    }
}
