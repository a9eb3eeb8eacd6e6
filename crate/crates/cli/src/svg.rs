//! Minimal SVG line and box charts.

use std::fmt::Write as _;

const W: f64 = 640.0;
const H: f64 = 400.0;
const PAD: f64 = 50.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
];

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str, y_lo: f64, y_hi: f64) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(out, r#"<rect width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(out, r#"<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>"#, W / 2.0, escape(title));
    let _ = writeln!(
        out,
        r#"<line x1="{PAD}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{PAD}" y1="{PAD}" x2="{PAD}" y2="{}" stroke="black"/>"#,
        H - PAD,
        W - PAD,
        H - PAD,
        H - PAD
    );
    let _ = writeln!(out, r#"<text x="5" y="{}">{y_hi:.3}</text>"#, PAD + 4.0);
    let _ = writeln!(out, r#"<text x="5" y="{}">{y_lo:.3}</text>"#, H - PAD);
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// One polyline per named series over a shared x axis `0..len`.
pub fn line_chart(title: &str, series: &[(&str, Vec<f64>)]) -> String {
    let (lo, hi) = bounds(series.iter().flat_map(|(_, v)| v.iter().copied()));
    let len = series.iter().map(|(_, v)| v.len()).max().unwrap_or(1).max(2);
    let x = |i: usize| PAD + (W - 2.0 * PAD) * i as f64 / (len - 1) as f64;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut out = String::new();
    header(&mut out, title, lo, hi);
    for (s, (name, values)) in series.iter().enumerate() {
        let colour = PALETTE[s % PALETTE.len()];
        let points: Vec<String> = values
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_finite())
            .map(|(i, v)| format!("{:.2},{:.2}", x(i), y(*v)))
            .collect();
        let _ = writeln!(
            out,
            r#"<polyline fill="none" stroke="{colour}" stroke-width="2" points="{}"/>"#,
            points.join(" ")
        );
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{colour}">{}</text>"#,
            W - PAD + 4.0 - 120.0,
            PAD + 16.0 * s as f64,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (i, frac) = (pos.floor() as usize, pos.fract());
    if i + 1 < sorted.len() {
        sorted[i] * (1.0 - frac) + sorted[i + 1] * frac
    } else {
        sorted[i]
    }
}

/// One box (quartiles, whiskers at the extremes) per named group.
pub fn box_chart(title: &str, groups: &[(String, Vec<f64>)]) -> String {
    let (lo, hi) = bounds(groups.iter().flat_map(|(_, v)| v.iter().copied()));
    let n = groups.len().max(1) as f64;
    let slot = (W - 2.0 * PAD) / n;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let mut out = String::new();
    header(&mut out, title, lo, hi);
    for (g, (name, values)) in groups.iter().enumerate() {
        let cx = PAD + slot * (g as f64 + 0.5);
        let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
        if !v.is_empty() {
            v.sort_by(f64::total_cmp);
            let (q1, q2, q3) = (quantile(&v, 0.25), quantile(&v, 0.5), quantile(&v, 0.75));
            let half = slot * 0.3;
            let colour = PALETTE[g % PALETTE.len()];
            let _ = writeln!(
                out,
                r#"<line x1="{cx:.2}" y1="{:.2}" x2="{cx:.2}" y2="{:.2}" stroke="black"/>"#,
                y(v[0]),
                y(v[v.len() - 1])
            );
            let _ = writeln!(
                out,
                r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{:.2}" fill="{colour}" fill-opacity="0.5" stroke="black"/>"#,
                cx - half,
                y(q3),
                2.0 * half,
                (y(q1) - y(q3)).max(0.5)
            );
            let _ = writeln!(
                out,
                r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="black" stroke-width="2"/>"#,
                cx - half,
                y(q2),
                cx + half,
                y(q2)
            );
        }
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{}" text-anchor="end" transform="rotate(-40 {cx:.2} {})" font-size="10">{}</text>"#,
            H - PAD + 14.0,
            H - PAD + 14.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}
