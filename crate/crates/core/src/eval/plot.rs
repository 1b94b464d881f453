//! Minimal SVG charts.

use std::fmt::Write as _;

const W: f64 = 480.0;
const H: f64 = 360.0;
const M: f64 = 50.0;
const PALETTE: [&str; 4] = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"];

fn frame(title: &str, x_label: &str, y_label: &str) -> String {
    let mut s = format!(r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">"#);
    let _ = write!(
        s,
        r##"<rect width="100%" height="100%" fill="white"/><text x="{}" y="20" text-anchor="middle" font-size="14">{}</text><line x1="{M}" y1="{}" x2="{}" y2="{}" stroke="black"/><line x1="{M}" y1="{M}" x2="{M}" y2="{}" stroke="black"/><text x="{}" y="{}" text-anchor="middle">{}</text><text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"##,
        W / 2.0,
        escape(title),
        H - M,
        W - M,
        H - M,
        H - M,
        W / 2.0,
        H - 12.0,
        escape(x_label),
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn sx(v: f64, max: f64) -> f64 {
    M + (W - 2.0 * M) * if max > 0.0 { v / max } else { 0.0 }
}

fn sy(v: f64, max: f64) -> f64 {
    H - M - (H - 2.0 * M) * if max > 0.0 { v / max } else { 0.0 }
}

/// True vs predicted time to collision with the identity line.
pub fn svg_correlation(pairs: &[(f64, f64)], title: &str) -> String {
    let max = pairs.iter().flat_map(|&(a, b)| [a, b]).filter(|v| v.is_finite()).fold(0.0f64, f64::max).max(1e-6);
    let mut s = frame(title, "true time to collision (s)", "predicted (s)");
    let _ = write!(
        s,
        r#"<line x1="{}" y1="{}" x2="{}" y2="{}" stroke="gray" stroke-dasharray="4"/>"#,
        sx(0.0, max),
        sy(0.0, max),
        sx(max, max),
        sy(max, max)
    );
    for &(t, p) in pairs.iter().filter(|(a, b)| a.is_finite() && b.is_finite()) {
        let _ = write!(
            s,
            r#"<circle cx="{:.1}" cy="{:.1}" r="1.5" fill="{}" fill-opacity="0.5"/>"#,
            sx(t, max),
            sy(p.clamp(0.0, max), max),
            PALETTE[0]
        );
    }
    let _ = write!(s, r#"<text x="{M}" y="{}">0</text><text x="{}" y="{}" text-anchor="end">{max:.3}</text></svg>"#, H - M + 14.0, W - M, H - M + 14.0);
    s
}

/// Grouped bars: one group per category, one bar per series.
pub fn svg_bars(title: &str, y_label: &str, categories: &[String], series: &[(String, Vec<f64>)]) -> String {
    let max = series.iter().flat_map(|(_, v)| v.iter().copied()).filter(|v| v.is_finite()).fold(0.0f64, f64::max).max(1e-9);
    let mut s = frame(title, "", y_label);
    let group = (W - 2.0 * M) / categories.len().max(1) as f64;
    let bar = group * 0.8 / series.len().max(1) as f64;
    for (ci, cat) in categories.iter().enumerate() {
        let x0 = M + group * ci as f64 + group * 0.1;
        for (si, (_, vals)) in series.iter().enumerate() {
            let v = vals.get(ci).copied().filter(|v| v.is_finite()).unwrap_or(0.0);
            let y = sy(v, max);
            let _ = write!(
                s,
                r#"<rect x="{:.1}" y="{y:.1}" width="{:.1}" height="{:.1}" fill="{}"/>"#,
                x0 + bar * si as f64,
                bar,
                H - M - y,
                PALETTE[si % PALETTE.len()]
            );
        }
        let _ = write!(s, r#"<text x="{:.1}" y="{}" text-anchor="middle">{}</text>"#, x0 + group * 0.4, H - M + 14.0, escape(cat));
    }
    for (si, (name, _)) in series.iter().enumerate() {
        let y = M + 14.0 * si as f64;
        let _ = write!(
            s,
            r#"<rect x="{}" y="{}" width="10" height="10" fill="{}"/><text x="{}" y="{}">{}</text>"#,
            W - M - 110.0,
            y - 9.0,
            PALETTE[si % PALETTE.len()],
            W - M - 95.0,
            y,
            escape(name)
        );
    }
    let _ = write!(s, r#"<text x="{}" y="{M}" text-anchor="end">{max:.2}</text></svg>"#, M - 4.0);
    s
}
