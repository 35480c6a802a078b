//! Minimal SVG writer for line plots and vertex heat maps.

use std::fmt::Write;

const W: f64 = 640.0;
const H: f64 = 420.0;
const MARGIN: f64 = 56.0;
const PALETTE: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Default)]
pub struct Axes {
    pub log_x: bool,
    pub log_y: bool,
}

fn bounds(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-300 {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}

fn header(out: &mut String, title: &str) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="12">
<rect width="100%" height="100%" fill="white"/>
<text x="{}" y="20" text-anchor="middle" font-size="14">{}</text>
"#,
        W / 2.0,
        escape(title)
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn line_plot(title: &str, x_label: &str, y_label: &str, series: &[Series], axes: Axes) -> String {
    let tx = |x: f64| if axes.log_x { x.log10() } else { x };
    let ty = |y: f64| if axes.log_y { y.log10() } else { y };
    let usable = |&(x, y): &(f64, f64)| tx(x).is_finite() && ty(y).is_finite();
    let pts = || series.iter().flat_map(|s| s.points.iter().filter(|p| usable(p)));
    let (x0, x1) = bounds(pts().map(|p| tx(p.0)));
    let (y0, y1) = bounds(pts().map(|p| ty(p.1)));
    let sx = |x: f64| MARGIN + (tx(x) - x0) / (x1 - x0) * (W - 2.0 * MARGIN);
    let sy = |y: f64| H - MARGIN - (ty(y) - y0) / (y1 - y0) * (H - 2.0 * MARGIN);

    let mut out = String::new();
    header(&mut out, title);
    let _ = writeln!(
        out,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * MARGIN,
        H - 2.0 * MARGIN
    );
    let fmt_tick = |v: f64, log: bool| if log { format!("1e{v:.1}") } else { format!("{v:.3}") };
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}" text-anchor="start">{}</text>"#, H - MARGIN + 16.0, fmt_tick(x0, axes.log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, W - MARGIN, H - MARGIN + 16.0, fmt_tick(x1, axes.log_x));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, H - MARGIN, fmt_tick(y0, axes.log_y));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="end">{}</text>"#, MARGIN - 4.0, MARGIN + 10.0, fmt_tick(y1, axes.log_y));
    let _ = writeln!(out, r#"<text x="{}" y="{}" text-anchor="middle">{}</text>"#, W / 2.0, H - 12.0, escape(x_label));
    let _ = writeln!(
        out,
        r#"<text x="14" y="{}" text-anchor="middle" transform="rotate(-90 14 {})">{}</text>"#,
        H / 2.0,
        H / 2.0,
        escape(y_label)
    );
    for (k, s) in series.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let path: Vec<String> =
            s.points.iter().filter(|p| usable(p)).map(|&(x, y)| format!("{:.2},{:.2}", sx(x), sy(y))).collect();
        let _ = writeln!(out, r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#, path.join(" "));
        let _ = writeln!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            W - MARGIN + 4.0 - 120.0,
            MARGIN + 14.0 + 14.0 * k as f64,
            escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Blue–white–red map of `values` on the vertices of a 2-D mesh.
pub fn heat_map(title: &str, points: &[[f64; 2]], values: &[f64]) -> String {
    let (x0, x1) = bounds(points.iter().map(|p| p[0]));
    let (y0, y1) = bounds(points.iter().map(|p| p[1]));
    let scale = (W - 2.0 * MARGIN).min(H - 2.0 * MARGIN) / (x1 - x0).max(y1 - y0);
    let vmax = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
    let radius = (0.6 * scale * ((x1 - x0) * (y1 - y0) / points.len().max(1) as f64).sqrt()).max(1.0);
    let mut out = String::new();
    header(&mut out, title);
    for (p, &v) in points.iter().zip(values) {
        let s = (v / vmax).clamp(-1.0, 1.0);
        let fade = |c: f64| (255.0 * (1.0 - c.abs())).round() as u8;
        let (r, g, b) = if s >= 0.0 { (255, fade(s), fade(s)) } else { (fade(s), fade(s), 255) };
        let _ = writeln!(
            out,
            r#"<circle cx="{:.2}" cy="{:.2}" r="{radius:.2}" fill="rgb({r},{g},{b})"/>"#,
            MARGIN + (p[0] - x0) * scale,
            H - MARGIN - (p[1] - y0) * scale,
        );
    }
    let _ = writeln!(out, r#"<text x="{MARGIN}" y="{}">max |u| = {vmax:.4e}</text>"#, H - 12.0);
    out.push_str("</svg>\n");
    out
}
