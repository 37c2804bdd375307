//! Minimal static SVG line plots.

use std::fmt::Write as _;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 60.0;
const COLORS: [&str; 8] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"];

pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
}

/// Render `series` on shared axes. With `log_log`, non-positive points are
/// dropped and both axes are base-10 logarithmic.
pub fn render(series: &[Series], log_log: bool, title: &str, comment: &str) -> String {
    let tf = |v: f64| if log_log { v.log10() } else { v };
    let data: Vec<Vec<(f64, f64)>> = series
        .iter()
        .map(|s| {
            s.points
                .iter()
                .filter(|(x, y)| !log_log || (*x > 0.0 && *y > 0.0))
                .map(|&(x, y)| (tf(x), tf(y)))
                .filter(|(x, y)| x.is_finite() && y.is_finite())
                .collect()
        })
        .collect();
    let all = data.iter().flatten();
    let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in all {
        x0 = x0.min(x);
        x1 = x1.max(x);
        y0 = y0.min(y);
        y1 = y1.max(y);
    }
    if !x0.is_finite() {
        (x0, x1, y0, y1) = (0.0, 1.0, 0.0, 1.0);
    }
    if x1 == x0 {
        x1 = x0 + 1.0;
    }
    if y1 == y0 {
        y1 = y0 + 1.0;
    }
    let pw = WIDTH - 2.0 * MARGIN;
    let ph = HEIGHT - 2.0 * MARGIN;
    let px = |x: f64| MARGIN + (x - x0) / (x1 - x0) * pw;
    let py = |y: f64| HEIGHT - MARGIN - (y - y0) / (y1 - y0) * ph;
    let tick = |v: f64| if log_log { format!("1e{v:.2}") } else { format!("{v:.3}") };

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#);
    let _ = writeln!(s, "<!--\n{}-->", comment.replace("--", "- -"));
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<rect x="{MARGIN}" y="{MARGIN}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    let _ = writeln!(s, r#"<text x="{}" y="30" text-anchor="middle" font-size="14">{}</text>"#, WIDTH / 2.0, escape(title));
    for (v, anchor, x, y) in [
        (x0, "start", MARGIN, HEIGHT - MARGIN + 18.0),
        (x1, "end", WIDTH - MARGIN, HEIGHT - MARGIN + 18.0),
    ] {
        let _ = writeln!(s, r#"<text x="{x}" y="{y}" text-anchor="{anchor}" font-size="11">{}</text>"#, tick(v));
    }
    for (v, y) in [(y0, HEIGHT - MARGIN), (y1, MARGIN + 10.0)] {
        let _ = writeln!(s, r#"<text x="{}" y="{y}" text-anchor="end" font-size="11">{}</text>"#, MARGIN - 4.0, tick(v));
    }
    for (i, (pts, ser)) in data.iter().zip(series).enumerate() {
        let color = COLORS[i % COLORS.len()];
        let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.2},{:.2}", px(x), py(y))).collect();
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
            path.join(" ")
        );
        let ly = MARGIN + 16.0 + 16.0 * i as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{ly}" text-anchor="end" font-size="12" fill="{color}">{}</text>"#,
            WIDTH - MARGIN - 8.0,
            escape(&ser.label)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn escape(t: &str) -> String {
    t.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
