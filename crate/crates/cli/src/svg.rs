//! Minimal line charts with ±1 sd bands, written as plain SVG text.

use std::fmt::Write;

pub struct Series {
    pub name: String,
    /// (x, mean, sd) triples; points with a non-finite mean are skipped.
    pub points: Vec<(f64, f64, f64)>,
}

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 420.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 150.0;
const MARGIN_TOP: f64 = 40.0;
const MARGIN_BOTTOM: f64 = 55.0;
const COLOURS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn extent(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if !lo.is_finite() {
        return (0.0, 1.0);
    }
    if hi - lo < 1e-12 {
        return (lo - 0.5, hi + 0.5);
    }
    (lo, hi)
}

pub fn band_chart(title: &str, x_label: &str, y_label: &str, series: &[Series]) -> String {
    let visible = |s: &Series| {
        s.points
            .iter()
            .filter(|p| p.1.is_finite())
            .copied()
            .collect::<Vec<_>>()
    };
    let (x_lo, x_hi) = extent(series.iter().flat_map(|s| visible(s).into_iter().map(|p| p.0)));
    let (_, y_hi) = extent(series.iter().flat_map(|s| {
        visible(s)
            .into_iter()
            .map(|p| p.1 + if p.2.is_finite() { p.2 } else { 0.0 })
    }));
    let y_lo = 0.0;
    let y_hi = if y_hi > 0.0 { y_hi * 1.05 } else { 1.0 };

    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x_lo) / (x_hi - x_lo) * plot_w;
    let sy = |y: f64| MARGIN_TOP + (1.0 - (y.clamp(y_lo, y_hi) - y_lo) / (y_hi - y_lo)) * plot_h;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{}" y="22" text-anchor="middle" font-size="15">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        escape(title)
    );

    let (x0, x1, y0, y1) = (MARGIN_LEFT, MARGIN_LEFT + plot_w, MARGIN_TOP, MARGIN_TOP + plot_h);
    let _ = writeln!(
        s,
        r#"<path d="M{x0:.1},{y0:.1} L{x0:.1},{y1:.1} L{x1:.1},{y1:.1}" fill="none" stroke="black"/>"#
    );
    for i in 0..=5 {
        let fx = x_lo + (x_hi - x_lo) * i as f64 / 5.0;
        let fy = y_lo + (y_hi - y_lo) * i as f64 / 5.0;
        let (px, py) = (sx(fx), sy(fy));
        let _ = writeln!(
            s,
            r#"<line x1="{px:.1}" y1="{y1:.1}" x2="{px:.1}" y2="{:.1}" stroke="black"/><text x="{px:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
            y1 + 5.0,
            y1 + 19.0,
            tick(fx)
        );
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{py:.1}" x2="{x0:.1}" y2="{py:.1}" stroke="black"/><text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
            x0 - 5.0,
            x0 - 8.0,
            py + 4.0,
            tick(fy)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{}</text>"#,
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_label)
    );
    let _ = writeln!(
        s,
        r#"<text transform="translate(18,{:.1}) rotate(-90)" text-anchor="middle">{}</text>"#,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_label)
    );

    for (k, series) in series.iter().enumerate() {
        let colour = COLOURS[k % COLOURS.len()];
        let pts = visible(series);
        if pts.is_empty() {
            continue;
        }
        let sd = |p: &(f64, f64, f64)| if p.2.is_finite() { p.2 } else { 0.0 };
        let mut band = String::new();
        for (i, p) in pts.iter().enumerate() {
            let _ = write!(band, "{}{:.1},{:.1} ", if i == 0 { "M" } else { "L" }, sx(p.0), sy(p.1 + sd(p)));
        }
        for p in pts.iter().rev() {
            let _ = write!(band, "L{:.1},{:.1} ", sx(p.0), sy(p.1 - sd(p)));
        }
        let _ = writeln!(s, r#"<path d="{}Z" fill="{colour}" fill-opacity="0.15" stroke="none"/>"#, band.trim_end());
        let line: Vec<String> = pts.iter().map(|p| format!("{:.1},{:.1}", sx(p.0), sy(p.1))).collect();
        let _ = writeln!(
            s,
            r#"<polyline points="{}" fill="none" stroke="{colour}" stroke-width="2"/>"#,
            line.join(" ")
        );
        for p in &pts {
            let _ = writeln!(s, r#"<circle cx="{:.1}" cy="{:.1}" r="3" fill="{colour}"/>"#, sx(p.0), sy(p.1));
        }
        let ly = MARGIN_TOP + 10.0 + 20.0 * k as f64;
        let lx = x1 + 15.0;
        let _ = writeln!(
            s,
            r#"<line x1="{lx:.1}" y1="{ly:.1}" x2="{:.1}" y2="{ly:.1}" stroke="{colour}" stroke-width="2"/><text x="{:.1}" y="{:.1}">{}</text>"#,
            lx + 20.0,
            lx + 26.0,
            ly + 4.0,
            escape(&series.name)
        );
    }
    s.push_str("</svg>\n");
    s
}

fn tick(v: f64) -> String {
    let text = format!("{v:.3}");
    let text = text.trim_end_matches('0').trim_end_matches('.');
    if text == "-0" { "0".into() } else { text.to_string() }
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
