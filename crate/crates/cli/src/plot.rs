//! Minimal SVG line plots of curve CSVs with a logarithmic SER axis.

use std::fmt::Write;

use crate::output::CurveRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 160.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;
const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf",
];

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Renders each series as a polyline. Zero SER points are drawn at the
/// bottom decade; a series that is all zeros still gets a legend entry.
pub fn render_svg(rows: &[CurveRow], x_label: &str, title: &str) -> String {
    let mut series: Vec<(&str, Vec<&CurveRow>)> = Vec::new();
    for r in rows {
        match series.iter_mut().find(|(s, _)| *s == r.series) {
            Some((_, v)) => v.push(r),
            None => series.push((&r.series, vec![r])),
        }
    }
    for (_, v) in &mut series {
        v.sort_by(|a, b| a.x.total_cmp(&b.x));
    }

    let (mut x0, mut x1) = rows
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| (lo.min(r.x), hi.max(r.x)));
    if !x0.is_finite() {
        (x0, x1) = (0.0, 1.0);
    }
    if x0 == x1 {
        (x0, x1) = (x0 - 1.0, x1 + 1.0);
    }
    let positive = rows.iter().map(|r| r.ser).filter(|&s| s > 0.0);
    let min_ser = positive.clone().fold(f64::INFINITY, f64::min);
    let max_ser = positive.fold(0.0, f64::max);
    let (d0, d1) = if min_ser.is_finite() {
        (min_ser.log10().floor(), max_ser.log10().ceil().max(min_ser.log10().floor() + 1.0))
    } else {
        (-4.0, 0.0)
    };

    let pw = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let ph = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |s: f64| {
        let l = if s > 0.0 { s.log10().max(d0) } else { d0 };
        MARGIN_TOP + (d1 - l) / (d1 - d0) * ph
    };

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(svg, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{}" y="18" text-anchor="middle" font-size="14">{}</text>"#, MARGIN_LEFT + pw / 2.0, escape(title));

    for d in (d0 as i32)..=(d1 as i32) {
        let y = sy(10f64.powi(d));
        let _ = writeln!(svg, r##"<line x1="{MARGIN_LEFT}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#ddd"/>"##, MARGIN_LEFT + pw);
        let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="end">1e{d}</text>"#, MARGIN_LEFT - 6.0, y + 4.0);
    }
    let ticks = 6;
    for k in 0..=ticks {
        let x = x0 + (x1 - x0) * k as f64 / ticks as f64;
        let px = sx(x);
        let _ = writeln!(svg, r##"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="#333"/>"##, MARGIN_TOP + ph, MARGIN_TOP + ph + 5.0);
        let _ = writeln!(svg, r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_TOP + ph + 19.0, (x * 100.0).round() / 100.0);
    }
    let _ = writeln!(svg, r##"<rect x="{MARGIN_LEFT}" y="{MARGIN_TOP}" width="{pw}" height="{ph}" fill="none" stroke="#333"/>"##);
    let _ = writeln!(svg, r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#, MARGIN_LEFT + pw / 2.0, HEIGHT - 12.0, escape(x_label));
    let _ = writeln!(svg, r#"<text transform="translate(18 {:.2}) rotate(-90)" text-anchor="middle">SER</text>"#, MARGIN_TOP + ph / 2.0);

    for (i, (name, pts)) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let coords: Vec<String> = pts.iter().map(|r| format!("{:.2},{:.2}", sx(r.x), sy(r.ser))).collect();
        let _ = writeln!(svg, r#"<polyline fill="none" stroke="{color}" stroke-width="1.8" points="{}"/>"#, coords.join(" "));
        for r in pts {
            let _ = writeln!(svg, r#"<circle cx="{:.2}" cy="{:.2}" r="2.5" fill="{color}"/>"#, sx(r.x), sy(r.ser));
        }
        let ly = MARGIN_TOP + 10.0 + 18.0 * i as f64;
        let lx = MARGIN_LEFT + pw + 12.0;
        let _ = writeln!(svg, r#"<line x1="{lx}" y1="{ly}" x2="{}" y2="{ly}" stroke="{color}" stroke-width="2"/>"#, lx + 20.0);
        let _ = writeln!(svg, r#"<text x="{}" y="{}">{}</text>"#, lx + 26.0, ly + 4.0, escape(name));
    }
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(series: &str, x: f64, ser: f64) -> CurveRow {
        CurveRow {
            series: series.into(),
            x,
            ser,
            errors: 0,
            trials: 1,
            ci_low: 0.0,
            ci_high: 1.0,
        }
    }

    #[test]
    fn one_polyline_per_series() {
        let rows = vec![row("a", 0.0, 0.5), row("a", 5.0, 0.01), row("b<1>", 0.0, 0.2), row("b<1>", 5.0, 0.0)];
        let svg = render_svg(&rows, "SNR (dB)", "t");
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("b&lt;1&gt;"));
        assert!(svg.contains(">1e-2<"));
        assert!(!svg.contains("NaN"));
    }

    #[test]
    fn degenerate_inputs_render() {
        let svg = render_svg(&[row("z", 1.0, 0.0)], "x", "");
        assert!(!svg.contains("NaN") && !svg.contains("inf"));
        let svg = render_svg(&[], "x", "");
        assert!(svg.contains("</svg>"));
    }
}
