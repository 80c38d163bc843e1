//! CSV and SVG exports of path polylines. The path is piecewise linear, so
//! the node values are the exact vertices; nothing is resampled.

use std::fmt::Write as _;
use std::path::Path;

pub struct Series {
    pub name: String,
    /// One y value per vertex.
    pub values: Vec<f64>,
}

pub struct PlotData {
    /// Shared x coordinates (node radii).
    pub x: Vec<f64>,
    pub x_label: String,
    pub series: Vec<Series>,
    /// Optional dashed vertical marker (a selected radius).
    pub marker: Option<f64>,
}

pub fn write_csv(data: &PlotData, path: &Path) -> Result<(), String> {
    let mut out = String::new();
    out.push_str(&data.x_label);
    for s in &data.series {
        out.push(',');
        out.push_str(&escape(&s.name));
    }
    out.push('\n');
    for (i, x) in data.x.iter().enumerate() {
        write!(out, "{x}").unwrap();
        for s in &data.series {
            write!(out, ",{}", s.values[i]).unwrap();
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 480.0;
const MARGIN_L: f64 = 64.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 24.0;
const MARGIN_B: f64 = 48.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

/// Minimal line plot: axes with end labels, one polyline per series with
/// node markers, and an optional dashed vertical marker.
pub fn write_svg(data: &PlotData, path: &Path) -> Result<(), String> {
    let (x_min, x_max) = bounds(&data.x);
    let mut y_all: Vec<f64> = Vec::new();
    for s in &data.series {
        y_all.extend_from_slice(&s.values);
    }
    let (y_min, y_max) = bounds(&y_all);
    let x_span = (x_max - x_min).max(1e-12);
    let y_span = (y_max - y_min).max(1e-12);
    let px = |x: f64| MARGIN_L + (x - x_min) / x_span * (WIDTH - MARGIN_L - MARGIN_R);
    let py = |y: f64| HEIGHT - MARGIN_B - (y - y_min) / y_span * (HEIGHT - MARGIN_T - MARGIN_B);

    let mut svg = String::new();
    write!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    )
    .unwrap();
    // Axes.
    write!(
        svg,
        "<line x1=\"{l}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{l}\" y1=\"{t}\" x2=\"{l}\" y2=\"{b}\" stroke=\"black\"/>\n",
        l = MARGIN_L,
        r = WIDTH - MARGIN_R,
        t = MARGIN_T,
        b = HEIGHT - MARGIN_B
    )
    .unwrap();
    let label = |svg: &mut String, x: f64, y: f64, anchor: &str, text: String| {
        writeln!(
            svg,
            "<text x=\"{x}\" y=\"{y}\" font-size=\"12\" font-family=\"sans-serif\" text-anchor=\"{anchor}\">{text}</text>"
        )
        .unwrap();
    };
    label(&mut svg, MARGIN_L, HEIGHT - MARGIN_B + 16.0, "middle", fmt_tick(x_min));
    label(&mut svg, WIDTH - MARGIN_R, HEIGHT - MARGIN_B + 16.0, "middle", fmt_tick(x_max));
    label(&mut svg, MARGIN_L - 6.0, HEIGHT - MARGIN_B + 4.0, "end", fmt_tick(y_min));
    label(&mut svg, MARGIN_L - 6.0, MARGIN_T + 4.0, "end", fmt_tick(y_max));
    label(
        &mut svg,
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 12.0,
        "middle",
        data.x_label.clone(),
    );

    if let Some(mark) = data.marker {
        if mark.is_finite() && mark >= x_min && mark <= x_max {
            writeln!(
                svg,
                "<line x1=\"{x}\" y1=\"{t}\" x2=\"{x}\" y2=\"{b}\" stroke=\"black\" stroke-dasharray=\"6,4\"/>",
                x = px(mark),
                t = MARGIN_T,
                b = HEIGHT - MARGIN_B
            )
            .unwrap();
        }
    }

    for (idx, series) in data.series.iter().enumerate() {
        let color = PALETTE[idx % PALETTE.len()];
        let points: Vec<String> = data
            .x
            .iter()
            .zip(&series.values)
            .map(|(&x, &y)| format!("{:.2},{:.2}", px(x), py(y)))
            .collect();
        writeln!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\"/>",
            points.join(" ")
        )
        .unwrap();
        for p in &points {
            let (cx, cy) = p.split_once(',').unwrap();
            writeln!(svg, "<circle cx=\"{cx}\" cy=\"{cy}\" r=\"2.4\" fill=\"{color}\"/>").unwrap();
        }
        // Legend entry.
        let ly = MARGIN_T + 14.0 * idx as f64;
        writeln!(
            svg,
            "<line x1=\"{x0}\" y1=\"{ly}\" x2=\"{x1}\" y2=\"{ly}\" stroke=\"{color}\" stroke-width=\"2\"/>",
            x0 = WIDTH - MARGIN_R - 120.0,
            x1 = WIDTH - MARGIN_R - 100.0,
        )
        .unwrap();
        label(&mut svg, WIDTH - MARGIN_R - 94.0, ly + 4.0, "start", escape_xml(&series.name));
    }
    svg.push_str("</svg>\n");
    std::fs::write(path, svg).map_err(|e| format!("cannot write {}: {e}", path.display()))
}

fn bounds(values: &[f64]) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        (0.0, 1.0)
    } else {
        (lo, hi)
    }
}

fn fmt_tick(v: f64) -> String {
    if v == 0.0 {
        "0".to_string()
    } else if v.abs() >= 0.01 && v.abs() < 10_000.0 {
        format!("{v:.3}")
    } else {
        format!("{v:.2e}")
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
