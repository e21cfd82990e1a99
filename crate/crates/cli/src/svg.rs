//! Self-contained SVG line plots with no external renderer.
//!
//! The emitted bytes depend only on the input: fixed canvas, fixed palette,
//! nice-number tick placement, coordinates printed at two decimals. That
//! keeps plots diffable and lets tests compare files byte for byte.

use std::fmt::Write as _;

const WIDTH: f64 = 960.0;
const HEIGHT: f64 = 600.0;
const MARGIN_LEFT: f64 = 76.0;
const MARGIN_RIGHT: f64 = 28.0;
const MARGIN_TOP: f64 = 32.0;
const MARGIN_BOTTOM: f64 = 58.0;
const TICK_TARGET: usize = 6;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

#[derive(Debug)]
pub enum SvgError {
    NoSeries,
    EmptySeries(String),
    NonFinite(String),
}

impl std::fmt::Display for SvgError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SvgError::NoSeries => write!(f, "plot needs at least one series"),
            SvgError::EmptySeries(l) => write!(f, "series '{l}' has no points"),
            SvgError::NonFinite(l) => write!(f, "series '{l}' contains a non-finite value"),
        }
    }
}

impl std::error::Error for SvgError {}

/// One plotted quantity: a polyline, optionally with circle markers.
#[derive(Debug, Clone)]
pub struct Series {
    pub label: String,
    pub points: Vec<(f64, f64)>,
    pub draw_line: bool,
    pub draw_marks: bool,
}

impl Series {
    pub fn curve(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, draw_line: true, draw_marks: false }
    }

    /// Marker-only overlay (fold locations, sweep samples).
    pub fn marks(label: &str, points: Vec<(f64, f64)>) -> Self {
        Self { label: label.into(), points, draw_line: false, draw_marks: true }
    }
}

fn nice_step(range: f64, target: usize) -> f64 {
    let raw = range / target.max(1) as f64;
    let mag = 10f64.powf(raw.log10().floor());
    let norm = raw / mag;
    let factor = if norm <= 1.0 {
        1.0
    } else if norm <= 2.0 {
        2.0
    } else if norm <= 5.0 {
        5.0
    } else {
        10.0
    };
    factor * mag
}

/// Tick positions as multiples of a nice step, covering [lo, hi].
fn ticks(lo: f64, hi: f64) -> (Vec<f64>, usize) {
    let step = nice_step(hi - lo, TICK_TARGET);
    let first = (lo / step).ceil() as i64;
    let last = (hi / step).floor() as i64;
    let vals: Vec<f64> = (first..=last).map(|i| i as f64 * step).collect();
    // Enough decimals to print the step exactly: step is {1,2,5}·10^e.
    let decimals = (-(step.log10() + 1e-9).floor()).max(0.0) as usize;
    (vals, decimals)
}

fn data_bounds(series: &[Series]) -> Result<(f64, f64, f64, f64), SvgError> {
    let (mut x0, mut x1) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY);
    for s in series {
        for &(x, y) in &s.points {
            if !x.is_finite() || !y.is_finite() {
                return Err(SvgError::NonFinite(s.label.clone()));
            }
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
    }
    // Degenerate ranges (single point, constant series) still need a window.
    if x1 - x0 <= 0.0 {
        let pad = if x0 == 0.0 { 1.0 } else { x0.abs() * 0.1 };
        x0 -= pad;
        x1 += pad;
    }
    if y1 - y0 <= 0.0 {
        let pad = if y0 == 0.0 { 1.0 } else { y0.abs() * 0.1 };
        y0 -= pad;
        y1 += pad;
    }
    Ok((x0, x1, y0, y1))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Render a standalone SVG plot: linear axes, grid, legend, one polyline per
/// series. Identical input produces identical bytes.
pub fn emit_svg(series: &[Series], x_label: &str, y_label: &str) -> Result<String, SvgError> {
    if series.is_empty() {
        return Err(SvgError::NoSeries);
    }
    for s in series {
        if s.points.is_empty() {
            return Err(SvgError::EmptySeries(s.label.clone()));
        }
    }
    let (x0, x1, y0, y1) = data_bounds(series)?;
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |x: f64| MARGIN_LEFT + (x - x0) / (x1 - x0) * plot_w;
    let sy = |y: f64| MARGIN_TOP + plot_h - (y - y0) / (y1 - y0) * plot_h;

    let mut out = String::with_capacity(4096);
    let _ = writeln!(
        out,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\" font-family=\"sans-serif\" font-size=\"13\">"
    );
    let _ = writeln!(out, "<rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"#ffffff\"/>");

    let (xticks, xdec) = ticks(x0, x1);
    let (yticks, ydec) = ticks(y0, y1);
    out.push_str("<g stroke=\"#dddddd\" stroke-width=\"1\">\n");
    for &t in &xticks {
        let px = sx(t);
        let _ = writeln!(
            out,
            "<line x1=\"{px:.2}\" y1=\"{:.2}\" x2=\"{px:.2}\" y2=\"{:.2}\"/>",
            MARGIN_TOP,
            MARGIN_TOP + plot_h
        );
    }
    for &t in &yticks {
        let py = sy(t);
        let _ = writeln!(
            out,
            "<line x1=\"{:.2}\" y1=\"{py:.2}\" x2=\"{:.2}\" y2=\"{py:.2}\"/>",
            MARGIN_LEFT,
            MARGIN_LEFT + plot_w
        );
    }
    out.push_str("</g>\n");

    out.push_str("<g fill=\"#333333\" text-anchor=\"middle\">\n");
    for &t in &xticks {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\">{:.*}</text>",
            sx(t),
            MARGIN_TOP + plot_h + 18.0,
            xdec,
            t
        );
    }
    out.push_str("</g>\n<g fill=\"#333333\" text-anchor=\"end\">\n");
    for &t in &yticks {
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\">{:.*}</text>",
            MARGIN_LEFT - 8.0,
            sy(t) + 4.0,
            ydec,
            t
        );
    }
    out.push_str("</g>\n");

    let _ = writeln!(
        out,
        "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{plot_w:.2}\" height=\"{plot_h:.2}\" \
         fill=\"none\" stroke=\"#333333\" stroke-width=\"1\"/>",
        MARGIN_LEFT, MARGIN_TOP
    );
    let _ = writeln!(
        out,
        "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#111111\">{}</text>",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 14.0,
        xml_escape(x_label)
    );
    let _ = writeln!(
        out,
        "<text x=\"20\" y=\"{:.2}\" text-anchor=\"middle\" fill=\"#111111\" \
         transform=\"rotate(-90 20 {:.2})\">{}</text>",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        xml_escape(y_label)
    );

    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let mut pts = String::with_capacity(s.points.len() * 14);
        for (j, &(x, y)) in s.points.iter().enumerate() {
            if j > 0 {
                pts.push(' ');
            }
            let _ = write!(pts, "{:.2},{:.2}", sx(x), sy(y));
        }
        let stroke = if s.draw_line { color } else { "none" };
        let _ = writeln!(
            out,
            "<polyline points=\"{pts}\" fill=\"none\" stroke=\"{stroke}\" stroke-width=\"1.5\"/>"
        );
        if s.draw_marks {
            for &(x, y) in &s.points {
                let _ = writeln!(
                    out,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"4\" fill=\"{color}\" \
                     stroke=\"#ffffff\" stroke-width=\"1\"/>",
                    sx(x),
                    sy(y)
                );
            }
        }
    }

    let legend_x = MARGIN_LEFT + plot_w - 190.0;
    let legend_y = MARGIN_TOP + 10.0;
    let _ = writeln!(
        out,
        "<rect x=\"{legend_x:.2}\" y=\"{legend_y:.2}\" width=\"182\" height=\"{:.2}\" \
         fill=\"#ffffff\" fill-opacity=\"0.85\" stroke=\"#cccccc\"/>",
        series.len() as f64 * 18.0 + 10.0
    );
    for (i, s) in series.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let row = legend_y + 14.0 + i as f64 * 18.0;
        if s.draw_line {
            let _ = writeln!(
                out,
                "<line x1=\"{:.2}\" y1=\"{row:.2}\" x2=\"{:.2}\" y2=\"{row:.2}\" \
                 stroke=\"{color}\" stroke-width=\"2\"/>",
                legend_x + 8.0,
                legend_x + 26.0
            );
        } else {
            let _ = writeln!(
                out,
                "<circle cx=\"{:.2}\" cy=\"{row:.2}\" r=\"4\" fill=\"{color}\"/>",
                legend_x + 17.0
            );
        }
        let _ = writeln!(
            out,
            "<text x=\"{:.2}\" y=\"{:.2}\" fill=\"#111111\">{}</text>",
            legend_x + 32.0,
            row + 4.0,
            xml_escape(&s.label)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_series_renders_one_polyline() {
        let svg = emit_svg(&[Series::curve("p", vec![(1.0, 2.0)])], "x", "y").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert!(svg.starts_with("<svg "));
        assert!(svg.trim_end().ends_with("</svg>"));
    }

    #[test]
    fn identical_calls_are_byte_identical() {
        let series = vec![
            Series::curve("a", (0..100).map(|i| (i as f64 * 0.1, (i as f64 * 0.3).sin())).collect()),
            Series::marks("b", vec![(2.0, 0.5), (7.0, -0.5)]),
        ];
        let s1 = emit_svg(&series, "t", "q").unwrap();
        let s2 = emit_svg(&series, "t", "q").unwrap();
        assert_eq!(s1, s2);
    }

    #[test]
    fn empty_input_is_rejected() {
        assert!(matches!(emit_svg(&[], "x", "y"), Err(SvgError::NoSeries)));
        let e = emit_svg(&[Series::curve("void", vec![])], "x", "y");
        assert!(matches!(e, Err(SvgError::EmptySeries(_))));
        let nan = emit_svg(&[Series::curve("bad", vec![(0.0, f64::NAN)])], "x", "y");
        assert!(matches!(nan, Err(SvgError::NonFinite(_))));
    }

    #[test]
    fn marker_series_gets_circles_and_a_legend_row() {
        let series = vec![
            Series::curve("branch", vec![(0.5, 1.0), (1.0, 3.0), (1.5, 2.0)]),
            Series::marks("fold", vec![(1.0, 3.0)]),
        ];
        let svg = emit_svg(&series, "w", "amp").unwrap();
        assert_eq!(svg.matches("<polyline").count(), 2);
        assert!(svg.contains("stroke=\"none\""));
        assert!(svg.contains(">fold</text>"));
        assert!(svg.matches("<circle").count() >= 2); // marker + legend swatch
    }

    #[test]
    fn tick_labels_use_the_step_precision() {
        let svg = emit_svg(&[Series::curve("s", vec![(0.0, 0.0), (1.0, 0.3)])], "x", "y").unwrap();
        // y-range 0..0.3 gives a 0.05 step: labels like 0.05, never 0.30000000000000004.
        assert!(!svg.contains("00000000"));
    }
}
