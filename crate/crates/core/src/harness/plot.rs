//! Minimal SVG plot writers. The CSV is the authoritative artifact; these
//! are conveniences for eyeballing a sweep.

use std::fs;
use std::io;
use std::path::Path;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 60.0;

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{title}</text>\n",
        WIDTH / 2.0
    )
}

fn nice_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for v in values {
        if v.is_finite() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if !lo.is_finite() || !hi.is_finite() {
        return (0.0, 1.0);
    }
    if (hi - lo).abs() < 1e-12 {
        (lo - 1.0, hi + 1.0)
    } else {
        let pad = 0.05 * (hi - lo);
        (lo - pad, hi + pad)
    }
}

/// Median curve of `value_db` against one sweep axis, with the individual
/// trial points behind it.
pub fn write_line_plot(
    path: &Path,
    title: &str,
    axis_label: &str,
    medians: &[(f64, f64)],
    points: &[(f64, f64)],
) -> io::Result<()> {
    let mut svg = svg_header(title);
    let (x_lo, x_hi) = nice_range(medians.iter().chain(points.iter()).map(|p| p.0));
    let (y_lo, y_hi) = nice_range(medians.iter().chain(points.iter()).map(|p| p.1));
    let to_px = |x: f64, y: f64| {
        let px = MARGIN + (x - x_lo) / (x_hi - x_lo) * (WIDTH - 2.0 * MARGIN);
        let py = HEIGHT - MARGIN - (y - y_lo) / (y_hi - y_lo) * (HEIGHT - 2.0 * MARGIN);
        (px, py)
    };

    // Axes.
    svg.push_str(&format!(
        "<line x1=\"{m}\" y1=\"{b}\" x2=\"{r}\" y2=\"{b}\" stroke=\"black\"/>\n\
         <line x1=\"{m}\" y1=\"{t}\" x2=\"{m}\" y2=\"{b}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN,
        t = MARGIN
    ));
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\">{axis_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 16.0
    ));
    for frac in [0.0, 0.5, 1.0] {
        let x = x_lo + frac * (x_hi - x_lo);
        let y = y_lo + frac * (y_hi - y_lo);
        let (px, _) = to_px(x, 0.0);
        let (_, py) = to_px(0.0, y);
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"10\">{x:.3}</text>\n",
            HEIGHT - MARGIN + 16.0
        ));
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{py}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"10\">{y:.1}</text>\n",
            MARGIN - 6.0
        ));
    }

    for &(x, y) in points {
        if y.is_finite() {
            let (px, py) = to_px(x, y);
            svg.push_str(&format!(
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"2.5\" fill=\"#9ecae1\"/>\n"
            ));
        }
    }
    let path_points: Vec<String> = medians
        .iter()
        .filter(|p| p.1.is_finite())
        .map(|&(x, y)| {
            let (px, py) = to_px(x, y);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    if path_points.len() > 1 {
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#08519c\" stroke-width=\"2\"/>\n",
            path_points.join(" ")
        ));
    }
    for &(x, y) in medians {
        if y.is_finite() {
            let (px, py) = to_px(x, y);
            svg.push_str(&format!(
                "<circle cx=\"{px:.2}\" cy=\"{py:.2}\" r=\"3.5\" fill=\"#08519c\"/>\n"
            ));
        }
    }
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}

fn heat_color(frac: f64) -> String {
    // Blue (good, low) to red (bad, high).
    let f = frac.clamp(0.0, 1.0);
    let r = (255.0 * f) as u8;
    let b = (255.0 * (1.0 - f)) as u8;
    let g = (96.0 * (1.0 - (2.0 * f - 1.0).abs())) as u8 + 32;
    format!("#{r:02x}{g:02x}{b:02x}")
}

/// Heat grid of the median `value_db` over two sweep axes; one cell per
/// coordinate pair, row-major in `values`.
pub fn write_heat_grid(
    path: &Path,
    title: &str,
    x_label: &str,
    y_label: &str,
    xs: &[f64],
    ys: &[f64],
    values: &[f64],
) -> io::Result<()> {
    assert_eq!(values.len(), xs.len() * ys.len());
    let mut svg = svg_header(title);
    let (v_lo, v_hi) = nice_range(values.iter().copied());
    let cell_w = (WIDTH - 2.0 * MARGIN) / xs.len() as f64;
    let cell_h = (HEIGHT - 2.0 * MARGIN) / ys.len() as f64;
    for (yi, _) in ys.iter().enumerate() {
        for (xi, _) in xs.iter().enumerate() {
            let v = values[yi * xs.len() + xi];
            let color = if v.is_finite() {
                heat_color((v - v_lo) / (v_hi - v_lo))
            } else {
                "#cccccc".to_string()
            };
            let px = MARGIN + xi as f64 * cell_w;
            let py = MARGIN + yi as f64 * cell_h;
            svg.push_str(&format!(
                "<rect x=\"{px:.2}\" y=\"{py:.2}\" width=\"{cell_w:.2}\" height=\"{cell_h:.2}\" \
                 fill=\"{color}\" stroke=\"white\"/>\n"
            ));
            if v.is_finite() {
                svg.push_str(&format!(
                    "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" \
                     font-family=\"sans-serif\" font-size=\"9\">{v:.1}</text>\n",
                    px + cell_w / 2.0,
                    py + cell_h / 2.0 + 3.0
                ));
            }
        }
    }
    for (xi, x) in xs.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{:.2}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"10\">{x}</text>\n",
            MARGIN + (xi as f64 + 0.5) * cell_w,
            HEIGHT - MARGIN + 16.0
        ));
    }
    for (yi, y) in ys.iter().enumerate() {
        svg.push_str(&format!(
            "<text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"10\">{y}</text>\n",
            MARGIN - 6.0,
            MARGIN + (yi as f64 + 0.5) * cell_h + 3.0
        ));
    }
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\">{x_label}</text>\n",
        WIDTH / 2.0,
        HEIGHT - 16.0
    ));
    svg.push_str(&format!(
        "<text x=\"16\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"12\" transform=\"rotate(-90 16 {})\">{y_label}</text>\n",
        HEIGHT / 2.0,
        HEIGHT / 2.0
    ));
    svg.push_str("</svg>\n");
    fs::write(path, svg)
}
