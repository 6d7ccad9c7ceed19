//! Static SVG emission: line charts with translucent mean +/- 2-std bands
//! and grouped bar charts. No external renderer, service, or font is
//! required; output is a deterministic function of the inputs.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlotError {
    #[error("no curves to plot")]
    Empty,
    #[error("curve \"{0}\" has inconsistent lengths")]
    BadCurve(String),
    #[error("cannot write plot: {0}")]
    Io(#[from] std::io::Error),
}

/// One aggregated series: per-round mean with a sample standard deviation.
#[derive(Debug, Clone)]
pub struct Curve {
    pub label: String,
    pub rounds: Vec<u64>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

const WIDTH: f64 = 840.0;
const HEIGHT: f64 = 520.0;
const MARGIN_L: f64 = 78.0;
const MARGIN_R: f64 = 24.0;
const MARGIN_T: f64 = 44.0;
const MARGIN_B: f64 = 58.0;

const PALETTE: [&str; 6] = [
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#7f7f7f",
];
const DASHES: [&str; 6] = ["none", "6,3", "2,2", "8,3,2,3", "4,4", "1,3"];

fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let a = v.abs();
    if a >= 1e6 || a < 1e-3 {
        format!("{v:.2e}")
    } else if a >= 100.0 {
        format!("{v:.0}")
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}

fn fmt_coord(v: f64) -> String {
    format!("{v:.2}")
}

struct Frame {
    x_min: f64,
    x_max: f64,
    y_min: f64,
    y_max: f64,
}

impl Frame {
    fn x(&self, v: f64) -> f64 {
        let span = (self.x_max - self.x_min).max(1e-300);
        MARGIN_L + (v - self.x_min) / span * (WIDTH - MARGIN_L - MARGIN_R)
    }

    fn y(&self, v: f64) -> f64 {
        let span = (self.y_max - self.y_min).max(1e-300);
        HEIGHT - MARGIN_B - (v - self.y_min) / span * (HEIGHT - MARGIN_T - MARGIN_B)
    }
}

fn svg_header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" \
         viewBox=\"0 0 {WIDTH} {HEIGHT}\">\n\
         <rect width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"16\">{}</text>\n",
        WIDTH / 2.0,
        xml_escape(title)
    )
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

fn axes(out: &mut String, frame: &Frame, x_label: &str, y_label: &str) {
    let x0 = MARGIN_L;
    let x1 = WIDTH - MARGIN_R;
    let y0 = HEIGHT - MARGIN_B;
    let y1 = MARGIN_T;
    let _ = writeln!(
        out,
        "<line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x1}\" y2=\"{y0}\" stroke=\"black\"/>\n\
         <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{x0}\" y2=\"{y1}\" stroke=\"black\"/>"
    );
    for k in 0..=5 {
        let f = k as f64 / 5.0;
        let xv = frame.x_min + f * (frame.x_max - frame.x_min);
        let xp = frame.x(xv);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y0}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{}</text>",
            fmt_coord(xp),
            fmt_coord(xp),
            y0 + 5.0,
            fmt_coord(xp),
            y0 + 20.0,
            fmt_num(xv)
        );
        let yv = frame.y_min + f * (frame.y_max - frame.y_min);
        let yp = frame.y(yv);
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{}\" x2=\"{x0}\" y2=\"{}\" stroke=\"black\"/>\n\
             <text x=\"{}\" y=\"{}\" text-anchor=\"end\" font-family=\"sans-serif\" \
             font-size=\"11\">{}</text>",
            x0 - 5.0,
            fmt_coord(yp),
            fmt_coord(yp),
            x0 - 9.0,
            fmt_coord(yp + 4.0),
            fmt_num(yv)
        );
    }
    let _ = writeln!(
        out,
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\">{}</text>\n\
         <text x=\"18\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
         font-size=\"13\" transform=\"rotate(-90 18 {})\">{}</text>",
        (MARGIN_L + WIDTH - MARGIN_R) / 2.0,
        HEIGHT - 14.0,
        xml_escape(x_label),
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        (MARGIN_T + HEIGHT - MARGIN_B) / 2.0,
        xml_escape(y_label)
    );
}

fn legend(out: &mut String, labels: &[&str]) {
    for (i, label) in labels.iter().enumerate() {
        let y = MARGIN_T + 14.0 + 18.0 * i as f64;
        let color = PALETTE[i % PALETTE.len()];
        let dash = DASHES[i % DASHES.len()];
        let _ = writeln!(
            out,
            "<line x1=\"{}\" y1=\"{y}\" x2=\"{}\" y2=\"{y}\" stroke=\"{color}\" \
             stroke-width=\"2\" stroke-dasharray=\"{dash}\"/>\n\
             <text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\">{}</text>",
            MARGIN_L + 10.0,
            MARGIN_L + 38.0,
            MARGIN_L + 44.0,
            y + 4.0,
            xml_escape(label)
        );
    }
}

/// Writes a line chart: one line per curve plus a translucent band spanning
/// mean +/- 2 std. Points are taken at a fixed stride so files stay small.
pub fn emit_plot(
    curves: &[Curve],
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<(), PlotError> {
    let svg = render_plot(curves, title, x_label, y_label)?;
    std::fs::write(path, svg)?;
    Ok(())
}

/// Stride used when sampling curve points for rendering.
pub fn render_stride(len: usize) -> usize {
    (len / 600).max(1)
}

pub fn render_plot(
    curves: &[Curve],
    title: &str,
    x_label: &str,
    y_label: &str,
) -> Result<String, PlotError> {
    if curves.is_empty() {
        return Err(PlotError::Empty);
    }
    for c in curves {
        if c.rounds.len() != c.mean.len() || c.rounds.len() != c.std.len() || c.rounds.is_empty() {
            return Err(PlotError::BadCurve(c.label.clone()));
        }
    }
    let mut x_min = f64::INFINITY;
    let mut x_max = f64::NEG_INFINITY;
    let mut y_min = f64::INFINITY;
    let mut y_max = f64::NEG_INFINITY;
    for c in curves {
        x_min = x_min.min(*c.rounds.first().unwrap() as f64);
        x_max = x_max.max(*c.rounds.last().unwrap() as f64);
        for (m, s) in c.mean.iter().zip(&c.std) {
            y_min = y_min.min(m - 2.0 * s);
            y_max = y_max.max(m + 2.0 * s);
        }
    }
    if y_min == y_max {
        y_min -= 1.0;
        y_max += 1.0;
    }
    let frame = Frame {
        x_min,
        x_max,
        y_min,
        y_max,
    };

    let mut out = svg_header(title);
    axes(&mut out, &frame, x_label, y_label);

    // bands first so every line stays visible on top of them
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let stride = render_stride(c.rounds.len());
        let idx: Vec<usize> = sampled_indices(c.rounds.len(), stride);
        let mut pts = String::new();
        for &k in &idx {
            let _ = write!(
                pts,
                "{},{} ",
                fmt_coord(frame.x(c.rounds[k] as f64)),
                fmt_coord(frame.y(c.mean[k] + 2.0 * c.std[k]))
            );
        }
        for &k in idx.iter().rev() {
            let _ = write!(
                pts,
                "{},{} ",
                fmt_coord(frame.x(c.rounds[k] as f64)),
                fmt_coord(frame.y(c.mean[k] - 2.0 * c.std[k]))
            );
        }
        let _ = writeln!(
            out,
            "<polygon data-band=\"{}\" points=\"{}\" fill=\"{color}\" \
             fill-opacity=\"0.18\" stroke=\"none\"/>",
            xml_escape(&c.label),
            pts.trim_end()
        );
    }
    for (i, c) in curves.iter().enumerate() {
        let color = PALETTE[i % PALETTE.len()];
        let dash = DASHES[i % DASHES.len()];
        let stride = render_stride(c.rounds.len());
        let mut pts = String::new();
        for k in sampled_indices(c.rounds.len(), stride) {
            let _ = write!(
                pts,
                "{},{} ",
                fmt_coord(frame.x(c.rounds[k] as f64)),
                fmt_coord(frame.y(c.mean[k]))
            );
        }
        let _ = writeln!(
            out,
            "<polyline data-series=\"{}\" points=\"{}\" fill=\"none\" stroke=\"{color}\" \
             stroke-width=\"1.6\" stroke-dasharray=\"{dash}\"/>",
            xml_escape(&c.label),
            pts.trim_end()
        );
    }
    let labels: Vec<&str> = curves.iter().map(|c| c.label.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    Ok(out)
}

/// Indices `0, stride, 2*stride, ...` always including the final point.
fn sampled_indices(len: usize, stride: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..len).step_by(stride).collect();
    if *idx.last().unwrap() != len - 1 {
        idx.push(len - 1);
    }
    idx
}

/// One cluster of bars sharing an x-axis label.
#[derive(Debug, Clone)]
pub struct BarGroup {
    pub label: String,
    /// One value per series, in series order.
    pub values: Vec<f64>,
    /// Optional error-bar half-heights, one per series.
    pub errors: Vec<f64>,
}

/// Writes a grouped bar chart with optional error bars.
pub fn emit_bar_chart(
    groups: &[BarGroup],
    series: &[String],
    title: &str,
    x_label: &str,
    y_label: &str,
    path: &Path,
) -> Result<(), PlotError> {
    if groups.is_empty() || series.is_empty() {
        return Err(PlotError::Empty);
    }
    for g in groups {
        if g.values.len() != series.len() || (!g.errors.is_empty() && g.errors.len() != series.len())
        {
            return Err(PlotError::BadCurve(g.label.clone()));
        }
    }
    let mut y_max = f64::NEG_INFINITY;
    for g in groups {
        for (i, &v) in g.values.iter().enumerate() {
            let e = g.errors.get(i).copied().unwrap_or(0.0);
            y_max = y_max.max(v + e);
        }
    }
    let frame = Frame {
        x_min: 0.0,
        x_max: groups.len() as f64,
        y_min: 0.0,
        y_max: if y_max <= 0.0 { 1.0 } else { y_max * 1.05 },
    };
    let mut out = svg_header(title);
    axes(&mut out, &frame, x_label, y_label);
    let slot = (WIDTH - MARGIN_L - MARGIN_R) / groups.len() as f64;
    let bar_w = slot * 0.8 / series.len() as f64;
    for (gi, g) in groups.iter().enumerate() {
        for (si, &v) in g.values.iter().enumerate() {
            let color = PALETTE[si % PALETTE.len()];
            let x = MARGIN_L + gi as f64 * slot + slot * 0.1 + si as f64 * bar_w;
            let y = frame.y(v);
            let h = (HEIGHT - MARGIN_B) - y;
            let _ = writeln!(
                out,
                "<rect data-bar=\"{}:{}\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" \
                 fill=\"{color}\"/>",
                xml_escape(&g.label),
                xml_escape(&series[si]),
                fmt_coord(x),
                fmt_coord(y),
                fmt_coord(bar_w),
                fmt_coord(h.max(0.0))
            );
            if let Some(&e) = g.errors.get(si) {
                if e > 0.0 {
                    let cx = x + bar_w / 2.0;
                    let _ = writeln!(
                        out,
                        "<line x1=\"{}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/>",
                        fmt_coord(cx),
                        fmt_coord(frame.y(v - e)),
                        fmt_coord(cx),
                        fmt_coord(frame.y(v + e))
                    );
                }
            }
        }
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" font-family=\"sans-serif\" \
             font-size=\"11\">{}</text>",
            fmt_coord(MARGIN_L + (gi as f64 + 0.5) * slot),
            HEIGHT - MARGIN_B + 34.0,
            xml_escape(&g.label)
        );
    }
    let labels: Vec<&str> = series.iter().map(|s| s.as_str()).collect();
    legend(&mut out, &labels);
    out.push_str("</svg>\n");
    std::fs::write(path, out)?;
    Ok(())
}
