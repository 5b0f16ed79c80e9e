//! Deterministic SVG renderings of predictions and evaluation results.
//!
//! Every plot embeds the numbers it draws as JSON in a `<metadata>`
//! element so tests and downstream tools can read them back.

use std::fmt::Write as _;

use drugnet_core::assoc::extreme_groups;
use serde::Serialize;
use serde_json::json;

use crate::error::CliError;

pub const DENSITY_BINS: usize = 100;

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 48.0;

/// Fixed-bin histogram scaled so that the bin sum times the width is 1.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub lo: f64,
    pub width: f64,
    pub n: usize,
    pub density: Vec<f64>,
}

impl Histogram {
    pub fn integral(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.width
    }
}

pub fn histogram_density(values: &[f64], bins: usize) -> Result<Histogram, CliError> {
    if values.is_empty() {
        return Err(CliError::validation("cannot plot an empty sample"));
    }
    if bins == 0 {
        return Err(CliError::validation("need at least one bin"));
    }
    if let Some(v) = values.iter().find(|v| !v.is_finite()) {
        return Err(CliError::data(format!("cannot plot non-finite value {v}")));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (lo, span) = if max > min {
        (min, max - min)
    } else {
        (min - 0.5, 1.0)
    };
    let width = span / bins as f64;
    let mut counts = vec![0usize; bins];
    for v in values {
        let i = (((v - lo) / width).floor() as usize).min(bins - 1);
        counts[i] += 1;
    }
    let n = values.len();
    Ok(Histogram {
        lo,
        width,
        n,
        density: counts
            .iter()
            .map(|&c| c as f64 / (n as f64 * width))
            .collect(),
    })
}

struct Frame {
    x0: f64,
    x1: f64,
    y0: f64,
    y1: f64,
}

impl Frame {
    fn new(x0: f64, x1: f64, y0: f64, y1: f64) -> Self {
        let pad = |a: f64, b: f64| if b > a { (a, b) } else { (a - 0.5, a + 0.5) };
        let (x0, x1) = pad(x0, x1);
        let (y0, y1) = pad(y0, y1);
        Self { x0, x1, y0, y1 }
    }

    fn x(&self, v: f64) -> f64 {
        MARGIN + (v - self.x0) / (self.x1 - self.x0) * (WIDTH - 2.0 * MARGIN)
    }

    fn y(&self, v: f64) -> f64 {
        HEIGHT - MARGIN - (v - self.y0) / (self.y1 - self.y0) * (HEIGHT - 2.0 * MARGIN)
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

fn header(out: &mut String, title: &str, metadata: &serde_json::Value) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(
        out,
        "<metadata>{}</metadata>",
        escape(&metadata.to_string())
    );
    let _ = writeln!(
        out,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        out,
        r#"<text x="{}" y="24" text-anchor="middle" font-family="sans-serif" font-size="14">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

fn axes(out: &mut String, f: &Frame, x_label: &str, y_label: &str) {
    let (l, r, t, b) = (MARGIN, WIDTH - MARGIN, MARGIN, HEIGHT - MARGIN);
    let _ = writeln!(
        out,
        r#"<path d="M{l} {t} L{l} {b} L{r} {b}" fill="none" stroke="black" stroke-width="1"/>"#
    );
    let text = |out: &mut String, x: f64, y: f64, anchor: &str, s: &str| {
        let _ = writeln!(
            out,
            r#"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}" font-family="sans-serif" font-size="11">{}</text>"#,
            escape(s)
        );
    };
    text(out, l, b + 16.0, "middle", &format!("{:.3}", f.x0));
    text(out, r, b + 16.0, "middle", &format!("{:.3}", f.x1));
    text(out, l - 6.0, b, "end", &format!("{:.3}", f.y0));
    text(out, l - 6.0, t + 4.0, "end", &format!("{:.3}", f.y1));
    text(out, WIDTH / 2.0, HEIGHT - 10.0, "middle", x_label);
    text(out, 14.0, HEIGHT / 2.0, "middle", y_label);
}

fn polyline(out: &mut String, points: &[(f64, f64)], colour: &str) {
    out.push_str(r#"<polyline fill="none" stroke=""#);
    out.push_str(colour);
    out.push_str(r#"" stroke-width="1.5" points=""#);
    for (i, (x, y)) in points.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.2},{y:.2}");
    }
    out.push_str("\"/>\n");
}

/// Step-line density of `values` over [`DENSITY_BINS`] equal bins. The
/// polyline is drawn in data units under a transform, so its points are
/// the exact bin edges and densities.
pub fn density_svg(values: &[f64], title: &str) -> Result<String, CliError> {
    let h = histogram_density(values, DENSITY_BINS)?;
    let top = h.density.iter().copied().fold(0.0, f64::max);
    let hi = h.lo + h.width * DENSITY_BINS as f64;
    let f = Frame::new(h.lo, hi, 0.0, top);
    let mut out = String::new();
    header(&mut out, title, &json!(h));
    axes(&mut out, &f, "predicted log10 IC50", "density");
    let sx = f.x(f.x1) - f.x(f.x0);
    let sy = f.y(f.y0) - f.y(f.y1);
    let _ = writeln!(
        out,
        r#"<g transform="matrix({} 0 0 {} {} {})">"#,
        sx / (f.x1 - f.x0),
        -sy / (f.y1 - f.y0),
        f.x(0.0),
        f.y(0.0)
    );
    out.push_str(r##"<polyline fill="none" stroke="#1f4e79" stroke-width="1.5" vector-effect="non-scaling-stroke" points=""##);
    let mut pts = Vec::with_capacity(2 * DENSITY_BINS + 2);
    pts.push((h.lo, 0.0));
    for (i, d) in h.density.iter().enumerate() {
        let a = h.lo + i as f64 * h.width;
        pts.push((a, *d));
        pts.push((
            if i + 1 == DENSITY_BINS {
                hi
            } else {
                a + h.width
            },
            *d,
        ));
    }
    pts.push((hi, 0.0));
    for (i, (x, y)) in pts.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x},{y}");
    }
    out.push_str("\"/>\n</g>\n</svg>\n");
    Ok(out)
}

/// Per-sample Pearson (x) against Spearman (y) correlations.
pub fn correlation_svg(pairs: &[(f64, f64)], title: &str) -> Result<String, CliError> {
    if pairs.is_empty() {
        return Err(CliError::validation(
            "no defined per-sample correlations to plot",
        ));
    }
    let f = Frame::new(-1.0, 1.0, -1.0, 1.0);
    let mut out = String::new();
    header(
        &mut out,
        title,
        &json!({ "n": pairs.len(), "points": pairs }),
    );
    axes(&mut out, &f, "per-sample Pearson", "per-sample Spearman");
    for (p, s) in pairs {
        let _ = writeln!(
            out,
            r##"<circle cx="{:.2}" cy="{:.2}" r="2" fill="#1f4e79" fill-opacity="0.6"/>"##,
            f.x(*p),
            f.y(*s)
        );
    }
    out.push_str("</svg>\n");
    Ok(out)
}

/// Waterfall summary: counts of the two shaded tails.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WaterfallTails {
    pub n: usize,
    pub sensitive: usize,
    pub resistant: usize,
}

/// Predictions of one drug sorted ascending, with the most sensitive and
/// most resistant `fraction` of samples shaded.
pub fn waterfall_svg(
    values: &[f64],
    ids: &[String],
    fraction: f64,
    title: &str,
) -> Result<(String, WaterfallTails), CliError> {
    if values.is_empty() {
        return Err(CliError::validation("cannot plot an empty sample"));
    }
    let (sens, res) = extreme_groups(values, ids, fraction)?;
    let tails = WaterfallTails {
        n: values.len(),
        sensitive: sens.len(),
        resistant: res.len(),
    };
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let f = Frame::new(0.0, n as f64, sorted[0], sorted[n - 1]);
    let mut out = String::new();
    header(&mut out, title, &json!(tails));
    let band = |out: &mut String, a: usize, b: usize, colour: &str| {
        let (x0, x1) = (f.x(a as f64), f.x(b as f64));
        let _ = writeln!(
            out,
            r#"<rect x="{x0:.2}" y="{MARGIN}" width="{:.2}" height="{}" fill="{colour}" fill-opacity="0.25" data-samples="{}"/>"#,
            x1 - x0,
            HEIGHT - 2.0 * MARGIN,
            b - a
        );
    };
    band(&mut out, 0, tails.sensitive, "#2e7d32");
    band(&mut out, n - tails.resistant, n, "#c62828");
    axes(
        &mut out,
        &f,
        "samples ranked by prediction",
        "predicted log10 IC50",
    );
    let pts: Vec<(f64, f64)> = sorted
        .iter()
        .enumerate()
        .map(|(i, v)| (f.x(i as f64 + 0.5), f.y(*v)))
        .collect();
    polyline(&mut out, &pts, "#1f4e79");
    out.push_str("</svg>\n");
    Ok((out, tails))
}
