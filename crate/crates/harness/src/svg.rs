//! CSV-to-SVG line charts with deterministic byte output.

use crate::HarnessError;

/// Which CSV columns to plot. With `group_by` columns set, rows are
/// partitioned by their values there and each (group, series) pair becomes
/// its own polyline, so a long-format sweep renders one curve per channel.
#[derive(Debug, Clone)]
pub struct PlotSpec {
    pub x_column: String,
    pub series: Vec<String>,
    pub group_by: Vec<String>,
    pub title: String,
    pub width: u32,
    pub height: u32,
}

impl PlotSpec {
    pub fn new(x_column: impl Into<String>, series: Vec<String>) -> Self {
        Self {
            x_column: x_column.into(),
            series,
            group_by: Vec::new(),
            title: String::new(),
            width: 720,
            height: 480,
        }
    }
}

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf", "#8c564b", "#e377c2",
];
const MARGIN: f64 = 60.0;

struct Curve {
    label: String,
    points: Vec<(f64, f64)>,
}

/// Renders one polyline per curve on linear axes. Identical input bytes and
/// spec produce identical output bytes.
pub fn render_svg(csv_text: &str, spec: &PlotSpec) -> Result<String, HarnessError> {
    let curves = extract_curves(csv_text, spec)?;

    let xs: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|&(x, _)| x))
        .collect();
    let ys: Vec<f64> = curves
        .iter()
        .flat_map(|c| c.points.iter().map(|&(_, y)| y))
        .collect();
    let (x_min, x_max) = padded_range(&xs);
    let (y_min, y_max) = padded_range(&ys);

    let w = spec.width as f64;
    let h = spec.height as f64;
    let to_px = |x: f64, y: f64| -> (f64, f64) {
        let px = MARGIN + (x - x_min) / (x_max - x_min) * (w - 2.0 * MARGIN);
        let py = h - MARGIN - (y - y_min) / (y_max - y_min) * (h - 2.0 * MARGIN);
        (px, py)
    };

    let mut out = String::new();
    out.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" viewBox=\"0 0 {} {}\">\n",
        spec.width, spec.height, spec.width, spec.height
    ));
    out.push_str(&format!(
        "  <rect width=\"{}\" height=\"{}\" fill=\"white\"/>\n",
        spec.width, spec.height
    ));
    if !spec.title.is_empty() {
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"24\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"16\">{}</text>\n",
            w / 2.0,
            escape(&spec.title)
        ));
    }
    // Axes with extreme tick labels.
    out.push_str(&format!(
        "  <line x1=\"{m:.2}\" y1=\"{b:.2}\" x2=\"{r:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n",
        m = MARGIN,
        b = h - MARGIN,
        r = w - MARGIN
    ));
    out.push_str(&format!(
        "  <line x1=\"{m:.2}\" y1=\"{t:.2}\" x2=\"{m:.2}\" y2=\"{b:.2}\" stroke=\"black\"/>\n",
        m = MARGIN,
        t = MARGIN,
        b = h - MARGIN
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN,
        h - MARGIN + 18.0,
        tick(x_min)
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        w - MARGIN,
        h - MARGIN + 18.0,
        tick(x_max)
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN - 6.0,
        h - MARGIN + 4.0,
        tick(y_min)
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"11\">{}</text>\n",
        MARGIN - 6.0,
        MARGIN + 4.0,
        tick(y_max)
    ));
    out.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\">{}</text>\n",
        w / 2.0,
        h - 16.0,
        escape(&spec.x_column)
    ));

    for (k, curve) in curves.iter().enumerate() {
        let color = PALETTE[k % PALETTE.len()];
        let points: Vec<String> = curve
            .points
            .iter()
            .map(|&(x, y)| {
                let (px, py) = to_px(x, y);
                format!("{px:.2},{py:.2}")
            })
            .collect();
        out.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        out.push_str(&format!(
            "  <text x=\"{:.2}\" y=\"{:.2}\" font-family=\"sans-serif\" font-size=\"12\" fill=\"{color}\">{}</text>\n",
            w - MARGIN + 8.0,
            MARGIN + 16.0 * k as f64,
            escape(&curve.label)
        ));
    }
    out.push_str("</svg>\n");
    Ok(out)
}

fn extract_curves(csv_text: &str, spec: &PlotSpec) -> Result<Vec<Curve>, HarnessError> {
    if spec.series.is_empty() {
        return Err(HarnessError::MalformedInput("no series requested".into()));
    }
    let mut reader = csv::ReaderBuilder::new().from_reader(csv_text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| HarnessError::MalformedInput(e.to_string()))?
        .clone();
    let column = |name: &str| -> Result<usize, HarnessError> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| HarnessError::MalformedInput(format!("missing column '{name}'")))
    };
    let x_index = column(&spec.x_column)?;
    let series_indices: Vec<usize> = spec
        .series
        .iter()
        .map(|s| column(s))
        .collect::<Result<_, _>>()?;
    let group_indices: Vec<usize> = spec
        .group_by
        .iter()
        .map(|s| column(s))
        .collect::<Result<_, _>>()?;

    // Group keys in first-appearance order keep output deterministic.
    let mut group_order: Vec<String> = Vec::new();
    let mut grouped: Vec<(String, Vec<f64>, Vec<Vec<f64>>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| HarnessError::MalformedInput(e.to_string()))?;
        let parse = |idx: usize| -> Result<f64, HarnessError> {
            record
                .get(idx)
                .ok_or_else(|| HarnessError::MalformedInput("short record".into()))?
                .parse::<f64>()
                .map_err(|e| HarnessError::MalformedInput(format!("bad number: {e}")))
        };
        let key = group_indices
            .iter()
            .map(|&idx| record.get(idx).unwrap_or("").to_string())
            .collect::<Vec<_>>()
            .join(",");
        let slot = match group_order.iter().position(|k| k == &key) {
            Some(pos) => pos,
            None => {
                group_order.push(key.clone());
                grouped.push((key, Vec::new(), vec![Vec::new(); series_indices.len()]));
                group_order.len() - 1
            }
        };
        grouped[slot].1.push(parse(x_index)?);
        for (series_slot, &idx) in series_indices.iter().enumerate() {
            grouped[slot].2[series_slot].push(parse(idx)?);
        }
    }
    if grouped.iter().all(|(_, xs, _)| xs.is_empty()) {
        return Err(HarnessError::MalformedInput("empty series".into()));
    }

    let mut curves = Vec::new();
    for (key, xs, columns) in &grouped {
        for (series_slot, values) in columns.iter().enumerate() {
            let label = if key.is_empty() {
                spec.series[series_slot].clone()
            } else {
                format!("{} [{}]", spec.series[series_slot], key)
            };
            curves.push(Curve {
                label,
                points: xs.iter().copied().zip(values.iter().copied()).collect(),
            });
        }
    }
    Ok(curves)
}

fn padded_range(values: &[f64]) -> (f64, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        // Degenerate span; center it.
        let pad = if min == 0.0 { 1.0 } else { min.abs() * 0.1 };
        (min - pad, max + pad)
    } else {
        let pad = (max - min) * 0.05;
        (min - pad, max + pad)
    }
}

fn tick(v: f64) -> String {
    crate::fmt::sig_digits(v, 4)
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}
