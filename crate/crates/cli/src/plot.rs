//! Hand-emitted SVG line charts. Output is a pure function of the input
//! bytes: fixed canvas, fixed palette, groups in order of first appearance,
//! points in row order.

use crate::commands::CliError;

const WIDTH: f64 = 800.0;
const HEIGHT: f64 = 500.0;
const MARGIN_LEFT: f64 = 70.0;
const MARGIN_RIGHT: f64 = 140.0;
const MARGIN_TOP: f64 = 30.0;
const MARGIN_BOTTOM: f64 = 55.0;

const PALETTE: [&str; 8] = [
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f",
];

struct Series {
    label: String,
    points: Vec<(f64, f64)>,
}

pub fn render_svg(
    csv_text: &str,
    x_col: &str,
    y_col: &str,
    group_col: Option<&str>,
) -> Result<String, CliError> {
    let mut lines = csv_text.lines().enumerate();
    let (_, header) = lines
        .next()
        .ok_or_else(|| CliError::Data("empty CSV: no header".to_string()))?;
    let cols: Vec<&str> = header.split(',').collect();
    let find = |name: &str| -> Result<usize, CliError> {
        cols.iter().position(|c| *c == name).ok_or_else(|| {
            CliError::Usage(format!(
                "column '{name}' not found; available: {}",
                cols.join(", ")
            ))
        })
    };
    let xi = find(x_col)?;
    let yi = find(y_col)?;
    let gi = group_col.map(find).transpose()?;

    let mut series: Vec<Series> = Vec::new();
    let mut rows = 0usize;
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::Data(format!(
                "line {}: expected {} fields, found {}",
                idx + 1,
                cols.len(),
                fields.len()
            )));
        }
        // rows with an empty metric (failed replications) are skipped
        if fields[xi].is_empty() || fields[yi].is_empty() {
            continue;
        }
        let x: f64 = fields[xi].parse().map_err(|_| {
            CliError::Data(format!(
                "line {}: cannot parse '{}' in column '{x_col}'",
                idx + 1,
                fields[xi]
            ))
        })?;
        let y: f64 = fields[yi].parse().map_err(|_| {
            CliError::Data(format!(
                "line {}: cannot parse '{}' in column '{y_col}'",
                idx + 1,
                fields[yi]
            ))
        })?;
        let label = match gi {
            Some(g) => fields[g].to_string(),
            None => y_col.to_string(),
        };
        match series.iter_mut().find(|s| s.label == label) {
            Some(s) => s.points.push((x, y)),
            None => series.push(Series {
                label,
                points: vec![(x, y)],
            }),
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(CliError::Data(
            "CSV has a header but no plottable rows".to_string(),
        ));
    }

    let all: Vec<(f64, f64)> = series.iter().flat_map(|s| s.points.iter().copied()).collect();
    let (x_min, x_max) = padded_range(all.iter().map(|p| p.0));
    let (y_min, y_max) = padded_range(all.iter().map(|p| p.1));
    let plot_w = WIDTH - MARGIN_LEFT - MARGIN_RIGHT;
    let plot_h = HEIGHT - MARGIN_TOP - MARGIN_BOTTOM;
    let sx = |v: f64| MARGIN_LEFT + (v - x_min) / (x_max - x_min) * plot_w;
    let sy = |v: f64| MARGIN_TOP + plot_h - (v - y_min) / (y_max - y_min) * plot_h;

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 {WIDTH} {HEIGHT}\" \
         font-family=\"sans-serif\" font-size=\"12\">\n"
    ));
    svg.push_str(&format!(
        "  <rect x=\"0\" y=\"0\" width=\"{WIDTH}\" height=\"{HEIGHT}\" fill=\"white\"/>\n"
    ));
    // axes
    let x0 = MARGIN_LEFT;
    let y0 = MARGIN_TOP + plot_h;
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{y0}\" x2=\"{}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        MARGIN_LEFT + plot_w
    ));
    svg.push_str(&format!(
        "  <line x1=\"{x0}\" y1=\"{}\" x2=\"{x0}\" y2=\"{y0}\" stroke=\"black\"/>\n",
        MARGIN_TOP
    ));
    // ticks
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x_min + f * (x_max - x_min);
        let xp = sx(xv);
        svg.push_str(&format!(
            "  <line x1=\"{xp:.2}\" y1=\"{y0}\" x2=\"{xp:.2}\" y2=\"{}\" stroke=\"black\"/>\n",
            y0 + 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{xp:.2}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            y0 + 20.0,
            tick_label(xv)
        ));
        let yv = y_min + f * (y_max - y_min);
        let yp = sy(yv);
        svg.push_str(&format!(
            "  <line x1=\"{}\" y1=\"{yp:.2}\" x2=\"{x0}\" y2=\"{yp:.2}\" stroke=\"black\"/>\n",
            x0 - 5.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{:.2}\" text-anchor=\"end\">{}</text>\n",
            x0 - 8.0,
            yp + 4.0,
            tick_label(yv)
        ));
    }
    // axis labels
    svg.push_str(&format!(
        "  <text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\">{}</text>\n",
        MARGIN_LEFT + plot_w / 2.0,
        HEIGHT - 12.0,
        escape(x_col)
    ));
    svg.push_str(&format!(
        "  <text x=\"18\" y=\"{:.2}\" text-anchor=\"middle\" font-size=\"14\" \
         transform=\"rotate(-90 18 {:.2})\">{}</text>\n",
        MARGIN_TOP + plot_h / 2.0,
        MARGIN_TOP + plot_h / 2.0,
        escape(y_col)
    ));
    // series
    for (s_idx, s) in series.iter().enumerate() {
        let color = PALETTE[s_idx % PALETTE.len()];
        let points: Vec<String> = s
            .points
            .iter()
            .map(|(x, y)| format!("{:.2},{:.2}", sx(*x), sy(*y)))
            .collect();
        svg.push_str(&format!(
            "  <polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
            points.join(" ")
        ));
        let ly = MARGIN_TOP + 16.0 * s_idx as f64 + 10.0;
        let lx = MARGIN_LEFT + plot_w + 10.0;
        svg.push_str(&format!(
            "  <line x1=\"{lx}\" y1=\"{ly}\" x2=\"{}\" y2=\"{ly}\" stroke=\"{color}\" \
             stroke-width=\"2\"/>\n",
            lx + 18.0
        ));
        svg.push_str(&format!(
            "  <text x=\"{}\" y=\"{}\">{}</text>\n",
            lx + 24.0,
            ly + 4.0,
            escape(&s.label)
        ));
    }
    svg.push_str("</svg>\n");
    Ok(svg)
}

fn padded_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for v in values {
        min = min.min(v);
        max = max.max(v);
    }
    if min == max {
        (min - 0.5, max + 0.5)
    } else {
        let pad = 0.05 * (max - min);
        (min - pad, max + pad)
    }
}

fn tick_label(v: f64) -> String {
    let s = format!("{v:.4}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() || s == "-" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
