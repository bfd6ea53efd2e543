//! Self-contained SVG heatmaps of two-axis loss surfaces: one rectangle per
//! grid cell, black-to-yellow brightness linear in mean accuracy, axis tick
//! labels and a min/max legend. Output is a pure function of the parsed
//! surface, so files are byte-deterministic.

use crate::CliError;
use std::path::Path;

pub struct Surface {
    pub x_name: String,
    pub y_name: String,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Mean loss per (x index, y index).
    pub loss: Vec<Vec<f64>>,
}

pub fn parse_surface(path: &Path) -> Result<Surface, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| CliError::data(format!("{}: empty surface", path.display())))?;
    let cols: Vec<&str> = header.split(',').collect();
    if cols.len() < 3 {
        return Err(CliError::data(format!(
            "{}: need two parameter columns and mean_loss, found {} columns",
            path.display(),
            cols.len()
        )));
    }
    if cols[2] != "mean_loss" {
        return Err(CliError::data(format!(
            "{}: third column must be mean_loss, found {:?}",
            path.display(),
            cols[2]
        )));
    }
    let (x_name, y_name) = (cols[0].to_string(), cols[1].to_string());

    let mut cells: Vec<(f64, f64, f64)> = Vec::new();
    for (i, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != cols.len() {
            return Err(CliError::data(format!(
                "{}: row {} has {} columns, header has {}",
                path.display(),
                i + 2,
                fields.len(),
                cols.len()
            )));
        }
        let parse = |tok: &str, what: &str| -> Result<f64, CliError> {
            tok.parse::<f64>().map_err(|_| {
                CliError::data(format!("{}: row {}: bad {what} {tok:?}", path.display(), i + 2))
            })
        };
        cells.push((
            parse(fields[0], "x value")?,
            parse(fields[1], "y value")?,
            parse(fields[2], "mean_loss")?,
        ));
    }
    if cells.is_empty() {
        return Err(CliError::data(format!("{}: no data rows", path.display())));
    }

    let mut xs: Vec<f64> = cells.iter().map(|c| c.0).collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    let mut ys: Vec<f64> = cells.iter().map(|c| c.1).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    ys.dedup();
    if cells.len() != xs.len() * ys.len() {
        return Err(CliError::data(format!(
            "{}: {} rows do not fill a {}x{} grid",
            path.display(),
            cells.len(),
            xs.len(),
            ys.len()
        )));
    }
    let mut loss = vec![vec![f64::NAN; ys.len()]; xs.len()];
    for (x, y, l) in cells {
        let xi = xs.iter().position(|&v| v == x).unwrap();
        let yi = ys.iter().position(|&v| v == y).unwrap();
        loss[xi][yi] = l;
    }
    Ok(Surface { x_name, y_name, xs, ys, loss })
}

fn tick(v: f64) -> String {
    let s = format!("{v:.3}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s.is_empty() { "0".to_string() } else { s.to_string() }
}

/// Render the surface; brightness is linear in accuracy (1 - mean loss),
/// normalized between the surface's extremes. A flat surface renders at
/// full brightness.
pub fn render_svg(s: &Surface) -> String {
    let cell = 24usize;
    let margin_left = 64usize;
    let margin_bottom = 48usize;
    let margin_top = 12usize;
    let legend = 36usize;
    let width = margin_left + cell * s.xs.len() + 12;
    let height = margin_top + cell * s.ys.len() + margin_bottom + legend;

    let acc: Vec<Vec<f64>> =
        s.loss.iter().map(|col| col.iter().map(|l| 1.0 - l).collect()).collect();
    let lo = acc.iter().flatten().cloned().fold(f64::INFINITY, f64::min);
    let hi = acc.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);

    let mut svg = String::new();
    svg.push_str(&format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         font-family=\"monospace\" font-size=\"10\">\n"
    ));
    for (xi, _) in s.xs.iter().enumerate() {
        for (yi, _) in s.ys.iter().enumerate() {
            let t = if hi > lo { (acc[xi][yi] - lo) / (hi - lo) } else { 1.0 };
            let level = (255.0 * t).round() as u8;
            // Highest accuracy renders yellow, lowest black.
            let x = margin_left + xi * cell;
            let y = margin_top + (s.ys.len() - 1 - yi) * cell;
            svg.push_str(&format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{cell}\" height=\"{cell}\" \
                 fill=\"rgb({level},{level},0)\"/>\n"
            ));
        }
    }
    // Axis ticks: thin the x labels when the grid is wide.
    let x_stride = (s.xs.len() + 15) / 16;
    for (xi, x) in s.xs.iter().enumerate() {
        if xi % x_stride == 0 {
            let px = margin_left + xi * cell + cell / 2;
            let py = margin_top + cell * s.ys.len() + 14;
            svg.push_str(&format!(
                "<text x=\"{px}\" y=\"{py}\" text-anchor=\"middle\">{}</text>\n",
                tick(*x)
            ));
        }
    }
    for (yi, y) in s.ys.iter().enumerate() {
        let px = margin_left - 6;
        let py = margin_top + (s.ys.len() - 1 - yi) * cell + cell / 2 + 4;
        svg.push_str(&format!(
            "<text x=\"{px}\" y=\"{py}\" text-anchor=\"end\">{}</text>\n",
            tick(*y)
        ));
    }
    let label_y = margin_top + cell * s.ys.len() + 30;
    svg.push_str(&format!(
        "<text x=\"{}\" y=\"{label_y}\" text-anchor=\"middle\">{}</text>\n",
        margin_left + cell * s.xs.len() / 2,
        s.x_name
    ));
    svg.push_str(&format!(
        "<text x=\"12\" y=\"{}\" writing-mode=\"tb\">{}</text>\n",
        margin_top + cell * s.ys.len() / 2,
        s.y_name
    ));
    svg.push_str(&format!(
        "<text x=\"{margin_left}\" y=\"{}\">accuracy min {lo:.6} (black) max {hi:.6} (yellow)</text>\n",
        label_y + 18
    ));
    svg.push_str("</svg>\n");
    svg
}
