use std::fmt::Write;

use super::TrainLogRow;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 420.0;
const MARGIN: f64 = 56.0;

fn polyline(points: &[(f64, f64)], color: &str) -> String {
    let coords: Vec<String> = points.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    format!(
        "<polyline fill=\"none\" stroke=\"{color}\" stroke-width=\"1.5\" points=\"{}\"/>\n",
        coords.join(" ")
    )
}

/// Renders train and validation loss against step as a standalone SVG.
pub fn render_loss_svg(rows: &[TrainLogRow]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{HEIGHT}\" viewBox=\"0 0 {WIDTH} {HEIGHT}\">"
    );
    svg.push_str("<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n");

    let losses = rows
        .iter()
        .flat_map(|r| std::iter::once(r.train_loss).chain(r.val_loss))
        .filter(|v| v.is_finite());
    let (lo, hi) = losses.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if rows.is_empty() || !lo.is_finite() {
        svg.push_str("<text x=\"20\" y=\"40\">no data</text>\n</svg>\n");
        return svg;
    }
    let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
    let first = rows[0].step as f64;
    let last = rows[rows.len() - 1].step as f64;
    let span = (last - first).max(1.0);
    let sx = |s: usize| MARGIN + (s as f64 - first) / span * (WIDTH - 2.0 * MARGIN);
    let sy = |v: f64| HEIGHT - MARGIN - (v - lo) / (hi - lo) * (HEIGHT - 2.0 * MARGIN);

    let _ = writeln!(
        svg,
        "<path d=\"M{MARGIN},{MARGIN} V{b} H{r}\" fill=\"none\" stroke=\"black\"/>",
        b = HEIGHT - MARGIN,
        r = WIDTH - MARGIN
    );
    for (v, y) in [(hi, sy(hi)), (lo, sy(lo))] {
        let _ = writeln!(svg, "<text x=\"4\" y=\"{:.2}\" font-size=\"11\">{v:.3}</text>", y + 4.0);
    }
    for (s, x) in [(first, sx(rows[0].step)), (last, sx(rows[rows.len() - 1].step))] {
        let _ = writeln!(
            svg,
            "<text x=\"{x:.2}\" y=\"{:.2}\" font-size=\"11\" text-anchor=\"middle\">{s}</text>",
            HEIGHT - MARGIN + 16.0
        );
    }

    let train: Vec<(f64, f64)> = rows.iter().map(|r| (sx(r.step), sy(r.train_loss))).collect();
    svg.push_str(&polyline(&train, "#1f77b4"));
    let val: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| r.val_loss.map(|v| (sx(r.step), sy(v))))
        .collect();
    if !val.is_empty() {
        svg.push_str(&polyline(&val, "#d62728"));
    }
    let _ = writeln!(
        svg,
        "<text x=\"{x}\" y=\"20\" font-size=\"12\" fill=\"#1f77b4\">train</text>\n<text x=\"{x}\" y=\"36\" font-size=\"12\" fill=\"#d62728\">val</text>",
        x = WIDTH - MARGIN - 40.0
    );
    svg.push_str("</svg>\n");
    svg
}
