use std::fmt::Write;

use super::bundle::Aggregate;
use super::ReportError;
use crate::aggregation::{BoxplotSummary, CooccurrenceMatrix, CountCell, Distribution, Metric, NpmiMatrix};

const NEUTRAL: &str = "#eeeeee";
const BAR: &str = "#4c72b0";
const FONT: &str = "font-family=\"sans-serif\"";

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

fn count_label(c: CountCell) -> String {
    match c {
        CountCell::Count(n) => n.to_string(),
        CountCell::Suppressed => "suppressed".into(),
    }
}

fn metric_label(m: Metric) -> String {
    match m {
        Metric::Value(v) => format!("{v:.2}"),
        Metric::Undefined => "undefined".into(),
        Metric::Suppressed => "suppressed".into(),
    }
}

fn header(w: u32, h: u32) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n\
         <defs><pattern id=\"hatch\" width=\"6\" height=\"6\" patternUnits=\"userSpaceOnUse\" patternTransform=\"rotate(45)\">\
         <rect width=\"6\" height=\"6\" fill=\"#ffffff\"/><line x1=\"0\" y1=\"0\" x2=\"0\" y2=\"6\" stroke=\"#999999\" stroke-width=\"2\"/></pattern></defs>\n\
         <rect width=\"{w}\" height=\"{h}\" fill=\"#ffffff\"/>\n"
    )
}

/// Diverging color for `C / C~`: red above 1, blue below, saturating at 4x.
pub fn ratio_color(ratio: f64) -> String {
    let t = (ratio.ln() / 4f64.ln()).clamp(-1.0, 1.0);
    let fade = |t: f64| (255.0 * (1.0 - t.abs())).round() as u8;
    if t >= 0.0 {
        format!("#ff{0:02x}{0:02x}", fade(t))
    } else {
        format!("#{0:02x}{0:02x}ff", fade(t))
    }
}

/// Diverging color for an nPMI value in [-1, 1].
pub fn npmi_color(v: f64) -> String {
    ratio_color(4f64.powf(v.clamp(-1.0, 1.0)))
}

/// Renders an aggregate as a standalone SVG document.
pub fn render_chart(aggregate: &Aggregate) -> Result<String, ReportError> {
    match aggregate {
        Aggregate::Distribution(d) => Ok(histogram(d)),
        Aggregate::Boxplot(b) => Ok(boxplot(b)),
        Aggregate::Cooccurrence(m) => Ok(cooccurrence_heatmap(m)),
        Aggregate::Npmi(m) => Ok(npmi_heatmap(m)),
        Aggregate::Summary(_) => Err(ReportError::Unsupported("summary table")),
    }
}

/// One panel per facet cell (and component), one bar per bin with its count
/// as label. Suppressed bars are hatched and labelled, never sized.
pub fn histogram(d: &Distribution) -> String {
    let bins = d.axis.len().max(1) as u32;
    let bar_w = 36;
    let panel_h = 170;
    let w = 60 + bins * bar_w + 20;
    let h = 30 + d.cells.len().max(1) as u32 * panel_h;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\" {FONT} font-size=\"11\" font-weight=\"bold\">{}</text>", esc(&d.query.attribute));
    for (p, cell) in d.cells.iter().enumerate() {
        let top = 30 + p as u32 * panel_h;
        let base = top + 120;
        let mut title = Vec::new();
        for (axis, &level) in d.facets.iter().zip(&cell.facet) {
            title.push(format!("{} = {}", axis.attribute, axis.labels[level]));
        }
        if let Some(c) = cell.component {
            title.push(format!("component {}", d.components[c]));
        }
        title.push(format!("missing {}", count_label(cell.missing)));
        let _ = writeln!(s, "<text x=\"10\" y=\"{}\" {FONT} font-size=\"11\">{}</text>", top + 12, esc(&title.join(", ")));
        let max = cell.counts.iter().filter_map(|c| c.count()).max().unwrap_or(0).max(1);
        for (i, c) in cell.counts.iter().enumerate() {
            let x = 60 + i as u32 * bar_w;
            match c {
                CountCell::Count(n) => {
                    let bh = (*n as f64 / max as f64 * 100.0).round() as u32;
                    let _ = writeln!(
                        s,
                        "<rect class=\"bar\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"{bh}\" fill=\"{BAR}\"/>",
                        x + 3,
                        base - bh,
                        bar_w - 6
                    );
                }
                CountCell::Suppressed => {
                    let _ = writeln!(
                        s,
                        "<rect class=\"bar suppressed\" x=\"{}\" y=\"{}\" width=\"{}\" height=\"10\" fill=\"url(#hatch)\"/>",
                        x + 3,
                        base - 10,
                        bar_w - 6
                    );
                }
            }
            let _ = writeln!(
                s,
                "<text class=\"count\" x=\"{}\" y=\"{}\" {FONT} font-size=\"11\" text-anchor=\"middle\">{}</text>",
                x + bar_w / 2,
                base - 104,
                count_label(*c)
            );
            let _ = writeln!(
                s,
                "<text x=\"{}\" y=\"{}\" {FONT} font-size=\"8\" text-anchor=\"middle\">{}</text>",
                x + bar_w / 2,
                base + 12,
                esc(&d.axis.labels[i])
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn boxplot(b: &BoxplotSummary) -> String {
    let mut s = header(420, 110);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\" {FONT} font-size=\"11\" font-weight=\"bold\">{}</text>", esc(&b.query.attribute));
    let vals = [b.min, b.whisker_low, b.q1, b.median, b.q3, b.whisker_high, b.max];
    let nums: Vec<f64> = vals.iter().filter_map(|m| m.value()).collect();
    if nums.len() != vals.len() {
        let _ = writeln!(s, "<rect x=\"20\" y=\"40\" width=\"380\" height=\"30\" fill=\"url(#hatch)\"/>");
        let _ = writeln!(s, "<text x=\"210\" y=\"90\" {FONT} font-size=\"11\" text-anchor=\"middle\">{}</text>", metric_label(b.median));
    } else {
        let (lo, hi) = (nums[0], nums[6]);
        let span = if hi > lo { hi - lo } else { 1.0 };
        let x = |v: f64| 20.0 + (v - lo) / span * 380.0;
        let _ = writeln!(
            s,
            "<line x1=\"{:.2}\" y1=\"55\" x2=\"{:.2}\" y2=\"55\" stroke=\"#333333\"/>",
            x(nums[1]),
            x(nums[5])
        );
        let _ = writeln!(
            s,
            "<rect x=\"{:.2}\" y=\"40\" width=\"{:.2}\" height=\"30\" fill=\"{BAR}\" stroke=\"#333333\"/>",
            x(nums[2]),
            x(nums[4]) - x(nums[2])
        );
        let _ = writeln!(
            s,
            "<line x1=\"{0:.2}\" y1=\"40\" x2=\"{0:.2}\" y2=\"70\" stroke=\"#ffffff\" stroke-width=\"2\"/>",
            x(nums[3])
        );
        let _ = writeln!(
            s,
            "<text x=\"20\" y=\"90\" {FONT} font-size=\"11\">min {} q1 {} median {} q3 {} max {} outliers {}</text>",
            metric_label(b.min),
            metric_label(b.q1),
            metric_label(b.median),
            metric_label(b.q3),
            metric_label(b.max),
            count_label(b.outliers)
        );
    }
    s.push_str("</svg>\n");
    s
}

struct Grid<'a> {
    title: String,
    rows: &'a [String],
    cols: &'a [String],
}

fn heatmap(g: Grid<'_>, cell: impl Fn(usize, usize) -> (String, String)) -> String {
    let size = 44;
    let left = 110;
    let top = 90;
    let w = left + g.cols.len() as u32 * size + 20;
    let h = top + g.rows.len() as u32 * size + 20;
    let mut s = header(w, h);
    let _ = writeln!(s, "<text x=\"10\" y=\"18\" {FONT} font-size=\"11\" font-weight=\"bold\">{}</text>", esc(&g.title));
    for (j, c) in g.cols.iter().enumerate() {
        let cx = left + j as u32 * size + size / 2;
        let _ = writeln!(
            s,
            "<text x=\"{cx}\" y=\"{}\" {FONT} font-size=\"9\" transform=\"rotate(-45 {cx} {})\">{}</text>",
            top - 6,
            top - 6,
            esc(c)
        );
    }
    for (i, r) in g.rows.iter().enumerate() {
        let y = top + i as u32 * size;
        let _ = writeln!(s, "<text x=\"{}\" y=\"{}\" {FONT} font-size=\"9\" text-anchor=\"end\">{}</text>", left - 4, y + size / 2 + 3, esc(r));
        for j in 0..g.cols.len() {
            let x = left + j as u32 * size;
            let (fill, label) = cell(i, j);
            let _ = writeln!(
                s,
                "<rect class=\"cell\" x=\"{x}\" y=\"{y}\" width=\"{size}\" height=\"{size}\" fill=\"{fill}\" stroke=\"#ffffff\"/>"
            );
            if !label.is_empty() {
                let _ = writeln!(
                    s,
                    "<text x=\"{}\" y=\"{}\" {FONT} font-size=\"8\" text-anchor=\"middle\">{}</text>",
                    x + size / 2,
                    y + size / 2 + 3,
                    esc(&label)
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Cells colored by `C / C~` only where the mask flags them; all others are
/// neutral. Undefined ratios are hatched.
pub fn cooccurrence_heatmap(m: &CooccurrenceMatrix) -> String {
    let grid = Grid {
        title: format!("{} x {}", m.query.x, m.query.y),
        rows: &m.x.labels,
        cols: &m.y.labels,
    };
    heatmap(grid, |i, j| {
        let label = count_label(m.counts[i][j]);
        match m.ratio[i][j] {
            Metric::Value(r) if m.significant[i][j] => (ratio_color(r), label),
            Metric::Value(_) => (NEUTRAL.into(), label),
            Metric::Undefined | Metric::Suppressed => ("url(#hatch)".into(), label),
        }
    })
}

/// Cells colored by nPMI where significant; undefined cells hatched without
/// a number.
pub fn npmi_heatmap(m: &NpmiMatrix) -> String {
    let grid = Grid {
        title: format!("nPMI {} x {}", m.query.x, m.query.y),
        rows: &m.x.labels,
        cols: &m.y.labels,
    };
    heatmap(grid, |i, j| match m.npmi[i][j] {
        Metric::Value(v) if m.significant[i][j] => (npmi_color(v), format!("{v:.2}")),
        Metric::Value(v) => (NEUTRAL.into(), format!("{v:.2}")),
        Metric::Undefined => ("url(#hatch)".into(), String::new()),
        Metric::Suppressed => ("url(#hatch)".into(), "suppressed".into()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn colors() {
        assert_eq!(ratio_color(1.0), "#ffffff");
        assert_eq!(ratio_color(4.0), "#ff0000");
        assert_eq!(ratio_color(100.0), "#ff0000");
        assert_eq!(ratio_color(0.25), "#0000ff");
        assert_eq!(ratio_color(2.0), "#ff8080");
        assert_eq!(npmi_color(0.0), "#ffffff");
    }

    #[test]
    fn escapes() {
        assert_eq!(esc("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }
}
