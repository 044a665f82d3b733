//! Small hand-rolled SVG charts for the evaluation report: grouped bars for
//! marginal comparisons, overlaid lines for trip-length distributions, and
//! a scatter for the conditional grid.

use super::{ConditionalGrid, Histogram, MarginalComparison};

const W: f64 = 720.0;
const H: f64 = 420.0;
const PAD: f64 = 50.0;

fn header(title: &str) -> String {
    format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">\n\
         <rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n\
         <text x=\"{}\" y=\"24\" font-size=\"16\" text-anchor=\"middle\" font-family=\"sans-serif\">{title}</text>\n",
        W / 2.0
    )
}

fn axes() -> String {
    format!(
        "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>\n\
         <line x1=\"{PAD}\" y1=\"{PAD}\" x2=\"{PAD}\" y2=\"{0}\" stroke=\"black\"/>\n",
        H - PAD,
        W - PAD
    )
}

/// Grouped bar chart of real vs synthetic category proportions.
pub fn marginal_bar_chart(cmp: &MarginalComparison) -> String {
    let mut svg = header(&format!(
        "Marginal comparison: {} (TV = {:.4})",
        cmp.column, cmp.tv_distance
    ));
    svg.push_str(&axes());
    let n = cmp.categories.len().max(1);
    let max = cmp
        .real
        .iter()
        .chain(cmp.synth.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let slot = (W - 2.0 * PAD) / n as f64;
    let bar = (slot * 0.38).max(1.0);
    for i in 0..n {
        let x0 = PAD + i as f64 * slot + slot * 0.1;
        for (k, (value, color)) in [(cmp.real[i], "#4472c4"), (cmp.synth[i], "#ed7d31")]
            .iter()
            .enumerate()
        {
            let h = (value / max) * (H - 2.0 * PAD);
            svg.push_str(&format!(
                "<rect x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"{}\"/>\n",
                x0 + k as f64 * bar,
                H - PAD - h,
                bar,
                h,
                color
            ));
        }
        if n <= 30 {
            svg.push_str(&format!(
                "<text x=\"{:.1}\" y=\"{:.1}\" font-size=\"8\" text-anchor=\"end\" font-family=\"sans-serif\" transform=\"rotate(-45 {:.1} {:.1})\">{}</text>\n",
                x0 + bar, H - PAD + 12.0, x0 + bar, H - PAD + 12.0,
                xml_escape(&cmp.categories[i])
            ));
        }
    }
    legend(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

/// Overlaid frequency polylines of the real and synthetic histograms.
pub fn trip_length_chart(real: &Histogram, synth: &Histogram, title: &str) -> String {
    let mut svg = header(title);
    svg.push_str(&axes());
    let max = real
        .frequencies
        .iter()
        .chain(synth.frequencies.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    for (hist, color) in [(real, "#4472c4"), (synth, "#ed7d31")] {
        let n = hist.frequencies.len().max(1);
        let pts: Vec<String> = hist
            .frequencies
            .iter()
            .enumerate()
            .map(|(i, &f)| {
                let x = PAD + (i as f64 + 0.5) / n as f64 * (W - 2.0 * PAD);
                let y = H - PAD - (f / max) * (H - 2.0 * PAD);
                format!("{x:.1},{y:.1}")
            })
            .collect();
        svg.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{}\" stroke-width=\"2\"/>\n",
            pts.join(" "),
            color
        ));
    }
    legend(&mut svg);
    svg.push_str("</svg>\n");
    svg
}

/// Scatter of synthetic vs real conditional-grid frequencies with the
/// proportionality line.
pub fn conditional_scatter(real: &ConditionalGrid, synth: &ConditionalGrid, title: &str) -> String {
    let mut svg = header(title);
    svg.push_str(&axes());
    let xs = real.flatten();
    let ys = synth.flatten();
    let max = xs
        .iter()
        .chain(ys.iter())
        .cloned()
        .fold(0.0f64, f64::max)
        .max(1e-9);
    let to_px = |x: f64, y: f64| {
        (
            PAD + x / max * (W - 2.0 * PAD),
            H - PAD - y / max * (H - 2.0 * PAD),
        )
    };
    let (x1, y1) = to_px(0.0, 0.0);
    let (x2, y2) = to_px(max, max);
    svg.push_str(&format!(
        "<line x1=\"{x1:.1}\" y1=\"{y1:.1}\" x2=\"{x2:.1}\" y2=\"{y2:.1}\" stroke=\"#999\" stroke-dasharray=\"4 3\"/>\n"
    ));
    for (&x, &y) in xs.iter().zip(&ys) {
        let (px, py) = to_px(x, y);
        svg.push_str(&format!(
            "<circle cx=\"{px:.1}\" cy=\"{py:.1}\" r=\"2.4\" fill=\"#4472c4\" fill-opacity=\"0.55\"/>\n"
        ));
    }
    svg.push_str("</svg>\n");
    svg
}

fn legend(svg: &mut String) {
    svg.push_str(&format!(
        "<rect x=\"{0}\" y=\"34\" width=\"12\" height=\"12\" fill=\"#4472c4\"/>\n\
         <text x=\"{1}\" y=\"44\" font-size=\"12\" font-family=\"sans-serif\">real</text>\n\
         <rect x=\"{2}\" y=\"34\" width=\"12\" height=\"12\" fill=\"#ed7d31\"/>\n\
         <text x=\"{3}\" y=\"44\" font-size=\"12\" font-family=\"sans-serif\">synthetic</text>\n",
        W - 180.0,
        W - 162.0,
        W - 120.0,
        W - 102.0
    ))
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn charts_are_wellformed_svg() {
        let cmp = MarginalComparison {
            column: "industry".into(),
            categories: vec!["A&B".into(), "C".into()],
            real: vec![0.6, 0.4],
            synth: vec![0.5, 0.5],
            tv_distance: 0.1,
        };
        let svg = marginal_bar_chart(&cmp);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert!(svg.contains("&amp;"));

        let h = Histogram {
            edges: vec![0.0, 1.0, 2.0],
            frequencies: vec![0.5, 0.5],
            empty: false,
        };
        let svg = trip_length_chart(&h, &h, "trip lengths");
        assert!(svg.contains("polyline"));

        let grid = ConditionalGrid {
            categories: vec!["A".into()],
            histograms: vec![h],
        };
        let svg = conditional_scatter(&grid, &grid, "conditional");
        assert!(svg.contains("circle"));
    }
}
