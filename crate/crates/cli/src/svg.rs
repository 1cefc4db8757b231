//! Minimal SVG emitters for the inspection plots: per-class accuracy bars
//! and adjacency/relation heatmaps.

fn esc(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Bar chart of values in [0, 1], one bar per label.
pub fn bar_chart(title: &str, labels: &[String], values: &[f64]) -> String {
    assert_eq!(labels.len(), values.len());
    let bar_w = 46.0;
    let gap = 14.0;
    let plot_h = 220.0;
    let width = 60.0 + (bar_w + gap) * labels.len() as f64;
    let height = plot_h + 90.0;
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"11\">\n<text x=\"10\" y=\"20\" font-size=\"14\">{}</text>\n",
        esc(title)
    );
    for (i, (label, &v)) in labels.iter().zip(values).enumerate() {
        let clamped = v.clamp(0.0, 1.0);
        let h = plot_h * clamped;
        let x = 40.0 + (bar_w + gap) * i as f64;
        let y = 40.0 + plot_h - h;
        out.push_str(&format!(
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w:.1}\" height=\"{h:.1}\" fill=\"#3b6fb5\"/>\n\
             <text x=\"{tx:.1}\" y=\"{ty:.1}\" text-anchor=\"middle\">{pct:.1}%</text>\n\
             <text x=\"{tx:.1}\" y=\"{ly:.1}\" text-anchor=\"middle\" transform=\"rotate(30 {tx:.1} {ly:.1})\">{label}</text>\n",
            tx = x + bar_w / 2.0,
            ty = y - 4.0,
            pct = clamped * 100.0,
            ly = 40.0 + plot_h + 16.0,
            label = esc(label),
        ));
    }
    out.push_str("</svg>\n");
    out
}

/// Heatmap of a row-major matrix; values are normalized to the data range.
pub fn heatmap(title: &str, rows: usize, cols: usize, values: &[f64]) -> String {
    assert_eq!(values.len(), rows * cols);
    let cell = 22.0;
    let width = 40.0 + cell * cols as f64 + 20.0;
    let height = 50.0 + cell * rows as f64 + 20.0;
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if (hi - lo).abs() < 1e-12 { 1.0 } else { hi - lo };
    let mut out = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         font-family=\"sans-serif\" font-size=\"10\">\n<text x=\"10\" y=\"20\" font-size=\"13\">{}</text>\n",
        esc(title)
    );
    for r in 0..rows {
        for c in 0..cols {
            let t = (values[r * cols + c] - lo) / span;
            // Dark blue to warm yellow.
            let red = (40.0 + 215.0 * t) as u8;
            let green = (45.0 + 180.0 * t) as u8;
            let blue = (110.0 * (1.0 - t) + 40.0) as u8;
            out.push_str(&format!(
                "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{cell:.1}\" height=\"{cell:.1}\" \
                 fill=\"rgb({red},{green},{blue})\"/>\n",
                x = 30.0 + cell * c as f64,
                y = 40.0 + cell * r as f64,
            ));
        }
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bar_chart_is_valid_svg() {
        let svg = bar_chart("acc", &["a".into(), "b".into()], &[0.5, 1.0]);
        assert!(svg.starts_with("<svg"));
        assert!(svg.ends_with("</svg>\n"));
        assert_eq!(svg.matches("<rect").count(), 2);
    }

    #[test]
    fn heatmap_handles_constant_values() {
        let svg = heatmap("adj", 2, 2, &[0.25; 4]);
        assert_eq!(svg.matches("<rect").count(), 4);
    }
}
