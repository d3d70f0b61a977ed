//! Minimal native SVG charts. Output is a pure function of the input, with
//! coordinates printed at fixed precision so files hash identically
//! across runs.

use std::fmt::Write;

/// Categorical palette, cycled when there are more labels than colors.
pub const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22",
    "#17becf",
];

const WIDTH: f64 = 640.0;
const HEIGHT: f64 = 480.0;
const MARGIN: f64 = 48.0;

pub fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            _ => out.push(c),
        }
    }
    out
}

fn header(out: &mut String, title: &str) {
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif">"#
    );
    let _ = writeln!(out, r##"<rect width="100%" height="100%" fill="#ffffff"/>"##);
    let _ = writeln!(
        out,
        r#"<text x="{:.1}" y="24" text-anchor="middle" font-size="16">{}</text>"#,
        WIDTH / 2.0,
        escape(title)
    );
}

/// Vertical bars, one per entry; `None` values are drawn as an empty slot
/// annotated "n/a".
pub fn bar_chart(title: &str, entries: &[(String, Option<f64>)]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let max = entries.iter().filter_map(|e| e.1).fold(0.0, f64::max);
    let plot_h = HEIGHT - 2.0 * MARGIN - 24.0;
    let base = HEIGHT - MARGIN - 24.0;
    let slot = (WIDTH - 2.0 * MARGIN) / entries.len().max(1) as f64;
    let _ = writeln!(
        out,
        r##"<line x1="{MARGIN:.1}" y1="{base:.1}" x2="{:.1}" y2="{base:.1}" stroke="#333333"/>"##,
        WIDTH - MARGIN
    );
    for (i, (label, value)) in entries.iter().enumerate() {
        let x = MARGIN + i as f64 * slot;
        let cx = x + slot / 2.0;
        let color = PALETTE[i % PALETTE.len()];
        let caption = match value {
            Some(v) => {
                let h = if max > 0.0 { v / max * plot_h } else { 0.0 };
                let _ = writeln!(
                    out,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{color}"/>"#,
                    x + slot * 0.15,
                    base - h,
                    slot * 0.7
                );
                let _ = writeln!(
                    out,
                    r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="12">{v:.2}</text>"#,
                    base - h - 4.0
                );
                label.clone()
            }
            None => {
                let _ = writeln!(
                    out,
                    r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="12">n/a</text>"#,
                    base - 4.0
                );
                label.clone()
            }
        };
        let _ = writeln!(
            out,
            r#"<text x="{cx:.2}" y="{:.2}" text-anchor="middle" font-size="12">{}</text>"#,
            base + 16.0,
            escape(&caption)
        );
    }
    out.push_str("</svg>\n");
    out
}

/// Scatter plot colored by label, with a legend in first-seen order of the
/// sorted label set.
pub fn scatter(title: &str, points: &[[f64; 2]], labels: &[String]) -> String {
    let mut out = String::new();
    header(&mut out, title);
    let mut names: Vec<&String> = labels.iter().collect();
    names.sort();
    names.dedup();
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for p in points {
        for d in 0..2 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let legend_w = 150.0;
    let plot_w = WIDTH - 2.0 * MARGIN - legend_w;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let span = |d: usize| if hi[d] > lo[d] { hi[d] - lo[d] } else { 1.0 };
    let _ = writeln!(
        out,
        r##"<rect x="{MARGIN:.1}" y="{MARGIN:.1}" width="{plot_w:.1}" height="{plot_h:.1}" fill="none" stroke="#cccccc"/>"##
    );
    for (p, l) in points.iter().zip(labels) {
        let k = names.binary_search(&l).unwrap_or(0);
        let x = MARGIN + (p[0] - lo[0]) / span(0) * plot_w;
        let y = MARGIN + plot_h - (p[1] - lo[1]) / span(1) * plot_h;
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.2}" cy="{y:.2}" r="2" fill="{}" fill-opacity="0.6"/>"#,
            PALETTE[k % PALETTE.len()]
        );
    }
    for (k, name) in names.iter().enumerate() {
        let y = MARGIN + 8.0 + 18.0 * k as f64;
        let x = WIDTH - MARGIN - legend_w + 16.0;
        let _ = writeln!(
            out,
            r#"<circle cx="{x:.1}" cy="{y:.1}" r="5" fill="{}"/>"#,
            PALETTE[k % PALETTE.len()]
        );
        let _ = writeln!(
            out,
            r#"<text x="{:.1}" y="{:.1}" font-size="12">{}</text>"#,
            x + 10.0,
            y + 4.0,
            escape(name)
        );
    }
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn escapes_markup() {
        assert_eq!(escape("a<b & \"c\""), "a&lt;b &amp; &quot;c&quot;");
    }

    #[test]
    fn bar_chart_has_one_bar_per_defined_value() {
        let svg = bar_chart(
            "nfis <k=3>",
            &[("a".into(), Some(2.0)), ("b".into(), None), ("c&d".into(), Some(1.0))],
        );
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("<rect x=").count(), 2);
        assert!(svg.contains("n/a"));
        assert!(svg.contains("c&amp;d"));
        assert!(svg.contains("nfis &lt;k=3&gt;"));
    }

    #[test]
    fn scatter_draws_every_point_and_is_stable() {
        let pts = [[0.0, 0.0], [1.0, 2.0], [-1.0, 0.5]];
        let labels: Vec<String> = ["x", "y", "x"].iter().map(|s| s.to_string()).collect();
        let a = scatter("t", &pts, &labels);
        assert_eq!(a.matches("r=\"2\"").count(), 3);
        assert_eq!(a.matches("r=\"5\"").count(), 2);
        assert_eq!(a, scatter("t", &pts, &labels));
        // degenerate extent still yields finite coordinates
        let one = scatter("t", &[[3.0, 3.0]], &labels[..1]);
        assert!(!one.contains("NaN"));
    }
}
