//! Static SVG line chart of a prequential run: memory over time, shaded
//! where the ground truth is Aging, with a vertical mark at every retrain.

use std::fmt::Write;

use crate::harness::{RetrainAction, RetrainEvent};

const WIDTH: f64 = 1200.0;
const HEIGHT: f64 = 400.0;
const MARGIN: f64 = 40.0;
/// Longer series are thinned to roughly this many polyline points.
const MAX_POINTS: usize = 4000;

/// `memory` and `labels` are indexed by step; event steps index into them.
pub fn render_svg(title: &str, memory: &[f64], labels: &[u8], events: &[RetrainEvent]) -> String {
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">"#
    );
    let _ = writeln!(svg, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<text x="{MARGIN}" y="{}" font-family="sans-serif" font-size="14">{}</text>"#,
        MARGIN / 2.0 + 5.0,
        escape(title)
    );
    if memory.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }

    let n = memory.len();
    let (lo, hi) = memory
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let plot_w = WIDTH - 2.0 * MARGIN;
    let plot_h = HEIGHT - 2.0 * MARGIN;
    let x = |i: usize| MARGIN + plot_w * i as f64 / (n.max(2) - 1) as f64;
    let y = |v: f64| MARGIN + plot_h * (1.0 - (v - lo) / span);

    // Aging bands
    let mut start = None;
    for i in 0..=labels.len() {
        let aging = labels.get(i) == Some(&1);
        match (aging, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                let _ = writeln!(
                    svg,
                    r##"<rect x="{:.2}" y="{MARGIN}" width="{:.2}" height="{plot_h}" fill="#f4c7c3"/>"##,
                    x(s),
                    (x(i.min(n - 1)) - x(s)).max(0.5)
                );
                start = None;
            }
            _ => {}
        }
    }

    let stride = n.div_ceil(MAX_POINTS).max(1);
    let points: Vec<String> = (0..n)
        .step_by(stride)
        .map(|i| format!("{:.2},{:.2}", x(i), y(memory[i])))
        .collect();
    let _ = writeln!(
        svg,
        r##"<polyline fill="none" stroke="#1f4e9c" stroke-width="1" points="{}"/>"##,
        points.join(" ")
    );

    for e in events.iter().filter(|e| e.step < n) {
        let (colour, dash) = match e.action {
            RetrainAction::Retrained => ("#2e7d32", ""),
            RetrainAction::SkippedSingleClass => ("#9e9e9e", r#" stroke-dasharray="4 3""#),
        };
        let _ = writeln!(
            svg,
            r#"<line x1="{0:.2}" y1="{MARGIN}" x2="{0:.2}" y2="{1}" stroke="{colour}"{dash}/>"#,
            x(e.step),
            HEIGHT - MARGIN
        );
    }

    let _ = writeln!(
        svg,
        r##"<rect x="{MARGIN}" y="{MARGIN}" width="{plot_w}" height="{plot_h}" fill="none" stroke="#444"/>"##
    );
    for (v, anchor_y) in [(hi, MARGIN + 4.0), (lo, HEIGHT - MARGIN)] {
        let _ = writeln!(
            svg,
            r#"<text x="2" y="{anchor_y}" font-family="sans-serif" font-size="10">{v:.0}</text>"#
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::Phase;

    #[test]
    fn chart_has_bands_line_and_marks() {
        let memory: Vec<f64> = (0..100).map(|i| (i % 20) as f64).collect();
        let labels: Vec<u8> = (0..100).map(|i| u8::from(i % 20 >= 10)).collect();
        let events = vec![
            RetrainEvent {
                step: 30,
                trigger: Phase::Drift,
                class_counts: [5, 5],
                action: RetrainAction::Retrained,
            },
            RetrainEvent {
                step: 60,
                trigger: Phase::Drift,
                class_counts: [5, 0],
                action: RetrainAction::SkippedSingleClass,
            },
        ];
        let svg = render_svg("a <b>", &memory, &labels, &events);
        assert!(svg.starts_with("<svg"));
        assert!(svg.trim_end().ends_with("</svg>"));
        assert_eq!(svg.matches("#f4c7c3").count(), 5);
        assert_eq!(svg.matches("<polyline").count(), 1);
        assert_eq!(svg.matches("<line").count(), 2);
        assert!(svg.contains("a &lt;b&gt;"));
    }

    #[test]
    fn empty_series_is_a_valid_document() {
        let svg = render_svg("empty", &[], &[], &[]);
        assert!(svg.contains("</svg>"));
        assert!(!svg.contains("<polyline"));
    }
}
