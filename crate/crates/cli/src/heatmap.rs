//! SVG heatmaps of sweep results: one panel per metric, model-A layers
//! down, model-B layers across.
//!
//! Colors come from a fixed 8-stop viridis-like ramp over [0, 1], linearly
//! interpolated in RGB, so identical sweeps render identical bytes.

use std::collections::BTreeSet;
use std::fmt::Write;

use saesim_core::io::ReportRow;
use saesim_core::Metric;

/// Ramp stops, evenly spaced from 0 to 1.
pub const RAMP: [(u8, u8, u8); 8] = [
    (0x44, 0x01, 0x54),
    (0x46, 0x32, 0x7e),
    (0x36, 0x5c, 0x8d),
    (0x27, 0x7f, 0x8e),
    (0x1f, 0xa1, 0x87),
    (0x4a, 0xc1, 0x6d),
    (0xa0, 0xda, 0x39),
    (0xfd, 0xe7, 0x25),
];

/// Hex color for a score; values outside [0, 1] clamp.
pub fn ramp_color(x: f64) -> String {
    let x = if x.is_finite() {
        x.clamp(0.0, 1.0)
    } else {
        0.0
    };
    let pos = x * (RAMP.len() - 1) as f64;
    let i = (pos.floor() as usize).min(RAMP.len() - 2);
    let t = pos - i as f64;
    let (a, b) = (RAMP[i], RAMP[i + 1]);
    let mix = |u: u8, v: u8| (u as f64 + (v as f64 - u as f64) * t).round() as u8;
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(a.0, b.0),
        mix(a.1, b.1),
        mix(a.2, b.2)
    )
}

const CELL: usize = 56;
const MARGIN: usize = 48;
const GAP: usize = 32;

pub fn render(rows: &[ReportRow]) -> String {
    let layers_a: BTreeSet<u32> = rows.iter().filter_map(|r| r.layer_a).collect();
    let layers_b: BTreeSet<u32> = rows.iter().filter_map(|r| r.layer_b).collect();
    let metrics: BTreeSet<Metric> = rows.iter().map(|r| r.report.metric).collect();
    let (la, lb): (Vec<u32>, Vec<u32>) = (
        layers_a.into_iter().collect(),
        layers_b.into_iter().collect(),
    );
    let panel_w = MARGIN + lb.len() * CELL;
    let width = metrics.len() * panel_w + metrics.len().saturating_sub(1) * GAP + 8;
    let height = MARGIN + la.len() * CELL + 24;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" font-family=\"monospace\" font-size=\"11\">"
    );
    for (m_idx, metric) in metrics.iter().enumerate() {
        let x0 = m_idx * (panel_w + GAP);
        let _ = writeln!(
            svg,
            "<text x=\"{}\" y=\"14\">{}</text>",
            x0 + MARGIN,
            metric
        );
        for (j, b) in lb.iter().enumerate() {
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">B{b}</text>",
                x0 + MARGIN + j * CELL + CELL / 2,
                MARGIN - 6
            );
        }
        for (i, a) in la.iter().enumerate() {
            let _ = writeln!(
                svg,
                "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">A{a}</text>",
                x0 + MARGIN - 6,
                MARGIN + i * CELL + CELL / 2 + 4
            );
            for (j, b) in lb.iter().enumerate() {
                let cell = rows.iter().find(|r| {
                    r.report.metric == *metric && r.layer_a == Some(*a) && r.layer_b == Some(*b)
                });
                let (x, y) = (x0 + MARGIN + j * CELL, MARGIN + i * CELL);
                match cell {
                    Some(r) => {
                        let s = r.report.paired_score;
                        let fg = if s > 0.6 { "#000000" } else { "#ffffff" };
                        let _ = writeln!(
                            svg,
                            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"{}\"/>",
                            ramp_color(s)
                        );
                        let _ = writeln!(
                            svg,
                            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{fg}\">{s:.2}</text>",
                            x + CELL / 2,
                            y + CELL / 2 - 2
                        );
                        let _ = writeln!(
                            svg,
                            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"{fg}\" font-size=\"9\">p={:.2}</text>",
                            x + CELL / 2,
                            y + CELL / 2 + 11,
                            r.report.p_value
                        );
                    }
                    None => {
                        let _ = writeln!(
                            svg,
                            "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL}\" height=\"{CELL}\" fill=\"#dddddd\"/>"
                        );
                    }
                }
            }
        }
    }
    svg.push_str("</svg>\n");
    svg
}
