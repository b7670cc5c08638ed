// SPDX-License-Identifier: MIT OR Apache-2.0

//! Significant attention edges and their layered SVG rendering.
//!
//! For each layer the mean `μ` and population standard deviation `σ` of
//! all `N²` entries are computed; entry `[i, j]` becomes an edge from token
//! `j` to token `i` when it exceeds `μ + k·σ`.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const DEFAULT_K: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FlowEdge {
    pub layer: usize,
    /// Attended token (column).
    pub source: usize,
    /// Attending token (row).
    pub target: usize,
    pub weight: f64,
    /// `(weight − μ) / σ`
    pub z: f64,
}

/// Population mean and standard deviation of every entry. A constant layer
/// gets exactly its value and zero, free of summation rounding.
pub fn layer_stats(layer: &Tensor) -> (f64, f64) {
    let Some(&first) = layer.data().first() else {
        return (0.0, 0.0);
    };
    if layer.data().iter().all(|&v| v == first) {
        return (first, 0.0);
    }
    let n = layer.len() as f64;
    let mean = layer.data().iter().sum::<f64>() / n;
    let var = layer.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Edges of every layer, ordered by `(layer, target, source)`.
pub fn extract_flow(layers: &[Tensor], k: f64) -> Result<Vec<FlowEdge>> {
    let n = layers.first().map_or(0, Tensor::rows);
    for (l, m) in layers.iter().enumerate() {
        if m.shape() != [n, n] {
            return Err(Error::InvalidShape {
                op: "extract_flow",
                shape: m.shape().to_vec(),
                reason: if l == 0 {
                    "attention layer is not square"
                } else {
                    "attention layers differ in size or are not square"
                },
            });
        }
    }
    let per_layer: Vec<Vec<FlowEdge>> = layers
        .par_iter()
        .enumerate()
        .map(|(layer, m)| {
            let (mean, sd) = layer_stats(m);
            let threshold = mean + k * sd;
            let mut edges = Vec::new();
            for target in 0..n {
                for source in 0..n {
                    let weight = m.get(target, source);
                    if weight > threshold {
                        edges.push(FlowEdge {
                            layer,
                            source,
                            target,
                            weight,
                            z: (weight - mean) / sd,
                        });
                    }
                }
            }
            edges
        })
        .collect();
    Ok(per_layer.into_iter().flatten().collect())
}

/// Fixed layout constants, in SVG user units.
pub const COLUMN_SPACING: f64 = 120.0;
pub const ROW_SPACING: f64 = 40.0;
const MARGIN_X: f64 = 60.0;
const MARGIN_Y: f64 = 30.0;
pub const MIN_STROKE: f64 = 0.5;
pub const MAX_STROKE: f64 = 4.0;

pub const PALETTE: [&str; 16] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
    "#393b79", "#637939", "#8c6d31", "#843c39", "#7b4173", "#3182bd",
];

fn column_x(token: usize) -> f64 {
    MARGIN_X + token as f64 * COLUMN_SPACING
}

/// Row of labels `level` counted from the bottom; level 0 is the input.
fn row_y(level: usize, layers: usize) -> f64 {
    MARGIN_Y + (layers - level) as f64 * ROW_SPACING
}

fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        match c {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

/// Stroke width per edge: affine over each layer's weight range; a layer
/// whose edges all share one weight draws them at full width.
pub fn stroke_widths(edges: &[FlowEdge]) -> Vec<f64> {
    let mut ranges: std::collections::BTreeMap<usize, (f64, f64)> = std::collections::BTreeMap::new();
    for e in edges {
        let r = ranges.entry(e.layer).or_insert((e.weight, e.weight));
        r.0 = r.0.min(e.weight);
        r.1 = r.1.max(e.weight);
    }
    edges
        .iter()
        .map(|e| {
            let (lo, hi) = ranges[&e.layer];
            if hi > lo {
                MIN_STROKE + (MAX_STROKE - MIN_STROKE) * (e.weight - lo) / (hi - lo)
            } else {
                MAX_STROKE
            }
        })
        .collect()
}

/// Token labels repeated once per level, bottom to top, with each layer's
/// edges drawn between consecutive levels. Output bytes depend only on the
/// arguments.
pub fn render_svg(edges: &[FlowEdge], tokens: &[String], layers: usize) -> Result<String> {
    if let Some(e) = edges
        .iter()
        .find(|e| e.layer >= layers || e.source >= tokens.len() || e.target >= tokens.len())
    {
        return Err(Error::Invalid(format!(
            "edge {e:?} does not fit {layers} layers over {} tokens",
            tokens.len()
        )));
    }
    let width = 2.0 * MARGIN_X + tokens.len().saturating_sub(1) as f64 * COLUMN_SPACING;
    let height = 2.0 * MARGIN_Y + layers as f64 * ROW_SPACING;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.2}" height="{height:.2}" viewBox="0 0 {width:.2} {height:.2}">"#
    );
    svg.push_str("<g class=\"edges\" stroke-linecap=\"round\">\n");
    for (e, w) in edges.iter().zip(stroke_widths(edges)) {
        let _ = writeln!(
            svg,
            r#"<line x1="{:.2}" y1="{:.2}" x2="{:.2}" y2="{:.2}" stroke="{}" stroke-width="{w:.2}"/>"#,
            column_x(e.source),
            row_y(e.layer, layers),
            column_x(e.target),
            row_y(e.layer + 1, layers),
            PALETTE[e.target % PALETTE.len()],
        );
    }
    svg.push_str("</g>\n<g class=\"labels\" font-family=\"sans-serif\" font-size=\"12\" text-anchor=\"middle\">\n");
    for level in 0..=layers {
        for (i, t) in tokens.iter().enumerate() {
            let _ = writeln!(
                svg,
                r#"<text x="{:.2}" y="{:.2}" dy="4">{}</text>"#,
                column_x(i),
                row_y(level, layers),
                escape(t)
            );
        }
    }
    svg.push_str("</g>\n</svg>\n");
    Ok(svg)
}
