// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layer × position grid of top lens tokens, coloured by entropy.

use llens::lens::{entropy_bits, logit_lens};
use llens::{Scalar, Vocabulary};
use serde::{Deserialize, Serialize};

use crate::runner::RunError;
use crate::svg::escape;

const CELL_W: usize = 72;
const CELL_H: usize = 22;
const LEFT: usize = 44;
const TOP: usize = 10;
const BOTTOM: usize = 34;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatCell {
    pub top_token: String,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapGrid {
    /// Input token shown under each column.
    pub input_tokens: Vec<String>,
    /// `cells[layer][column]`, layers `0..=m`.
    pub cells: Vec<Vec<HeatCell>>,
    /// Colour scale maximum, `log2` of the vocabulary size.
    pub max_entropy: f64,
}

/// Lens grid over the last `last` positions of `text` (all when `None`).
pub fn build_heatmap<T: Scalar>(
    model: &llens::ModelBundle<T>,
    vocab: &Vocabulary,
    text: &str,
    last: Option<usize>,
) -> Result<HeatmapGrid, RunError> {
    let ids = vocab.encode(text)?;
    let trace = llens::forward(model, ids.ids())?;
    let n = trace.len();
    let start = last.map_or(0, |k| n.saturating_sub(k));
    let cells = (0..=trace.n_layers())
        .map(|layer| {
            (start..n)
                .map(|pos| {
                    let dist = logit_lens(model, &trace, layer, pos)?;
                    Ok(HeatCell {
                        top_token: vocab.display(dist.argmax()),
                        entropy: entropy_bits(&dist),
                    })
                })
                .collect::<Result<Vec<_>, RunError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(HeatmapGrid {
        input_tokens: ids.ids()[start..]
            .iter()
            .map(|&t| vocab.display(t))
            .collect(),
        cells,
        max_entropy: (vocab.len() as f64).log2(),
    })
}

/// Linear blue → red over `[0, max]`.
pub fn entropy_colour(entropy: f64, max: f64) -> (u8, u8, u8) {
    let t = if max > 0.0 {
        (entropy / max).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let r = (255.0 * t).round() as u8;
    (r, 0, 255 - r)
}

/// One `<rect>` per cell; the top layer is drawn at the top.
pub fn render_heatmap_svg(grid: &HeatmapGrid) -> String {
    let rows = grid.cells.len();
    let cols = grid.input_tokens.len();
    let width = LEFT + cols * CELL_W + 8;
    let height = TOP + rows * CELL_H + BOTTOM;
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" \
         viewBox=\"0 0 {width} {height}\" font-family=\"monospace\" font-size=\"11\">\n"
    );
    for (layer, row) in grid.cells.iter().enumerate() {
        let y = TOP + (rows - 1 - layer) * CELL_H;
        s += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"end\">{layer}</text>\n",
            LEFT - 6,
            y + CELL_H / 2 + 4
        );
        for (col, cell) in row.iter().enumerate() {
            let x = LEFT + col * CELL_W;
            let (r, g, b) = entropy_colour(cell.entropy, grid.max_entropy);
            s += &format!(
                "<rect x=\"{x}\" y=\"{y}\" width=\"{CELL_W}\" height=\"{CELL_H}\" \
                 fill=\"rgb({r},{g},{b})\"><title>{:.3} bits</title></rect>\n",
                cell.entropy
            );
            s += &format!(
                "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\" fill=\"white\">{}</text>\n",
                x + CELL_W / 2,
                y + CELL_H / 2 + 4,
                escape(&cell.top_token)
            );
        }
    }
    let axis_y = TOP + rows * CELL_H;
    for (col, tok) in grid.input_tokens.iter().enumerate() {
        s += &format!(
            "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">{}</text>\n",
            LEFT + col * CELL_W + CELL_W / 2,
            axis_y + 16,
            escape(tok)
        );
    }
    s += &format!(
        "<text x=\"4\" y=\"{}\">layer</text>\n<text x=\"{}\" y=\"{}\">input</text>\n</svg>\n",
        TOP + 8,
        LEFT,
        axis_y + 30
    );
    s
}
