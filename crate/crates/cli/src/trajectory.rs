// SPDX-License-Identifier: MIT OR Apache-2.0

//! Latent trajectories embedded jointly with answer tokens by classical MDS
//! over lens distances.

use std::collections::BTreeMap;

use llens::geometry::{build_lens_distance_matrix, classical_mds, PointKind, TrajectoryEmbedding};
use llens::lens::{lens_distance, logit_lens};
use llens::tasks::PromptInstance;
use llens::{Scalar, Vocabulary};

use crate::runner::RunError;
use crate::svg::{escape, rainbow};

const SIZE: f64 = 640.0;
const MARGIN: f64 = 48.0;

/// One prompt and the tokens it should be compared against.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryInput {
    pub text: String,
    pub tokens: Vec<u32>,
}

impl TrajectoryInput {
    /// Uses the first token of each tracked language's answer word.
    pub fn from_prompt(
        prompt: &PromptInstance,
        vocab: &Vocabulary,
        languages: &[String],
    ) -> Result<Self, RunError> {
        let mut tokens = Vec::new();
        for l in languages {
            if let Some(word) = prompt.correct_word.get(l) {
                if let Some(&t) = vocab.encode(word)?.ids().first() {
                    if !tokens.contains(&t) {
                        tokens.push(t);
                    }
                }
            }
        }
        Ok(Self {
            text: prompt.text.clone(),
            tokens,
        })
    }
}

/// Final-position latents of layers `1..=m` for every prompt, plus the union
/// of their tokens. Latent–token distances are `-ln P(token)`; same-kind
/// pairs get `pad` (largest latent–token distance when `None`).
pub fn build_trajectory<T: Scalar>(
    model: &llens::ModelBundle<T>,
    vocab: &Vocabulary,
    inputs: &[TrajectoryInput],
    cap: f64,
    pad: Option<f64>,
) -> Result<TrajectoryEmbedding, RunError> {
    let mut tokens: Vec<u32> = Vec::new();
    for t in inputs.iter().flat_map(|i| &i.tokens) {
        if !tokens.contains(t) {
            tokens.push(*t);
        }
    }
    let mut distances = Vec::new();
    let mut latent_labels = Vec::new();
    let mut paths = Vec::new();
    for (p, input) in inputs.iter().enumerate() {
        let trace = llens::forward(model, vocab.encode(&input.text)?.ids())?;
        let pos = trace.final_position();
        let mut path = Vec::new();
        for layer in 1..=trace.n_layers() {
            let dist = logit_lens(model, &trace, layer, pos)?;
            distances.push(
                tokens
                    .iter()
                    .map(|&t| lens_distance(&dist, t, cap))
                    .collect::<Result<Vec<f64>, _>>()?,
            );
            path.push(latent_labels.len());
            latent_labels.push(format!("p{p}/L{layer}"));
        }
        paths.push(path);
    }
    let token_labels = tokens.iter().map(|&t| vocab.display(t)).collect();
    let matrix = build_lens_distance_matrix(&distances, latent_labels, token_labels, pad)?;
    let mds = classical_mds(&matrix, 2)?;
    Ok(TrajectoryEmbedding::new(
        &mds,
        matrix.labels().to_vec(),
        paths,
    )?)
}

/// Latents as circles, tokens as `×` marks with labels, and each path as
/// line segments whose hue runs red → violet with depth.
pub fn render_trajectory_svg(emb: &TrajectoryEmbedding) -> String {
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for c in &emb.coords {
        for a in 0..2 {
            lo[a] = lo[a].min(c[a]);
            hi[a] = hi[a].max(c[a]);
        }
    }
    let span = (hi[0] - lo[0]).max(hi[1] - lo[1]);
    let scale = if span > 0.0 {
        (SIZE - 2.0 * MARGIN) / span
    } else {
        1.0
    };
    let at = |i: usize| {
        let c = emb.coords[i];
        let x = MARGIN + (c[0] - lo[0]) * scale;
        let y = SIZE - MARGIN - (c[1] - lo[1]) * scale;
        (x, y)
    };
    // depth of each latent along its path
    let mut depth: BTreeMap<usize, f64> = BTreeMap::new();
    for path in &emb.paths {
        let n = path.len().saturating_sub(1).max(1) as f64;
        for (k, &i) in path.iter().enumerate() {
            depth.insert(i, k as f64 / n);
        }
    }

    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{SIZE}\" height=\"{SIZE}\" \
         viewBox=\"0 0 {SIZE} {SIZE}\" font-family=\"sans-serif\" font-size=\"12\">\n"
    );
    let mut defs = String::new();
    let mut lines = String::new();
    for (p, path) in emb.paths.iter().enumerate() {
        let n = path.len().saturating_sub(1).max(1) as f64;
        for (k, w) in path.windows(2).enumerate() {
            let ((x1, y1), (x2, y2)) = (at(w[0]), at(w[1]));
            let id = format!("seg{p}_{k}");
            defs += &format!(
                "<linearGradient id=\"{id}\" gradientUnits=\"userSpaceOnUse\" \
                 x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\">\
                 <stop offset=\"0\" stop-color=\"{}\"/><stop offset=\"1\" stop-color=\"{}\"/>\
                 </linearGradient>\n",
                rainbow(k as f64 / n),
                rainbow((k + 1) as f64 / n)
            );
            lines += &format!(
                "<line x1=\"{x1:.2}\" y1=\"{y1:.2}\" x2=\"{x2:.2}\" y2=\"{y2:.2}\" \
                 stroke=\"url(#{id})\" stroke-width=\"1.5\"/>\n"
            );
        }
    }
    if !defs.is_empty() {
        s += &format!("<defs>\n{defs}</defs>\n");
    }
    s += &lines;
    for (i, label) in emb.labels.iter().enumerate() {
        let (x, y) = at(i);
        match label.kind {
            PointKind::Latent => {
                let fill = depth
                    .get(&i)
                    .map_or_else(|| "gray".to_string(), |&t| rainbow(t));
                s += &format!(
                    "<circle cx=\"{x:.2}\" cy=\"{y:.2}\" r=\"3.5\" fill=\"{fill}\">\
                     <title>{}</title></circle>\n",
                    escape(&label.id)
                );
            }
            PointKind::Token => {
                s += &format!(
                    "<path d=\"M{:.2} {:.2}L{:.2} {:.2}M{:.2} {:.2}L{:.2} {:.2}\" \
                     stroke=\"black\" stroke-width=\"2\"/>\n",
                    x - 5.0,
                    y - 5.0,
                    x + 5.0,
                    y + 5.0,
                    x - 5.0,
                    y + 5.0,
                    x + 5.0,
                    y - 5.0
                );
                s += &format!(
                    "<text x=\"{:.2}\" y=\"{:.2}\">{}</text>\n",
                    x + 7.0,
                    y - 7.0,
                    escape(&label.id)
                );
            }
        }
    }
    s += "</svg>\n";
    s
}
