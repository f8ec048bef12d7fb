// SPDX-License-Identifier: MIT OR Apache-2.0

//! Per-layer aggregate curves and their CSV form.
//!
//! CSV header: `layer,metric,language,mean,ci_low,ci_high,n`. Floats are
//! written with Rust's shortest round-trip formatting, so a reload is exact.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::stats::Summary;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerStats {
    pub layer: usize,
    /// Mean language probability per tracked language.
    pub prob: BTreeMap<String, Summary>,
    pub entropy: Summary,
    pub energy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerCurve {
    pub languages: Vec<String>,
    pub n_samples: usize,
    pub layers: Vec<LayerStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub layer: usize,
    pub metric: String,
    pub language: String,
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

impl CurveRow {
    pub fn new(layer: usize, metric: &str, language: &str, s: &Summary) -> Self {
        Self {
            layer,
            metric: metric.to_string(),
            language: language.to_string(),
            mean: s.mean,
            ci_low: s.ci_low(),
            ci_high: s.ci_high(),
            n: s.n,
        }
    }
}

impl LayerCurve {
    /// One `prob` row per language, then `entropy` and `energy`, for each layer.
    pub fn rows(&self) -> Vec<CurveRow> {
        let mut rows = Vec::new();
        for l in &self.layers {
            for (lang, s) in &l.prob {
                rows.push(CurveRow::new(l.layer, "prob", lang, s));
            }
            rows.push(CurveRow::new(l.layer, "entropy", "", &l.entropy));
            rows.push(CurveRow::new(l.layer, "energy", "", &l.energy));
        }
        rows
    }

    pub fn prob(&self, layer: usize, language: &str) -> Option<f64> {
        self.layers
            .iter()
            .find(|l| l.layer == layer)
            .and_then(|l| l.prob.get(language))
            .map(|s| s.mean)
    }
}

pub fn emit_rows_csv<W: Write>(rows: &[CurveRow], out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    w.write_record([
        "layer", "metric", "language", "mean", "ci_low", "ci_high", "n",
    ])?;
    for r in rows {
        w.write_record([
            r.layer.to_string(),
            r.metric.clone(),
            r.language.clone(),
            r.mean.to_string(),
            r.ci_low.to_string(),
            r.ci_high.to_string(),
            r.n.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(input: R) -> csv::Result<Vec<CurveRow>> {
    csv::Reader::from_reader(input).deserialize().collect()
}
