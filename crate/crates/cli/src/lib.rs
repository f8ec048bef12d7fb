// SPDX-License-Identifier: MIT OR Apache-2.0

//! Experiment runner behind the `llens` binary.
//!
//! Orchestrates model, tokenizer, prompt builders and measurements over a
//! dataset, aggregates per-layer statistics, and writes CSV, JSON lines and
//! SVG figures.

pub mod app;
pub mod curve;
pub mod heatmap;
pub mod manifest;
pub mod runner;
pub mod stats;
mod svg;
pub mod trajectory;

pub use curve::{emit_rows_csv, read_rows_csv, CurveRow, LayerCurve, LayerStats};
pub use heatmap::{build_heatmap, render_heatmap_svg, HeatCell, HeatmapGrid};
pub use manifest::RunManifest;
pub use runner::{
    run_boolq, run_task, BoolqCurve, BoolqRun, PromptRecord, RunError, RunOptions, TaskRun,
    TaskSpec,
};
pub use stats::{summarize, Summary, Z_95};
pub use trajectory::{build_trajectory, render_trajectory_svg, TrajectoryInput};
