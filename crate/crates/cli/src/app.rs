// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line surface of the `llens` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use llens::langmeter::{build_all_boolq_sets, default_answer_words, BoolqTokenTable};
use llens::tasks::{parse_boolq_jsonl, parse_word_tsv, LanguageTable, TaskKind};
use llens::{
    load_model, save_model, LangMeterError, ModelBundle, ModelConfig, ModelError, ModelWeights,
    Scalar, TaskError, TokenizerError, Vocabulary, DEFAULT_DISTANCE_CAP,
};
use log::info;
use serde::Serialize;
use thiserror::Error;

use crate::curve::{emit_rows_csv, CurveRow};
use crate::heatmap::{build_heatmap, render_heatmap_svg};
use crate::manifest::{HashedFile, RunManifest};
use crate::runner::{build_task_prompts, run_boolq, run_task, RunError, RunOptions, TaskSpec};
use crate::trajectory::{build_trajectory, render_trajectory_svg, TrajectoryInput};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Run(#[from] RunError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    LangMeter(#[from] LangMeterError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl CliError {
    /// Stable machine-readable error category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Usage(_) => "usage",
            Self::Io { .. } => "io",
            Self::Run(RunError::VocabMismatch { .. }) => "vocab_mismatch",
            Self::Run(RunError::EmptyDataset(_)) => "empty_dataset",
            Self::Run(RunError::EmptyTokenSet(_) | RunError::MissingTokenSet(_)) => "answer_tokens",
            Self::Run(RunError::Model(_)) | Self::Model(_) => "model",
            Self::Run(RunError::Tokenizer(_)) | Self::Tokenizer(_) => "tokenizer",
            Self::Run(RunError::Task(_)) | Self::Task(_) => "task",
            Self::Run(RunError::LangMeter(_)) | Self::LangMeter(_) => "answer_tokens",
            Self::Run(_) => "run",
            Self::Csv(_) | Self::Json(_) => "output",
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({ "error": self.kind(), "message": self.to_string() }).to_string()
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(io_err(path))
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(io_err(path))
}

#[derive(Debug, Parser)]
#[command(
    name = "llens",
    version,
    about = "Logit-lens analysis of decoder-only transformers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Language probability, entropy and energy curves for a word task.
    Run(RunArgs),
    /// Layer-wise yes/no answer accuracy and answer-token mass.
    Boolq(BoolqArgs),
    /// Top lens token per layer and position, coloured by entropy.
    Heatmap(HeatmapArgs),
    /// 2-D embedding of latent trajectories and answer tokens.
    Mds(MdsArgs),
    /// Write a randomly initialised model file.
    ExportModel(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Precision {
    F32,
    F64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum WordTask {
    Translation,
    Repetition,
    Cloze,
}

impl From<WordTask> for TaskKind {
    fn from(t: WordTask) -> Self {
        match t {
            WordTask::Translation => TaskKind::Translation,
            WordTask::Repetition => TaskKind::Repetition,
            WordTask::Cloze => TaskKind::Cloze,
        }
    }
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub tokenizer: PathBuf,
    #[arg(long, value_enum, default_value = "f32")]
    pub precision: Precision,
    /// Worker threads (defaults to LLENS_THREADS, then the core count).
    #[arg(long)]
    pub threads: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TaskArgs {
    #[arg(long, value_enum)]
    pub task: WordTask,
    /// Word dataset (TSV: concept_id, lang, surface, cloze_sentence).
    #[arg(long)]
    pub dataset: PathBuf,
    /// Source language; translation only.
    #[arg(long)]
    pub src_lang: Option<String>,
    #[arg(long)]
    pub dst_lang: String,
    /// Languages to measure, comma separated (default: destination, source and English).
    #[arg(long, value_delimiter = ',')]
    pub languages: Vec<String>,
    #[arg(long, default_value_t = 4)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Language name and answer-label overrides (JSON).
    #[arg(long)]
    pub language_names: Option<PathBuf>,
    /// English code used by the shared-prefix filter.
    #[arg(long, default_value = "en")]
    pub english: String,
    #[arg(long)]
    pub no_filter: bool,
    /// Leave the first-byte token out of word-start sets.
    #[arg(long)]
    pub no_byte_starts: bool,
    /// Evaluate at most this many queries.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub task: TaskArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BoolqArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// JSON lines with question, passage, answer and lang.
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub lang: String,
    /// Languages whose answer-token mass is reported, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub languages: Vec<String>,
    /// Explicit yes/no token lists (JSON); derived from default answer words otherwise.
    #[arg(long)]
    pub answer_tokens: Option<PathBuf>,
    #[arg(long)]
    pub limit: Option<usize>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct HeatmapArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(
        long,
        conflicts_with = "text_file",
        required_unless_present = "text_file"
    )]
    pub text: Option<String>,
    #[arg(long)]
    pub text_file: Option<PathBuf>,
    /// Show only the last N positions.
    #[arg(long)]
    pub last: Option<usize>,
    /// Output SVG file.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct MdsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub task: TaskArgs,
    /// Distance between same-kind points (default: largest latent–token distance).
    #[arg(long)]
    pub pad: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_DISTANCE_CAP)]
    pub cap: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 4)]
    pub layers: usize,
    /// Vocabulary size; taken from --tokenizer when given.
    #[arg(long, required_unless_present = "tokenizer")]
    pub vocab: Option<usize>,
    #[arg(long)]
    pub tokenizer: Option<PathBuf>,
    #[arg(long, default_value_t = 4)]
    pub heads: usize,
    #[arg(long, default_value_t = 2)]
    pub kv_heads: usize,
    /// MLP width (default: 4 × dim).
    #[arg(long)]
    pub hidden: Option<usize>,
    #[arg(long, default_value_t = 512)]
    pub max_seq: usize,
    #[arg(long, default_value_t = 10000.0)]
    pub rope_theta: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub norm_eps: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn execute(cli: Cli) -> Result<(), CliError> {
    let precision = match &cli.command {
        Command::Run(a) => a.model.precision,
        Command::Boolq(a) => a.model.precision,
        Command::Heatmap(a) => a.model.precision,
        Command::Mds(a) => a.model.precision,
        Command::ExportModel(a) => return export_model(a),
    };
    match precision {
        Precision::F32 => dispatch::<f32>(&cli.command),
        Precision::F64 => dispatch::<f64>(&cli.command),
    }
}

fn dispatch<T: Scalar>(command: &Command) -> Result<(), CliError> {
    match command {
        Command::Run(a) => cmd_run::<T>(a),
        Command::Boolq(a) => cmd_boolq::<T>(a),
        Command::Heatmap(a) => cmd_heatmap::<T>(a),
        Command::Mds(a) => cmd_mds::<T>(a),
        Command::ExportModel(a) => export_model(a),
    }
}

fn load<T: Scalar>(args: &ModelArgs) -> Result<(ModelBundle<T>, Vocabulary), CliError> {
    let model = load_model::<T>(&args.model)?;
    let vocab = Vocabulary::load(&args.tokenizer)?;
    info!(
        "loaded {} layers, d={}, vocabulary {}",
        model.config().n_layers,
        model.config().dim,
        vocab.len()
    );
    Ok((model, vocab))
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(io_err(dir))
}

fn hashed(path: &Path) -> Result<HashedFile, CliError> {
    HashedFile::new(path).map_err(io_err(path))
}

fn manifest(
    command: &str,
    model: &ModelArgs,
    task: Option<String>,
    languages: &[String],
    seed: Option<u64>,
    shots: Option<usize>,
    datasets: &[&Path],
) -> Result<RunManifest, CliError> {
    Ok(RunManifest {
        toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
        command: command.to_string(),
        model: hashed(&model.model)?,
        tokenizer: hashed(&model.tokenizer)?,
        task,
        languages: languages.to_vec(),
        seed,
        shots,
        datasets: datasets
            .iter()
            .map(|p| hashed(p))
            .collect::<Result<_, _>>()?,
        precision: match model.precision {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
        .to_string(),
    })
}

fn write_manifest(m: &RunManifest, dir: &Path) -> Result<(), CliError> {
    let path = dir.join("manifest.json");
    m.write(&path).map_err(io_err(&path))
}

fn write_csv(rows: &[CurveRow], path: &Path) -> Result<(), CliError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    emit_rows_csv(rows, file)?;
    Ok(())
}

fn write_jsonl<S: Serialize>(items: &[S], path: &Path) -> Result<(), CliError> {
    let mut out = String::new();
    for item in items {
        out += &serde_json::to_string(item)?;
        out.push('\n');
    }
    write_file(path, out)
}

fn tracked_languages(task: &TaskArgs) -> Vec<String> {
    if !task.languages.is_empty() {
        return task.languages.clone();
    }
    let mut langs = vec![task.dst_lang.clone()];
    for l in task.src_lang.iter().chain(std::iter::once(&task.english)) {
        if !langs.contains(l) {
            langs.push(l.clone());
        }
    }
    langs
}

fn task_setup(task: &TaskArgs, threads: Option<usize>) -> Result<(TaskSpec, RunOptions), CliError> {
    let kind = TaskKind::from(task.task);
    if kind == TaskKind::Translation && task.src_lang.is_none() {
        return Err(CliError::Usage(
            "--task translation needs --src-lang".into(),
        ));
    }
    let language_table = match &task.language_names {
        Some(p) => LanguageTable::with_overrides(&read_text(p)?)?,
        None => LanguageTable::default(),
    };
    let spec = TaskSpec {
        kind,
        src_lang: if kind == TaskKind::Translation {
            task.src_lang.clone()
        } else {
            None
        },
        dst_lang: task.dst_lang.clone(),
        shots: task.shots,
    };
    let opts = RunOptions {
        threads,
        include_bytes: !task.no_byte_starts,
        english: (!task.no_filter).then(|| task.english.clone()),
        language_table,
        limit: task.limit,
    }
    .with_env_threads();
    Ok((spec, opts))
}

fn cmd_run<T: Scalar>(a: &RunArgs) -> Result<(), CliError> {
    let (model, vocab) = load::<T>(&a.model)?;
    let records = parse_word_tsv(&read_text(&a.task.dataset)?)?;
    let (spec, opts) = task_setup(&a.task, a.model.threads)?;
    let tracked = tracked_languages(&a.task);
    let run = run_task(&model, &vocab, &spec, records, &tracked, a.task.seed, &opts)?;
    ensure_dir(&a.out)?;
    write_csv(&run.curve.rows(), &a.out.join("curves.csv"))?;
    write_jsonl(&run.records, &a.out.join("prompts.jsonl"))?;
    let summary = serde_json::json!({
        "filter": run.filter,
        "missing_form": run.missing_form,
        "n_samples": run.curve.n_samples,
    });
    write_file(
        &a.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    let m = manifest(
        "run",
        &a.model,
        Some(spec.kind.to_string()),
        &tracked,
        Some(a.task.seed),
        Some(spec.shots),
        &[&a.task.dataset],
    )?;
    write_manifest(&m, &a.out)?;
    info!(
        "{} prompts written to {}",
        run.records.len(),
        a.out.display()
    );
    Ok(())
}

fn cmd_boolq<T: Scalar>(a: &BoolqArgs) -> Result<(), CliError> {
    let (model, vocab) = load::<T>(&a.model)?;
    let items = parse_boolq_jsonl(&read_text(&a.dataset)?)?;
    let sets = match &a.answer_tokens {
        Some(p) => BoolqTokenTable::from_json_str(&read_text(p)?)?.resolve(&vocab)?,
        None => {
            let words: BTreeMap<String, _> = default_answer_words()
                .into_iter()
                .map(|(l, w)| (l.to_string(), w))
                .collect();
            build_all_boolq_sets(&vocab, &words)?
        }
    };
    let opts = RunOptions {
        threads: a.model.threads,
        limit: a.limit,
        ..RunOptions::default()
    }
    .with_env_threads();
    let run = run_boolq(&model, &vocab, &items, &a.lang, &sets, &a.languages, &opts)?;
    ensure_dir(&a.out)?;
    write_csv(&run.curve.rows(), &a.out.join("boolq.csv"))?;
    write_jsonl(&run.records, &a.out.join("prompts.jsonl"))?;
    let summary = serde_json::json!({
        "language": run.curve.language,
        "n_samples": run.curve.n_samples,
        "final_accuracy": run.curve.final_accuracy,
    });
    write_file(
        &a.out.join("summary.json"),
        serde_json::to_string_pretty(&summary)? + "\n",
    )?;
    let mut datasets: Vec<&Path> = vec![&a.dataset];
    if let Some(p) = &a.answer_tokens {
        datasets.push(p);
    }
    let m = manifest(
        "boolq",
        &a.model,
        Some("boolq".into()),
        &run.curve.languages,
        None,
        None,
        &datasets,
    )?;
    write_manifest(&m, &a.out)?;
    info!("final-layer accuracy {:.4}", run.curve.final_accuracy);
    Ok(())
}

fn cmd_heatmap<T: Scalar>(a: &HeatmapArgs) -> Result<(), CliError> {
    let (model, vocab) = load::<T>(&a.model)?;
    let text = match (&a.text, &a.text_file) {
        (Some(t), _) => t.clone(),
        (None, Some(p)) => read_text(p)?,
        (None, None) => return Err(CliError::Usage("give --text or --text-file".into())),
    };
    let grid = build_heatmap(&model, &vocab, &text, a.last)?;
    write_file(&a.out, render_heatmap_svg(&grid))
}

fn cmd_mds<T: Scalar>(a: &MdsArgs) -> Result<(), CliError> {
    let (model, vocab) = load::<T>(&a.model)?;
    let records = parse_word_tsv(&read_text(&a.task.dataset)?)?;
    let (spec, opts) = task_setup(&a.task, a.model.threads)?;
    let tracked = tracked_languages(&a.task);
    let (prompts, _, _) = build_task_prompts(&spec, records, &vocab, &tracked, a.task.seed, &opts)?;
    let inputs = prompts
        .iter()
        .map(|p| TrajectoryInput::from_prompt(p, &vocab, &tracked))
        .collect::<Result<Vec<_>, _>>()?;
    let emb = build_trajectory(&model, &vocab, &inputs, a.cap, a.pad)?;
    ensure_dir(&a.out)?;
    write_file(
        &a.out.join("trajectory.json"),
        serde_json::to_string_pretty(&emb)? + "\n",
    )?;
    write_file(&a.out.join("trajectory.svg"), render_trajectory_svg(&emb))?;
    let m = manifest(
        "mds",
        &a.model,
        Some(spec.kind.to_string()),
        &tracked,
        Some(a.task.seed),
        Some(spec.shots),
        &[&a.task.dataset],
    )?;
    write_manifest(&m, &a.out)
}

fn export_model(a: &ExportArgs) -> Result<(), CliError> {
    let vocab_size = match (&a.tokenizer, a.vocab) {
        (Some(p), _) => Vocabulary::load(p)?.len(),
        (None, Some(v)) => v,
        (None, None) => return Err(CliError::Usage("give --vocab or --tokenizer".into())),
    };
    let config = ModelConfig {
        dim: a.dim,
        n_layers: a.layers,
        vocab_size,
        n_heads: a.heads,
        n_kv_heads: a.kv_heads,
        ffn_hidden: a.hidden.unwrap_or(4 * a.dim),
        rope_theta: a.rope_theta,
        max_seq: a.max_seq,
        norm_eps: a.norm_eps,
    };
    config.validate()?;
    let weights = ModelWeights::<f32>::random(&config, a.seed);
    let model = ModelBundle::new(config, weights)?;
    save_model(&model, &a.out)?;
    info!("wrote {}", a.out.display());
    Ok(())
}
