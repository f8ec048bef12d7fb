// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch experiments: prompt construction, forward passes, lens
//! measurements and aggregation into per-layer curves.

use std::collections::BTreeMap;

use llens::langmeter::{accuracy, boolq_decide, lang_probability, Answer, LanguageTokenSet};
use llens::lens::{entropy_bits, logit_lens, token_energy, NextTokenDistribution};
use llens::tasks::{
    build_boolq_prompt, build_cloze_prompt, build_repetition_prompt, build_translation_prompt,
    filter_word_records, prompt_seed, BoolqItem, FilterReport, LanguageTable, PromptInstance,
    TaskError, TaskKind, WordRecord,
};
use llens::{
    LangMeterError, LensError, ModelBundle, ModelError, Scalar, TokenizerError, Vocabulary,
};
use log::{debug, info};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::curve::{CurveRow, LayerCurve, LayerStats};
use crate::stats::{summarize, Summary};

#[derive(Debug, Error)]
pub enum RunError {
    #[error("tokenizer has {vocab} tokens but the model expects {model}")]
    VocabMismatch { vocab: usize, model: usize },
    #[error("no usable records: {0}")]
    EmptyDataset(String),
    #[error("no languages to track")]
    NoLanguages,
    #[error("task {0} is not a word task")]
    UnsupportedTask(TaskKind),
    #[error("translation needs a source language")]
    MissingSourceLanguage,
    #[error("no yes/no token sets for language {0}")]
    MissingTokenSet(String),
    #[error("yes/no token sets for language {0} are empty")]
    EmptyTokenSet(String),
    #[error("thread pool: {0}")]
    ThreadPool(String),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Tokenizer(#[from] TokenizerError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Lens(#[from] LensError),
    #[error(transparent)]
    LangMeter(#[from] LangMeterError),
    #[error(transparent)]
    Geometry(#[from] llens::GeometryError),
}

/// Which word task to run and between which languages.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub kind: TaskKind,
    /// Source language; translation only.
    pub src_lang: Option<String>,
    /// Language the model is asked to produce.
    pub dst_lang: String,
    pub shots: usize,
}

#[derive(Debug, Clone)]
pub struct RunOptions {
    /// Worker threads; `None` lets rayon decide.
    pub threads: Option<usize>,
    /// Add the first-byte token to word-start sets.
    pub include_bytes: bool,
    /// English language code for the shared-prefix filter; `None` disables it.
    pub english: Option<String>,
    pub language_table: LanguageTable,
    /// Evaluate at most this many queries.
    pub limit: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            threads: None,
            include_bytes: true,
            english: Some("en".to_string()),
            language_table: LanguageTable::default(),
            limit: None,
        }
    }
}

impl RunOptions {
    /// Reads `LLENS_THREADS` when no explicit thread count is set.
    pub fn with_env_threads(mut self) -> Self {
        if self.threads.is_none() {
            self.threads = std::env::var("LLENS_THREADS")
                .ok()
                .and_then(|v| v.trim().parse().ok())
                .filter(|&n: &usize| n > 0);
        }
        self
    }

    fn pool(&self) -> Result<rayon::ThreadPool, RunError> {
        rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.unwrap_or(0))
            .build()
            .map_err(|e| RunError::ThreadPool(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerMeasure {
    pub layer: usize,
    pub prob: BTreeMap<String, f64>,
    pub entropy: f64,
    pub energy: f64,
    pub top_token: String,
}

/// Per-prompt output, one JSON line each.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptRecord {
    pub index: usize,
    pub concept_id: Option<String>,
    pub prompt: String,
    pub target_language: String,
    pub n_tokens: usize,
    pub layers: Vec<LayerMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub curve: LayerCurve,
    pub records: Vec<PromptRecord>,
    pub filter: FilterReport,
    /// Records skipped because a needed form or cloze sentence is missing.
    pub missing_form: usize,
}

fn check_vocab<T: Scalar>(model: &ModelBundle<T>, vocab: &Vocabulary) -> Result<(), RunError> {
    let expected = model.config().vocab_size;
    if vocab.len() != expected {
        return Err(RunError::VocabMismatch {
            vocab: vocab.len(),
            model: expected,
        });
    }
    Ok(())
}

/// Lens distributions of the final position at every layer `0..=m`.
fn final_position_lens<T: Scalar>(
    model: &ModelBundle<T>,
    vocab: &Vocabulary,
    text: &str,
) -> Result<(usize, Vec<(NextTokenDistribution, f64)>), RunError> {
    let ids = vocab.encode(text)?;
    let trace = llens::forward(model, ids.ids())?;
    let pos = trace.final_position();
    let mut out = Vec::with_capacity(trace.n_layers() + 1);
    for layer in 0..=trace.n_layers() {
        let dist = logit_lens(model, &trace, layer, pos)?;
        let energy = token_energy(model, trace.latent(layer, pos))?.to_f64_lossy();
        out.push((dist, energy));
    }
    Ok((ids.len(), out))
}

fn needs(spec: &TaskSpec, record: &WordRecord, tracked: &[String]) -> bool {
    let has = |l: &str| record.forms.contains_key(l);
    let src_ok = spec.src_lang.as_deref().is_none_or(has);
    let cloze_ok = spec.kind != TaskKind::Cloze || record.cloze.contains_key(&spec.dst_lang);
    src_ok && cloze_ok && has(&spec.dst_lang) && tracked.iter().all(|l| has(l))
}

fn build_prompt(
    spec: &TaskSpec,
    pool: &[WordRecord],
    query: &WordRecord,
    seed: u64,
    table: &LanguageTable,
) -> Result<PromptInstance, RunError> {
    Ok(match spec.kind {
        TaskKind::Translation => {
            let src = spec
                .src_lang
                .as_deref()
                .ok_or(RunError::MissingSourceLanguage)?;
            build_translation_prompt(pool, query, src, &spec.dst_lang, spec.shots, seed, table)?
        }
        TaskKind::Repetition => {
            build_repetition_prompt(pool, query, &spec.dst_lang, spec.shots, seed, table)?
        }
        TaskKind::Cloze => {
            build_cloze_prompt(pool, query, &spec.dst_lang, spec.shots, seed, table)?
        }
        TaskKind::Boolq => return Err(RunError::UnsupportedTask(TaskKind::Boolq)),
    })
}

/// Prompts for every usable query, in dataset order. Query `i` draws its
/// demonstrations with `prompt_seed(seed, i)`.
pub fn build_task_prompts(
    spec: &TaskSpec,
    records: Vec<WordRecord>,
    vocab: &Vocabulary,
    tracked: &[String],
    seed: u64,
    opts: &RunOptions,
) -> Result<(Vec<PromptInstance>, FilterReport, usize), RunError> {
    if spec.kind == TaskKind::Boolq {
        return Err(RunError::UnsupportedTask(spec.kind));
    }
    if spec.kind == TaskKind::Translation && spec.src_lang.is_none() {
        return Err(RunError::MissingSourceLanguage);
    }
    let (records, report) = match &opts.english {
        Some(en) => filter_word_records(records, vocab, en),
        None => {
            let kept = records.len();
            (
                records,
                FilterReport {
                    kept,
                    ..Default::default()
                },
            )
        }
    };
    let total = records.len();
    let pool: Vec<WordRecord> = records
        .into_iter()
        .filter(|r| needs(spec, r, tracked))
        .collect();
    let missing_form = total - pool.len();
    info!(
        "{} records kept after filtering, {} without the needed forms",
        pool.len(),
        missing_form
    );
    let n_queries = opts.limit.map_or(pool.len(), |l| l.min(pool.len()));
    if n_queries == 0 {
        return Err(RunError::EmptyDataset(format!(
            "{} records after filtering, {missing_form} lack a needed form",
            total
        )));
    }
    let prompts = pool[..n_queries]
        .iter()
        .enumerate()
        .map(|(i, q)| {
            build_prompt(
                spec,
                &pool,
                q,
                prompt_seed(seed, i as u64),
                &opts.language_table,
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok((prompts, report, missing_form))
}

/// Runs a word task and aggregates language probability, entropy and token
/// energy at the final position for every layer.
///
/// The probability of language `ℓ` is the lens mass on the word-start tokens
/// of the correct answer in `ℓ`.
pub fn run_task<T: Scalar>(
    model: &ModelBundle<T>,
    vocab: &Vocabulary,
    spec: &TaskSpec,
    records: Vec<WordRecord>,
    tracked: &[String],
    seed: u64,
    opts: &RunOptions,
) -> Result<TaskRun, RunError> {
    check_vocab(model, vocab)?;
    if tracked.is_empty() {
        return Err(RunError::NoLanguages);
    }
    let (prompts, filter, missing_form) =
        build_task_prompts(spec, records, vocab, tracked, seed, opts)?;

    let measure = |(index, p): (usize, &PromptInstance)| -> Result<PromptRecord, RunError> {
        let sets: Vec<LanguageTokenSet> = tracked
            .iter()
            .map(|l| LanguageTokenSet::word_start(vocab, l, &p.correct_word[l], opts.include_bytes))
            .collect();
        let (n_tokens, lens) = final_position_lens(model, vocab, &p.text)?;
        debug!("prompt {index}: {n_tokens} tokens");
        let layers = lens
            .iter()
            .enumerate()
            .map(|(layer, (dist, energy))| LayerMeasure {
                layer,
                prob: sets
                    .iter()
                    .map(|s| (s.language.clone(), lang_probability(dist, s).value))
                    .collect(),
                entropy: entropy_bits(dist),
                energy: *energy,
                top_token: vocab.display(dist.argmax()),
            })
            .collect();
        Ok(PromptRecord {
            index,
            concept_id: p.concept_id.clone(),
            prompt: p.text.clone(),
            target_language: p.target_language.clone(),
            n_tokens,
            layers,
        })
    };
    let records: Vec<PromptRecord> = opts.pool()?.install(|| {
        prompts
            .par_iter()
            .enumerate()
            .map(measure)
            .collect::<Result<_, _>>()
    })?;

    let curve = aggregate(&records, tracked, model.config().n_layers);
    Ok(TaskRun {
        curve,
        records,
        filter,
        missing_form,
    })
}

fn summary_of(values: impl Iterator<Item = f64>) -> Summary {
    summarize(&values.collect::<Vec<_>>()).expect("at least one prompt")
}

fn aggregate(records: &[PromptRecord], tracked: &[String], n_layers: usize) -> LayerCurve {
    let layers = (0..=n_layers)
        .map(|layer| LayerStats {
            layer,
            prob: tracked
                .iter()
                .map(|l| {
                    let s = summary_of(records.iter().map(|r| r.layers[layer].prob[l]));
                    (l.clone(), s)
                })
                .collect(),
            entropy: summary_of(records.iter().map(|r| r.layers[layer].entropy)),
            energy: summary_of(records.iter().map(|r| r.layers[layer].energy)),
        })
        .collect();
    LayerCurve {
        languages: tracked.to_vec(),
        n_samples: records.len(),
        layers,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoolqLayerMeasure {
    pub layer: usize,
    /// Lens mass on each tracked language's `Y ∪ N`.
    pub mass: BTreeMap<String, f64>,
    pub decision: Answer,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoolqRecord {
    pub index: usize,
    pub prompt: String,
    pub gold: Answer,
    pub n_tokens: usize,
    pub layers: Vec<BoolqLayerMeasure>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoolqLayerStats {
    pub layer: usize,
    pub mass: BTreeMap<String, Summary>,
    pub accuracy: f64,
    pub entropy: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoolqCurve {
    pub language: String,
    pub languages: Vec<String>,
    pub n_samples: usize,
    pub layers: Vec<BoolqLayerStats>,
    /// Accuracy of the model's own output (last layer).
    pub final_accuracy: f64,
}

impl BoolqCurve {
    /// `mass` rows per tracked language, then `accuracy` and `entropy`.
    pub fn rows(&self) -> Vec<CurveRow> {
        let mut rows = Vec::new();
        for l in &self.layers {
            for (lang, s) in &l.mass {
                rows.push(CurveRow::new(l.layer, "mass", lang, s));
            }
            let acc = Summary {
                mean: l.accuracy,
                half_width: 0.0,
                n: self.n_samples,
            };
            rows.push(CurveRow::new(l.layer, "accuracy", &self.language, &acc));
            rows.push(CurveRow::new(l.layer, "entropy", "", &l.entropy));
        }
        rows
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoolqRun {
    pub curve: BoolqCurve,
    pub records: Vec<BoolqRecord>,
}

type AnswerSets = BTreeMap<String, (LanguageTokenSet, LanguageTokenSet)>;

/// Runs yes/no questions of `language` and decides each one at every layer.
///
/// Items of other languages are ignored. `tracked` languages report their
/// answer-token mass per layer and need entries in `sets`.
pub fn run_boolq<T: Scalar>(
    model: &ModelBundle<T>,
    vocab: &Vocabulary,
    items: &[BoolqItem],
    language: &str,
    sets: &AnswerSets,
    tracked: &[String],
    opts: &RunOptions,
) -> Result<BoolqRun, RunError> {
    check_vocab(model, vocab)?;
    let answer_set = |l: &str| -> Result<LanguageTokenSet, RunError> {
        let (yes, no) = sets
            .get(l)
            .ok_or_else(|| RunError::MissingTokenSet(l.to_string()))?;
        let all = yes.union(no);
        if yes.is_empty() || no.is_empty() {
            return Err(RunError::EmptyTokenSet(l.to_string()));
        }
        Ok(all)
    };
    answer_set(language)?;
    let (yes, no) = &sets[language];
    let mut tracked = tracked.to_vec();
    if !tracked.iter().any(|l| l == language) {
        tracked.insert(0, language.to_string());
    }
    let masses: Vec<LanguageTokenSet> = tracked
        .iter()
        .map(|l| answer_set(l))
        .collect::<Result<_, _>>()?;

    let mut selected: Vec<&BoolqItem> = items.iter().filter(|i| i.lang == language).collect();
    if let Some(limit) = opts.limit {
        selected.truncate(limit);
    }
    if selected.is_empty() {
        return Err(RunError::EmptyDataset(format!(
            "no items in language {language}"
        )));
    }
    let prompts: Vec<(PromptInstance, Answer)> = selected
        .iter()
        .map(|item| Ok((build_boolq_prompt(item)?, item.answer)))
        .collect::<Result<_, RunError>>()?;

    let measure =
        |(index, (p, gold)): (usize, &(PromptInstance, Answer))| -> Result<BoolqRecord, RunError> {
            let (n_tokens, lens) = final_position_lens(model, vocab, &p.text)?;
            let layers = lens
                .iter()
                .enumerate()
                .map(|(layer, (dist, _))| {
                    Ok(BoolqLayerMeasure {
                        layer,
                        mass: masses
                            .iter()
                            .map(|s| (s.language.clone(), lang_probability(dist, s).value))
                            .collect(),
                        decision: boolq_decide(dist, yes, no)?,
                        entropy: entropy_bits(dist),
                    })
                })
                .collect::<Result<_, RunError>>()?;
            Ok(BoolqRecord {
                index,
                prompt: p.text.clone(),
                gold: *gold,
                n_tokens,
                layers,
            })
        };
    let records: Vec<BoolqRecord> = opts.pool()?.install(|| {
        prompts
            .par_iter()
            .enumerate()
            .map(measure)
            .collect::<Result<_, _>>()
    })?;

    let n_layers = model.config().n_layers;
    let layers = (0..=n_layers)
        .map(|layer| {
            let pairs: Vec<(Answer, Answer)> = records
                .iter()
                .map(|r| (r.layers[layer].decision, r.gold))
                .collect();
            Ok(BoolqLayerStats {
                layer,
                mass: tracked
                    .iter()
                    .map(|l| {
                        (
                            l.clone(),
                            summary_of(records.iter().map(|r| r.layers[layer].mass[l])),
                        )
                    })
                    .collect(),
                accuracy: accuracy(&pairs)?,
                entropy: summary_of(records.iter().map(|r| r.layers[layer].entropy)),
            })
        })
        .collect::<Result<Vec<_>, RunError>>()?;
    let final_accuracy = layers[n_layers].accuracy;
    Ok(BoolqRun {
        curve: BoolqCurve {
            language: language.to_string(),
            languages: tracked,
            n_samples: records.len(),
            layers,
            final_accuracy,
        },
        records,
    })
}
