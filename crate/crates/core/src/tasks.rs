// SPDX-License-Identifier: MIT OR Apache-2.0

//! Prompt construction and dataset ingestion.
//!
//! Word datasets are TSV with columns `concept_id, lang, surface,
//! cloze_sentence` (the last one may be empty); rows sharing a `concept_id`
//! form one [`WordRecord`]. BoolQ datasets are JSON lines with `question`,
//! `passage`, `answer` and `lang`.
//!
//! Demonstrations are drawn without replacement by a partial Fisher–Yates
//! shuffle driven by ChaCha8 (`rand_chacha`, seeded through
//! `SeedableRng::seed_from_u64`). Step `i` swaps position `i` with
//! `i + next_u64() % (n − i)`. The same seed therefore yields the same prompt
//! in every implementation of this procedure.

use std::collections::BTreeMap;

use log::warn;
use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::langmeter::Answer;
use crate::tokenizer::Vocabulary;

pub const BLANK: &str = "___";

#[derive(Debug, Error)]
pub enum TaskError {
    #[error("need {needed} demonstrations but only {available} records qualify")]
    InsufficientRecords { needed: usize, available: usize },
    #[error("record {concept} has no {language} form")]
    MissingForm { concept: String, language: String },
    #[error("record {concept} has no {language} cloze sentence containing \"___\"")]
    MissingBlank { concept: String, language: String },
    #[error("no prompt template for language {0}")]
    UnsupportedLanguage(String),
    #[error("empty {0}")]
    EmptyField(&'static str),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid language table: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Translation,
    Repetition,
    Cloze,
    Boolq,
}

impl std::fmt::Display for TaskKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Translation => "translation",
            Self::Repetition => "repetition",
            Self::Cloze => "cloze",
            Self::Boolq => "boolq",
        })
    }
}

/// One concept with its surface forms across languages.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordRecord {
    pub concept_id: String,
    pub forms: BTreeMap<String, String>,
    pub cloze: BTreeMap<String, String>,
    /// Whether the surface form is a single vocabulary token (with or without
    /// leading marker). Filled by [`annotate_single_token`].
    pub single_token: BTreeMap<String, bool>,
}

impl WordRecord {
    pub fn form(&self, language: &str) -> Result<&str, TaskError> {
        self.forms
            .get(language)
            .map(String::as_str)
            .filter(|f| !f.is_empty())
            .ok_or_else(|| TaskError::MissingForm {
                concept: self.concept_id.clone(),
                language: language.to_string(),
            })
    }

    fn cloze_sentence(&self, language: &str) -> Result<&str, TaskError> {
        self.cloze
            .get(language)
            .map(String::as_str)
            .filter(|s| s.contains(BLANK))
            .ok_or_else(|| TaskError::MissingBlank {
                concept: self.concept_id.clone(),
                language: language.to_string(),
            })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptInstance {
    pub kind: TaskKind,
    pub text: String,
    pub target_language: String,
    /// Correct answer word per language.
    pub correct_word: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gold: Option<Answer>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub concept_id: Option<String>,
}

/// Language names used inside prompts, written in the language itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTable {
    pub names: BTreeMap<String, String>,
    pub answer_labels: BTreeMap<String, String>,
}

impl Default for LanguageTable {
    fn default() -> Self {
        let table = |pairs: &[(&str, &str)]| {
            pairs
                .iter()
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        };
        Self {
            names: table(&[
                ("de", "Deutsch"),
                ("en", "English"),
                ("et", "Eesti"),
                ("fr", "Français"),
                ("ru", "Русский"),
                ("zh", "中文"),
            ]),
            answer_labels: table(&[
                ("de", "Antwort"),
                ("en", "Answer"),
                ("et", "Vastus"),
                ("fr", "Réponse"),
                ("ru", "Ответ"),
                ("zh", "答案"),
            ]),
        }
    }
}

impl LanguageTable {
    /// Built-in table with entries from `json` (`{"names": {..}, "answer_labels": {..}}`) layered on top.
    pub fn with_overrides(json: &str) -> Result<Self, TaskError> {
        #[derive(Deserialize)]
        struct Partial {
            #[serde(default)]
            names: BTreeMap<String, String>,
            #[serde(default)]
            answer_labels: BTreeMap<String, String>,
        }
        let partial: Partial = serde_json::from_str(json)?;
        let mut table = Self::default();
        table.names.extend(partial.names);
        table.answer_labels.extend(partial.answer_labels);
        Ok(table)
    }

    pub fn name(&self, language: &str) -> Result<&str, TaskError> {
        self.names
            .get(language)
            .map(String::as_str)
            .ok_or_else(|| TaskError::UnsupportedLanguage(language.to_string()))
    }

    fn answer_label(&self, language: &str) -> Result<&str, TaskError> {
        self.answer_labels
            .get(language)
            .map(String::as_str)
            .ok_or_else(|| TaskError::UnsupportedLanguage(language.to_string()))
    }
}

/// Per-prompt seed: `base + index · 0x9E3779B97F4A7C15` (wrapping).
pub fn prompt_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// `k` distinct indices from `0..n`, in draw order.
pub fn sample_without_replacement(n: usize, k: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k.min(n) {
        let j = i + (rng.next_u64() % (n - i) as u64) as usize;
        idx.swap(i, j);
    }
    idx.truncate(k.min(n));
    idx
}

fn demonstrations<'a>(
    records: &'a [WordRecord],
    query: &WordRecord,
    k: usize,
    seed: u64,
    usable: impl Fn(&WordRecord) -> bool,
) -> Result<Vec<&'a WordRecord>, TaskError> {
    let pool: Vec<&WordRecord> = records
        .iter()
        .filter(|r| r.concept_id != query.concept_id && usable(r))
        .collect();
    if k > pool.len() {
        return Err(TaskError::InsufficientRecords {
            needed: k,
            available: pool.len(),
        });
    }
    Ok(sample_without_replacement(pool.len(), k, seed)
        .into_iter()
        .map(|i| pool[i])
        .collect())
}

fn pair_prompt(
    kind: TaskKind,
    records: &[WordRecord],
    query: &WordRecord,
    (src, dst): (&str, &str),
    k_shots: usize,
    rng_seed: u64,
    languages: &LanguageTable,
) -> Result<PromptInstance, TaskError> {
    let (src_name, dst_name) = (languages.name(src)?, languages.name(dst)?);
    let query_src = query.form(src)?;
    query.form(dst)?;
    let demos = demonstrations(records, query, k_shots, rng_seed, |r| {
        r.form(src).is_ok() && r.form(dst).is_ok()
    })?;
    let mut lines: Vec<String> = demos
        .iter()
        .map(|r| {
            format!(
                "{src_name}: \"{}\" - {dst_name}: \"{}\"",
                r.forms[src], r.forms[dst]
            )
        })
        .collect();
    lines.push(format!("{src_name}: \"{query_src}\" - {dst_name}: \""));
    Ok(PromptInstance {
        kind,
        text: lines.join("\n"),
        target_language: dst.to_string(),
        correct_word: query.forms.clone(),
        gold: None,
        concept_id: Some(query.concept_id.clone()),
    })
}

/// `k_shots` translated demonstrations followed by the untranslated query.
pub fn build_translation_prompt(
    records: &[WordRecord],
    query: &WordRecord,
    src: &str,
    dst: &str,
    k_shots: usize,
    rng_seed: u64,
    languages: &LanguageTable,
) -> Result<PromptInstance, TaskError> {
    pair_prompt(
        TaskKind::Translation,
        records,
        query,
        (src, dst),
        k_shots,
        rng_seed,
        languages,
    )
}

/// Like translation, with the same language on both sides.
pub fn build_repetition_prompt(
    records: &[WordRecord],
    query: &WordRecord,
    language: &str,
    k_shots: usize,
    rng_seed: u64,
    languages: &LanguageTable,
) -> Result<PromptInstance, TaskError> {
    pair_prompt(
        TaskKind::Repetition,
        records,
        query,
        (language, language),
        k_shots,
        rng_seed,
        languages,
    )
}

/// Filled-in cloze demonstrations followed by the query sentence, cut after
/// the opening quote of its answer.
pub fn build_cloze_prompt(
    records: &[WordRecord],
    query: &WordRecord,
    language: &str,
    k_shots: usize,
    rng_seed: u64,
    languages: &LanguageTable,
) -> Result<PromptInstance, TaskError> {
    let label = languages.answer_label(language)?;
    let query_sentence = query.cloze_sentence(language)?;
    query.form(language)?;
    let demos = demonstrations(records, query, k_shots, rng_seed, |r| {
        r.cloze_sentence(language).is_ok() && r.form(language).is_ok()
    })?;
    let mut lines: Vec<String> = demos
        .iter()
        .map(|r| {
            format!(
                "{} {label}: \"{}\".",
                r.cloze[language].trim_end(),
                r.forms[language]
            )
        })
        .collect();
    lines.push(format!("{} {label}: \"", query_sentence.trim_end()));
    Ok(PromptInstance {
        kind: TaskKind::Cloze,
        text: lines.join("\n"),
        target_language: language.to_string(),
        correct_word: query.forms.clone(),
        gold: None,
        concept_id: Some(query.concept_id.clone()),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolqItem {
    pub question: String,
    pub passage: String,
    #[serde(deserialize_with = "answer_from_bool_or_word")]
    pub answer: Answer,
    pub lang: String,
}

fn answer_from_bool_or_word<'de, D: serde::Deserializer<'de>>(d: D) -> Result<Answer, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bool(bool),
        Word(Answer),
    }
    Ok(match Raw::deserialize(d)? {
        Raw::Bool(true) => Answer::Yes,
        Raw::Bool(false) => Answer::No,
        Raw::Word(a) => a,
    })
}

struct BoolqTemplate {
    preamble: &'static str,
    instruction_header: &'static str,
    instruction: &'static str,
    answer_hint: &'static str,
    input_header: &'static str,
    answer_header: &'static str,
    answer_lead: &'static str,
}

fn boolq_template(language: &str) -> Option<BoolqTemplate> {
    Some(match language {
        "en" => BoolqTemplate {
            preamble: "Write a response that appropriately completes the request.",
            instruction_header: "### Instruction :",
            instruction: "Read the input text and answer the question:",
            answer_hint: "Your answer should be \"Yes\" or \"No\".",
            input_header: "### Input :",
            answer_header: "### Response :",
            answer_lead: "The answer is \"",
        },
        "de" => BoolqTemplate {
            preamble: "Schreiben Sie eine Antwort, die die Anfrage angemessen erfüllt.",
            instruction_header: "### Anweisungen :",
            instruction: "Lesen Sie den Eingangstext und beantworten Sie die Frage:",
            answer_hint: "Ihre Antwort sollte \"Ja\" oder \"Nein\" lauten.",
            input_header: "### Eingabe :",
            answer_header: "### Antwort :",
            answer_lead: "Die Antwort lautet \"",
        },
        "fr" => BoolqTemplate {
            preamble: "Rédigez une réponse qui complète correctement la demande.",
            instruction_header: "### Instructions :",
            instruction: "Lisez le texte d'entrée et répondez à la question :",
            answer_hint: "Votre réponse doit être \"Oui\" ou \"Non\".",
            input_header: "### Entrée :",
            answer_header: "### Réponse :",
            answer_lead: "La réponse est \"",
        },
        "ru" => BoolqTemplate {
            preamble: "Напишите ответ, который надлежащим образом выполняет запрос.",
            instruction_header: "### Инструкции :",
            instruction: "Прочитайте входной текст и ответьте на вопрос:",
            answer_hint: "Ваш ответ должен быть \"Да\" или \"Нет\".",
            input_header: "### Ввод :",
            answer_header: "### Ответ :",
            answer_lead: "Ответ: \"",
        },
        _ => return None,
    })
}

/// Instruction / input / answer prompt in the item's language.
pub fn build_boolq_prompt(item: &BoolqItem) -> Result<PromptInstance, TaskError> {
    let question = item.question.trim();
    let passage = item.passage.trim();
    if question.is_empty() {
        return Err(TaskError::EmptyField("question"));
    }
    if passage.is_empty() {
        return Err(TaskError::EmptyField("passage"));
    }
    let t = boolq_template(&item.lang)
        .ok_or_else(|| TaskError::UnsupportedLanguage(item.lang.clone()))?;
    let question = if question.ends_with('?') {
        question.to_string()
    } else {
        format!("{question}?")
    };
    let text = [
        t.preamble.to_string(),
        t.instruction_header.to_string(),
        format!("{} {question} {}", t.instruction, t.answer_hint),
        t.input_header.to_string(),
        passage.to_string(),
        t.answer_header.to_string(),
        t.answer_lead.to_string(),
    ]
    .join("\n");
    Ok(PromptInstance {
        kind: TaskKind::Boolq,
        text,
        target_language: item.lang.clone(),
        correct_word: BTreeMap::new(),
        gold: Some(item.answer),
        concept_id: None,
    })
}

/// Parses the word TSV. A first row whose first field is `concept_id` is a header.
pub fn parse_word_tsv(text: &str) -> Result<Vec<WordRecord>, TaskError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_id: BTreeMap<String, WordRecord> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || (i == 0 && line.starts_with("concept_id")) {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() < 3 {
            return Err(TaskError::Parse {
                line: i + 1,
                message: format!(
                    "expected at least 3 tab-separated fields, found {}",
                    fields.len()
                ),
            });
        }
        let (id, lang, surface) = (
            fields[0].trim(),
            fields[1].trim().to_lowercase(),
            fields[2].trim(),
        );
        if id.is_empty() || lang.is_empty() || surface.is_empty() {
            return Err(TaskError::Parse {
                line: i + 1,
                message: "empty concept_id, lang or surface".into(),
            });
        }
        let record = by_id.entry(id.to_string()).or_insert_with(|| {
            order.push(id.to_string());
            WordRecord {
                concept_id: id.to_string(),
                ..Default::default()
            }
        });
        if record
            .forms
            .insert(lang.clone(), surface.to_string())
            .is_some()
        {
            return Err(TaskError::Parse {
                line: i + 1,
                message: format!("duplicate {lang} form for {id}"),
            });
        }
        if let Some(cloze) = fields.get(3).map(|s| s.trim()).filter(|s| !s.is_empty()) {
            record.cloze.insert(lang, cloze.to_string());
        }
    }
    Ok(order
        .into_iter()
        .map(|id| by_id.remove(&id).expect("recorded id"))
        .collect())
}

pub fn parse_boolq_jsonl(text: &str) -> Result<Vec<BoolqItem>, TaskError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| TaskError::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn annotate_single_token(records: &mut [WordRecord], vocab: &Vocabulary) {
    for r in records {
        r.single_token = r
            .forms
            .iter()
            .map(|(lang, form)| {
                let single = vocab.id(form).is_some()
                    || vocab.id(&format!("{}{form}", vocab.marker())).is_some();
                (lang.clone(), single)
            })
            .collect();
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterReport {
    /// Forms removed per language because they share a token prefix with English.
    pub shared_prefix: BTreeMap<String, usize>,
    /// Records left with fewer than two languages.
    pub too_few_languages: usize,
    /// Records without an English form (kept; the rule does not apply).
    pub missing_english: usize,
    pub kept: usize,
}

/// Removes every non-English form that shares a multi-character token prefix
/// with the English form, then drops records left with fewer than two languages.
pub fn filter_word_records(
    records: Vec<WordRecord>,
    vocab: &Vocabulary,
    english: &str,
) -> (Vec<WordRecord>, FilterReport) {
    let mut report = FilterReport::default();
    let mut kept = Vec::with_capacity(records.len());
    for mut record in records {
        let Some(en) = record.forms.get(english).cloned() else {
            warn!(
                "record {} has no {english} form; prefix filter skipped",
                record.concept_id
            );
            report.missing_english += 1;
            kept.push(record);
            continue;
        };
        let clashing: Vec<String> = record
            .forms
            .iter()
            .filter(|(lang, form)| *lang != english && vocab.shares_token_prefix(&en, form))
            .map(|(lang, _)| lang.clone())
            .collect();
        for lang in clashing {
            record.forms.remove(&lang);
            record.cloze.remove(&lang);
            record.single_token.remove(&lang);
            *report.shared_prefix.entry(lang).or_default() += 1;
        }
        if record.forms.len() < 2 {
            report.too_few_languages += 1;
        } else {
            kept.push(record);
        }
    }
    report.kept = kept.len();
    (kept, report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::DEFAULT_MARKER;

    fn record(id: &str, pairs: &[(&str, &str)]) -> WordRecord {
        WordRecord {
            concept_id: id.into(),
            forms: pairs
                .iter()
                .map(|(l, w)| (l.to_string(), w.to_string()))
                .collect(),
            ..Default::default()
        }
    }

    fn fr_de() -> Vec<WordRecord> {
        [
            ("button", "bouton", "Knopf"),
            ("doll", "poupée", "Puppe"),
            ("violin", "violon", "Geige"),
            ("drum", "tambour", "Trommel"),
            ("flower", "fleur", "Blume"),
        ]
        .iter()
        .map(|(id, fr, de)| record(id, &[("fr", fr), ("de", de)]))
        .collect()
    }

    #[test]
    fn sampler_is_a_partial_permutation() {
        let s = sample_without_replacement(10, 4, 7);
        assert_eq!(s.len(), 4);
        let mut sorted = s.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(sorted.len(), 4);
        assert_eq!(s, sample_without_replacement(10, 4, 7));
        assert!(sample_without_replacement(3, 0, 1).is_empty());
    }

    #[test]
    fn translation_layout() {
        let records = fr_de();
        let langs = LanguageTable::default();
        let p = build_translation_prompt(&records, &records[4], "fr", "de", 4, 1, &langs).unwrap();
        let lines: Vec<&str> = p.text.lines().collect();
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "Français: \"fleur\" - Deutsch: \"");
        assert!(p.text.ends_with('"'));
        for l in &lines[..4] {
            assert!(l.starts_with("Français: \"") && l.contains("\" - Deutsch: \""));
            assert!(!l.contains("fleur"));
        }
        for want in [
            "bouton\" - Deutsch: \"Knopf",
            "poupée\" - Deutsch: \"Puppe",
            "violon\" - Deutsch: \"Geige",
            "tambour\" - Deutsch: \"Trommel",
        ] {
            assert!(p.text.contains(want));
        }
        assert_eq!(p.correct_word["de"], "Blume");
        assert_eq!(
            p,
            build_translation_prompt(&records, &records[4], "fr", "de", 4, 1, &langs).unwrap()
        );

        let zero =
            build_translation_prompt(&records, &records[4], "fr", "de", 0, 1, &langs).unwrap();
        assert_eq!(zero.text, "Français: \"fleur\" - Deutsch: \"");
        assert!(matches!(
            build_translation_prompt(&records, &records[4], "fr", "de", 5, 1, &langs),
            Err(TaskError::InsufficientRecords {
                needed: 5,
                available: 4
            })
        ));
        assert!(build_translation_prompt(&records, &records[4], "fr", "xx", 1, 1, &langs).is_err());
    }

    #[test]
    fn repetition_layout() {
        let records: Vec<_> = [
            ("virtue", "德"),
            ("seat", "座"),
            ("snow", "雪"),
            ("mountain", "山"),
            ("flower", "花"),
        ]
        .iter()
        .map(|(id, zh)| record(id, &[("zh", zh), ("en", id)]))
        .collect();
        let langs = LanguageTable::default();
        let p = build_repetition_prompt(&records, &records[4], "zh", 4, 3, &langs).unwrap();
        assert!(p.text.ends_with("\n中文: \"花\" - 中文: \""));
        for l in p.text.lines().take(4) {
            let parts: Vec<&str> = l.split('"').collect();
            assert_eq!(parts[1], parts[3]);
        }
        let single = build_repetition_prompt(&records, &records[4], "zh", 0, 3, &langs).unwrap();
        assert_eq!(single.text, "中文: \"花\" - 中文: \"");
    }

    #[test]
    fn cloze_layout() {
        let mut records = vec![
            record("rock", &[("de", "Gestein"), ("en", "rock")]),
            record("tv", &[("de", "Fernsehen"), ("en", "television")]),
            record("sun", &[("de", "Sonne"), ("en", "sun")]),
        ];
        let sentences = [
            "\"___\" ist ein festes Material, das einen Teil der Erdoberfläche bildet.",
            "\"___\" ist ein Gerät, das häufig in Haushalten verwendet wird, um ausgestrahlte Programme und Filme anzusehen.",
            "\"___\" ist der Stern im Zentrum des Sonnensystems, der die Erde mit Licht und Wärme versorgt.",
        ];
        for (r, s) in records.iter_mut().zip(sentences) {
            r.cloze.insert("de".into(), s.into());
        }
        let langs = LanguageTable::default();
        let p = build_cloze_prompt(&records, &records[2], "de", 2, 0, &langs).unwrap();
        let lines: Vec<&str> = p.text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(p.text.contains("bildet. Antwort: \"Gestein\"."));
        assert!(p.text.contains("anzusehen. Antwort: \"Fernsehen\"."));
        assert!(lines[2].ends_with("versorgt. Antwort: \""));
        assert_eq!(
            p,
            build_cloze_prompt(&records, &records[2], "de", 2, 0, &langs).unwrap()
        );

        records[2]
            .cloze
            .insert("de".into(), "kein Platzhalter".into());
        assert!(matches!(
            build_cloze_prompt(&records, &records[2], "de", 2, 0, &langs),
            Err(TaskError::MissingBlank { .. })
        ));
    }

    #[test]
    fn boolq_layout() {
        let item = BoolqItem {
            question: "Ist elder scrolls online dasselbe wie skyrim".into(),
            passage: "Wie bei anderen Spielen der Reihe ist das Spiel auf Tamriel angesiedelt."
                .into(),
            answer: Answer::No,
            lang: "de".into(),
        };
        let p = build_boolq_prompt(&item).unwrap();
        assert!(p.text.ends_with("### Antwort :\nDie Antwort lautet \""));
        assert!(p.text.contains("### Anweisungen :"));
        assert!(p
            .text
            .contains("skyrim? Ihre Antwort sollte \"Ja\" oder \"Nein\" lauten."));
        assert_eq!(p.gold, Some(Answer::No));

        let empty = BoolqItem {
            passage: "  ".into(),
            ..item.clone()
        };
        assert!(matches!(
            build_boolq_prompt(&empty),
            Err(TaskError::EmptyField("passage"))
        ));
        let unknown = BoolqItem {
            lang: "xx".into(),
            ..item
        };
        assert!(matches!(
            build_boolq_prompt(&unknown),
            Err(TaskError::UnsupportedLanguage(_))
        ));
    }

    #[test]
    fn tsv_and_jsonl_parsing() {
        let tsv = "concept_id\tlang\tsurface\tcloze_sentence\nflower\ten\tflower\tA \"___\" grows.\nflower\tzh\t花\t\nsun\ten\tsun\n";
        let recs = parse_word_tsv(tsv).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs[0].forms["zh"], "花");
        assert_eq!(recs[0].cloze["en"], "A \"___\" grows.");
        assert!(!recs[0].cloze.contains_key("zh"));
        assert!(parse_word_tsv("x\ty\n").is_err());
        assert!(parse_word_tsv("a\ten\tx\na\ten\ty\n").is_err());

        let jsonl = "{\"question\":\"q\",\"passage\":\"p\",\"answer\":true,\"lang\":\"en\"}\n\n{\"question\":\"q\",\"passage\":\"p\",\"answer\":\"no\",\"lang\":\"de\"}\n";
        let items = parse_boolq_jsonl(jsonl).unwrap();
        assert_eq!(items[0].answer, Answer::Yes);
        assert_eq!(items[1].answer, Answer::No);
        assert!(parse_boolq_jsonl("{").is_err());
    }

    #[test]
    fn shared_prefix_filter() {
        let vocab = Vocabulary::new(
            [
                "photo",
                "graph",
                "ier",
                "d",
                "og",
                "c",
                "hat",
                "\u{2581}dog",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            DEFAULT_MARKER,
        )
        .unwrap();
        let records = vec![
            record(
                "photograph",
                &[("en", "photograph"), ("fr", "photographier")],
            ),
            record("dog", &[("en", "dog"), ("fr", "chien")]),
            record("cat", &[("fr", "chat"), ("de", "Katze")]),
        ];
        let (kept, report) = filter_word_records(records, &vocab, "en");
        let ids: Vec<&str> = kept.iter().map(|r| r.concept_id.as_str()).collect();
        assert_eq!(ids, ["dog", "cat"]);
        assert_eq!(report.shared_prefix["fr"], 1);
        assert_eq!(report.too_few_languages, 1);
        assert_eq!(report.missing_english, 1);
        let (again, _) = filter_word_records(kept.clone(), &vocab, "en");
        assert_eq!(again, kept);
    }

    #[test]
    fn single_token_flags() {
        let vocab =
            Vocabulary::new(vec!["\u{2581}flower".into(), "花".into()], DEFAULT_MARKER).unwrap();
        let mut recs = vec![record(
            "flower",
            &[("en", "flower"), ("zh", "花"), ("fr", "fleur")],
        )];
        annotate_single_token(&mut recs, &vocab);
        assert!(recs[0].single_token["en"] && recs[0].single_token["zh"]);
        assert!(!recs[0].single_token["fr"]);
    }
}
