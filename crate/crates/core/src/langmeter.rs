// SPDX-License-Identifier: MIT OR Apache-2.0

//! Language attribution of next-token distributions.
//!
//! A [`LanguageTokenSet`] collects the vocabulary ids that signal one
//! language: either the word-start tokens of that language's correct answer,
//! or the binary-answer (yes/no) tokens of a BoolQ-style question.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lens::NextTokenDistribution;
use crate::tokenizer::Vocabulary;

#[derive(Debug, Error)]
pub enum LangMeterError {
    #[error("token {token:?} ({language}) qualifies as both a yes and a no token")]
    AmbiguousToken { language: String, token: String },
    #[error("answer word list for {0} is empty")]
    EmptyWordList(String),
    #[error("yes/no token sets are both empty")]
    EmptyAnswerSet,
    #[error("no decisions to score")]
    NoDecisions,
    #[error("token {token:?} listed for {language} is not in the vocabulary")]
    UnknownToken { language: String, token: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid token table: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SetKind {
    WordStart,
    BoolqYes,
    BoolqNo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LanguageTokenSet {
    pub language: String,
    /// Sorted, deduplicated.
    pub token_ids: Vec<u32>,
    pub kind: SetKind,
}

impl LanguageTokenSet {
    pub fn new(language: impl Into<String>, mut token_ids: Vec<u32>, kind: SetKind) -> Self {
        token_ids.sort_unstable();
        token_ids.dedup();
        Self {
            language: language.into(),
            token_ids,
            kind,
        }
    }

    /// `Start(word)` for `language`.
    pub fn word_start(vocab: &Vocabulary, language: &str, word: &str, include_bytes: bool) -> Self {
        Self::new(
            language,
            vocab.prefix_token_set(word, include_bytes),
            SetKind::WordStart,
        )
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut ids = self.token_ids.clone();
        ids.extend(&other.token_ids);
        Self::new(self.language.clone(), ids, self.kind)
    }

    pub fn contains(&self, id: u32) -> bool {
        self.token_ids.binary_search(&id).is_ok()
    }

    pub fn is_empty(&self) -> bool {
        self.token_ids.is_empty()
    }

    pub fn len(&self) -> usize {
        self.token_ids.len()
    }
}

/// Total probability mass a distribution places on one language's tokens.
/// Masses of different languages need not sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LanguageProbability {
    pub language: String,
    pub layer: usize,
    pub value: f64,
}

pub fn lang_probability(
    dist: &NextTokenDistribution,
    set: &LanguageTokenSet,
) -> LanguageProbability {
    let value: f64 = set.token_ids.iter().map(|&t| dist.prob(t)).sum();
    LanguageProbability {
        language: set.language.clone(),
        layer: dist.layer,
        value: value.clamp(0.0, 1.0),
    }
}

/// As-given, first-letter upper, all upper, all lower.
pub fn capitalization_variants(word: &str) -> Vec<String> {
    let mut chars = word.chars();
    let first_upper = match chars.next() {
        Some(c) => c.to_uppercase().chain(chars).collect(),
        None => String::new(),
    };
    let mut out = vec![
        word.to_string(),
        first_upper,
        word.to_uppercase(),
        word.to_lowercase(),
    ];
    let mut seen = BTreeSet::new();
    out.retain(|w| seen.insert(w.clone()));
    out
}

fn char_prefixes(word: &str) -> impl Iterator<Item = &str> {
    word.char_indices()
        .map(move |(i, c)| &word[..i + c.len_utf8()])
}

/// Builds the yes (`Y`) and no (`N`) binary-answer token sets of one language.
///
/// Candidates are vocabulary tokens equal to a single-token prefix of a
/// capitalisation variant of a yes/no word, with or without the leading
/// whitespace marker. A candidate that is not itself a complete yes/no word
/// of this language is dropped when it also prefixes a yes/no word (any
/// capitalisation) of one of `other_languages`.
pub fn build_boolq_sets(
    vocab: &Vocabulary,
    language: &str,
    yes_words: &[String],
    no_words: &[String],
    other_languages: &[(Vec<String>, Vec<String>)],
) -> Result<(LanguageTokenSet, LanguageTokenSet), LangMeterError> {
    if yes_words.is_empty() || no_words.is_empty() {
        return Err(LangMeterError::EmptyWordList(language.to_string()));
    }
    let complete: BTreeSet<String> = yes_words
        .iter()
        .chain(no_words)
        .flat_map(|w| capitalization_variants(w))
        .collect();
    let foreign: Vec<String> = other_languages
        .iter()
        .flat_map(|(y, n)| y.iter().chain(n))
        .flat_map(|w| capitalization_variants(w))
        .collect();

    let collect = |words: &[String]| -> BTreeSet<u32> {
        let mut ids = BTreeSet::new();
        for variant in words.iter().flat_map(|w| capitalization_variants(w)) {
            for prefix in char_prefixes(&variant) {
                if !complete.contains(prefix) && foreign.iter().any(|f| f.starts_with(prefix)) {
                    continue;
                }
                for form in [prefix.to_string(), format!("{}{prefix}", vocab.marker())] {
                    if let Some(id) = vocab.id(&form).filter(|&id| !vocab.is_byte_token(id)) {
                        ids.insert(id);
                    }
                }
            }
        }
        ids
    };
    let yes = collect(yes_words);
    let no = collect(no_words);
    if let Some(&id) = yes.intersection(&no).next() {
        return Err(LangMeterError::AmbiguousToken {
            language: language.to_string(),
            token: vocab.display(id),
        });
    }
    Ok((
        LanguageTokenSet::new(language, yes.into_iter().collect(), SetKind::BoolqYes),
        LanguageTokenSet::new(language, no.into_iter().collect(), SetKind::BoolqNo),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Answer {
    Yes,
    No,
}

/// Argmax over `Y ∪ N` only; the lower token id wins ties.
pub fn boolq_decide(
    dist: &NextTokenDistribution,
    yes: &LanguageTokenSet,
    no: &LanguageTokenSet,
) -> Result<Answer, LangMeterError> {
    let best = yes
        .token_ids
        .iter()
        .map(|&t| (t, Answer::Yes))
        .chain(no.token_ids.iter().map(|&t| (t, Answer::No)))
        .min_by(|(ta, _), (tb, _)| {
            dist.prob(*tb)
                .partial_cmp(&dist.prob(*ta))
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(ta.cmp(tb))
        });
    best.map(|(_, a)| a).ok_or(LangMeterError::EmptyAnswerSet)
}

/// Fraction of `(decision, gold)` pairs that agree.
pub fn accuracy(decisions: &[(Answer, Answer)]) -> Result<f64, LangMeterError> {
    if decisions.is_empty() {
        return Err(LangMeterError::NoDecisions);
    }
    let correct = decisions.iter().filter(|(d, g)| d == g).count();
    Ok(correct as f64 / decisions.len() as f64)
}

/// Default yes/no words per language code.
pub fn default_answer_words() -> BTreeMap<&'static str, (Vec<String>, Vec<String>)> {
    let w = |y: &str, n: &str| (vec![y.to_string()], vec![n.to_string()]);
    BTreeMap::from([
        ("en", w("yes", "no")),
        ("de", w("ja", "nein")),
        ("fr", w("oui", "non")),
        ("ru", w("да", "нет")),
    ])
}

/// Builds `(Y, N)` for every language of `words`, using the remaining
/// languages for the shared-prefix discard rule.
pub fn build_all_boolq_sets(
    vocab: &Vocabulary,
    words: &BTreeMap<String, (Vec<String>, Vec<String>)>,
) -> Result<BTreeMap<String, (LanguageTokenSet, LanguageTokenSet)>, LangMeterError> {
    words
        .iter()
        .map(|(lang, (yes, no))| {
            let others: Vec<_> = words
                .iter()
                .filter(|(l, _)| *l != lang)
                .map(|(_, pair)| pair.clone())
                .collect();
            build_boolq_sets(vocab, lang, yes, no, &others).map(|sets| (lang.clone(), sets))
        })
        .collect()
}

/// Explicit binary-answer token lists, loaded from JSON:
///
/// ```json
/// {"en": {"yes": ["Yes", "▁Yes"], "no": ["No", "▁No"]}}
/// ```
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BoolqTokenTable(pub BTreeMap<String, BoolqTokenEntry>);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoolqTokenEntry {
    pub yes: Vec<String>,
    pub no: Vec<String>,
}

impl BoolqTokenTable {
    pub fn from_json_str(json: &str) -> Result<Self, LangMeterError> {
        Ok(serde_json::from_str(json)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, LangMeterError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Maps token strings to ids, enforcing `Y ∩ N = ∅`.
    pub fn resolve(
        &self,
        vocab: &Vocabulary,
    ) -> Result<BTreeMap<String, (LanguageTokenSet, LanguageTokenSet)>, LangMeterError> {
        let mut out = BTreeMap::new();
        for (lang, entry) in &self.0 {
            let ids = |tokens: &[String]| -> Result<Vec<u32>, LangMeterError> {
                tokens
                    .iter()
                    .map(|t| {
                        vocab.id(t).ok_or_else(|| LangMeterError::UnknownToken {
                            language: lang.clone(),
                            token: t.clone(),
                        })
                    })
                    .collect()
            };
            let yes = LanguageTokenSet::new(lang, ids(&entry.yes)?, SetKind::BoolqYes);
            let no = LanguageTokenSet::new(lang, ids(&entry.no)?, SetKind::BoolqNo);
            if let Some(&id) = yes.token_ids.iter().find(|&&id| no.contains(id)) {
                return Err(LangMeterError::AmbiguousToken {
                    language: lang.clone(),
                    token: vocab.display(id),
                });
            }
            out.insert(lang.clone(), (yes, no));
        }
        Ok(out)
    }
}
