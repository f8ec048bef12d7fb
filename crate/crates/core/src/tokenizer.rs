// SPDX-License-Identifier: MIT OR Apache-2.0

//! Vocabulary with byte fallback, greedy longest-match encoding, and the
//! word-start token search used for language attribution.
//!
//! A vocabulary is loaded from JSON:
//!
//! ```json
//! {"tokens": ["<0x00>", "...", "▁flower", "花"], "whitespace_marker": "▁"}
//! ```
//!
//! Token ids are indices into `tokens`. Strings of the form `<0xXX>` are byte
//! tokens; when present, all 256 must appear as one contiguous ascending block.
//! Inside string tokens the whitespace marker stands for a literal space.

use std::collections::{BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_MARKER: char = '\u{2581}';

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("invalid tokenizer json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duplicate token string {0:?}")]
    DuplicateToken(String),
    #[error("byte tokens must form one contiguous <0x00>..<0xFF> block")]
    IncompleteByteBlock,
    #[error("character {0:?} is not covered by the vocabulary and byte tokens are absent")]
    Unencodable(char),
    #[error("token id {0} out of range")]
    IdOutOfRange(u32),
    #[error("byte-fallback tokens do not form valid UTF-8")]
    InvalidUtf8 {
        /// Decoded text with U+FFFD in place of the malformed bytes.
        lossy: String,
    },
    #[error("empty vocabulary")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct VocabFile {
    tokens: Vec<String>,
    #[serde(default = "default_marker_string")]
    whitespace_marker: String,
}

fn default_marker_string() -> String {
    DEFAULT_MARKER.to_string()
}

/// A token-id sequence. All ids are below the vocabulary size it came from.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenIdSequence(pub Vec<u32>);

impl TokenIdSequence {
    pub fn ids(&self) -> &[u32] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Parses `<0xXX>` (upper-case hex) into its byte value.
pub fn parse_byte_token(s: &str) -> Option<u8> {
    let hex = s.strip_prefix("<0x")?.strip_suffix('>')?;
    if hex.len() != 2
        || !hex
            .bytes()
            .all(|b| b.is_ascii_digit() || (b'A'..=b'F').contains(&b))
    {
        return None;
    }
    u8::from_str_radix(hex, 16).ok()
}

pub fn byte_token_string(b: u8) -> String {
    format!("<0x{b:02X}>")
}

#[derive(Debug, Clone)]
pub struct Vocabulary {
    tokens: Vec<String>,
    marker: char,
    by_string: HashMap<String, u32>,
    /// Marker-to-space surface form of every string token.
    by_surface: HashMap<String, u32>,
    byte_ids: Option<[u32; 256]>,
    byte_of: HashMap<u32, u8>,
    max_surface_chars: usize,
}

impl Vocabulary {
    pub fn new(tokens: Vec<String>, marker: char) -> Result<Self, TokenizerError> {
        if tokens.is_empty() {
            return Err(TokenizerError::Empty);
        }
        let mut by_string = HashMap::with_capacity(tokens.len());
        let mut by_surface = HashMap::with_capacity(tokens.len());
        let mut byte_of = HashMap::new();
        let mut byte_slots: [Option<u32>; 256] = [None; 256];
        let mut max_surface_chars = 0;
        for (id, tok) in tokens.iter().enumerate() {
            let id = id as u32;
            if by_string.insert(tok.clone(), id).is_some() {
                return Err(TokenizerError::DuplicateToken(tok.clone()));
            }
            if let Some(b) = parse_byte_token(tok) {
                byte_slots[b as usize] = Some(id);
                byte_of.insert(id, b);
                continue;
            }
            if tok.is_empty() {
                continue;
            }
            let surface = tok.replace(marker, " ");
            max_surface_chars = max_surface_chars.max(surface.chars().count());
            by_surface.entry(surface).or_insert(id);
        }
        let byte_ids = if byte_of.is_empty() {
            None
        } else {
            let ids: Vec<u32> = byte_slots
                .iter()
                .map(|s| s.ok_or(TokenizerError::IncompleteByteBlock))
                .collect::<Result<_, _>>()?;
            if ids.windows(2).any(|w| w[1] != w[0] + 1) {
                return Err(TokenizerError::IncompleteByteBlock);
            }
            Some(ids.try_into().expect("256 ids"))
        };
        Ok(Self {
            tokens,
            marker,
            by_string,
            by_surface,
            byte_ids,
            byte_of,
            max_surface_chars,
        })
    }

    pub fn from_json_str(json: &str) -> Result<Self, TokenizerError> {
        let file: VocabFile = serde_json::from_str(json)?;
        let mut chars = file.whitespace_marker.chars();
        let marker = match (chars.next(), chars.next()) {
            (Some(c), None) => c,
            _ => DEFAULT_MARKER,
        };
        Self::new(file.tokens, marker)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TokenizerError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&VocabFile {
            tokens: self.tokens.clone(),
            whitespace_marker: self.marker.to_string(),
        })
        .expect("vocabulary serialises")
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn marker(&self) -> char {
        self.marker
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(String::as_str)
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.by_string.get(token).copied()
    }

    pub fn has_byte_tokens(&self) -> bool {
        self.byte_ids.is_some()
    }

    pub fn byte_id(&self, b: u8) -> Option<u32> {
        self.byte_ids.map(|ids| ids[b as usize])
    }

    pub fn is_byte_token(&self, id: u32) -> bool {
        self.byte_of.contains_key(&id)
    }

    /// Greedy longest match over surface forms; uncovered characters fall
    /// back to their UTF-8 byte tokens.
    pub fn encode(&self, text: &str) -> Result<TokenIdSequence, TokenizerError> {
        let mut ids = Vec::new();
        let boundaries: Vec<usize> = text
            .char_indices()
            .map(|(i, _)| i)
            .chain(std::iter::once(text.len()))
            .collect();
        let n_chars = boundaries.len() - 1;
        let mut at = 0;
        while at < n_chars {
            let longest = self.max_surface_chars.min(n_chars - at);
            let hit = (1..=longest).rev().find_map(|len| {
                let piece = &text[boundaries[at]..boundaries[at + len]];
                self.by_surface.get(piece).map(|&id| (id, len))
            });
            match hit {
                Some((id, len)) => {
                    ids.push(id);
                    at += len;
                }
                None => {
                    let piece = &text[boundaries[at]..boundaries[at + 1]];
                    let c = piece.chars().next().expect("non-empty char");
                    for b in piece.bytes() {
                        ids.push(self.byte_id(b).ok_or(TokenizerError::Unencodable(c))?);
                    }
                    at += 1;
                }
            }
        }
        Ok(TokenIdSequence(ids))
    }

    /// Concatenates surface forms, reassembling byte tokens. Malformed byte
    /// runs yield [`TokenizerError::InvalidUtf8`] carrying the lossy text.
    pub fn decode(&self, ids: &[u32]) -> Result<String, TokenizerError> {
        let mut bytes = Vec::new();
        for &id in ids {
            if let Some(&b) = self.byte_of.get(&id) {
                bytes.push(b);
            } else {
                let tok = self.token(id).ok_or(TokenizerError::IdOutOfRange(id))?;
                bytes.extend(tok.replace(self.marker, " ").into_bytes());
            }
        }
        String::from_utf8(bytes).map_err(|e| TokenizerError::InvalidUtf8 {
            lossy: String::from_utf8_lossy(e.as_bytes()).into_owned(),
        })
    }

    /// Token string with the marker rendered as a visible `_`-style glyph kept as is.
    pub fn display(&self, id: u32) -> String {
        self.token(id).unwrap_or("<?>").to_string()
    }

    /// `Start(w)`: every string token that is a prefix of `word` or of
    /// `marker + word` (the bare marker excluded), plus, with
    /// `include_bytes`, the byte token of the word's first UTF-8 byte.
    /// Sorted and deduplicated.
    pub fn prefix_token_set(&self, word: &str, include_bytes: bool) -> Vec<u32> {
        let mut out = BTreeSet::new();
        let spaced = format!("{}{}", self.marker, word);
        let marker_len = self.marker.len_utf8();
        for (text, skip) in [(word, 0), (spaced.as_str(), marker_len)] {
            for (i, c) in text.char_indices() {
                let end = i + c.len_utf8();
                if end <= skip {
                    continue;
                }
                let prefix = &text[..end];
                if let Some(&id) = self.by_string.get(prefix) {
                    if !self.byte_of.contains_key(&id) {
                        out.insert(id);
                    }
                }
            }
        }
        if include_bytes {
            if let Some(id) = word.bytes().next().and_then(|b| self.byte_id(b)) {
                out.insert(id);
            }
        }
        out.into_iter().collect()
    }

    /// True when the two words' start sets share a string token covering at
    /// least two characters of the word (the marker itself not counted).
    pub fn shares_token_prefix(&self, word_a: &str, word_b: &str) -> bool {
        let a: BTreeSet<u32> = self.prefix_token_set(word_a, false).into_iter().collect();
        self.prefix_token_set(word_b, false)
            .into_iter()
            .filter(|id| a.contains(id))
            .any(|id| {
                let tok = &self.tokens[id as usize];
                tok.chars().filter(|&c| c != self.marker).count() >= 2
            })
    }
}
