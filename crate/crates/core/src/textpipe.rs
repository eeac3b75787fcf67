//! Text normalization and n-gram feature extraction.
//!
//! Every consumer of text (profiles, embeddings, the knowledge base and query
//! parsing) goes through the same [`Pipeline`] so that a word is lemmatized the
//! same way wherever it appears.
//!
//! Part-of-speech filtering is approximated by an exclusion list of function
//! words, and lemmatization by a suffix-rule table with an exception table for
//! irregular forms. All three tables are plain-text data files that ship with
//! the crate and can be replaced for corpora in other domains.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");
pub const DEFAULT_LEMMA_RULES: &str = include_str!("../data/lemma_rules.tsv");
pub const DEFAULT_LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");

/// Suffix rules may not shorten a word below this many characters.
const MIN_STEM_LEN: usize = 3;
/// Tokens shorter than this are dropped before lemmatization.
const MIN_TOKEN_LEN: usize = 2;
const MAX_LEMMA_PASSES: usize = 4;

#[derive(Debug, Error)]
pub enum TextpipeError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
}

/// Lemmatized tokens of one text, in source order.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenStream {
    pub tokens: Vec<String>,
    /// Number of raw tokens before any filtering.
    pub source_len: usize,
    /// `contiguous[i]` is true when no token was removed between `tokens[i - 1]`
    /// and `tokens[i]`. Always false for `i == 0`.
    contiguous: Vec<bool>,
}

impl TokenStream {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Adjacent token pairs. With `gap_close` every consecutive pair of kept
    /// tokens counts; without it a removed token between two kept tokens breaks
    /// the pair.
    pub fn adjacent_pairs(&self, gap_close: bool) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.tokens
            .windows(2)
            .enumerate()
            .filter(move |(i, _)| gap_close || self.contiguous[i + 1])
            .map(|(_, w)| (w[0].as_str(), w[1].as_str()))
    }
}

/// Unigram and bigram features of one text. Bigrams are two lemmas joined by
/// a single space.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureSet {
    pub unigrams: BTreeSet<String>,
    pub bigrams: BTreeSet<String>,
}

impl FeatureSet {
    pub fn len(&self) -> usize {
        self.unigrams.len() + self.bigrams.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unigrams.is_empty() && self.bigrams.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &String> {
        self.bigrams.iter().chain(self.unigrams.iter())
    }
}

pub fn is_bigram(feature: &str) -> bool {
    feature.contains(' ')
}

pub fn join_bigram(left: &str, right: &str) -> String {
    let mut s = String::with_capacity(left.len() + right.len() + 1);
    s.push_str(left);
    s.push(' ');
    s.push_str(right);
    s
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct SuffixRule {
    suffix: String,
    replacement: String,
}

#[derive(Debug, PartialEq, Eq)]
struct Tables {
    stopwords: HashSet<String>,
    /// Sorted by suffix length, longest first.
    rules: Vec<SuffixRule>,
    exceptions: HashMap<String, String>,
    /// SHA-256 over the three source tables.
    digest: String,
}

/// The shared normalizer. Cheap to clone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pipeline {
    tables: Arc<Tables>,
    gap_close: bool,
}

impl Default for Pipeline {
    fn default() -> Self {
        Self::from_tables(
            DEFAULT_STOPWORDS,
            DEFAULT_LEMMA_RULES,
            DEFAULT_LEMMA_EXCEPTIONS,
        )
        .expect("bundled text tables are well-formed")
    }
}

impl Pipeline {
    /// Builds a pipeline from the contents of the three table files.
    pub fn from_tables(stopwords_src: &str, rules: &str, exceptions: &str) -> Result<Self, TextpipeError> {
        let stopwords = data_lines(stopwords_src)
            .map(|(_, l)| l.to_lowercase())
            .collect::<HashSet<_>>();

        let mut parsed_rules = Vec::new();
        for (line, text) in data_lines(rules) {
            let (suffix, replacement) = split_tsv(text, "lemma_rules.tsv", line)?;
            if suffix.is_empty() {
                return Err(TextpipeError::Parse {
                    file: "lemma_rules.tsv".into(),
                    line,
                    message: "empty suffix".into(),
                });
            }
            parsed_rules.push(SuffixRule {
                suffix: suffix.to_string(),
                replacement: replacement.to_string(),
            });
        }
        // Stable sort keeps file order among equal lengths.
        parsed_rules.sort_by_key(|r| std::cmp::Reverse(r.suffix.len()));

        let mut parsed_exceptions = HashMap::new();
        for (line, text) in data_lines(exceptions) {
            let (form, lemma) = split_tsv(text, "lemma_exceptions.tsv", line)?;
            if form.is_empty() || lemma.is_empty() {
                return Err(TextpipeError::Parse {
                    file: "lemma_exceptions.tsv".into(),
                    line,
                    message: "empty form or lemma".into(),
                });
            }
            parsed_exceptions.insert(form.to_string(), lemma.to_string());
        }

        let mut hasher = Sha256::new();
        for table in [stopwords_src, rules, exceptions] {
            hasher.update((table.len() as u64).to_le_bytes());
            hasher.update(table.as_bytes());
        }

        Ok(Self {
            tables: Arc::new(Tables {
                stopwords,
                rules: parsed_rules,
                exceptions: parsed_exceptions,
                digest: hex::encode(hasher.finalize()),
            }),
            gap_close: true,
        })
    }

    /// Loads `stopwords.txt`, `lemma_rules.tsv` and `lemma_exceptions.tsv`
    /// from `dir`.
    pub fn from_dir(dir: &Path) -> Result<Self, TextpipeError> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read_to_string(&path).map_err(|source| TextpipeError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        Self::from_tables(
            &read("stopwords.txt")?,
            &read("lemma_rules.tsv")?,
            &read("lemma_exceptions.tsv")?,
        )
    }

    pub fn with_gap_close(mut self, gap_close: bool) -> Self {
        self.gap_close = gap_close;
        self
    }

    pub fn gap_close(&self) -> bool {
        self.gap_close
    }

    /// Identifies the tables this pipeline was built from.
    pub fn tables_digest(&self) -> &str {
        &self.tables.digest
    }

    pub fn is_stopword(&self, word: &str) -> bool {
        self.tables.stopwords.contains(word)
    }

    /// Lemmatizes a single lowercase word. Applies the exception table, then
    /// the longest applicable suffix rule, repeating until the word is stable
    /// so that the result is always a fixpoint.
    pub fn lemmatize(&self, word: &str) -> String {
        let mut current = word.to_string();
        for _ in 0..MAX_LEMMA_PASSES {
            let next = self.lemmatize_once(&current);
            if next == current {
                break;
            }
            current = next;
        }
        current
    }

    fn lemmatize_once(&self, word: &str) -> String {
        if let Some(lemma) = self.tables.exceptions.get(word) {
            return lemma.clone();
        }
        // Alphanumeric tokens such as "3d" or "covid19" are kept verbatim.
        if word.chars().any(|c| c.is_ascii_digit()) {
            return word.to_string();
        }
        for rule in &self.tables.rules {
            let Some(stem) = word.strip_suffix(rule.suffix.as_str()) else {
                continue;
            };
            if stem.chars().count() < MIN_STEM_LEN || !has_vowel(stem) {
                continue;
            }
            let mut out = String::with_capacity(stem.len() + rule.replacement.len());
            out.push_str(stem);
            out.push_str(&rule.replacement);
            return out;
        }
        word.to_string()
    }

    /// Lowercases, tokenizes, drops punctuation, numerals and excluded words,
    /// and lemmatizes what remains.
    pub fn normalize(&self, raw: &str) -> TokenStream {
        let mut stream = TokenStream::default();
        let mut gap = true;
        for raw_token in raw.split(|c: char| !c.is_alphanumeric()) {
            if raw_token.is_empty() {
                // Separators are not tokens; only removed words open a gap.
                continue;
            }
            stream.source_len += 1;
            match self.keep(raw_token) {
                Some(lemma) => {
                    stream.contiguous.push(!gap && !stream.tokens.is_empty());
                    stream.tokens.push(lemma);
                    gap = false;
                }
                None => gap = true,
            }
        }
        stream
    }

    fn keep(&self, raw_token: &str) -> Option<String> {
        let lower = raw_token.to_lowercase();
        if lower.chars().count() < MIN_TOKEN_LEN || lower.chars().all(|c| c.is_numeric()) {
            return None;
        }
        if self.is_stopword(&lower) {
            return None;
        }
        let lemma = self.lemmatize(&lower);
        if self.is_stopword(&lemma) {
            return None;
        }
        Some(lemma)
    }

    /// Unigrams are the distinct tokens; bigrams are the distinct adjacent
    /// pairs (see [`TokenStream::adjacent_pairs`]).
    pub fn extract_features(&self, stream: &TokenStream) -> FeatureSet {
        FeatureSet {
            unigrams: stream.tokens.iter().cloned().collect(),
            bigrams: stream
                .adjacent_pairs(self.gap_close)
                .map(|(l, r)| join_bigram(l, r))
                .collect(),
        }
    }

    pub fn features(&self, raw: &str) -> FeatureSet {
        self.extract_features(&self.normalize(raw))
    }

    /// Normalizes a multi-word term and joins the tokens with single spaces,
    /// e.g. "Frameworks" becomes "framework".
    pub fn normalize_term(&self, raw: &str) -> String {
        self.normalize(raw).tokens.join(" ")
    }
}

fn has_vowel(s: &str) -> bool {
    s.chars().any(|c| matches!(c, 'a' | 'e' | 'i' | 'o' | 'u' | 'y'))
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn split_tsv<'a>(line: &'a str, file: &str, lineno: usize) -> Result<(&'a str, &'a str), TextpipeError> {
    let mut parts = line.splitn(2, '\t');
    let left = parts.next().unwrap_or_default().trim();
    let right = parts.next().ok_or_else(|| TextpipeError::Parse {
        file: file.into(),
        line: lineno,
        message: "expected two tab-separated columns".into(),
    })?;
    Ok((left, right.trim()))
}
