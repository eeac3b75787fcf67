//! Author, publication and grant records and their line-delimited JSON files.

use std::borrow::Borrow;
use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const AUTHORS_FILE: &str = "authors.jsonl";
pub const PUBLICATIONS_FILE: &str = "publications.jsonl";
pub const GRANTS_FILE: &str = "grants.jsonl";

pub const MIN_PUBLICATION_YEAR: i32 = 1900;

/// Default word-count threshold for grant titles.
pub const DEFAULT_MIN_TITLE_WORDS: usize = 5;

/// Grant titles containing any of these words are dropped before evaluation.
pub const DEFAULT_GRANT_STOP_TERMS: &[&str] = &[
    "studentship",
    "scholarship",
    "fellowship",
    "doctoral",
    "phd",
    "dtp",
    "cdt",
    "equipment",
    "travel",
    "conference",
    "workshop",
];

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub String);

        impl $name {
            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }

        impl From<&str> for $name {
            fn from(s: &str) -> Self {
                Self(s.to_string())
            }
        }

        impl From<String> for $name {
            fn from(s: String) -> Self {
                Self(s)
            }
        }
    };
}

string_id!(
    /// Opaque author identifier, unique within a corpus.
    AuthorId
);
string_id!(
    /// Opaque publication identifier.
    PubId
);

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuthorRecord {
    pub id: AuthorId,
    pub first_name: String,
    pub last_name: String,
    pub post: String,
    pub department: String,
    pub faculty: String,
}

impl AuthorRecord {
    pub fn display_name(&self) -> String {
        format!("{} {}", self.first_name, self.last_name).trim().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicationRecord {
    pub id: PubId,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub authors: Vec<AuthorId>,
    pub year: i32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GrantRecord {
    pub id: String,
    pub title: String,
    #[serde(default)]
    pub keywords: Vec<String>,
    pub holders: Vec<AuthorId>,
}

impl GrantRecord {
    /// The text used to query the engine for this grant: the title followed by
    /// its keywords.
    pub fn query_text(&self) -> String {
        let mut q = self.title.clone();
        for k in &self.keywords {
            q.push(' ');
            q.push_str(k);
        }
        q
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("io error on {path}: {source}")]
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
    #[error("{file}:{line}: invalid record: {message}")]
    Invalid {
        file: String,
        line: usize,
        message: String,
    },
    #[error("unknown author ids referenced: {}", .ids.join(", "))]
    UnknownAuthors { ids: Vec<String> },
    #[error("invalid synthetic corpus size: {0}")]
    InvalidSize(String),
}

/// A validated dataset. Records keep file order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    pub authors: Vec<AuthorRecord>,
    pub publications: Vec<PublicationRecord>,
    pub grants: Vec<GrantRecord>,
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Upper bound on publication years; `None` disables the check.
    pub max_year: Option<i32>,
}

impl Corpus {
    pub fn author_map(&self) -> BTreeMap<AuthorId, AuthorRecord> {
        self.authors.iter().map(|a| (a.id.clone(), a.clone())).collect()
    }

    pub fn max_year(&self) -> Option<i32> {
        self.publications.iter().map(|p| p.year).max()
    }

    /// Loads `authors.jsonl` and `publications.jsonl` from `dir`, plus
    /// `grants.jsonl` when present.
    pub fn load_dir(dir: &Path, opts: LoadOptions) -> Result<Self, CorpusError> {
        let (authors, publications) = load_corpus(dir, opts)?;
        let grants_path = dir.join(GRANTS_FILE);
        let grants = if grants_path.exists() {
            let known: HashSet<&str> = authors.iter().map(|a| a.id.as_str()).collect();
            let grants = load_grants(&grants_path)?;
            check_references(grants.iter().flat_map(|g| g.holders.iter()), &known)?;
            grants
        } else {
            Vec::new()
        };
        Ok(Self {
            authors,
            publications,
            grants,
        })
    }

    pub fn save_dir(&self, dir: &Path) -> Result<(), CorpusError> {
        std::fs::create_dir_all(dir).map_err(|source| io_err(dir, source))?;
        write_jsonl(&dir.join(AUTHORS_FILE), &self.authors)?;
        write_jsonl(&dir.join(PUBLICATIONS_FILE), &self.publications)?;
        write_jsonl(&dir.join(GRANTS_FILE), &self.grants)?;
        Ok(())
    }

    /// Serialized form of all three files, concatenated in a fixed order.
    pub fn to_jsonl_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for a in &self.authors {
            append_json_line(&mut out, a);
        }
        for p in &self.publications {
            append_json_line(&mut out, p);
        }
        for g in &self.grants {
            append_json_line(&mut out, g);
        }
        out
    }
}

fn append_json_line<T: Serialize>(out: &mut Vec<u8>, value: &T) {
    serde_json::to_writer(&mut *out, value).expect("records serialize");
    out.push(b'\n');
}

/// Loads and validates authors and publications from `dir`.
pub fn load_corpus(
    dir: &Path,
    opts: LoadOptions,
) -> Result<(Vec<AuthorRecord>, Vec<PublicationRecord>), CorpusError> {
    let authors = load_authors(&dir.join(AUTHORS_FILE))?;
    let publications = load_publications(&dir.join(PUBLICATIONS_FILE), opts)?;
    let known: HashSet<&str> = authors.iter().map(|a| a.id.as_str()).collect();
    check_references(publications.iter().flat_map(|p| p.authors.iter()), &known)?;
    Ok((authors, publications))
}

fn check_references<'a>(
    ids: impl Iterator<Item = &'a AuthorId>,
    known: &HashSet<&str>,
) -> Result<(), CorpusError> {
    let unknown: BTreeSet<String> = ids
        .filter(|id| !known.contains(id.as_str()))
        .map(|id| id.0.clone())
        .collect();
    if unknown.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::UnknownAuthors {
            ids: unknown.into_iter().collect(),
        })
    }
}

pub fn load_authors(path: &Path) -> Result<Vec<AuthorRecord>, CorpusError> {
    let file = file_name(path);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for_each_record::<AuthorRecord>(path, |line, a| {
        let invalid = |message: &str| CorpusError::Invalid {
            file: file.clone(),
            line,
            message: message.to_string(),
        };
        if a.id.as_str().is_empty() {
            return Err(invalid("empty author id"));
        }
        if a.department.trim().is_empty() {
            return Err(invalid("empty department"));
        }
        if a.post.trim().is_empty() {
            return Err(invalid("empty post"));
        }
        if !seen.insert(a.id.clone()) {
            return Err(invalid(&format!("duplicate author id {}", a.id)));
        }
        out.push(a);
        Ok(())
    })?;
    Ok(out)
}

pub fn load_publications(path: &Path, opts: LoadOptions) -> Result<Vec<PublicationRecord>, CorpusError> {
    let file = file_name(path);
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for_each_record::<PublicationRecord>(path, |line, p| {
        let invalid = |message: String| CorpusError::Invalid {
            file: file.clone(),
            line,
            message,
        };
        if p.authors.is_empty() {
            return Err(invalid("publication has no authors".into()));
        }
        if p.abstract_text.trim().is_empty() {
            return Err(invalid("empty abstract".into()));
        }
        let max = opts.max_year.unwrap_or(i32::MAX);
        if p.year < MIN_PUBLICATION_YEAR || p.year > max {
            return Err(invalid(format!("year {} out of range", p.year)));
        }
        if !seen.insert(p.id.clone()) {
            return Err(invalid(format!("duplicate publication id {}", p.id)));
        }
        out.push(p);
        Ok(())
    })?;
    Ok(out)
}

pub fn load_grants(path: &Path) -> Result<Vec<GrantRecord>, CorpusError> {
    let file = file_name(path);
    let mut out = Vec::new();
    for_each_record::<GrantRecord>(path, |line, g| {
        if g.holders.is_empty() || g.title.trim().is_empty() {
            return Err(CorpusError::Invalid {
                file: file.clone(),
                line,
                message: "grant needs a title and at least one holder".into(),
            });
        }
        out.push(g);
        Ok(())
    })?;
    Ok(out)
}

/// Streams a JSONL file one line at a time. Keys the record type does not
/// know are logged and skipped.
fn for_each_record<T: DeserializeOwned + Serialize>(
    path: &Path,
    mut f: impl FnMut(usize, T) -> Result<(), CorpusError>,
) -> Result<(), CorpusError> {
    let file = file_name(path);
    let reader = BufReader::new(File::open(path).map_err(|source| io_err(path, source))?);
    let mut warned = BTreeSet::new();
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|source| io_err(path, source))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            file: file.clone(),
            line: lineno,
            message: e.to_string(),
        })?;
        let record: T = serde_json::from_value(value.clone()).map_err(|e| CorpusError::Parse {
            file: file.clone(),
            line: lineno,
            message: e.to_string(),
        })?;
        if let Some(obj) = value.as_object() {
            let known = serde_json::to_value(&record).ok();
            for key in obj.keys() {
                let is_known = known
                    .as_ref()
                    .and_then(|k| k.as_object())
                    .is_some_and(|k| k.contains_key(key));
                if !is_known && warned.insert(key.clone()) {
                    log::warn!("{file}:{lineno}: ignoring unknown key {key:?}");
                }
            }
        }
        f(lineno, record)?;
    }
    Ok(())
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(|source| io_err(path, source))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| io_err(path, e.into()))?;
        w.write_all(b"\n").map_err(|source| io_err(path, source))?;
    }
    w.flush().map_err(|source| io_err(path, source))
}

fn io_err(path: &Path, source: std::io::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Drops grants whose titles are too short to be informative or mention a
/// stop term (funding for studentships, travel and the like). Stop terms match
/// whole words, case-insensitively.
pub fn filter_grants(grants: &[GrantRecord], stop_terms: &[&str], min_words: usize) -> Vec<GrantRecord> {
    let stop: Vec<Vec<String>> = stop_terms
        .iter()
        .map(|t| words(t).collect())
        .filter(|t: &Vec<String>| !t.is_empty())
        .collect();
    grants
        .iter()
        .filter(|g| {
            if g.title.split_whitespace().count() < min_words.max(1) {
                return false;
            }
            let title: Vec<String> = words(&g.title).collect();
            !stop
                .iter()
                .any(|term| title.windows(term.len()).any(|w| w == term.as_slice()))
        })
        .cloned()
        .collect()
}

fn words(s: &str) -> impl Iterator<Item = String> + '_ {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_lowercase())
}
