//! CBOW word vectors trained on the corpus abstracts, with cosine
//! nearest-neighbour lookup.
//!
//! Training follows word2vec's continuous bag of words with negative sampling:
//! the mean of the context vectors predicts the centre word against `negative`
//! words drawn from the unigram distribution raised to 0.75. Learning rate
//! decays linearly over all epochs. A single seed drives initialization,
//! window shrinking and negative draws, so training is reproducible.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap, HashMap};
use std::io::{BufRead, Write};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::PublicationRecord;
use crate::textpipe::Pipeline;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("vocabulary is empty after discarding words seen fewer than {min_count} times")]
    EmptyVocabulary { min_count: usize },
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("vector for {word:?} is {problem}")]
    BadVector { word: String, problem: &'static str },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub window: usize,
    pub min_count: usize,
    pub dim: usize,
    pub epochs: usize,
    pub negative: usize,
    pub initial_lr: f64,
    pub seed: u64,
    /// Shards trained independently per epoch and then averaged. The result
    /// depends on this value but is reproducible for any fixed value.
    pub workers: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            window: 5,
            min_count: 10,
            dim: 100,
            epochs: 5,
            negative: 5,
            initial_lr: 0.025,
            seed: 1,
            workers: 1,
        }
    }
}

impl TrainingConfig {
    fn validate(&self) -> Result<(), EmbeddingError> {
        let positive = [
            ("window", self.window),
            ("min_count", self.min_count),
            ("dim", self.dim),
            ("epochs", self.epochs),
            ("negative", self.negative),
            ("workers", self.workers),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(EmbeddingError::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if !(self.initial_lr > 0.0 && self.initial_lr.is_finite()) {
            return Err(EmbeddingError::InvalidConfig("initial_lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingReport {
    /// Mean negative-sampling loss per predicted word, one entry per epoch.
    pub epoch_losses: Vec<f64>,
    /// Corpus frequency of every vocabulary word.
    pub vocab_counts: BTreeMap<String, u64>,
    pub training_tokens: u64,
}

/// Vocabulary and vectors. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    words: Vec<String>,
    index: HashMap<String, usize>,
    dim: usize,
    vectors: Vec<f32>,
    norms: Vec<f64>,
    /// Row-wise unit vectors in f64, used for cosine scans.
    unit: Vec<f64>,
}

impl EmbeddingTable {
    /// Builds a table from explicit vectors. Every vector must have the same
    /// length, finite entries and a non-zero norm.
    pub fn from_vectors(entries: Vec<(String, Vec<f32>)>) -> Result<Self, EmbeddingError> {
        let dim = entries.first().map_or(0, |(_, v)| v.len());
        if dim == 0 {
            return Err(EmbeddingError::InvalidConfig("vectors must be non-empty".into()));
        }
        let mut words = Vec::with_capacity(entries.len());
        let mut vectors = Vec::with_capacity(entries.len() * dim);
        for (word, v) in entries {
            if v.len() != dim {
                return Err(EmbeddingError::BadVector {
                    word,
                    problem: "of the wrong dimension",
                });
            }
            vectors.extend_from_slice(&v);
            words.push(word);
        }
        Self::from_parts(words, dim, vectors)
    }

    fn from_parts(words: Vec<String>, dim: usize, vectors: Vec<f32>) -> Result<Self, EmbeddingError> {
        let mut index = HashMap::with_capacity(words.len());
        let mut norms = Vec::with_capacity(words.len());
        let mut unit = Vec::with_capacity(vectors.len());
        for (i, word) in words.iter().enumerate() {
            let row = &vectors[i * dim..(i + 1) * dim];
            if row.iter().any(|x| !x.is_finite()) {
                return Err(EmbeddingError::BadVector {
                    word: word.clone(),
                    problem: "not finite",
                });
            }
            let norm = row.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            if norm <= 0.0 {
                return Err(EmbeddingError::BadVector {
                    word: word.clone(),
                    problem: "zero",
                });
            }
            if index.insert(word.clone(), i).is_some() {
                return Err(EmbeddingError::BadVector {
                    word: word.clone(),
                    problem: "duplicated",
                });
            }
            norms.push(norm);
            unit.extend(row.iter().map(|&x| f64::from(x) / norm));
        }
        Ok(Self {
            words,
            index,
            dim,
            vectors,
            norms,
            unit,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn contains(&self, word: &str) -> bool {
        self.index.contains_key(word)
    }

    pub fn vector(&self, word: &str) -> Option<&[f32]> {
        let i = *self.index.get(word)?;
        Some(&self.vectors[i * self.dim..(i + 1) * self.dim])
    }

    pub fn norm(&self, word: &str) -> Option<f64> {
        self.index.get(word).map(|&i| self.norms[i])
    }

    fn unit_row(&self, i: usize) -> &[f64] {
        &self.unit[i * self.dim..(i + 1) * self.dim]
    }

    pub fn cosine(&self, a: &str, b: &str) -> Option<f64> {
        let (&i, &j) = (self.index.get(a)?, self.index.get(b)?);
        Some(dot(self.unit_row(i), self.unit_row(j)))
    }

    /// The `k` words most similar to `word` by cosine, best first, excluding
    /// `word` itself. Ties go to the lexicographically smaller word. A word
    /// outside the vocabulary has no neighbours.
    pub fn nearest_words(&self, word: &str, k: usize) -> Vec<(String, f64)> {
        let Some(&qi) = self.index.get(word) else {
            return Vec::new();
        };
        if k == 0 {
            return Vec::new();
        }
        let q = self.unit_row(qi);
        // Min-heap on (cosine, reversed word) keeps the best k.
        let mut heap: BinaryHeap<std::cmp::Reverse<Candidate<'_>>> = BinaryHeap::with_capacity(k + 1);
        for (i, w) in self.words.iter().enumerate() {
            if i == qi {
                continue;
            }
            let c = Candidate {
                cosine: dot(q, self.unit_row(i)),
                word: w,
            };
            if heap.len() < k {
                heap.push(std::cmp::Reverse(c));
            } else if let Some(worst) = heap.peek() {
                if c > worst.0 {
                    heap.pop();
                    heap.push(std::cmp::Reverse(c));
                }
            }
        }
        let mut out: Vec<Candidate<'_>> = heap.into_iter().map(|r| r.0).collect();
        out.sort_by(|a, b| b.cmp(a));
        out.into_iter().map(|c| (c.word.clone(), c.cosine)).collect()
    }

    /// Writes the common text interchange format: a `count dim` header, then
    /// one `word v1 ... vd` line per word.
    pub fn write_text<W: Write>(&self, mut w: W) -> Result<(), EmbeddingError> {
        writeln!(w, "{} {}", self.words.len(), self.dim)?;
        for (i, word) in self.words.iter().enumerate() {
            write!(w, "{word}")?;
            for x in &self.vectors[i * self.dim..(i + 1) * self.dim] {
                write!(w, " {x}")?;
            }
            writeln!(w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self, EmbeddingError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or(EmbeddingError::Parse {
            line: 1,
            message: "missing header".into(),
        })??;
        let mut parts = header.split_whitespace();
        let parse_usize = |s: Option<&str>| -> Result<usize, EmbeddingError> {
            s.and_then(|s| s.parse().ok()).ok_or(EmbeddingError::Parse {
                line: 1,
                message: "header must be `count dim`".into(),
            })
        };
        let count = parse_usize(parts.next())?;
        let dim = parse_usize(parts.next())?;
        let mut words = Vec::with_capacity(count);
        let mut vectors = Vec::with_capacity(count * dim);
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split_whitespace();
            let word = fields.next().unwrap_or_default().to_string();
            let before = vectors.len();
            for f in fields {
                vectors.push(f.parse::<f32>().map_err(|e| EmbeddingError::Parse {
                    line: lineno,
                    message: e.to_string(),
                })?);
            }
            if vectors.len() - before != dim {
                return Err(EmbeddingError::Parse {
                    line: lineno,
                    message: format!("expected {dim} components"),
                });
            }
            words.push(word);
        }
        if words.len() != count {
            return Err(EmbeddingError::Parse {
                line: 1,
                message: format!("header declares {count} words, found {}", words.len()),
            });
        }
        Self::from_parts(words, dim, vectors)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate<'a> {
    cosine: f64,
    word: &'a String,
}

impl PartialEq for Candidate<'_> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate<'_> {}

impl PartialOrd for Candidate<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate<'_> {
    /// Greater means better: higher cosine, then smaller word.
    fn cmp(&self, other: &Self) -> Ordering {
        self.cosine
            .total_cmp(&other.cosine)
            .then_with(|| other.word.cmp(self.word))
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Normalizes every abstract with `pipeline` and trains on the resulting
/// token streams, one sentence per abstract.
pub fn train_cbow(
    publications: &[PublicationRecord],
    pipeline: &Pipeline,
    cfg: &TrainingConfig,
) -> Result<(EmbeddingTable, TrainingReport), EmbeddingError> {
    let sentences: Vec<Vec<String>> = publications
        .iter()
        .map(|p| pipeline.normalize(&p.abstract_text).tokens)
        .collect();
    train_on_sentences(&sentences, cfg)
}

struct Vocab {
    words: Vec<String>,
    counts: Vec<u64>,
    index: HashMap<String, usize>,
}

fn build_vocab(sentences: &[Vec<String>], min_count: usize) -> Vocab {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for s in sentences {
        for w in s {
            *counts.entry(w.as_str()).or_default() += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_count as u64)
        .collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let words: Vec<String> = kept.iter().map(|(w, _)| w.to_string()).collect();
    let index = words.iter().enumerate().map(|(i, w)| (w.clone(), i)).collect();
    Vocab {
        counts: kept.iter().map(|&(_, c)| c).collect(),
        words,
        index,
    }
}

/// Cumulative unigram^0.75 distribution for negative draws.
struct NegativeSampler {
    cumulative: Vec<f64>,
}

impl NegativeSampler {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += (c as f64).powf(0.75);
                acc
            })
            .collect();
        Self { cumulative }
    }

    fn draw(&self, rng: &mut StdRng) -> usize {
        let total = *self.cumulative.last().unwrap();
        let x = rng.random::<f64>() * total;
        self.cumulative
            .partition_point(|&c| c <= x)
            .min(self.cumulative.len() - 1)
    }
}

#[derive(Clone)]
struct Weights {
    input: Vec<f32>,
    output: Vec<f32>,
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

struct Trainer<'a> {
    cfg: &'a TrainingConfig,
    sampler: &'a NegativeSampler,
    total_words: f64,
}

impl Trainer<'_> {
    /// One pass over `sentences`. Returns (summed loss, predicted words).
    fn run(&self, w: &mut Weights, sentences: &[Vec<usize>], rng: &mut StdRng, words_done: &mut f64) -> (f64, u64) {
        let dim = self.cfg.dim;
        let mut hidden = vec![0f64; dim];
        let mut grad = vec![0f64; dim];
        let mut loss = 0.0;
        let mut predicted = 0u64;
        for sentence in sentences {
            for (pos, &target) in sentence.iter().enumerate() {
                let progress = *words_done / self.total_words;
                *words_done += 1.0;
                let lr = self.cfg.initial_lr * (1.0 - progress).max(1e-4);

                let shrink = rng.random_range(0..self.cfg.window);
                let reach = self.cfg.window - shrink;
                let lo = pos.saturating_sub(reach);
                let hi = (pos + reach).min(sentence.len() - 1);
                let context: Vec<usize> = (lo..=hi).filter(|&j| j != pos).map(|j| sentence[j]).collect();
                if context.is_empty() {
                    continue;
                }

                hidden.iter_mut().for_each(|h| *h = 0.0);
                for &c in &context {
                    for (h, &x) in hidden.iter_mut().zip(&w.input[c * dim..(c + 1) * dim]) {
                        *h += f64::from(x);
                    }
                }
                let inv = 1.0 / context.len() as f64;
                hidden.iter_mut().for_each(|h| *h *= inv);
                grad.iter_mut().for_each(|g| *g = 0.0);

                for d in 0..=self.cfg.negative {
                    let (word, label) = if d == 0 {
                        (target, 1.0)
                    } else {
                        let n = self.sampler.draw(rng);
                        if n == target {
                            continue;
                        }
                        (n, 0.0)
                    };
                    let out = &mut w.output[word * dim..(word + 1) * dim];
                    let score: f64 = hidden.iter().zip(out.iter()).map(|(h, &o)| h * f64::from(o)).sum();
                    let p = sigmoid(score);
                    loss -= if label > 0.5 { p.max(1e-12).ln() } else { (1.0 - p).max(1e-12).ln() };
                    let g = (label - p) * lr;
                    for ((gr, o), h) in grad.iter_mut().zip(out.iter_mut()).zip(&hidden) {
                        *gr += g * f64::from(*o);
                        *o += (g * h) as f32;
                    }
                }
                for &c in &context {
                    for (x, gr) in w.input[c * dim..(c + 1) * dim].iter_mut().zip(&grad) {
                        *x += (gr * inv) as f32;
                    }
                }
                predicted += 1;
            }
        }
        (loss, predicted)
    }
}

/// Trains on pre-normalized token streams.
pub fn train_on_sentences(
    sentences: &[Vec<String>],
    cfg: &TrainingConfig,
) -> Result<(EmbeddingTable, TrainingReport), EmbeddingError> {
    cfg.validate()?;
    let vocab = build_vocab(sentences, cfg.min_count);
    if vocab.words.is_empty() {
        return Err(EmbeddingError::EmptyVocabulary {
            min_count: cfg.min_count,
        });
    }
    let encoded: Vec<Vec<usize>> = sentences
        .iter()
        .map(|s| s.iter().filter_map(|w| vocab.index.get(w).copied()).collect::<Vec<_>>())
        .filter(|s| s.len() > 1)
        .collect();
    let training_tokens: u64 = encoded.iter().map(|s| s.len() as u64).sum();

    let dim = cfg.dim;
    let n = vocab.words.len();
    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let bound = 0.5 / dim as f32;
    let mut weights = Weights {
        input: (0..n * dim).map(|_| rng.random_range(-bound..bound)).collect(),
        output: vec![0.0; n * dim],
    };
    let sampler = NegativeSampler::new(&vocab.counts);
    let trainer = Trainer {
        cfg,
        sampler: &sampler,
        total_words: (training_tokens * cfg.epochs as u64).max(1) as f64,
    };

    let workers = cfg.workers.min(encoded.len().max(1));
    let chunk = encoded.len().div_ceil(workers).max(1);
    let shards: Vec<&[Vec<usize>]> = encoded.chunks(chunk).collect();
    let mut shard_rngs: Vec<StdRng> = (0..shards.len())
        .map(|i| StdRng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))))
        .collect();

    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let base_done = (epoch as u64 * training_tokens) as f64;
        if shards.len() <= 1 {
            let mut done = base_done;
            let (loss, count) = trainer.run(&mut weights, &encoded, &mut rng, &mut done);
            epoch_losses.push(loss / count.max(1) as f64);
            continue;
        }
        let results = run_shards(&trainer, &weights, &shards, &mut shard_rngs, base_done);
        let mut total_loss = 0.0;
        let mut total_count = 0;
        let scale = 1.0 / results.len() as f32;
        let mut input = vec![0f32; weights.input.len()];
        let mut output = vec![0f32; weights.output.len()];
        for (w, loss, count) in &results {
            for (acc, x) in input.iter_mut().zip(&w.input) {
                *acc += x * scale;
            }
            for (acc, x) in output.iter_mut().zip(&w.output) {
                *acc += x * scale;
            }
            total_loss += loss;
            total_count += count;
        }
        weights = Weights { input, output };
        epoch_losses.push(total_loss / total_count.max(1) as f64);
    }

    let table = EmbeddingTable::from_parts(vocab.words.clone(), dim, weights.input)?;
    let report = TrainingReport {
        epoch_losses,
        vocab_counts: vocab.words.into_iter().zip(vocab.counts).collect(),
        training_tokens,
    };
    Ok((table, report))
}

fn run_shards(
    trainer: &Trainer<'_>,
    weights: &Weights,
    shards: &[&[Vec<usize>]],
    rngs: &mut [StdRng],
    base_done: f64,
) -> Vec<(Weights, f64, u64)> {
    let work = |(shard, rng): (&&[Vec<usize>], &mut StdRng)| {
        let mut w = weights.clone();
        // Each shard sees the schedule as if it were the whole epoch.
        let scale = shards.len() as f64;
        let mut done = base_done / scale;
        let sub = Trainer {
            cfg: trainer.cfg,
            sampler: trainer.sampler,
            total_words: trainer.total_words / scale,
        };
        let (loss, count) = sub.run(&mut w, shard, rng, &mut done);
        (w, loss, count)
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        shards.par_iter().zip(rngs.par_iter_mut()).map(work).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        shards.iter().zip(rngs.iter_mut()).map(work).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> EmbeddingTable {
        EmbeddingTable::from_vectors(vec![
            ("alpha".into(), vec![1.0, 0.0, 0.0]),
            ("beta".into(), vec![0.9, 0.1, 0.0]),
            ("gamma".into(), vec![0.0, 1.0, 0.0]),
            ("delta".into(), vec![0.9, 0.1, 0.0]),
            ("eps".into(), vec![-1.0, 0.0, 0.0]),
        ])
        .unwrap()
    }

    #[test]
    fn self_is_never_a_neighbour() {
        let t = table();
        let n = t.nearest_words("alpha", 10);
        assert_eq!(n.len(), 4);
        assert!(n.iter().all(|(w, _)| w != "alpha"));
        assert!((t.cosine("alpha", "alpha").unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ties_break_lexicographically() {
        let t = table();
        let n = t.nearest_words("alpha", 2);
        assert_eq!(n[0].0, "beta");
        assert_eq!(n[1].0, "delta");
        assert_eq!(n[0].1, n[1].1);
    }

    #[test]
    fn unknown_word_has_no_neighbours() {
        assert!(table().nearest_words("zeta", 5).is_empty());
    }

    #[test]
    fn k_bounds_result_length() {
        let t = table();
        assert_eq!(t.nearest_words("gamma", 1).len(), 1);
        assert!(t.nearest_words("gamma", 25).len() <= 25);
    }

    #[test]
    fn bad_vectors_are_rejected() {
        assert!(EmbeddingTable::from_vectors(vec![("z".into(), vec![0.0, 0.0])]).is_err());
        assert!(EmbeddingTable::from_vectors(vec![("n".into(), vec![f32::NAN, 1.0])]).is_err());
        assert!(EmbeddingTable::from_vectors(vec![("a".into(), vec![1.0]), ("b".into(), vec![1.0, 2.0])]).is_err());
    }

    #[test]
    fn text_format_round_trips() {
        let t = table();
        let mut buf = Vec::new();
        t.write_text(&mut buf).unwrap();
        assert!(buf.starts_with(b"5 3\n"));
        let back = EmbeddingTable::read_text(&buf[..]).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn text_format_errors_carry_line_numbers() {
        let err = EmbeddingTable::read_text(&b"2 2\na 1 0\nb 1\n"[..]).unwrap_err();
        assert!(matches!(err, EmbeddingError::Parse { line: 3, .. }));
    }

    #[test]
    fn rare_words_are_pruned() {
        let mut sentences = vec![vec!["common".to_string(), "word".to_string()]; 10];
        sentences.push(vec!["rare".into(), "common".into()]);
        let cfg = TrainingConfig {
            dim: 8,
            epochs: 1,
            ..TrainingConfig::default()
        };
        let (t, report) = train_on_sentences(&sentences, &cfg).unwrap();
        assert!(!t.contains("rare"));
        assert!(t.contains("common") && t.contains("word"));
        assert_eq!(report.vocab_counts["common"], 11);
    }

    #[test]
    fn empty_vocabulary_is_an_error() {
        let sentences = vec![vec!["once".to_string()]];
        assert!(matches!(
            train_on_sentences(&sentences, &TrainingConfig::default()),
            Err(EmbeddingError::EmptyVocabulary { min_count: 10 })
        ));
    }

    #[test]
    fn zero_parameters_are_rejected() {
        let cfg = TrainingConfig {
            window: 0,
            ..TrainingConfig::default()
        };
        assert!(matches!(
            train_on_sentences(&[vec!["a".into()]], &cfg),
            Err(EmbeddingError::InvalidConfig(_))
        ));
    }

    #[test]
    fn training_is_deterministic() {
        let sentences: Vec<Vec<String>> = (0..40)
            .map(|i| {
                ["red", "green", "blue", "cyan", "magenta"]
                    .iter()
                    .cycle()
                    .skip(i % 5)
                    .take(6)
                    .map(|s| s.to_string())
                    .collect()
            })
            .collect();
        for workers in [1, 3] {
            let cfg = TrainingConfig {
                dim: 16,
                workers,
                ..TrainingConfig::default()
            };
            let (a, ra) = train_on_sentences(&sentences, &cfg).unwrap();
            let (b, rb) = train_on_sentences(&sentences, &cfg).unwrap();
            assert_eq!(a, b);
            assert_eq!(ra, rb);
            assert_eq!(a.dim(), 16);
        }
    }
}
