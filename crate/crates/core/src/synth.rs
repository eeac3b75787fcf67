//! Seeded synthetic corpora.
//!
//! Abstracts are stitched together from topic phrases and topic words joined
//! only by excluded function words, so every content token of an abstract
//! belongs to that abstract's topic. Topic terms therefore co-occur the way
//! field vocabulary does in real abstracts, which gives the embedding trainer
//! something to learn and makes cross-topic leakage checkable.

use rand::rngs::StdRng;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorId, AuthorRecord, Corpus, CorpusError, GrantRecord, PubId, PublicationRecord};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Topic {
    pub name: String,
    pub department: String,
    pub faculty: String,
    /// Two-word phrases that appear verbatim in abstracts.
    pub phrases: Vec<String>,
    pub words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub topics: Vec<Topic>,
}

fn topic(name: &str, department: &str, faculty: &str, phrases: &[&str], words: &[&str]) -> Topic {
    Topic {
        name: name.into(),
        department: department.into(),
        faculty: faculty.into(),
        phrases: phrases.iter().map(|s| s.to_string()).collect(),
        words: words.iter().map(|s| s.to_string()).collect(),
    }
}

impl Default for TopicSpec {
    /// Six topics over five departments with pairwise disjoint vocabularies.
    fn default() -> Self {
        Self {
            topics: vec![
                topic(
                    "machine learning",
                    "Computing",
                    "Engineering",
                    &[
                        "neural network",
                        "deep learning",
                        "gradient descent",
                        "reinforcement learning",
                        "language modelling",
                        "sentiment analysis",
                        "attention mechanism",
                        "feature extraction",
                        "domain adaptation",
                        "generative adversarial",
                    ],
                    &[
                        "classifier", "convolutional", "transformer", "backpropagation", "regularization",
                        "overfitting", "dropout", "softmax", "encoder", "decoder", "tokenizer", "perceptron",
                    ],
                ),
                topic(
                    "formal verification",
                    "Computing",
                    "Engineering",
                    &[
                        "model checking",
                        "theorem proving",
                        "program specification",
                        "symbolic execution",
                        "temporal logic",
                        "abstract interpretation",
                        "type system",
                        "separation logic",
                        "proof assistant",
                        "invariant inference",
                    ],
                    &[
                        "satisfiability", "soundness", "refinement", "predicate", "automaton", "bisimulation",
                        "coq", "isabelle", "hoare", "lemma", "toolchain", "correctness",
                    ],
                ),
                topic(
                    "medical imaging",
                    "Bioengineering",
                    "Engineering",
                    &[
                        "image segmentation",
                        "magnetic resonance",
                        "landmark detection",
                        "tissue classification",
                        "ultrasound probe",
                        "tumour margin",
                        "cardiac motion",
                        "brain atlas",
                        "scan registration",
                        "lesion volume",
                    ],
                    &[
                        "mri", "voxel", "radiology", "slice", "contrast", "neuroscience", "anatomy", "biopsy",
                        "tomography", "histology", "clinician", "patient",
                    ],
                ),
                topic(
                    "quantum physics",
                    "Physics",
                    "Natural Sciences",
                    &[
                        "quantum entanglement",
                        "spin chain",
                        "photon source",
                        "quantum sensing",
                        "cold atom",
                        "optical lattice",
                        "qubit decoherence",
                        "superconducting circuit",
                        "wave packet",
                        "topological phase",
                    ],
                    &[
                        "hamiltonian", "fermion", "boson", "interferometer", "laser", "cryostat", "magnon",
                        "polariton", "coherence", "hilbert", "eigenstate", "squeezing",
                    ],
                ),
                topic(
                    "fluid dynamics",
                    "Mechanical Engineering",
                    "Engineering",
                    &[
                        "turbulent flow",
                        "boundary layer",
                        "heat transfer",
                        "vortex shedding",
                        "wind tunnel",
                        "navier stokes",
                        "combustion chamber",
                        "pressure drop",
                        "jet engine",
                        "drag reduction",
                    ],
                    &[
                        "viscosity", "reynolds", "aerofoil", "nozzle", "compressor", "eddy", "rotor",
                        "impeller", "mach", "shockwave", "vorticity", "nusselt",
                    ],
                ),
                topic(
                    "number theory",
                    "Mathematics",
                    "Natural Sciences",
                    &[
                        "prime number",
                        "elliptic curve",
                        "modular form",
                        "galois representation",
                        "zeta function",
                        "diophantine equation",
                        "class field",
                        "arithmetic geometry",
                        "automorphic form",
                        "sieve method",
                    ],
                    &[
                        "conjecture", "congruence", "cohomology", "adelic", "padic", "isogeny", "totient",
                        "divisor", "integer", "arithmetic", "langlands", "residue",
                    ],
                ),
            ],
        }
    }
}

impl TopicSpec {
    /// Two topics with disjoint vocabularies, used to check that trained word
    /// vectors separate them.
    pub fn two_topics() -> Self {
        let all = Self::default();
        Self {
            topics: vec![all.topics[0].clone(), all.topics[3].clone()],
        }
    }

    /// A knowledge-base file over the topics: each topic's first phrase is a
    /// subject whose children are the next four phrases, each with one of the
    /// remaining phrases as its own child.
    pub fn taxonomy_json(&self) -> String {
        let subjects: Vec<serde_json::Value> = self
            .topics
            .iter()
            .filter(|t| !t.phrases.is_empty())
            .map(|t| {
                let n = t.phrases.len();
                let children: Vec<serde_json::Value> = (1..n.min(5))
                    .map(|i| {
                        let grandchildren: Vec<&String> = t.phrases.get(i + 4).into_iter().collect();
                        serde_json::json!({ "term": t.phrases[i], "children": grandchildren })
                    })
                    .collect();
                serde_json::json!({ "term": t.phrases[0], "children": children })
            })
            .collect();
        serde_json::to_string_pretty(&subjects).expect("taxonomy serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_authors: usize,
    pub n_papers: usize,
    pub n_grants: usize,
    pub reference_year: i32,
    /// Fraction (in percent) of grants given uninformative titles that the
    /// grant filter is expected to remove.
    pub noise_grant_percent: u32,
}

impl SynthConfig {
    pub fn new(seed: u64, n_authors: usize, n_papers: usize) -> Self {
        Self {
            seed,
            n_authors,
            n_papers,
            n_grants: n_papers / 5,
            reference_year: 2020,
            noise_grant_percent: 10,
        }
    }
}

const FIRST_NAMES: &[&str] = &[
    "Ada", "Alan", "Barbara", "Claude", "Dana", "Edsger", "Emmy", "Frances", "Grace", "Hedy", "Ivan", "Joan",
    "Karen", "Leslie", "Maryam", "Niklaus", "Olga", "Peter", "Radia", "Sophie", "Tim", "Ursula", "Vint", "Yuki",
];
const LAST_NAMES: &[&str] = &[
    "Allen", "Babbage", "Cook", "Dijkstra", "Easley", "Floyd", "Goldwasser", "Hopper", "Iverson", "Jones",
    "Knuth", "Liskov", "Milner", "Noether", "Ostrom", "Perlman", "Quinlan", "Ritchie", "Shannon", "Turing",
    "Valiant", "Wirth", "Yao", "Zuse",
];
const POSTS: &[&str] = &["professor", "reader", "lecturer", "researcher"];

/// Sentence frames. `#` is a topic phrase, `@` a topic word; every other word
/// is on the exclusion list.
const FRAMES: &[&str] = &[
    "# of the @ for #.",
    "In this @ we # with @ @.",
    "Our # and the @ of #.",
    "These @ for # are @.",
    "With #, we @ the # into @.",
    "Its @ @ on #.",
    "We # and # with our @.",
];

/// Generates a corpus with `n_papers / 5` grants and 2020 as the latest year.
pub fn generate_synthetic_corpus(
    seed: u64,
    n_authors: usize,
    n_papers: usize,
    topics: &TopicSpec,
) -> Result<Corpus, CorpusError> {
    generate(&SynthConfig::new(seed, n_authors, n_papers), topics)
}

struct SynthAuthor {
    record: AuthorRecord,
    topics: Vec<usize>,
}

pub fn generate(cfg: &SynthConfig, spec: &TopicSpec) -> Result<Corpus, CorpusError> {
    if cfg.n_authors == 0 {
        return Err(CorpusError::InvalidSize("n_authors must be at least 1".into()));
    }
    if cfg.n_papers < cfg.n_authors {
        return Err(CorpusError::InvalidSize(format!(
            "n_papers ({}) must be at least n_authors ({})",
            cfg.n_papers, cfg.n_authors
        )));
    }
    if spec.topics.is_empty() || spec.topics.iter().any(|t| t.phrases.is_empty() || t.words.is_empty()) {
        return Err(CorpusError::InvalidSize("every topic needs phrases and words".into()));
    }

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let n_topics = spec.topics.len();

    let mut authors = Vec::with_capacity(cfg.n_authors);
    for i in 0..cfg.n_authors {
        let k = rng.random_range(1..=n_topics.min(3));
        let mut topics: Vec<usize> = rand::seq::index::sample(&mut rng, n_topics, k).into_vec();
        topics.sort_unstable();
        let home = &spec.topics[topics[0]];
        let record = AuthorRecord {
            id: AuthorId(format!("a{i:04}")),
            first_name: FIRST_NAMES.choose(&mut rng).unwrap().to_string(),
            last_name: LAST_NAMES.choose(&mut rng).unwrap().to_string(),
            post: POSTS.choose(&mut rng).unwrap().to_string(),
            department: home.department.clone(),
            faculty: home.faculty.clone(),
        };
        authors.push(SynthAuthor { record, topics });
    }

    // Authors by topic, for picking coauthors.
    let mut by_topic = vec![Vec::new(); n_topics];
    for (i, a) in authors.iter().enumerate() {
        for &t in &a.topics {
            by_topic[t].push(i);
        }
    }

    let mut publications = Vec::with_capacity(cfg.n_papers);
    let mut paper_phrases = Vec::with_capacity(cfg.n_papers);
    let mut paper_topics = Vec::with_capacity(cfg.n_papers);
    for j in 0..cfg.n_papers {
        let lead = if j < cfg.n_authors {
            j
        } else {
            rng.random_range(0..cfg.n_authors)
        };
        let topic_idx = *authors[lead].topics.choose(&mut rng).unwrap();
        let extra = match rng.random_range(0..100) {
            0..=54 => 0,
            55..=84 => 1,
            85..=95 => 2,
            _ => 3,
        };
        let mut pool: Vec<usize> = by_topic[topic_idx].iter().copied().filter(|&a| a != lead).collect();
        pool.shuffle(&mut rng);
        let mut members = vec![lead];
        members.extend(pool.into_iter().take(extra));

        let age = if rng.random_range(0..100) < 85 {
            rng.random_range(0..20)
        } else {
            rng.random_range(20..30)
        };
        let (text, used) = abstract_text(&mut rng, &spec.topics[topic_idx]);
        publications.push(PublicationRecord {
            id: PubId(format!("p{j:05}")),
            abstract_text: text,
            authors: members.iter().map(|&m| authors[m].record.id.clone()).collect(),
            year: cfg.reference_year - age,
        });
        paper_phrases.push(used);
        paper_topics.push(topic_idx);
    }

    let mut grants = Vec::with_capacity(cfg.n_grants);
    for g in 0..cfg.n_grants {
        let j = rng.random_range(0..cfg.n_papers);
        let topic = &spec.topics[paper_topics[j]];
        let used = &paper_phrases[j];
        let first = used.choose(&mut rng).unwrap();
        let second = topic.phrases.choose(&mut rng).unwrap();
        let noise = rng.random_range(0..100) < cfg.noise_grant_percent;
        let title = if noise {
            format!("PhD studentship in {first}")
        } else {
            format!("{} and {second} for the {}", capitalize(first), topic.words.choose(&mut rng).unwrap())
        };
        let n_keywords = rng.random_range(0..=2);
        let keywords = topic
            .words
            .choose_multiple(&mut rng, n_keywords)
            .cloned()
            .collect();
        grants.push(GrantRecord {
            id: format!("g{g:04}"),
            title,
            keywords,
            holders: publications[j].authors.clone(),
        });
    }

    Ok(Corpus {
        authors: authors.into_iter().map(|a| a.record).collect(),
        publications,
        grants,
    })
}

/// Returns the abstract and the phrases placed in it.
fn abstract_text(rng: &mut StdRng, topic: &Topic) -> (String, Vec<String>) {
    let n_sentences = rng.random_range(4..=7);
    let mut used = Vec::new();
    let mut sentences = Vec::with_capacity(n_sentences);
    for _ in 0..n_sentences {
        let frame = FRAMES.choose(rng).unwrap();
        let mut s = String::new();
        for ch in frame.chars() {
            match ch {
                '#' => {
                    let p = topic.phrases.choose(rng).unwrap();
                    used.push(p.clone());
                    s.push_str(p);
                }
                '@' => s.push_str(topic.words.choose(rng).unwrap()),
                c => s.push(c),
            }
        }
        sentences.push(capitalize(&s));
    }
    (sentences.join(" "), used)
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}
