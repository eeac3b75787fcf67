//! Two-level subject taxonomy used for query expansion.
//!
//! The file is a JSON array of subjects:
//!
//! ```json
//! [{"term": "computer science",
//!   "children": [{"term": "artificial intelligence",
//!                 "children": ["machine learning", "natural language processing"]}]}]
//! ```
//!
//! Terms are normalized with the text pipeline at load time, so "Frameworks"
//! and "framework" name the same node. A term may appear under several
//! parents; the merged graph must stay acyclic and at most two edges deep.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textpipe::Pipeline;

pub const EXAMPLE_KB: &str = include_str!("../data/kb_computing.json");

/// Longest allowed parent-to-descendant chain, in edges.
pub const MAX_DEPTH: usize = 2;

#[derive(Debug, Error)]
pub enum KbError {
    #[error("io error reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed knowledge base: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("term {0:?} normalizes to nothing")]
    EmptyTerm(String),
    #[error("cycle through term {0:?}")]
    Cycle(String),
    #[error("term {0:?} is more than {MAX_DEPTH} levels below a subject")]
    TooDeep(String),
}

/// Which taxonomy neighbours count as related to a query term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KbRelation {
    #[default]
    Children,
    ChildrenAndSiblings,
}

impl std::str::FromStr for KbRelation {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "children" => Ok(Self::Children),
            "children+siblings" | "children_and_siblings" => Ok(Self::ChildrenAndSiblings),
            other => Err(format!("unknown kb relation {other:?}")),
        }
    }
}

#[derive(Deserialize)]
struct SubjectEntry {
    term: String,
    #[serde(default)]
    children: Vec<ChildEntry>,
}

#[derive(Deserialize)]
struct ChildEntry {
    term: String,
    #[serde(default)]
    children: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct KnowledgeBase {
    children: BTreeMap<String, BTreeSet<String>>,
    parents: BTreeMap<String, BTreeSet<String>>,
    /// Depth of each node: 0 for nodes without parents.
    depth: BTreeMap<String, usize>,
}

impl KnowledgeBase {
    pub fn load(path: &Path, pipeline: &Pipeline) -> Result<Self, KbError> {
        let text = fs::read_to_string(path).map_err(|source| KbError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text, pipeline)
    }

    /// The bundled computer-science example.
    pub fn example(pipeline: &Pipeline) -> Self {
        Self::from_json(EXAMPLE_KB, pipeline).expect("bundled knowledge base is valid")
    }

    pub fn from_json(text: &str, pipeline: &Pipeline) -> Result<Self, KbError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        let entries: Vec<SubjectEntry> = serde_json::from_str(text)?;
        let norm = |raw: &str| {
            let t = pipeline.normalize_term(raw);
            if t.is_empty() {
                Err(KbError::EmptyTerm(raw.to_string()))
            } else {
                Ok(t)
            }
        };
        let mut edges = Vec::new();
        let mut nodes = BTreeSet::new();
        for subject in &entries {
            let root = norm(&subject.term)?;
            nodes.insert(root.clone());
            for child in &subject.children {
                let c = norm(&child.term)?;
                nodes.insert(c.clone());
                edges.push((root.clone(), c.clone()));
                for grandchild in &child.children {
                    let g = norm(grandchild)?;
                    nodes.insert(g.clone());
                    edges.push((c.clone(), g));
                }
            }
        }
        Self::from_edges(nodes, edges)
    }

    fn from_edges(nodes: BTreeSet<String>, edges: Vec<(String, String)>) -> Result<Self, KbError> {
        let mut kb = Self::default();
        for (parent, child) in edges {
            if parent == child {
                return Err(KbError::Cycle(parent));
            }
            kb.children.entry(parent.clone()).or_default().insert(child.clone());
            kb.parents.entry(child).or_default().insert(parent);
        }
        // Depth-first search with an on-stack marker rejects cycles.
        let mut state: BTreeMap<&str, Visit> = BTreeMap::new();
        let mut height: BTreeMap<String, usize> = BTreeMap::new();
        for node in &nodes {
            kb.height_of(node, &mut state, &mut height)?;
        }
        for node in &nodes {
            let d = kb.longest_from_root(node, &mut BTreeMap::new());
            if d > MAX_DEPTH {
                return Err(KbError::TooDeep(node.clone()));
            }
            kb.depth.insert(node.clone(), d);
        }
        Ok(kb)
    }

    fn height_of<'a>(
        &'a self,
        node: &'a str,
        state: &mut BTreeMap<&'a str, Visit>,
        height: &mut BTreeMap<String, usize>,
    ) -> Result<usize, KbError> {
        match state.get(node) {
            Some(Visit::Done) => return Ok(height[node]),
            Some(Visit::Active) => return Err(KbError::Cycle(node.to_string())),
            None => {}
        }
        state.insert(node, Visit::Active);
        let mut h = 0;
        if let Some(children) = self.children.get(node) {
            for c in children {
                h = h.max(1 + self.height_of(c, state, height)?);
            }
        }
        state.insert(node, Visit::Done);
        height.insert(node.to_string(), h);
        Ok(h)
    }

    /// Only called once the graph is known to be acyclic.
    fn longest_from_root(&self, node: &str, memo: &mut BTreeMap<String, usize>) -> usize {
        if let Some(&d) = memo.get(node) {
            return d;
        }
        let d = self
            .parents
            .get(node)
            .map_or(0, |ps| ps.iter().map(|p| 1 + self.longest_from_root(p, memo)).max().unwrap_or(0));
        memo.insert(node.to_string(), d);
        d
    }

    pub fn is_empty(&self) -> bool {
        self.depth.is_empty()
    }

    pub fn len(&self) -> usize {
        self.depth.len()
    }

    pub fn contains(&self, term: &str) -> bool {
        self.depth.contains_key(term)
    }

    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.depth.keys().map(String::as_str)
    }

    pub fn depth(&self, term: &str) -> Option<usize> {
        self.depth.get(term).copied()
    }

    pub fn children(&self, term: &str) -> impl Iterator<Item = &str> {
        self.children.get(term).into_iter().flatten().map(String::as_str)
    }

    pub fn parents(&self, term: &str) -> impl Iterator<Item = &str> {
        self.parents.get(term).into_iter().flatten().map(String::as_str)
    }

    /// Terms related to `term` under `relation`, sorted.
    pub fn related(&self, term: &str, relation: KbRelation) -> BTreeSet<String> {
        let mut out: BTreeSet<String> = self.children(term).map(str::to_string).collect();
        if relation == KbRelation::ChildrenAndSiblings {
            for p in self.parents(term) {
                out.extend(self.children(p).filter(|s| *s != term).map(str::to_string));
            }
        }
        out
    }

    /// Union of related terms over `terms`, minus `terms` themselves.
    pub fn expand_terms<'a, I>(&self, terms: I, relation: KbRelation) -> BTreeSet<String>
    where
        I: IntoIterator<Item = &'a str>,
    {
        let input: BTreeSet<&str> = terms.into_iter().collect();
        let mut out = BTreeSet::new();
        for t in &input {
            out.extend(self.related(t, relation));
        }
        out.retain(|t| !input.contains(t.as_str()));
        out
    }
}

#[derive(Clone, Copy)]
enum Visit {
    Active,
    Done,
}
