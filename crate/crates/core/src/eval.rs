//! Grant-holder prediction metrics, diversity and novelty.
//!
//! Each grant's title and keywords form a query; the engine's full result set
//! is the prediction. Grants are bucketed by number of holders (1, 2, 3, more)
//! and `G_k` is the share of a bucket for which every holder was retrieved.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::{AuthorRecord, GrantRecord};
use crate::search::{Engine, Provenance, SearchConfig, SearchError, SearchOutcome};

/// Figures reported for the original, private corpus. Kept for side-by-side
/// display only; they cannot be reproduced from the data shipped here.
pub fn published_reference() -> Vec<ReferenceRow> {
    vec![
        ReferenceRow::new("baseline", [94.29, 89.47, 92.66, 85.66, 80.56, 56.96]),
        ReferenceRow::new("kb", [94.29, 89.47, 92.66, 85.66, 80.56, 56.96]),
        ReferenceRow::new("emb", [94.88, 90.25, 93.30, 86.36, 81.25, 62.03]),
        ReferenceRow::new("kb+emb", [94.88, 90.03, 93.25, 86.01, 80.56, 59.49]),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceRow {
    pub config: String,
    pub recall: f64,
    pub g_all: f64,
    pub g_1: f64,
    pub g_2: f64,
    pub g_3: f64,
    pub g_plus: f64,
}

impl ReferenceRow {
    fn new(config: &str, v: [f64; 6]) -> Self {
        Self {
            config: config.to_string(),
            recall: v[0],
            g_all: v[1],
            g_1: v[2],
            g_2: v[3],
            g_3: v[4],
            g_plus: v[5],
        }
    }
}

/// The four standard configurations: baseline, kb, emb and kb+emb.
pub fn standard_configs(base: &SearchConfig) -> Vec<(String, SearchConfig)> {
    [("baseline", false, false), ("kb", true, false), ("emb", false, true), ("kb+emb", true, true)]
        .into_iter()
        .map(|(name, kb, emb)| {
            let cfg = SearchConfig {
                use_kb: kb,
                use_embeddings: emb,
                ..base.clone()
            };
            (name.to_string(), cfg)
        })
        .collect()
}

/// Parses a comma-separated list such as `baseline,kb+emb`.
pub fn parse_configs(list: &str, base: &SearchConfig) -> Result<Vec<(String, SearchConfig)>, String> {
    let all = standard_configs(base);
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|name| {
            all.iter()
                .find(|(n, _)| n == name)
                .cloned()
                .ok_or_else(|| format!("unknown configuration {name:?}; expected baseline, kb, emb or kb+emb"))
        })
        .collect()
}

/// Per-grant measurements for one configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrantOutcome {
    pub grant_id: String,
    pub holders: usize,
    pub predicted: usize,
    pub holders_found: usize,
    pub holders_found_top_k: Option<usize>,
    /// Holders span two authors differing in both department and post.
    pub diverse_holders: bool,
    /// The result set contains two authors differing in both facets.
    pub diverse_results: bool,
    /// A result explanation contains a feature outside the query terms that
    /// came from an expansion sub-search.
    pub novel: bool,
}

impl GrantOutcome {
    pub fn coverage(&self) -> f64 {
        self.holders_found as f64 / self.holders.max(1) as f64
    }

    pub fn exact(&self) -> bool {
        self.holders_found == self.holders
    }

    pub fn precision(&self) -> f64 {
        if self.predicted == 0 {
            0.0
        } else {
            self.holders_found as f64 / self.predicted as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Bucket {
    pub n_grants: usize,
    pub exact: usize,
    /// `None` when the bucket is empty.
    pub rate: Option<f64>,
}

impl Bucket {
    fn of<'a>(outcomes: impl Iterator<Item = &'a GrantOutcome>) -> Self {
        let (mut n, mut exact) = (0, 0);
        for o in outcomes {
            n += 1;
            exact += usize::from(o.exact());
        }
        Self {
            n_grants: n,
            exact,
            rate: percent(exact, n),
        }
    }
}

fn percent(part: usize, whole: usize) -> Option<f64> {
    (whole > 0).then(|| 100.0 * part as f64 / whole as f64)
}

fn mean_percent(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values {
        sum += v;
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        100.0 * sum / n as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub config: String,
    /// Mean share of holders retrieved per grant.
    pub recall: f64,
    /// Mean share of retrieved authors who are holders per grant.
    pub precision: f64,
    pub g_all: Bucket,
    pub g_1: Bucket,
    pub g_2: Bucket,
    pub g_3: Bucket,
    pub g_plus: Bucket,
    pub top_k: Option<TopK>,
    pub diversity_rate: Option<f64>,
    pub diversity_grants: usize,
    pub novelty_count: usize,
    pub grants: Vec<GrantOutcome>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopK {
    pub k: usize,
    pub recall: f64,
    pub g_all: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_grants: usize,
    pub rows: Vec<ConfigReport>,
    pub published_reference: Vec<ReferenceRow>,
    pub reference_note: String,
}

impl EvalReport {
    /// Plain-text table with the columns Recall, G_All, G1, G2, G3, G+.
    pub fn to_table(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
        let mut out = String::new();
        let header = format!(
            "{:<10} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8}",
            "config", "Recall", "G_All", "G1", "G2", "G3", "G+", "Diverse", "Novel"
        );
        let _ = writeln!(out, "{header}");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<10} {:>8.2} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9} {:>8}",
                r.config,
                r.recall,
                fmt(r.g_all.rate),
                fmt(r.g_1.rate),
                fmt(r.g_2.rate),
                fmt(r.g_3.rate),
                fmt(r.g_plus.rate),
                fmt(r.diversity_rate),
                r.novelty_count
            );
        }
        if let Some(first) = self.rows.first() {
            let _ = writeln!(
                out,
                "grants: all={} 1={} 2={} 3={} +={}",
                first.g_all.n_grants, first.g_1.n_grants, first.g_2.n_grants, first.g_3.n_grants, first.g_plus.n_grants
            );
        }
        for r in &self.rows {
            if let Some(t) = r.top_k {
                let _ = writeln!(out, "{} top-{}: recall {:.2}, G_All {}", r.config, t.k, t.recall, fmt(t.g_all));
            }
        }
        let _ = writeln!(out, "\nreference ({})", self.reference_note);
        for p in &self.published_reference {
            let _ = writeln!(
                out,
                "{:<10} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2} {:>8.2}",
                p.config, p.recall, p.g_all, p.g_1, p.g_2, p.g_3, p.g_plus
            );
        }
        out
    }
}

fn differs_in_both(a: &AuthorRecord, b: &AuthorRecord) -> bool {
    !a.department.eq_ignore_ascii_case(&b.department) && !a.post.eq_ignore_ascii_case(&b.post)
}

fn has_diverse_pair(authors: &[&AuthorRecord]) -> bool {
    authors
        .iter()
        .enumerate()
        .any(|(i, a)| authors[i + 1..].iter().any(|b| differs_in_both(a, b)))
}

/// Whether some explanation feature outside Q_T entered through a kb or
/// embedding sub-search.
pub fn has_novel_feature(outcome: &SearchOutcome) -> bool {
    outcome.results.iter().any(|r| {
        r.contributions.iter().any(|c| {
            c.source != Provenance::Direct && c.explanation.iter().any(|f| !outcome.query.contains(f))
        })
    })
}

fn grant_outcome(
    engine: &Engine,
    grant: &GrantRecord,
    cfg: &SearchConfig,
    top_k: Option<usize>,
) -> Result<GrantOutcome, SearchError> {
    let outcome = engine.search(&grant.query_text(), cfg)?;
    let holders: BTreeSet<&str> = grant.holders.iter().map(|h| h.as_str()).collect();
    let found = |n: usize| {
        outcome
            .results
            .iter()
            .take(n)
            .filter(|r| holders.contains(r.author_id.as_str()))
            .count()
    };
    let holder_records: Vec<&AuthorRecord> = holders.iter().filter_map(|h| engine.author(h)).collect();
    let diverse_holders = holders.len() > 1 && has_diverse_pair(&holder_records);
    let diverse_results = diverse_holders && {
        let records: Vec<&AuthorRecord> = outcome
            .results
            .iter()
            .filter_map(|r| engine.author(r.author_id.as_str()))
            .collect();
        has_diverse_pair(&records)
    };
    Ok(GrantOutcome {
        grant_id: grant.id.clone(),
        holders: holders.len(),
        predicted: outcome.results.len(),
        holders_found: found(usize::MAX),
        holders_found_top_k: top_k.map(found),
        diverse_holders,
        diverse_results,
        novel: has_novel_feature(&outcome),
    })
}

fn evaluate_config(
    engine: &Engine,
    grants: &[GrantRecord],
    name: &str,
    cfg: &SearchConfig,
    top_k: Option<usize>,
) -> Result<ConfigReport, SearchError> {
    let run = |g: &GrantRecord| grant_outcome(engine, g, cfg, top_k);
    #[cfg(feature = "parallel")]
    let outcomes: Vec<GrantOutcome> = {
        use rayon::prelude::*;
        grants.par_iter().map(run).collect::<Result<_, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<GrantOutcome> = grants.iter().map(run).collect::<Result<_, _>>()?;

    let bucket = |pred: fn(usize) -> bool| Bucket::of(outcomes.iter().filter(|o| pred(o.holders)));
    let diverse: Vec<&GrantOutcome> = outcomes.iter().filter(|o| o.diverse_holders).collect();
    let top_k = top_k.map(|k| {
        let covered = |o: &GrantOutcome| o.holders_found_top_k.unwrap_or(0);
        TopK {
            k,
            recall: mean_percent(outcomes.iter().map(|o| covered(o) as f64 / o.holders.max(1) as f64)),
            g_all: percent(outcomes.iter().filter(|o| covered(o) == o.holders).count(), outcomes.len()),
        }
    });
    Ok(ConfigReport {
        config: name.to_string(),
        recall: mean_percent(outcomes.iter().map(GrantOutcome::coverage)),
        precision: mean_percent(outcomes.iter().map(GrantOutcome::precision)),
        g_all: bucket(|_| true),
        g_1: bucket(|n| n == 1),
        g_2: bucket(|n| n == 2),
        g_3: bucket(|n| n == 3),
        g_plus: bucket(|n| n > 3),
        top_k,
        diversity_rate: percent(diverse.iter().filter(|o| o.diverse_results).count(), diverse.len()),
        diversity_grants: diverse.len(),
        novelty_count: outcomes.iter().filter(|o| o.novel).count(),
        grants: outcomes,
    })
}

/// Runs every grant under every configuration.
pub fn evaluate_grants(
    grants: &[GrantRecord],
    engine: &Engine,
    configs: &[(String, SearchConfig)],
    top_k: Option<usize>,
) -> Result<EvalReport, SearchError> {
    let rows = configs
        .iter()
        .map(|(name, cfg)| evaluate_config(engine, grants, name, cfg, top_k))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(EvalReport {
        n_grants: grants.len(),
        rows,
        published_reference: published_reference(),
        reference_note: "published figures on a private corpus; not reproducible here".into(),
    })
}

/// Share of multi-holder grants with holders differing in both department
/// and post for which the results also contain such a pair. `None` when no
/// grant qualifies.
pub fn measure_diversity(grants: &[GrantRecord], engine: &Engine, cfg: &SearchConfig) -> Result<Option<f64>, SearchError> {
    Ok(evaluate_config(engine, grants, "", cfg, None)?.diversity_rate)
}

/// Number of grant queries whose results carry a novel expansion feature.
pub fn measure_novelty(grants: &[GrantRecord], engine: &Engine, cfg: &SearchConfig) -> Result<usize, SearchError> {
    Ok(evaluate_config(engine, grants, "", cfg, None)?.novelty_count)
}
