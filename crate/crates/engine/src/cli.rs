use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use engine::load::{load_engine, train_vectors, EngineOptions, KB_FILE};
use engine::render::{run_search, run_suggest, to_json, SearchRequest, SearchResponse};
use engine::service::{serve, AppState};
use expertise::corpus::{filter_grants, LoadOptions, DEFAULT_GRANT_STOP_TERMS, DEFAULT_MIN_TITLE_WORDS};
use expertise::eval::{evaluate_grants, parse_configs};
use expertise::search::{Filters, DEFAULT_SUGGESTIONS};
use expertise::synth::{generate_synthetic_corpus, TopicSpec};
use expertise::{Corpus, KbRelation, MinDfScope, ProfileConfig, SearchConfig, TrainingConfig};

#[derive(Debug, Parser)]
#[command(name = "engine", version, about = "Explainable expertise retrieval over publication abstracts")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded synthetic corpus and matching knowledge base.
    Generate(GenerateArgs),
    /// Build cached profiles and train word vectors for a corpus.
    Build(BuildArgs),
    /// Rank authors for a free-text query.
    Search(SearchArgs),
    /// Related terms for refining a query.
    Suggest(SuggestArgs),
    /// Score retrieval against grant holders.
    Eval(EvalArgs),
    /// Serve the HTTP API.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
struct CorpusArgs {
    /// Directory with authors.jsonl and publications.jsonl.
    #[arg(long, short = 'c')]
    corpus: PathBuf,
    /// Abstracts a feature needs before it enters a profile.
    #[arg(long, default_value_t = ProfileConfig::default().min_df)]
    min_df: usize,
    /// Count the threshold per author or over the whole corpus.
    #[arg(long, value_parser = parse_scope, default_value = "per-author")]
    scope: MinDfScope,
    /// Pair tokens across removed stopwords when forming bigrams.
    #[arg(long, action = clap::ArgAction::Set, default_value_t = true)]
    gap_close: bool,
    /// Knowledge base JSON (default: kb.json in the corpus directory).
    #[arg(long)]
    kb_file: Option<PathBuf>,
    /// Word vectors in text format (default: vectors.txt in the corpus directory).
    #[arg(long)]
    vectors: Option<PathBuf>,
    /// Neither read nor write the cached profiles.
    #[arg(long)]
    no_cache: bool,
}

fn parse_scope(s: &str) -> Result<MinDfScope, String> {
    match s {
        "per-author" | "per_author" => Ok(MinDfScope::PerAuthor),
        "corpus" => Ok(MinDfScope::Corpus),
        other => Err(format!("unknown scope {other:?}, expected per-author or corpus")),
    }
}

impl CorpusArgs {
    fn options(&self) -> EngineOptions {
        EngineOptions {
            corpus_dir: self.corpus.clone(),
            profile: ProfileConfig {
                min_df: self.min_df,
                scope: self.scope,
            },
            gap_close: self.gap_close,
            kb_path: self.kb_file.clone(),
            vectors_path: self.vectors.clone(),
            use_cache: !self.no_cache,
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long, short = 'o')]
    out: PathBuf,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value_t = 60)]
    authors: usize,
    #[arg(long, default_value_t = 600)]
    papers: usize,
    /// Use only two well separated topics.
    #[arg(long)]
    two_topics: bool,
}

#[derive(Debug, Args)]
struct BuildArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Skip training word vectors.
    #[arg(long)]
    no_vectors: bool,
    #[arg(long, default_value_t = TrainingConfig::default().dim)]
    dim: usize,
    #[arg(long, default_value_t = TrainingConfig::default().min_count)]
    min_count: usize,
    #[arg(long, default_value_t = TrainingConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainingConfig::default().window)]
    window: usize,
    #[arg(long, default_value_t = TrainingConfig::default().seed)]
    seed: u64,
    #[arg(long, default_value_t = TrainingConfig::default().workers)]
    workers: usize,
}

#[derive(Debug, Args)]
struct QueryOptions {
    /// Expand through the knowledge base.
    #[arg(long)]
    kb: bool,
    /// Expand through word-vector neighbours.
    #[arg(long)]
    emb: bool,
    /// children or children+siblings.
    #[arg(long)]
    kb_relation: Option<KbRelation>,
    /// Recency reference year (default: latest publication year).
    #[arg(long)]
    reference_year: Option<i32>,
}

impl QueryOptions {
    fn base(&self) -> SearchConfig {
        SearchConfig {
            reference_year: self.reference_year,
            kb_relation: self.kb_relation.unwrap_or_default(),
            ..SearchConfig::default()
        }
    }
}

#[derive(Debug, Args)]
struct SearchArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[command(flatten)]
    query_opts: QueryOptions,
    /// Free-text query.
    query: String,
    /// Keep only these departments (comma separated).
    #[arg(long, value_delimiter = ',')]
    dept_in: Vec<String>,
    /// Drop these departments.
    #[arg(long, value_delimiter = ',')]
    dept_out: Vec<String>,
    /// Keep only these posts.
    #[arg(long, value_delimiter = ',')]
    post_in: Vec<String>,
    /// Drop these posts.
    #[arg(long, value_delimiter = ',')]
    post_out: Vec<String>,
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long, default_value_t = 0)]
    offset: usize,
    /// Print the API response body instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct SuggestArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    term: String,
    #[arg(short, long, default_value_t = DEFAULT_SUGGESTIONS)]
    k: usize,
    #[arg(long)]
    kb_relation: Option<KbRelation>,
    #[arg(long)]
    json: bool,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    /// Grant file (default: grants.jsonl in the corpus directory).
    #[arg(long)]
    grants: Option<PathBuf>,
    /// Comma separated configurations out of baseline, kb, emb, kb+emb.
    #[arg(long, default_value = "baseline,kb,emb,kb+emb")]
    configs: String,
    #[arg(long)]
    top_k: Option<usize>,
    /// Keep noise grants such as studentships.
    #[arg(long)]
    keep_all_grants: bool,
    /// Also write the full report as JSON.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    #[command(flatten)]
    corpus: CorpusArgs,
    #[arg(long, default_value = "127.0.0.1:8080")]
    bind: SocketAddr,
    #[arg(long)]
    kb_relation: Option<KbRelation>,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Build(a) => build(a),
        Command::Search(a) => search(a),
        Command::Suggest(a) => suggest(a),
        Command::Eval(a) => eval(a),
        Command::Serve(a) => serve_cmd(a),
    }
}

fn generate(a: GenerateArgs) -> Result<()> {
    let spec = if a.two_topics {
        TopicSpec::two_topics()
    } else {
        TopicSpec::default()
    };
    let corpus = generate_synthetic_corpus(a.seed, a.authors, a.papers, &spec)?;
    corpus.save_dir(&a.out)?;
    let kb_path = a.out.join(KB_FILE);
    fs::write(&kb_path, spec.taxonomy_json()).with_context(|| format!("writing {}", kb_path.display()))?;
    println!(
        "wrote {} authors, {} publications, {} grants to {}",
        corpus.authors.len(),
        corpus.publications.len(),
        corpus.grants.len(),
        a.out.display()
    );
    Ok(())
}

fn build(a: BuildArgs) -> Result<()> {
    let opts = a.corpus.options();
    if !a.no_vectors {
        let cfg = TrainingConfig {
            dim: a.dim,
            min_count: a.min_count,
            epochs: a.epochs,
            window: a.window,
            seed: a.seed,
            workers: a.workers,
            ..TrainingConfig::default()
        };
        let table = train_vectors(&opts, &cfg)?;
        println!("vectors: {} words, dim {}", table.len(), table.dim());
    }
    let (_, info) = load_engine(&EngineOptions {
        use_cache: true,
        ..opts
    })?;
    println!(
        "profiles: {} authors, {} publications, input {}",
        info.profiles.authors, info.profiles.publications, info.input_sha256
    );
    Ok(())
}

fn search(a: SearchArgs) -> Result<()> {
    let (engine, _) = load_engine(&a.corpus.options())?;
    let req = SearchRequest {
        query: a.query,
        use_kb: a.query_opts.kb,
        use_embeddings: a.query_opts.emb,
        filters: Filters {
            include_depts: a.dept_in,
            exclude_depts: a.dept_out,
            include_posts: a.post_in,
            exclude_posts: a.post_out,
        },
        limit: a.limit,
        offset: a.offset,
        kb_relation: a.query_opts.kb_relation,
    };
    let resp = run_search(&engine, &a.query_opts.base(), &req)?;
    let mut out = std::io::stdout().lock();
    if a.json {
        writeln!(out, "{}", to_json(&resp))?;
    } else {
        print_table(&mut out, &resp)?;
    }
    Ok(())
}

fn print_table(out: &mut impl Write, resp: &SearchResponse) -> std::io::Result<()> {
    for d in &resp.diagnostics {
        writeln!(out, "note: {d}")?;
    }
    for e in &resp.query.expansions {
        writeln!(out, "expanded ({}): {}", e.source, e.term)?;
    }
    writeln!(out, "{} results", resp.total)?;
    for (i, r) in resp.results.iter().enumerate() {
        writeln!(
            out,
            "{:>3}. {:<24} {:<18} {:<22} S_E={:<4} S_A={:<8.4} [{}]",
            resp.offset + i + 1,
            r.name,
            r.department,
            r.post,
            r.s_e,
            r.s_a,
            r.provenance.join(",")
        )?;
        writeln!(out, "     {}", r.explanation.join(" | "))?;
    }
    Ok(())
}

fn suggest(a: SuggestArgs) -> Result<()> {
    let (engine, _) = load_engine(&a.corpus.options())?;
    let base = SearchConfig {
        kb_relation: a.kb_relation.unwrap_or_default(),
        ..SearchConfig::default()
    };
    let resp = run_suggest(&engine, &base, &a.term, a.k);
    if a.json {
        println!("{}", to_json(&resp));
    } else {
        for s in &resp.suggestions {
            println!("{s}");
        }
    }
    Ok(())
}

fn eval(a: EvalArgs) -> Result<()> {
    let opts = a.corpus.options();
    let (engine, _) = load_engine(&opts)?;
    let grants = match &a.grants {
        Some(p) => expertise::corpus::load_grants(p)?,
        None => Corpus::load_dir(&opts.corpus_dir, LoadOptions::default())?.grants,
    };
    let grants = if a.keep_all_grants {
        grants
    } else {
        filter_grants(&grants, DEFAULT_GRANT_STOP_TERMS, DEFAULT_MIN_TITLE_WORDS)
    };
    if grants.is_empty() {
        bail!("no grants to evaluate");
    }
    let configs = parse_configs(&a.configs, &SearchConfig::default()).map_err(anyhow::Error::msg)?;
    let report = evaluate_grants(&grants, &engine, &configs, a.top_k)?;
    print!("{}", report.to_table());
    if let Some(p) = &a.out {
        fs::write(p, serde_json::to_string_pretty(&report)?).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn serve_cmd(a: ServeArgs) -> Result<()> {
    let opts = a.corpus.options();
    let (engine, info) = load_engine(&opts)?;
    let base = SearchConfig {
        kb_relation: a.kb_relation.unwrap_or_default(),
        ..SearchConfig::default()
    };
    let state = Arc::new(AppState::new(engine, info, opts, base));
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(serve(state, a.bind))?;
    Ok(())
}
