mod common;

use std::fs;

use expertise::corpus::{filter_grants, CorpusError, LoadOptions, DEFAULT_GRANT_STOP_TERMS, DEFAULT_MIN_TITLE_WORDS};
use expertise::embeddings::{train_cbow, TrainingConfig};
use expertise::eval::{evaluate_grants, standard_configs};
use expertise::search::{Filters, SearchConfig, NO_VALID_TERMS};
use expertise::synth::{generate_synthetic_corpus, TopicSpec};
use expertise::{snapshot, Corpus, EmbeddingTable, Engine, KbRelation, KnowledgeBase, Pipeline, ProfileConfig, ProfileStore};

fn corpus() -> Corpus {
    generate_synthetic_corpus(7, 10, 100, &TopicSpec::default()).unwrap()
}

#[test]
fn corpus_round_trips_through_a_directory() {
    let c = corpus();
    let dir = tempfile::tempdir().unwrap();
    c.save_dir(dir.path()).unwrap();
    let back = Corpus::load_dir(dir.path(), LoadOptions::default()).unwrap();
    assert_eq!(back, c);
}

#[test]
fn unknown_publication_author_is_rejected() {
    let mut c = corpus();
    c.publications[0].authors.push("ghost".into());
    let dir = tempfile::tempdir().unwrap();
    c.save_dir(dir.path()).unwrap();
    match Corpus::load_dir(dir.path(), LoadOptions::default()) {
        Err(CorpusError::UnknownAuthors { ids }) => assert_eq!(ids, vec!["ghost".to_string()]),
        other => panic!("expected unknown author error, got {other:?}"),
    }
}

#[test]
fn malformed_line_reports_file_and_line() {
    let c = corpus();
    let dir = tempfile::tempdir().unwrap();
    c.save_dir(dir.path()).unwrap();
    let path = dir.path().join("publications.jsonl");
    let mut text = fs::read_to_string(&path).unwrap();
    text.push_str("{not json}\n");
    fs::write(&path, text).unwrap();
    match Corpus::load_dir(dir.path(), LoadOptions::default()) {
        Err(CorpusError::Parse { file, line, .. }) => {
            assert_eq!(file, "publications.jsonl");
            assert_eq!(line, c.publications.len() + 1);
        }
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn synthetic_noise_grants_are_filtered() {
    let c = generate_synthetic_corpus(3, 30, 400, &TopicSpec::default()).unwrap();
    let kept = filter_grants(&c.grants, DEFAULT_GRANT_STOP_TERMS, DEFAULT_MIN_TITLE_WORDS);
    assert!(kept.len() < c.grants.len());
    assert!(kept.iter().all(|g| !g.title.to_lowercase().contains("studentship")));
}

#[test]
fn snapshot_file_restores_an_equivalent_engine() {
    let c = corpus();
    let store = ProfileStore::build(&c.publications, Pipeline::default(), ProfileConfig::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("snapshot.json");
    fs::write(&path, snapshot::to_bytes(&store, None)).unwrap();
    let (restored, _) = snapshot::from_bytes(&fs::read(&path).unwrap(), Pipeline::default()).unwrap();

    let a = Engine::new(store, c.authors.clone());
    let b = Engine::new(restored, c.authors.clone());
    let cfg = SearchConfig::default();
    for q in ["neural network dropout", "quantum entanglement", "elliptic curve conjecture"] {
        assert_eq!(a.search(q, &cfg).unwrap(), b.search(q, &cfg).unwrap());
    }
}

#[test]
fn search_is_deterministic_and_explained() {
    let c = corpus();
    let table_cfg = TrainingConfig {
        dim: 16,
        min_count: 3,
        ..TrainingConfig::default()
    };
    let (table, _) = train_cbow(&c.publications, &Pipeline::default(), &table_cfg).unwrap();
    let engine = || {
        Engine::from_corpus(&c, Pipeline::default(), ProfileConfig::default())
            .unwrap()
            .with_embeddings(table.clone())
            .with_kb(common::synthetic_kb(&TopicSpec::default(), &Pipeline::default()))
    };
    let cfg = SearchConfig {
        use_kb: true,
        use_embeddings: true,
        ..SearchConfig::default()
    };
    let (e1, e2) = (engine(), engine());
    for q in ["neural network", "turbulent flow heat", "prime number sieve method"] {
        let a = e1.search(q, &cfg).unwrap();
        assert_eq!(a, e2.search(q, &cfg).unwrap());
        for r in &a.results {
            assert!(!r.explanation.is_empty());
            for f in &r.explanation {
                assert!(e1.store().contains(r.author_id.as_str(), f));
            }
        }
    }
}

#[test]
fn oov_query_returns_diagnostic() {
    let c = corpus();
    let e = Engine::from_corpus(&c, Pipeline::default(), ProfileConfig::default()).unwrap();
    let out = e.search("xylograph", &SearchConfig::default()).unwrap();
    assert!(out.results.is_empty());
    assert_eq!(out.diagnostics, vec![NO_VALID_TERMS.to_string()]);
}

#[test]
fn department_filter_keeps_order() {
    let c = corpus();
    let e = Engine::from_corpus(&c, Pipeline::default(), ProfileConfig::default()).unwrap();
    let cfg = SearchConfig::default();
    let all = e.search("neural network model checking", &cfg).unwrap().results;
    let filters = Filters {
        include_depts: vec!["computing".into()],
        ..Filters::default()
    };
    let kept = e.search_filtered("neural network model checking", &cfg, &filters).unwrap().results;
    let expected: Vec<_> = all
        .into_iter()
        .filter(|r| e.author(r.author_id.as_str()).unwrap().department == "Computing")
        .collect();
    assert_eq!(kept, expected);
}

#[test]
fn suggestions_match_the_neighbour_scan() {
    let c = generate_synthetic_corpus(2, 20, 300, &TopicSpec::default()).unwrap();
    let table_cfg = TrainingConfig {
        dim: 16,
        min_count: 5,
        ..TrainingConfig::default()
    };
    let (table, _) = train_cbow(&c.publications, &Pipeline::default(), &table_cfg).unwrap();
    let e = Engine::from_corpus(&c, Pipeline::default(), ProfileConfig::default())
        .unwrap()
        .with_embeddings(table.clone());
    let word = &table.words()[0];
    let got = e.suggest_terms(word, 5, KbRelation::Children);
    let want: Vec<String> = common::brute_force_neighbours(&table, word, 5).into_iter().map(|(w, _)| w).collect();
    assert_eq!(got, want);
}

#[test]
fn kb_and_vectors_load_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let kb_path = dir.path().join("kb.json");
    fs::write(&kb_path, expertise::kb::EXAMPLE_KB).unwrap();
    let kb = KnowledgeBase::load(&kb_path, &Pipeline::default()).unwrap();
    assert_eq!(kb, KnowledgeBase::example(&Pipeline::default()));

    let table = EmbeddingTable::from_vectors(vec![("alpha".into(), vec![0.25, -1.5]), ("beta".into(), vec![1e-3, 2.0])]).unwrap();
    let vec_path = dir.path().join("vectors.txt");
    let mut buf = Vec::new();
    table.write_text(&mut buf).unwrap();
    fs::write(&vec_path, buf).unwrap();
    let back = EmbeddingTable::read_text(std::io::BufReader::new(fs::File::open(&vec_path).unwrap())).unwrap();
    assert_eq!(back, table);
}

#[test]
fn eval_report_is_deterministic_and_partitions() {
    let c = generate_synthetic_corpus(5, 30, 300, &TopicSpec::default()).unwrap();
    let grants = filter_grants(&c.grants, DEFAULT_GRANT_STOP_TERMS, DEFAULT_MIN_TITLE_WORDS);
    let e = Engine::from_corpus(&c, Pipeline::default(), ProfileConfig::default())
        .unwrap()
        .with_kb(common::synthetic_kb(&TopicSpec::default(), &Pipeline::default()));
    let configs = standard_configs(&SearchConfig::default());
    let a = evaluate_grants(&grants, &e, &configs[..2], Some(10)).unwrap();
    let b = evaluate_grants(&grants, &e, &configs[..2], Some(10)).unwrap();
    assert_eq!(a, b);
    for row in &a.rows {
        let parts = row.g_1.n_grants + row.g_2.n_grants + row.g_3.n_grants + row.g_plus.n_grants;
        assert_eq!(parts, row.g_all.n_grants);
        assert!((0.0..=100.0).contains(&row.recall));
    }
    // Expansion only adds candidates.
    assert!(a.rows[1].recall >= a.rows[0].recall);
    let table = a.to_table();
    assert!(table.contains("Recall") && table.contains("G_All") && table.contains("kb"));
}
