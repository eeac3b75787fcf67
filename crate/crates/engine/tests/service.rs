use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use engine::load::{load_engine, train_vectors, EngineOptions, KB_FILE};
use engine::render::SuggestResponse;
use engine::service::{AppState, Health, Published, VERSION_HEADER};
use engine::{router, ErrorBody, SearchResponse};
use expertise::synth::{generate_synthetic_corpus, TopicSpec};
use expertise::{SearchConfig, TrainingConfig};
use http_body_util::BodyExt;
use tower::ServiceExt;

fn fixture(dir: &Path) -> EngineOptions {
    let spec = TopicSpec::default();
    let corpus = generate_synthetic_corpus(11, 30, 300, &spec).unwrap();
    corpus.save_dir(dir).unwrap();
    std::fs::write(dir.join(KB_FILE), spec.taxonomy_json()).unwrap();
    let opts = EngineOptions::new(dir);
    let cfg = TrainingConfig {
        dim: 16,
        min_count: 5,
        epochs: 3,
        ..TrainingConfig::default()
    };
    train_vectors(&opts, &cfg).unwrap();
    opts
}

fn state(opts: &EngineOptions) -> Arc<AppState> {
    let (engine, info) = load_engine(opts).unwrap();
    Arc::new(AppState::new(engine, info, opts.clone(), SearchConfig::default()))
}

async fn call(state: &Arc<AppState>, req: Request<Body>) -> (StatusCode, Option<u64>, Vec<u8>) {
    let resp = router(Arc::clone(state)).oneshot(req).await.unwrap();
    let status = resp.status();
    let version = resp
        .headers()
        .get(VERSION_HEADER)
        .map(|v| v.to_str().unwrap().parse().unwrap());
    let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
    (status, version, body)
}

async fn get(state: &Arc<AppState>, uri: &str) -> (StatusCode, Option<u64>, Vec<u8>) {
    call(state, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn post_json(state: &Arc<AppState>, uri: &str, body: String) -> (StatusCode, Option<u64>, Vec<u8>) {
    let req = Request::post(uri)
        .header("content-type", "application/json")
        .body(Body::from(body))
        .unwrap();
    call(state, req).await
}

fn error_of(body: &[u8]) -> ErrorBody {
    serde_json::from_slice(body).unwrap()
}

#[tokio::test]
async fn health_reports_the_snapshot_version() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let (status, version, body) = get(&st, "/health").await;
    assert_eq!(status, StatusCode::OK);
    let h: Health = serde_json::from_slice(&body).unwrap();
    assert_eq!((h.status.as_str(), h.version, version), ("ok", 1, Some(1)));
}

#[tokio::test]
async fn search_body_matches_the_command_line_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let opts = fixture(dir.path());
    let st = state(&opts);
    let cases = [
        ("/search?q=natural+language+processing&emb=1", vec!["--emb"]),
        ("/search?q=neural+network+model+checking&kb=1&emb=1&limit=5&offset=2", vec!["--kb", "--emb", "--limit", "5", "--offset", "2"]),
        ("/search?q=quantum+entanglement&dept_out=computing&post_in=lecturer,reader", vec!["--dept-out", "computing", "--post-in", "lecturer,reader"]),
        ("/search?q=xylograph", vec![]),
    ];
    for (uri, flags) in cases {
        let (status, _, body) = get(&st, uri).await;
        assert_eq!(status, StatusCode::OK, "{uri}");
        let query = uri.split("q=").nth(1).unwrap().split('&').next().unwrap().replace('+', " ");
        let out = Command::new(env!("CARGO_BIN_EXE_engine"))
            .args(["search", "--corpus"])
            .arg(&opts.corpus_dir)
            .arg(&query)
            .args(&flags)
            .arg("--json")
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let mut cli = out.stdout;
        assert_eq!(cli.pop(), Some(b'\n'));
        assert_eq!(String::from_utf8(body).unwrap(), String::from_utf8(cli).unwrap(), "{uri}");
    }
}

#[tokio::test]
async fn pagination_slices_the_full_ranking() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let (_, _, full) = get(&st, "/search?q=neural+network+dropout&kb=1&limit=1000").await;
    let full: SearchResponse = serde_json::from_slice(&full).unwrap();
    assert!(full.total > 4);
    assert_eq!(full.results.len(), full.total);
    let (_, _, page) = get(&st, "/search?q=neural+network+dropout&kb=1&limit=3&offset=2").await;
    let page: SearchResponse = serde_json::from_slice(&page).unwrap();
    assert_eq!(page.total, full.total);
    assert_eq!(page.results, full.results[2..5]);
}

#[tokio::test]
async fn errors_have_a_message_and_code() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let cases = [
        ("/search", StatusCode::BAD_REQUEST, "bad_request"),
        ("/search?q=x&kb=maybe", StatusCode::BAD_REQUEST, "bad_request"),
        ("/search?q=x&limit=ten", StatusCode::BAD_REQUEST, "bad_request"),
        ("/search?q=x&dept_in=a&dept_out=b", StatusCode::BAD_REQUEST, "conflicting_filter"),
        ("/authors/nobody", StatusCode::NOT_FOUND, "not_found"),
        ("/suggest", StatusCode::BAD_REQUEST, "bad_request"),
    ];
    for (uri, want_status, want_code) in cases {
        let (status, _, body) = get(&st, uri).await;
        assert_eq!(status, want_status, "{uri}");
        let e = error_of(&body);
        assert_eq!(e.code, want_code, "{uri}");
        assert!(!e.error.is_empty());
    }
    let (status, _, body) = post_json(&st, "/admin/publications", "{not json".into()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body).code, "bad_request");
    let (status, _, body) = post_json(&st, "/admin/reload", r#"{"corpus_dir":"/does/not/exist"}"#.into()).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(error_of(&body).code, "corpus_error");
    // A failed reload publishes nothing.
    assert_eq!(st.snapshot().version, 1);
}

#[tokio::test]
async fn author_endpoint_lists_profile_features() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let (status, _, body) = get(&st, "/authors/a0003").await;
    assert_eq!(status, StatusCode::OK);
    let v: engine::render::AuthorView = serde_json::from_slice(&body).unwrap();
    assert_eq!(v.id, "a0003");
    assert!(v.publications > 0);
    let snap = st.snapshot();
    assert!(v.features.iter().all(|f| snap.engine.store().contains("a0003", f)));
}

#[tokio::test]
async fn suggestions_follow_the_engine() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let snap = st.snapshot();
    let word = snap.engine.embeddings().unwrap().words()[3].clone();
    for (term, k) in [("neural network", 10), (word.as_str(), 4), ("zzzzqx", 10)] {
        let uri = format!("/suggest?term={}&k={k}", term.replace(' ', "+"));
        let (status, _, body) = get(&st, &uri).await;
        assert_eq!(status, StatusCode::OK);
        let s: SuggestResponse = serde_json::from_slice(&body).unwrap();
        let want = snap.engine.suggest_terms(term, k, expertise::KbRelation::Children);
        assert_eq!(s.suggestions, want, "{term}");
    }
    let (_, _, body) = get(&st, "/suggest?term=neural+network").await;
    let s: SuggestResponse = serde_json::from_slice(&body).unwrap();
    let kb = snap.engine.kb().unwrap();
    let children: Vec<String> = kb.children("neural network").map(String::from).collect();
    assert!(!children.is_empty());
    assert_eq!(s.suggestions[..children.len()], children[..]);
    let (_, _, body) = get(&st, "/suggest?term=zzzzqx").await;
    let s: SuggestResponse = serde_json::from_slice(&body).unwrap();
    assert!(s.suggestions.is_empty());
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn request_storm_leaves_the_snapshot_untouched() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let before = st.snapshot().digest();
    let uris = [
        "/search?q=neural+network&kb=1&emb=1",
        "/search?q=turbulent+flow+heat&emb=1&dept_out=physics",
        "/search?q=prime+number+sieve&kb=1&limit=2",
        "/suggest?term=quantum",
        "/authors/a0001",
        "/health",
    ];
    let mut tasks = Vec::new();
    for i in 0..120 {
        let st = Arc::clone(&st);
        let uri = uris[i % uris.len()];
        tasks.push(tokio::spawn(async move { get(&st, uri).await.0 }));
    }
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    assert_eq!(st.snapshot().digest(), before);
    assert_eq!(st.snapshot().version, 1);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn reload_swaps_while_old_snapshot_keeps_serving() {
    let dir = tempfile::tempdir().unwrap();
    let opts = fixture(dir.path());
    let st = state(&opts);
    let old = st.snapshot();
    let old_digest = old.digest();
    let old_answer = old.engine.search("neural network", &SearchConfig::default()).unwrap();

    let other = tempfile::tempdir().unwrap();
    generate_synthetic_corpus(12, 20, 150, &TopicSpec::two_topics())
        .unwrap()
        .save_dir(other.path())
        .unwrap();

    // Searches overlap the reload; each is answered wholly by one version.
    let mut tasks = Vec::new();
    for _ in 0..40 {
        let st = Arc::clone(&st);
        tasks.push(tokio::spawn(async move {
            get(&st, "/search?q=neural+network&kb=1&emb=1").await
        }));
    }
    let body = serde_json::json!({ "corpus_dir": other.path() }).to_string();
    let (status, version, reply) = post_json(&st, "/admin/reload", body).await;
    assert_eq!(status, StatusCode::OK);
    let published: Published = serde_json::from_slice(&reply).unwrap();
    assert_eq!((published.version, version), (2, Some(2)));
    assert_eq!(published.authors, 20);
    for t in tasks {
        let (status, version, _) = t.await.unwrap();
        assert_eq!(status, StatusCode::OK);
        assert!(matches!(version, Some(1) | Some(2)));
    }
    let (_, _, h) = get(&st, "/health").await;
    assert_eq!(serde_json::from_slice::<Health>(&h).unwrap().version, 2);

    // The old snapshot is still whole and still answers as before.
    assert_eq!(old.version, 1);
    assert_eq!(old.digest(), old_digest);
    assert_eq!(old.engine.search("neural network", &SearchConfig::default()).unwrap(), old_answer);

    // Reloading the default directory again keeps counting up.
    let (_, version, _) = post_json(&st, "/admin/reload", String::new()).await;
    assert_eq!(version, Some(3));
    assert_eq!(st.snapshot().engine.store().author_count(), 30);
}

#[tokio::test]
async fn inserted_publications_become_searchable() {
    let dir = tempfile::tempdir().unwrap();
    let st = state(&fixture(dir.path()));
    let old = st.snapshot();
    let old_digest = old.digest();
    let text = "Zymurgic fermentation kinetics. Zymurgic fermentation kinetics in yeast.";
    let batch = serde_json::json!({
        "authors": [{"id": "n001", "first_name": "Nova", "last_name": "Brewer", "post": "lecturer",
                     "department": "Chemistry", "faculty": "Science"}],
        "publications": [
            {"id": "np1", "abstract": text, "authors": ["n001"], "year": 2019},
            {"id": "np2", "abstract": text, "authors": ["n001", "a0002"], "year": 2020}
        ]
    });
    let (status, version, _) = post_json(&st, "/admin/publications", batch.to_string()).await;
    assert_eq!((status, version), (StatusCode::OK, Some(2)));
    let (_, _, body) = get(&st, "/search?q=zymurgic+fermentation").await;
    let r: SearchResponse = serde_json::from_slice(&body).unwrap();
    let ids: Vec<&str> = r.results.iter().map(|v| v.author.as_str()).collect();
    assert_eq!(ids, ["n001"]);
    assert_eq!(r.results[0].explanation, ["zymurgic fermentation"]);
    assert_eq!(r.results[0].name, "Nova Brewer");

    // Unknown authors reject the whole batch.
    let bad = serde_json::json!({"publications": [{"id": "np3", "abstract": "x", "authors": ["ghost"], "year": 2020}]});
    let (status, _, body) = post_json(&st, "/admin/publications", bad.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(error_of(&body).error.contains("ghost"));
    let dup = serde_json::json!({"publications": [{"id": "np1", "abstract": text, "authors": ["n001"], "year": 2020}]});
    let (status, _, body) = post_json(&st, "/admin/publications", dup.to_string()).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(error_of(&body).code, "invalid_publication");
    assert_eq!(st.snapshot().version, 2);

    assert_eq!(old.digest(), old_digest);
    assert!(old.engine.author("n001").is_none());
}
