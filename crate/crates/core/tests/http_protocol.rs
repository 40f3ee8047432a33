//! Wire-protocol tests against in-process HTTP servers.

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine as _;
use pagelens::pipeline::http::{
    EmbedResponse, GenerateRequest, HttpEmbedder, HttpGenerator, HttpOptions, PROTOCOL_VERSION,
};
use pagelens::pipeline::{
    answer, embed_corpus, AnswerGenerator, Capabilities, EmbedderProvider, GenerationRequest,
    MockEmbedder, PageInput, PartialStore, PipelineConfig, RetryPolicy,
};
use pagelens::synthetic::{write_planted_corpus, PlantedSpec};
use pagelens::{build_index, Error, IndexConfig, PageRef, Query, Scope};
use serde_json::{json, Value};

type Handler = dyn Fn(usize, Value) -> (u16, String) + Send + Sync;

struct Server {
    url: String,
    requests: Arc<Mutex<Vec<Value>>>,
    peak: Arc<AtomicUsize>,
}

/// Serves every request on its own thread; `handler` gets the request index
/// and the parsed JSON body.
fn serve(handler: impl Fn(usize, Value) -> (u16, String) + Send + Sync + 'static) -> Server {
    let server = tiny_http::Server::http("127.0.0.1:0").unwrap();
    let url = format!("http://{}/", server.server_addr().to_ip().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let peak = Arc::new(AtomicUsize::new(0));
    let handler: Arc<Handler> = Arc::new(handler);
    let (log, peak2) = (requests.clone(), peak.clone());
    std::thread::spawn(move || {
        let active = Arc::new(AtomicUsize::new(0));
        for mut req in server.incoming_requests() {
            let (log, handler, active, peak) =
                (log.clone(), handler.clone(), active.clone(), peak2.clone());
            std::thread::spawn(move || {
                let now = active.fetch_add(1, Ordering::SeqCst) + 1;
                peak.fetch_max(now, Ordering::SeqCst);
                let mut body = String::new();
                req.as_reader().read_to_string(&mut body).unwrap();
                let value: Value = serde_json::from_str(&body).unwrap_or(Value::Null);
                let n = {
                    let mut log = log.lock().unwrap();
                    log.push(value.clone());
                    log.len() - 1
                };
                let (status, text) = handler(n, value);
                active.fetch_sub(1, Ordering::SeqCst);
                let header =
                    tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..])
                        .unwrap();
                let _ = req.respond(
                    tiny_http::Response::from_string(text)
                        .with_status_code(status)
                        .with_header(header),
                );
            });
        }
    });
    Server {
        url,
        requests,
        peak,
    }
}

/// Embedding server backed by the mock embedder.
fn mock_embed_server(mock: MockEmbedder) -> Server {
    serve(move |_, req| {
        let emb = match req["kind"].as_str() {
            Some("query") => mock.embed_query(req["text"].as_str().unwrap()).unwrap(),
            Some("page") => {
                let image = req["image"].as_str().unwrap();
                let path = match req["image_kind"].as_str() {
                    Some("path") => PathBuf::from(image),
                    _ => {
                        // inline bytes stand in for the page text
                        let bytes = B64.decode(image).unwrap();
                        let text = String::from_utf8(bytes).unwrap();
                        return (
                            200,
                            serde_json::to_string(&EmbedResponse::encode(
                                &mock.embed_page_text(&text),
                            ))
                            .unwrap(),
                        );
                    }
                };
                let input = PageInput {
                    page: PageRef {
                        doc: "x".into(),
                        page_index: 0,
                        global_id: 0,
                    },
                    image_path: path,
                };
                mock.embed_page(&input).unwrap()
            }
            _ => return (400, json!({"error": "bad kind"}).to_string()),
        };
        (
            200,
            serde_json::to_string(&EmbedResponse::encode(&emb)).unwrap(),
        )
    })
}

fn caps(dim: usize, tpp: usize) -> Capabilities {
    Capabilities {
        dim,
        tokens_per_page: tpp,
    }
}

fn page_input(path: PathBuf) -> PageInput {
    PageInput {
        page: PageRef {
            doc: "doc".into(),
            page_index: 3,
            global_id: 3,
        },
        image_path: path,
    }
}

#[test]
fn embed_requests_carry_version_and_kind() {
    let mock = MockEmbedder::new(8, 4, 1);
    let server = mock_embed_server(mock.clone());
    let http = HttpEmbedder::new(&server.url, caps(8, 4), HttpOptions::default());
    let q = http.embed_query("Where is Valencia?").unwrap();
    assert_eq!(q, mock.embed_query("Where is Valencia?").unwrap());

    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("p.png");
    std::fs::write(&img, "alpha beta gamma").unwrap();
    let p = http.embed_page(&page_input(img.clone())).unwrap();
    assert_eq!(p, mock.embed_page_text("alpha beta gamma"));

    let log = server.requests.lock().unwrap();
    assert_eq!(
        log[0],
        json!({"v": PROTOCOL_VERSION, "kind": "query", "text": "Where is Valencia?"})
    );
    assert_eq!(log[1]["v"], 1);
    assert_eq!(log[1]["kind"], "page");
    assert_eq!(log[1]["image_kind"], "base64");
    assert_eq!(
        B64.decode(log[1]["image"].as_str().unwrap()).unwrap(),
        b"alpha beta gamma"
    );
    assert!(log[1].get("text").is_none());
}

#[test]
fn local_paths_are_sent_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("p.png");
    std::fs::write(&img, b"png").unwrap();
    std::fs::write(img.with_extension("txt"), "delta epsilon").unwrap();
    let mock = MockEmbedder::new(8, 4, 1);
    let server = mock_embed_server(mock.clone());
    let opts = HttpOptions {
        send_paths: true,
        ..HttpOptions::default()
    };
    let http = HttpEmbedder::new(&server.url, caps(8, 4), opts);
    assert_eq!(
        http.embed_page(&page_input(img.clone())).unwrap(),
        mock.embed_page_text("delta epsilon")
    );
    let log = server.requests.lock().unwrap();
    assert_eq!(log[0]["image_kind"], "path");
    assert_eq!(log[0]["image"], img.to_string_lossy().as_ref());
}

#[test]
fn remote_store_matches_local_store_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let spec = PlantedSpec {
        docs: 3,
        pages_per_doc: 3,
        questions: 4,
        dim: 16,
        tokens_per_page: 8,
        seed: 3,
    };
    let planted = write_planted_corpus(dir.path(), &spec).unwrap();
    let mock = MockEmbedder::new(16, 8, 0);
    let server = mock_embed_server(mock.clone());
    let opts = HttpOptions {
        send_paths: true,
        max_in_flight: 2,
        ..HttpOptions::default()
    };
    let http = HttpEmbedder::new(&server.url, caps(16, 8), opts);

    let mut remote = PartialStore::new(&planted.manifest, http.identity().to_string());
    let summary = embed_corpus(&planted.manifest, &http, &mut remote, 3).unwrap();
    assert!(summary.failures.is_empty(), "{:?}", summary.failures);
    let mut local = PartialStore::new(&planted.manifest, mock.identity().to_string());
    embed_corpus(&planted.manifest, &mock, &mut local, 1).unwrap();
    let (remote, local) = (remote.into_store().unwrap(), local.into_store().unwrap());
    assert_eq!(
        remote
            .tokens()
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>(),
        local
            .tokens()
            .iter()
            .map(|x| x.to_bits())
            .collect::<Vec<_>>()
    );
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}

type ErrorCheck = fn(&Error) -> bool;

#[test]
fn malformed_embed_responses_are_rejected() {
    let cases: Vec<(Value, ErrorCheck)> = vec![
        // wrong dim
        (
            serde_json::to_value(EmbedResponse::encode(
                &MockEmbedder::new(6, 4, 0).embed_page_text("a"),
            ))
            .unwrap(),
            |e| {
                matches!(
                    e,
                    Error::DimMismatch {
                        expected: 8,
                        found: 6
                    }
                )
            },
        ),
        // wrong row count for a page
        (
            serde_json::to_value(EmbedResponse::encode(
                &MockEmbedder::new(8, 3, 0).embed_page_text("a"),
            ))
            .unwrap(),
            |e| {
                matches!(
                    e,
                    Error::TokenCountMismatch {
                        expected: 4,
                        found: 3
                    }
                )
            },
        ),
        (
            json!({"v": 2, "rows": 1, "dim": 8, "data": B64.encode([0u8; 32])}),
            |e| matches!(e, Error::Protocol(_)),
        ),
        (
            json!({"v": 1, "rows": 4, "dim": 8, "data": B64.encode([0u8; 31])}),
            |e| matches!(e, Error::Protocol(_)),
        ),
        (json!({"v": 1, "rows": 4, "dim": 8, "data": "***"}), |e| {
            matches!(e, Error::Protocol(_))
        }),
        (json!({"answer": "not an embedding"}), |e| {
            matches!(e, Error::Protocol(_))
        }),
    ];
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("p.png");
    std::fs::write(&img, b"png").unwrap();
    for (body, check) in cases {
        let text = body.to_string();
        let server = serve(move |_, _| (200, text.clone()));
        let http = HttpEmbedder::new(&server.url, caps(8, 4), HttpOptions::default());
        let err = http.embed_page(&page_input(img.clone())).unwrap_err();
        assert!(check(&err), "{body}: {err:?}");
    }
}

#[test]
fn status_codes_map_to_error_kinds() {
    let server = serve(|_, _| (503, "overloaded".into()));
    let http = HttpEmbedder::new(&server.url, caps(8, 4), HttpOptions::default());
    assert!(matches!(http.embed_query("x"), Err(Error::Transport(_))));
    let server = serve(|_, _| (422, "bad request".into()));
    let http = HttpEmbedder::new(&server.url, caps(8, 4), HttpOptions::default());
    assert!(matches!(http.embed_query("x"), Err(Error::Protocol(_))));
    // nothing listening
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let http = HttpEmbedder::new(
        &format!("http://127.0.0.1:{port}/"),
        caps(8, 4),
        HttpOptions::default(),
    );
    assert!(matches!(http.embed_query("x"), Err(Error::Transport(_))));
}

#[test]
fn missing_image_is_a_page_artifact_error() {
    let server = serve(|_, _| (200, "{}".into()));
    let http = HttpEmbedder::new(&server.url, caps(8, 4), HttpOptions::default());
    let err = http
        .embed_page(&page_input("/definitely/not/here.png".into()))
        .unwrap_err();
    assert!(matches!(err, Error::PageArtifact { .. }));
    assert!(server.requests.lock().unwrap().is_empty());
}

fn generation_request(dir: &std::path::Path) -> GenerationRequest {
    let pages = (0..2)
        .map(|i| {
            let img = dir.join(format!("g{i}.png"));
            std::fs::write(&img, format!("image {i}")).unwrap();
            PageInput {
                page: PageRef {
                    doc: "report".into(),
                    page_index: i + 4,
                    global_id: i,
                },
                image_path: img,
            }
        })
        .collect();
    GenerationRequest {
        question: "Who won?".into(),
        pages,
        max_new_tokens: 32,
    }
}

#[test]
fn generate_request_shape() {
    let server = serve(|_, _| {
        (
            200,
            json!({"v": 1, "answer": "Valencia", "model": "stub-vlm"}).to_string(),
        )
    });
    let gen = HttpGenerator::new(&server.url, 4, HttpOptions::default());
    let dir = tempfile::tempdir().unwrap();
    let req = generation_request(dir.path());
    assert_eq!(gen.generate(&req).unwrap(), "Valencia");
    let sent: GenerateRequest =
        serde_json::from_value(server.requests.lock().unwrap()[0].clone()).unwrap();
    assert_eq!(sent, gen.wire_request(&req).unwrap());
    assert_eq!(sent.v, 1);
    assert_eq!(sent.max_new_tokens, 32);
    assert_eq!(
        sent.pages
            .iter()
            .map(|p| p.page_id.as_str())
            .collect::<Vec<_>>(),
        ["report#4", "report#5"]
    );
    assert_eq!(B64.decode(&sent.pages[1].image).unwrap(), b"image 1");
}

#[test]
fn generate_response_version_is_checked() {
    let server = serve(|_, _| {
        (
            200,
            json!({"answer": "no version", "model": "m"}).to_string(),
        )
    });
    let gen = HttpGenerator::new(&server.url, 4, HttpOptions::default());
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        gen.generate(&generation_request(dir.path())).unwrap(),
        "no version"
    );
    let server = serve(|_, _| {
        (
            200,
            json!({"v": 9, "answer": "x", "model": "m"}).to_string(),
        )
    });
    let gen = HttpGenerator::new(&server.url, 4, HttpOptions::default());
    assert!(matches!(
        gen.generate(&generation_request(dir.path())),
        Err(Error::Protocol(_))
    ));
}

struct AnswerFixture {
    _dir: tempfile::TempDir,
    index: pagelens::PageIndex,
    query: Query,
}

fn answer_fixture() -> AnswerFixture {
    let dir = tempfile::tempdir().unwrap();
    let spec = PlantedSpec {
        docs: 2,
        pages_per_doc: 2,
        questions: 2,
        dim: 8,
        tokens_per_page: 4,
        seed: 1,
    };
    let planted = write_planted_corpus(dir.path(), &spec).unwrap();
    let mock = MockEmbedder::new(8, 4, 0);
    let mut partial = PartialStore::new(&planted.manifest, mock.identity().to_string());
    embed_corpus(&planted.manifest, &mock, &mut partial, 1).unwrap();
    let index = build_index(
        Arc::new(planted.manifest.clone()),
        Arc::new(partial.into_store().unwrap()),
        &IndexConfig::flat(),
    )
    .unwrap();
    let ex = &planted.examples[0];
    let query = Query {
        id: ex.id.clone(),
        text: ex.question.clone(),
        embedding: mock.embed_query(&ex.question).unwrap(),
        scope: Scope::OpenDomain,
    };
    AnswerFixture {
        _dir: dir,
        index,
        query,
    }
}

fn config(backoff: Vec<u64>) -> PipelineConfig {
    PipelineConfig {
        k: 2,
        generator_pages: 2,
        retry: RetryPolicy {
            backoff_ms: backoff,
        },
        ..PipelineConfig::default()
    }
}

#[test]
fn transport_failures_are_retried_with_backoff() {
    let f = answer_fixture();
    let hits = f.index.search(&f.query, 2).unwrap();
    let server = serve(|n, _| {
        if n < 2 {
            (502, "upstream down".into())
        } else {
            (
                200,
                json!({"v": 1, "answer": "third time", "model": "m"}).to_string(),
            )
        }
    });
    let gen = HttpGenerator::new(&server.url, 4, HttpOptions::default());
    let start = std::time::Instant::now();
    let (ans, trace) = answer(&f.query, &hits, &f.index, &gen, &config(vec![20, 40])).unwrap();
    assert_eq!(ans, "third time");
    assert_eq!(trace.attempts, 3);
    assert_eq!(trace.pages_used.len(), 2);
    assert!(start.elapsed() >= Duration::from_millis(60));
}

#[test]
fn retries_run_out_and_protocol_errors_are_not_retried() {
    let f = answer_fixture();
    let hits = f.index.search(&f.query, 2).unwrap();
    let server = serve(|_, _| (500, "boom".into()));
    let gen = HttpGenerator::new(&server.url, 4, HttpOptions::default());
    match answer(&f.query, &hits, &f.index, &gen, &config(vec![1, 1])) {
        Err(Error::Generation {
            attempts, trace, ..
        }) => {
            assert_eq!(attempts, 3);
            assert_eq!(trace.pages_used.len(), 2);
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests.lock().unwrap().len(), 3);

    let server = serve(|_, _| (400, "too many pages".into()));
    let gen = HttpGenerator::new(&server.url, 4, HttpOptions::default());
    match answer(&f.query, &hits, &f.index, &gen, &config(vec![1, 1])) {
        Err(Error::Generation { attempts: 1, .. }) => {}
        other => panic!("{other:?}"),
    }
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn in_flight_requests_are_capped() {
    let server = serve(|_, _| {
        std::thread::sleep(Duration::from_millis(30));
        (
            200,
            serde_json::to_string(&EmbedResponse::encode(
                &MockEmbedder::new(4, 2, 0).embed_page_text("z"),
            ))
            .unwrap(),
        )
    });
    let opts = HttpOptions {
        max_in_flight: 2,
        ..HttpOptions::default()
    };
    let http = HttpEmbedder::new(&server.url, caps(4, 2), opts);
    std::thread::scope(|s| {
        for _ in 0..6 {
            s.spawn(|| http.embed_query("z").unwrap());
        }
    });
    assert_eq!(server.requests.lock().unwrap().len(), 6);
    assert!(server.peak.load(Ordering::SeqCst) <= 2);
}
