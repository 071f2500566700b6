use std::path::Path;
use std::process::{Command, Output};

use raptor_core::persistence::save_tree;
use raptor_core::tree::{BuildConfig, Node, Tree};
use serde_json::Value;

fn raptor(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_raptor"))
        .args(args)
        .env_remove("RAPTOR_EMBED_URL")
        .env_remove("RAPTOR_LLM_URL")
        .output()
        .expect("binary runs")
}

fn json_of(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn node(id: usize, layer: usize, e: &[f64], children: Vec<usize>, tokens: usize) -> Node {
    let n = e.iter().map(|x| x * x).sum::<f64>().sqrt();
    Node {
        id,
        layer,
        text: format!("node {id}"),
        embedding: e.iter().map(|x| x / n).collect(),
        children,
        token_count: tokens,
        doc_id: None,
        source_offset: None,
    }
}

/// Writes three topical documents into `dir/docs` and returns that path.
fn write_corpus(dir: &Path) -> std::path::PathBuf {
    let docs = dir.join("docs");
    std::fs::create_dir_all(&docs).unwrap();
    let topics = [
        ("harbor", ["ships", "tide", "anchor", "dock"]),
        ("orchard", ["apples", "blossom", "ladder", "harvest"]),
        ("forge", ["iron", "anvil", "hammer", "sparks"]),
    ];
    for (name, words) in topics {
        let mut text = String::new();
        for i in 0..12 {
            text.push_str(&format!(
                "The {name} keeper counted {} and {} near the {} on day {i}. Later the {} was quiet again. ",
                words[i % 4],
                words[(i + 1) % 4],
                words[(i + 2) % 4],
                words[(i + 3) % 4]
            ));
        }
        std::fs::write(docs.join(format!("{name}.txt")), text).unwrap();
    }
    docs
}

#[test]
fn build_then_query_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let docs = write_corpus(dir.path());
    let idx = dir.path().join("idx.raptor.json");
    let out = raptor(&[
        "build",
        "--input",
        docs.to_str().unwrap(),
        "--out",
        idx.to_str().unwrap(),
        "--embedder",
        "mock",
        "--summarizer",
        "mock-extractive",
        "--seed",
        "42",
        "--json",
    ]);
    let built = json_of(&out);
    assert_eq!(built["documents"], 3);
    assert!(built["usage"]["calls"].as_u64().unwrap() > 0);
    assert!(idx.exists());

    let q = json_of(&raptor(&["query", "--index", idx.to_str().unwrap(), "--query", "anvil sparks", "--json"]));
    assert_eq!(q["mode"], "collapsed");
    assert!(q["total_tokens"].as_u64().unwrap() <= 2000);
    let ids = q["ids"].as_array().unwrap();
    assert!(!ids.is_empty());
    assert_eq!(ids.len(), q["scores"].as_array().unwrap().len());

    let small = json_of(&raptor(&[
        "query",
        "--index",
        idx.to_str().unwrap(),
        "--query",
        "anvil sparks",
        "--max-tokens",
        "400",
        "--json",
    ]));
    assert!(small["total_tokens"].as_u64().unwrap() <= 400);

    let text = raptor(&["query", "--index", idx.to_str().unwrap(), "--query", "tide", "--document-order"]);
    assert!(text.status.success());
    assert!(!text.stdout.is_empty());

    let stats = json_of(&raptor(&["stats", "--index", idx.to_str().unwrap(), "--json"]));
    assert!(stats["stats"]["parents"].as_u64().unwrap() > 0);
}

#[test]
fn mock_builds_are_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let docs = write_corpus(dir.path());
    let run = |name: &str| {
        let p = dir.path().join(name);
        let out = raptor(&[
            "build",
            "--input",
            docs.to_str().unwrap(),
            "--out",
            p.to_str().unwrap(),
            "--seed",
            "7",
        ]);
        assert!(out.status.success());
        (std::fs::read(p).unwrap(), out.stdout)
    };
    let (a, out_a) = run("a.raptor.json");
    let (b, out_b) = run("b.raptor.json");
    assert_eq!(a, b);
    let out_b = String::from_utf8(out_b).unwrap().replace("b.raptor.json", "a.raptor.json");
    assert_eq!(String::from_utf8(out_a).unwrap(), out_b);
}

#[test]
fn config_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("no-such-dir");
    let out = raptor(&["build", "--input", missing.to_str().unwrap(), "--out", "x.raptor.json", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no-such-dir"));

    let docs = write_corpus(dir.path());
    let out = raptor(&["build", "--input", docs.to_str().unwrap(), "--out", "x.raptor.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));

    assert_eq!(raptor(&["query", "--bogus"]).status.code(), Some(1));
}

#[test]
fn http_without_endpoint_is_config_error_and_unreachable_endpoint_is_provider_error() {
    let dir = tempfile::tempdir().unwrap();
    let docs = write_corpus(dir.path());
    let out_path = dir.path().join("x.raptor.json");
    let base = [
        "build",
        "--input",
        docs.to_str().unwrap(),
        "--out",
        out_path.to_str().unwrap(),
        "--embedder",
        "http",
        "--dimension",
        "8",
        "--summarizer",
        "http",
    ];
    assert_eq!(raptor(&base).status.code(), Some(1));

    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = listener.local_addr().unwrap().port();
    drop(listener);
    let url = format!("http://127.0.0.1:{port}/v1/embeddings");
    let mut args = base.to_vec();
    args.extend(["--embed-url", url.as_str(), "--llm-url", url.as_str()]);
    let out = raptor(&args);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn corrupt_and_missing_indexes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.raptor.json");
    std::fs::write(&bad, br#"{"format_version": 1, "checksum": "00", "body": {}}"#).unwrap();
    assert_eq!(raptor(&["query", "--index", bad.to_str().unwrap(), "--query", "x"]).status.code(), Some(4));
    std::fs::write(&bad, br#"{"format_version": 999}"#).unwrap();
    assert_eq!(raptor(&["stats", "--index", bad.to_str().unwrap()]).status.code(), Some(4));
    let missing = dir.path().join("missing.raptor.json");
    assert_eq!(raptor(&["stats", "--index", missing.to_str().unwrap()]).status.code(), Some(3));
}

#[test]
fn traversal_on_hand_fixture() {
    let tree = Tree::from_nodes(
        vec![
            node(0, 0, &[1.0, 0.1, 0.0], vec![], 10),
            node(1, 0, &[0.7, 0.7, 0.0], vec![], 20),
            node(2, 0, &[0.0, 0.2, 1.0], vec![], 30),
            node(3, 0, &[0.0, 1.0, 0.3], vec![], 40),
            node(4, 1, &[1.0, 0.5, 0.0], vec![0, 1], 15),
            node(5, 1, &[0.0, 0.5, 1.0], vec![2, 3], 25),
        ],
        BuildConfig::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("fixture.raptor.json");
    save_tree(&tree, &idx).unwrap();
    let q = json_of(&raptor(&[
        "query",
        "--index",
        idx.to_str().unwrap(),
        "--query-vector",
        "1,0,0",
        "--mode",
        "traversal",
        "--top-k",
        "1",
        "--depth",
        "2",
        "--json",
    ]));
    assert_eq!(q["ids"], serde_json::json!([4, 0]));
    assert_eq!(q["layers"], serde_json::json!([1, 0]));

    let q = raptor(&["query", "--index", idx.to_str().unwrap(), "--query-vector", "1,0", "--json"]);
    assert_eq!(q.status.code(), Some(1));
}

#[test]
fn stats_on_toy_fixture() {
    let tree = Tree::from_nodes(
        vec![
            node(0, 0, &[1.0, 0.0], vec![], 150),
            node(1, 0, &[0.0, 1.0], vec![], 250),
            node(2, 1, &[1.0, 1.0], vec![0, 1], 100),
        ],
        BuildConfig::default(),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let idx = dir.path().join("toy.raptor.json.gz");
    save_tree(&tree, &idx).unwrap();
    let s = json_of(&raptor(&["stats", "--index", idx.to_str().unwrap(), "--json"]));
    assert_eq!(s["stats"]["avg_compression_ratio"], 0.25);
    let table = raptor(&["stats", "--index", idx.to_str().unwrap()]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("compression ratio    0.25"));
}

#[test]
fn bench_scaling_reports_four_rows_and_fit() {
    let out = json_of(&raptor(&["bench", "scaling", "--sizes", "10000,20000,40000,80000", "--seed", "7", "--json"]));
    let rows = out["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    let tokens: Vec<u64> = rows.iter().map(|r| r["build_tokens"].as_u64().unwrap()).collect();
    assert!(tokens.windows(2).all(|w| w[1] > w[0]));
    assert!(out["token_fit"]["r_squared"].as_f64().unwrap() >= 0.95);

    let single = json_of(&raptor(&["bench", "scaling", "--sizes", "2000", "--seed", "7", "--json"]));
    assert!(single["token_fit"].is_null());
}

#[test]
fn eval_ablation_with_recency_window() {
    let out = json_of(&raptor(&["eval", "ablation", "--grouping", "recency", "--window", "7", "--seed", "7", "--json"]));
    assert_eq!(out["recency"]["grouping"]["window"], 7);
    let g = out["clustered"]["purity"].as_f64().unwrap();
    let r = out["recency"]["purity"].as_f64().unwrap();
    assert!(g >= r);
    let table = raptor(&["eval", "ablation", "--seed", "7"]);
    assert!(String::from_utf8_lossy(&table.stdout).contains("recency-7"));
}

#[test]
fn eval_layers_lists_every_layer() {
    let out = json_of(&raptor(&["eval", "layers", "--seed", "7", "--json"]));
    let layers = out["stats"]["layer_node_counts"].as_array().unwrap().len();
    let names: Vec<&str> = out["eval"]["strategies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["strategy"].as_str().unwrap())
        .collect();
    assert_eq!(names.len(), layers + 2);
    assert_eq!(names[0], "layers:0");
    assert!(names.contains(&"collapsed") && names.contains(&"flat"));
}
