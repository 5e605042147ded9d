use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use semsel::amr::{parse_corpus, parse_manifest};
use semsel::dialog::load_dialogs;
use semsel::semgraph::{read_embedding_file, CorefClusters, DocumentSemanticGraph, NodeType};

fn semsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semsel")).args(args).output().expect("spawn semsel")
}

fn with_stdin(args: &[&str], input: &str) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_semsel"))
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("spawn semsel");
    child.stdin.take().unwrap().write_all(input.as_bytes()).unwrap();
    child.wait_with_output().unwrap()
}

fn ok(out: Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A 20-turn synthetic dataset plus a config that overfits it quickly.
fn dataset(root: &Path) -> PathBuf {
    let data = root.join("data");
    ok(semsel(&["synth", "--seed", "1", "--docs", "4", "--turns-per-doc", "5", "--test-docs", "0", "--out", s(&data)]));
    let cfg = root.join("run.json");
    let text = r#"{
        "train": {"learning_rate": 1e-3, "epochs": 60, "egat": {"hidden_dim": 64, "layers": 3, "input_dim": 32}},
        "paths": {
            "corpus": "data/corpus.amr", "manifest": "data/manifest.json", "coref": "data/coref.json",
            "embeddings": "data/sentences.emb", "context_embeddings": "data/contexts.emb",
            "dialogs": "data/dialogs_train.jsonl", "out_dir": "out"
        }
    }"#;
    fs::write(&cfg, text).unwrap();
    cfg
}

#[test]
fn synth_directory_passes_ingestion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("d");
    let msg = ok(semsel(&["synth", "--seed", "1", "--docs", "10", "--out", s(&out)]));
    assert!(msg.contains("10 documents"));
    let read = |f: &str| fs::read_to_string(out.join(f)).unwrap();
    let manifest = parse_manifest(&read("manifest.json")).unwrap();
    assert_eq!(parse_corpus(&read("corpus.amr"), Some(&manifest)).unwrap().len(), 10);
    CorefClusters::parse_file(&read("coref.json")).unwrap();
    let turns = load_dialogs(&read("dialogs_train.jsonl")).unwrap();
    assert!(turns.iter().all(|t| t.validate().is_ok()));
    load_dialogs(&read("dialogs_test.jsonl")).unwrap();
    for f in ["sentences.emb", "contexts.emb"] {
        read_embedding_file(fs::File::open(out.join(f)).unwrap()).unwrap();
    }
    // the written config is usable as is
    let graphs = dir.path().join("graphs");
    ok(semsel(&["build-graph", "--config", s(&out.join("config.json")), "--out", s(&graphs)]));
    assert_eq!(fs::read_dir(&graphs).unwrap().count(), 10);
}

#[test]
fn build_graph_writes_graphs_and_stats() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dataset(dir.path());
    let stats = ok(semsel(&["build-graph", "--config", s(&cfg)]));
    assert!(stats.lines().last().unwrap().starts_with("total: documents 4 nodes"));
    assert!(stats.contains("merges 5 dropped 0"));
    let g: DocumentSemanticGraph =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/doc0.graph.json")).unwrap()).unwrap();
    assert!(g.count(NodeType::Concept) > 0);

    let sent = dir.path().join("sent");
    ok(semsel(&["build-graph", "--config", s(&cfg), "--variant", "sentence", "--out", s(&sent)]));
    let g: DocumentSemanticGraph = serde_json::from_str(&fs::read_to_string(sent.join("doc0.graph.json")).unwrap()).unwrap();
    assert_eq!(g.count(NodeType::Concept), 0);
}

#[test]
fn input_errors_exit_2_with_locations() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dataset(dir.path());
    let out = semsel(&["build-graph", "--config", s(&cfg), "--coref", "/no/such/coref.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/coref.json"));

    let bad = dir.path().join("bad.amr");
    fs::write(&bad, "# ::id a\n# ::snt x\n# ::tok x\n(x / y)\n\n# ::snt no id here\n# ::tok no id here\n(z / w)\n").unwrap();
    let out = semsel(&["build-graph", "--corpus", s(&bad), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains(&format!("{}:6:", bad.display())), "{err}");

    fs::write(dir.path().join("typo.json"), r#"{"trian": {}}"#).unwrap();
    let out = semsel(&["train", "--config", s(&dir.path().join("typo.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("trian"));
}

#[test]
fn training_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dataset(dir.path());
    let run = |out: &str, seed: &str| {
        let p = dir.path().join(out);
        ok(semsel(&["train", "--config", s(&cfg), "--seed", seed, "--epochs", "3", "--out", s(&p)]));
        (fs::read(p.join("loss_log.csv")).unwrap(), fs::read(p.join("checkpoint.bin")).unwrap())
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a.0, c.0);
    let manifest = fs::read_to_string(dir.path().join("a/checkpoint.json")).unwrap();
    assert!(manifest.contains("\"hidden_dim\": 64"));
}

#[test]
fn overfit_select_evaluate_reaches_perfect_precision() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dataset(dir.path());
    ok(semsel(&["train", "--config", s(&cfg), "--seed", "7"]));
    let ckpt = dir.path().join("out/checkpoint.bin");
    ok(semsel(&["select", "--config", s(&cfg), "--checkpoint", s(&ckpt)]));
    let lines = fs::read_to_string(dir.path().join("out/selections.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 20);
    let msg = ok(semsel(&["evaluate", "--config", s(&cfg)]));
    assert!(msg.starts_with("P@1 1.0000"), "{msg}");
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("out/report.json")).unwrap()).unwrap();
    assert_eq!(report["p_at_1"], 1.0);
    assert_eq!(report["n_turns"], 20);
}

#[test]
fn diverging_training_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dataset(dir.path());
    let hot = dir.path().join("hot.json");
    let text = fs::read_to_string(&cfg).unwrap().replace("1e-3", "1e305");
    fs::write(&hot, text).unwrap();
    let out = semsel(&["train", "--config", s(&hot), "--epochs", "2"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("numeric failure"));
}

#[test]
fn inspect_session() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dataset(dir.path());
    ok(semsel(&["build-graph", "--config", s(&cfg)]));
    let graph = dir.path().join("out/doc0.graph.json");
    let text = ok(with_stdin(
        &["inspect", "--graph", s(&graph)],
        "neighbors doc0.n0\npaths doc0.b0 0\nnode 1\nscore dlg0 0\nfrobnicate\n",
    ));
    assert!(text.contains("-[member]->"));
    assert!(text.contains("-[next]->"));
    assert!(text.contains("\n0 paths\n"));
    assert!(text.contains("error: score needs a trained model"));
    assert!(text.contains("commands:\n  node <id>"));

    ok(semsel(&["train", "--config", s(&cfg), "--epochs", "1"]));
    let ckpt = dir.path().join("out/checkpoint.bin");
    let text = ok(with_stdin(
        &["inspect", "--graph", s(&graph), "--config", s(&cfg), "--checkpoint", s(&ckpt)],
        "score dlg0 0\nquit\nnode 0\n",
    ));
    assert_eq!(text.lines().filter(|l| l.contains(". doc0.b")).count(), 5);
    assert!(text.contains("  concept "));
    assert!(!text.contains("key="));
}

#[test]
fn help_documents_every_flag() {
    for (cmd, flags) in [
        ("build-graph", &["--config", "--seed", "--variant", "--loss", "--out", "--corpus", "--coref"][..]),
        ("train", &["--config", "--seed", "--variant", "--loss", "--out", "--epochs", "--dialogs"][..]),
        ("select", &["--config", "--checkpoint", "--dialogs", "--out"][..]),
        ("evaluate", &["--config", "--selections", "--out"][..]),
        ("synth", &["--seed", "--docs", "--out", "--coref-rate", "--dim"][..]),
        ("inspect", &["--graph", "--checkpoint", "--config"][..]),
    ] {
        let text = ok(semsel(&[cmd, "-h"]));
        for f in flags {
            let lines: Vec<&str> = text.lines().collect();
            let i = lines.iter().position(|l| l.trim_start().starts_with(f)).unwrap_or_else(|| panic!("{cmd} {f}"));
            // description is inline or on the following line
            let doc = format!("{} {}", lines[i], lines.get(i + 1).copied().unwrap_or(""));
            assert!(doc.split_whitespace().count() >= 4, "{cmd} {f} undocumented: {doc}");
        }
    }
}
