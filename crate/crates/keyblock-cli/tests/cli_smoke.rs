//! End-to-end smoke tests for the CLI surfaces the acceptance pipeline does
//! not already cover: passage preranking, parade sampling, run-sourced
//! candidates, eval compare, the remaining analyses, and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn keyblock(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_keyblock"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = keyblock(dir, args);
    assert!(
        out.status.success(),
        "keyblock {args:?}:\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

struct Workspace {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

fn workspace() -> Workspace {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().to_path_buf();
    ok(
        &root,
        &[
            "synth",
            "--seed",
            "11",
            "--n-queries",
            "4",
            "--docs-per-query",
            "10",
            "--blocks-per-doc",
            "16",
            "--relevant-fraction",
            "0.3",
            "--signal-positions",
            "1-10",
            "--out-dir",
            "data",
        ],
    );
    ok(
        &root,
        &[
            "segment",
            "--corpus",
            "data/corpus.jsonl",
            "--out",
            "blocks.jsonl",
        ],
    );
    Workspace { _dir: dir, root }
}

#[test]
fn passage_prerank_topk_and_parade() {
    let ws = workspace();
    // synthetic docs are 16 blocks x 32 tokens = 512 tokens: several windows
    ok(
        &ws.root,
        &[
            "prerank",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--unit",
            "passage",
            "--strategy",
            "bm25",
            "--k",
            "2",
            "--passage-len",
            "225",
            "--passage-stride",
            "200",
            "--candidates",
            "qrels",
            "--qrels",
            "data/qrels.txt",
            "--out",
            "passages.jsonl",
        ],
    );
    let text = std::fs::read_to_string(ws.root.join("passages.jsonl")).unwrap();
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert!(first["passages"].as_array().unwrap().len() <= 2);
    assert!(first["qid"].is_string() && first["doc_id"].is_string());

    ok(
        &ws.root,
        &[
            "prerank",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--unit",
            "passage",
            "--strategy",
            "parade",
            "--n",
            "2",
            "--seed",
            "3",
            "--passage-len",
            "100",
            "--passage-stride",
            "100",
            "--candidates",
            "qrels",
            "--qrels",
            "data/qrels.txt",
            "--out",
            "parade.jsonl",
        ],
    );
    let text = std::fs::read_to_string(ws.root.join("parade.jsonl")).unwrap();
    for line in text.lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        let spans = v["passages"].as_array().unwrap();
        assert!(spans.len() <= 2);
    }
}

#[test]
fn run_candidates_flow_and_eval_compare() {
    let ws = workspace();
    ok(
        &ws.root,
        &[
            "index",
            "--corpus",
            "data/corpus.jsonl",
            "--variant",
            "lucene",
            "--out",
            "idf.bin",
        ],
    );
    ok(
        &ws.root,
        &[
            "retrieve",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--idf",
            "idf.bin",
            "--k",
            "5",
            "--out",
            "first.run",
        ],
    );
    // rerank the first-stage candidates under two selection strategies
    for (select, seed, out) in [
        ("bm25", None, "bm25.run"),
        ("random", Some("11"), "random.run"),
    ] {
        let mut args = vec![
            "rank",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--blocks",
            "blocks.jsonl",
            "--select",
            select,
            "--candidates",
            "run:first.run",
            "--out",
            out,
        ];
        if let Some(seed) = seed {
            args.extend(["--seed", seed]);
        }
        ok(&ws.root, &args);
    }
    let stdout = ok(
        &ws.root,
        &[
            "eval",
            "compare",
            "--run-a",
            "bm25.run",
            "--run-b",
            "random.run",
            "--qrels",
            "data/qrels.txt",
            "--metric",
            "map",
        ],
    );
    assert!(stdout.contains("t ") && stdout.contains(" p "), "{stdout}");
}

#[test]
fn learned_selection_end_to_end() {
    let ws = workspace();
    ok(
        &ws.root,
        &[
            "train",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--qrels",
            "data/qrels.txt",
            "--blocks",
            "blocks.jsonl",
            "--binding",
            "lexical:bm25",
            "--epochs",
            "2",
            "--lr",
            "0.1",
            "--seed",
            "9",
            "--pairs",
            "32",
            "--out",
            "scorer.json",
        ],
    );
    // one scorer both selects blocks and ranks digests
    ok(
        &ws.root,
        &[
            "rank",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--blocks",
            "blocks.jsonl",
            "--select",
            "learned",
            "--scorer",
            "scorer.json",
            "--rank-with",
            "scorer:scorer.json",
            "--candidates",
            "qrels",
            "--qrels",
            "data/qrels.txt",
            "--out",
            "learned.run",
        ],
    );
    let run = std::fs::read_to_string(ws.root.join("learned.run")).unwrap();
    assert!(!run.is_empty());
    assert!(run.lines().all(|l| l.split_whitespace().count() == 6));
    // fixed-binding training consumes the frozen selector file
    ok(
        &ws.root,
        &[
            "train",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--qrels",
            "data/qrels.txt",
            "--blocks",
            "blocks.jsonl",
            "--binding",
            "fixed:scorer.json",
            "--epochs",
            "2",
            "--lr",
            "0.1",
            "--seed",
            "9",
            "--pairs",
            "32",
            "--out",
            "ranker.json",
        ],
    );
    assert!(ws.root.join("ranker.json").exists());
}

#[test]
fn analyses_produce_reports() {
    let ws = workspace();
    ok(
        &ws.root,
        &[
            "analyze",
            "positions",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--qrels",
            "data/qrels.txt",
            "--out",
            "positions.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("positions.json")).unwrap())
            .unwrap();
    assert_eq!(report["curves"]["relevant"].as_array().unwrap().len(), 10);

    ok(
        &ws.root,
        &[
            "analyze",
            "gap",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--qrels",
            "data/qrels.txt",
            "--lexicon",
            "data/lexicon.tsv",
            "--seed",
            "5",
            "--out",
            "gap.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("gap.json")).unwrap()).unwrap();
    for curve in ["original", "synonyms", "random"] {
        assert!(report["curves"][curve].is_array(), "missing {curve} curve");
    }

    ok(
        &ws.root,
        &[
            "analyze",
            "expansion",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--qrels",
            "data/qrels.txt",
            "--lexicon",
            "data/lexicon.tsv",
            "--seed",
            "5",
            "--out",
            "expansion.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("expansion.json")).unwrap())
            .unwrap();
    let base = report["base"].as_u64().unwrap();
    let syn = report["base_or_syn"].as_u64().unwrap();
    let rand = report["base_or_rand"].as_u64().unwrap();
    assert!(syn > base, "{report}");
    assert_eq!(rand, base, "{report}");
}

#[test]
fn eval_trivial_fixture_prints_map_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.txt"), "q1 Q0 d1 1 1.000000 t\n").unwrap();
    std::fs::write(dir.path().join("qrels.txt"), "q1 0 d1 2\n").unwrap();
    let stdout = ok(
        dir.path(),
        &[
            "eval",
            "--run",
            "run.txt",
            "--qrels",
            "qrels.txt",
            "--metrics",
            "map",
        ],
    );
    assert!(stdout.contains("map 1.0000"), "{stdout}");
}

#[test]
fn exit_codes_distinguish_usage_and_data_errors() {
    let ws = workspace();
    // unknown flag: usage error
    let out = keyblock(
        &ws.root,
        &[
            "segment",
            "--corpus",
            "data/corpus.jsonl",
            "--bogus",
            "x",
            "--out",
            "b.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    // malformed corpus: data error
    std::fs::write(ws.root.join("broken.jsonl"), "not json\n").unwrap();
    let out = keyblock(
        &ws.root,
        &["segment", "--corpus", "broken.jsonl", "--out", "b.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains(":1:"), "error names the line: {stderr}");
    // duplicate doc_id: data error naming the id and line
    std::fs::write(
        ws.root.join("dup.jsonl"),
        "{\"doc_id\":\"d1\",\"text\":\"a\"}\n{\"doc_id\":\"d1\",\"text\":\"b\"}\n",
    )
    .unwrap();
    let out = keyblock(
        &ws.root,
        &["segment", "--corpus", "dup.jsonl", "--out", "b.jsonl"],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("duplicate doc_id d1 at line 2"));
    // bad cost ordering: usage error
    let out = keyblock(
        &ws.root,
        &[
            "segment",
            "--corpus",
            "data/corpus.jsonl",
            "--costs",
            "9,2,4,8",
            "--out",
            "b.jsonl",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    // --help exits 0
    let out = keyblock(&ws.root, &["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn config_echo_written_next_to_outputs() {
    let ws = workspace();
    assert!(ws.root.join("blocks.jsonl.config.json").exists());
    let cfg: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(ws.root.join("blocks.jsonl.config.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(cfg["command"], "segment");
    assert_eq!(cfg["max_block_len"], 63);
    assert!(ws.root.join("data/synth.config.json").exists());
}

#[test]
fn index_json_export_and_scikit_variant() {
    let ws = workspace();
    ok(
        &ws.root,
        &[
            "index",
            "--corpus",
            "data/corpus.jsonl",
            "--variant",
            "scikit",
            "--out",
            "idf_s.bin",
            "--json-out",
            "idf_s.json",
        ],
    );
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ws.root.join("idf_s.json")).unwrap())
            .unwrap();
    assert_eq!(json["variant"], "scikit");
    assert_eq!(json["n_docs"], 40);
    // a scikit table fed to retrieve (BM25) is a data error
    let out = keyblock(
        &ws.root,
        &[
            "retrieve",
            "--corpus",
            "data/corpus.jsonl",
            "--queries",
            "data/queries.tsv",
            "--idf",
            "idf_s.bin",
            "--out",
            "x.run",
        ],
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("lucene"));
}
