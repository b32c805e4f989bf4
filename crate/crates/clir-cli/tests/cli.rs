//! Black-box checks of the command-line surface: exit codes, file
//! round-trips, and the generate-then-experiment flow.

use std::path::Path;
use std::process::{Command, Output};

fn clir(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clir"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn clir")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn unknown_verb_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = clir(&["frobnicate"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage") || stderr.contains("usage"), "{stderr}");
}

#[test]
fn help_and_version_exit_zero() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(clir(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(clir(&["--version"], dir.path()).status.code(), Some(0));
    assert_eq!(clir(&["search", "--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn missing_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = clir(
        &[
            "train-model1",
            "--corpus",
            "no_such_file.tsv",
            "--resource-id",
            "r",
            "--out",
            "lex.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_model1_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("corpus.tsv"),
        "the cat\tle chat\nthe dog\tle chien\na cat\tun chat\n",
    )
    .unwrap();
    let args = [
        "train-model1",
        "--corpus",
        "corpus.tsv",
        "--resource-id",
        "para",
        "--iterations",
        "3",
        "--out",
        "lex.json",
    ];
    assert_success(&clir(&args, dir.path()));
    let first = std::fs::read(dir.path().join("lex.json")).unwrap();
    assert_success(&clir(&args, dir.path()));
    assert_eq!(first, std::fs::read(dir.path().join("lex.json")).unwrap());
}

#[test]
fn extract_lexicon_requires_kind_specific_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = clir(
        &[
            "extract-lexicon",
            "--kind",
            "comparable",
            "--resource-id",
            "comp",
            "--out",
            "lex.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));

    std::fs::write(dir.path().join("dict.tsv"), "cat\tchat|minou\ndog\tchien\n").unwrap();
    assert_success(&clir(
        &[
            "extract-lexicon",
            "--kind",
            "dictionary",
            "--resource-id",
            "dict",
            "--path",
            "dict.tsv",
            "--out",
            "lex.json",
        ],
        dir.path(),
    ));
    let lex = std::fs::read_to_string(dir.path().join("lex.json")).unwrap();
    assert!(lex.contains("chat"));
}

#[test]
fn index_search_evaluate_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("docs.jsonl"),
        concat!(
            "{\"id\": \"d1\", \"text\": \"chat noir dort\"}\n",
            "{\"id\": \"d2\", \"text\": \"chien brun court\"}\n",
            "{\"id\": \"d3\", \"text\": \"chat et chien\"}\n",
        ),
    )
    .unwrap();
    std::fs::write(dir.path().join("topics.tsv"), "q1\tchat\nq2\tchien\n").unwrap();
    std::fs::write(
        dir.path().join("qrels.txt"),
        "q1 0 d1 1\nq1 0 d3 1\nq2 0 d2 1\nq2 0 d3 1\n",
    )
    .unwrap();

    assert_success(&clir(
        &["index", "--docs", "docs.jsonl", "--out", "index.json"],
        dir.path(),
    ));
    assert_success(&clir(
        &[
            "search",
            "--index",
            "index.json",
            "--topics",
            "topics.tsv",
            "--tag",
            "mono",
            "--out",
            "mono.run",
        ],
        dir.path(),
    ));
    let run_text = std::fs::read_to_string(dir.path().join("mono.run")).unwrap();
    for line in run_text.lines() {
        assert_eq!(line.split_whitespace().count(), 6, "bad run line {line:?}");
        assert!(line.contains(" Q0 "));
        assert!(line.ends_with("mono"));
    }

    let out = clir(
        &["evaluate", "--run", "mono.run", "--qrels", "qrels.txt"],
        dir.path(),
    );
    assert_success(&out);
    let result: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("evaluation JSON on stdout");
    assert!(result["map"].as_f64().unwrap() > 0.9);
    assert_eq!(result["queries_evaluated"].as_u64(), Some(2));

    // Weighted-query search accepts the qid/term/weight listing.
    std::fs::write(
        dir.path().join("weights.tsv"),
        "q1\tchat\t0.8\nq1\tnoir\t0.2\nq2\tchien\t1.0\n",
    )
    .unwrap();
    assert_success(&clir(
        &[
            "search",
            "--index",
            "index.json",
            "--queries",
            "weights.tsv",
            "--tag",
            "weighted",
            "--out",
            "weighted.run",
        ],
        dir.path(),
    ));
    let out = clir(
        &["evaluate", "--run", "weighted.run", "--qrels", "qrels.txt"],
        dir.path(),
    );
    assert_success(&out);
}

#[test]
fn evaluate_round_trips_trec_formats() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("given.run"),
        "q1 Q0 d1 1 5.0 sys\nq1 Q0 d2 2 4.0 sys\nq1 Q0 d3 3 3.0 sys\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("qrels.txt"), "q1 0 d1 1\nq1 0 d3 1\nq1 0 d9 0\n").unwrap();
    let out = clir(
        &["evaluate", "--run", "given.run", "--qrels", "qrels.txt", "--out", "eval.json"],
        dir.path(),
    );
    assert_success(&out);
    let eval: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("eval.json")).unwrap())
            .unwrap();
    // Relevant at ranks 1 and 3 of 2 total: AP = (1 + 2/3)/2.
    let expected = (1.0 + 2.0 / 3.0) / 2.0;
    assert!((eval["map"].as_f64().unwrap() - expected).abs() < 1e-9);
}

#[test]
fn gen_synthetic_is_deterministic_and_experiment_reports_runs() {
    let dir = tempfile::tempdir().unwrap();
    assert_success(&clir(
        &["gen-synthetic", "--seed", "9", "--out", "w1"],
        dir.path(),
    ));
    assert_success(&clir(
        &["gen-synthetic", "--seed", "9", "--out", "w2"],
        dir.path(),
    ));
    for file in ["para_a.tsv", "dict.tsv", "docs.jsonl", "exp.toml", "ground_truth.json"] {
        let a = std::fs::read(dir.path().join("w1").join(file)).unwrap();
        let b = std::fs::read(dir.path().join("w2").join(file)).unwrap();
        assert_eq!(a, b, "{file} differs between same-seed generations");
    }
    let out = clir(
        &["gen-synthetic", "--seed", "10", "--out", "w3"],
        dir.path(),
    );
    assert_success(&out);
    let a = std::fs::read(dir.path().join("w1/para_a.tsv")).unwrap();
    let b = std::fs::read(dir.path().join("w3/para_a.tsv")).unwrap();
    assert_ne!(a, b, "different seeds produced identical corpora");

    let out = clir(
        &["run-experiment", "--config", "w1/exp.toml", "--out", "w1/out"],
        dir.path(),
    );
    assert_success(&out);
    let manifest_path = dir
        .path()
        .join(String::from_utf8_lossy(&out.stdout).trim());
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&manifest_path).unwrap()).unwrap();
    let runs = manifest["runs"].as_object().unwrap();
    assert!(runs.contains_key("ltr"));
    assert!(runs.contains_key("linear"));
    for (_, report) in runs {
        let map = report["map"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&map));
    }
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ltr: MAP"), "{stderr}");
    for rel in ["model.json", "schema.json", "training.letor", "runs/ltr.run"] {
        assert!(dir.path().join("w1/out").join(rel).exists(), "{rel} missing");
    }
}
