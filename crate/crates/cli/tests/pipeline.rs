mod common;

use biasret::formats::corpus::read_corpus;
use biasret::formats::report::parse_summary;
use common::{biasret, run_ok, snapshot, write_config};

fn run_pipeline(dir: &std::path::Path, seed: &str) -> std::path::PathBuf {
    let config = write_config(dir);
    let out = dir.join("run");
    let (c, o) = (config.to_str().unwrap(), out.to_str().unwrap());
    for cmd in ["gen", "train", "index", "eval"] {
        run_ok(&[cmd, "--config", c, "--out", o, "--seed", seed]);
    }
    out
}

#[test]
fn gen_train_index_query_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run_pipeline(tmp.path(), "3");
    for f in ["corpus/meta.json", "corpus/lexicon.tsv", "corpus/homophones.tsv", "corpus/test.jsonl", "model/params.bin", "model/history.jsonl", "model/checkpoint.json", "index.bin", "eval/report.txt", "eval/report.details.jsonl"] {
        assert!(out.join(f).is_file(), "missing {f}");
    }
    let history = std::fs::read_to_string(out.join("model/history.jsonl")).unwrap();
    let records: Vec<serde_json::Value> = history.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let checkpoint: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("model/checkpoint.json")).unwrap()).unwrap();
    assert_eq!(checkpoint["step"].as_u64(), Some(records.len() as u64));
    assert_eq!(records.last().unwrap()["epoch"].as_u64(), Some(1));
    // At least ceil(60 / 8) batches per epoch.
    assert!(records.len() >= 16);

    let stored = read_corpus(&out.join("corpus")).unwrap();
    let first = stored.corpus.test[0].id.to_string();
    let config = tmp.path().join("small.toml");
    let lines = run_ok(&["query", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--utterance", &first, "--k", "7"]);
    let rows: Vec<Vec<&str>> = lines.lines().map(|l| l.split('\t').collect()).collect();
    assert_eq!(rows.len(), 7);
    let scores: Vec<f64> = rows.iter().map(|r| r[3].parse().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));
    for r in &rows {
        let id: u32 = r[1].parse().unwrap();
        assert!(stored.corpus.db.get(id).is_some());
        assert_eq!(stored.corpus.vocab.word(id), Some(r[2]));
    }

    // A frames file gives the same answer as the utterance it came from.
    let frames = out.join("corpus/frames").join(format!("test-{first:0>6}.bin"));
    let again = run_ok(&["query", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "--frames", frames.to_str().unwrap(), "--k", "7"]);
    assert_eq!(lines, again);

    let summary = std::fs::read_to_string(out.join("eval/report.txt")).unwrap();
    let kv: std::collections::BTreeMap<String, String> = parse_summary(&summary).into_iter().collect();
    assert_eq!(kv["n_utterances"], "20");
    assert_eq!(kv["db_size"], stored.corpus.db.len().to_string());
    assert_eq!(kv["root_seed"], "3");
    for key in ["recall_b#5", "recall_b#10", "bwer.retrieval", "bwer.no_bias", "bwer.oracle"] {
        assert!(kv.contains_key(key), "missing {key}");
    }
    assert_eq!(kv["bwer.oracle"].parse::<f64>().unwrap(), 0.0);
}

#[test]
fn reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let sa = snapshot(&run_pipeline(a.path(), "5"));
    let sb = snapshot(&run_pipeline(b.path(), "5"));
    assert_eq!(sa.keys().collect::<Vec<_>>(), sb.keys().collect::<Vec<_>>());
    for (k, v) in &sa {
        assert!(v == &sb[k], "{} differs", k.display());
    }
    let c = tempfile::tempdir().unwrap();
    let sc = snapshot(&run_pipeline(c.path(), "6"));
    assert_ne!(sa[std::path::Path::new("model/params.bin")], sc[std::path::Path::new("model/params.bin")]);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let text = run_ok(&["config", "--config", config.to_str().unwrap(), "--seed", "9", "--set", "train.epochs=4", "--out", "elsewhere"]);
    let value: toml::Table = text.parse().unwrap();
    assert_eq!(value["seed"].as_integer(), Some(9));
    assert_eq!(value["train"]["epochs"].as_integer(), Some(4));
    assert_eq!(value["corpus"]["n_train"].as_integer(), Some(60));
    assert_eq!(value["paths"]["out"].as_str(), Some("elsewhere"));
    // Untouched keys keep their defaults.
    assert_eq!(value["train"]["n_neg"].as_integer(), Some(4));
}

#[test]
fn bench_writes_one_record_per_case() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path());
    let out = tmp.path().join("run");
    let stdout = run_ok(&["bench", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    let file = std::fs::read_to_string(out.join("bench.jsonl")).unwrap();
    assert_eq!(stdout, file);
    let rec: serde_json::Value = serde_json::from_str(file.lines().next().unwrap()).unwrap();
    assert_eq!((rec["n"].as_u64(), rec["d"].as_u64(), rec["K"].as_u64()), (Some(2000), Some(32), Some(50)));
    assert!(rec["p95_ms"].as_f64().unwrap() >= rec["p50_ms"].as_f64().unwrap());
}

#[test]
fn missing_required_subcommand_arguments_are_rejected() {
    let out = biasret(&["query"]);
    assert!(!out.status.success());
}
