//! Evaluation reports.
//!
//! The summary is a flat `key=value` text file, one pair per line, in a
//! fixed order. Rates are percentages printed with six decimals; `none`
//! marks an undefined rate (no reference bias word, or no utterance with an
//! oracle word). Keys:
//!
//! - any header pairs supplied by the caller (cell name, config hash, ...)
//! - `n_utterances`, `db_size`, `decode_k`, `pruning_rate`
//! - `recall_b#K`, `recall_b_literal#K`, `recall_h#K`, `recall_h_literal#K`
//!   for every evaluated depth `K`
//! - `recall@X` (mean minimal depth) and `recall@X.unreachable` (utterances
//!   that never reach the target, counted at full depth) for every target
//!   `X`; both are omitted when no utterance has an oracle word
//! - `wer.C`, `bwer.C`, `bias_ref_words.C`, `bias_sub.C`, `bias_del.C`,
//!   `bias_ins.C` for the decoding conditions `C` in `retrieval`, `no_bias`
//!   and `oracle`
//!
//! The details file has one JSON record per utterance: `id`, `oracle`,
//! `retrieved` (top `decode_k` ids), `oracle_ranks` (1-based, `null` when
//! not indexed), `homophones`, `homophones_retrieved`, `hypothesis` and the
//! error counts `words` and `bias` (`ref_words`, `sub`, `del`, `ins`).

use std::fmt::Write as _;
use std::path::Path;

use biasret_core::metrics::{DecodeScores, EvalReport};

use super::{write_file, write_jsonl};
use crate::error::Result;

fn rate(x: Option<f64>) -> String {
    x.map_or_else(|| "none".to_string(), |v| format!("{v:.6}"))
}

pub fn format_summary(report: &EvalReport, header: &[(String, String)]) -> String {
    let mut s = String::new();
    let mut put = |k: &str, v: String| writeln!(s, "{k}={v}").expect("string write");
    for (k, v) in header {
        put(k, v.clone());
    }
    put("n_utterances", report.n_utterances.to_string());
    put("db_size", report.db_size.to_string());
    put("decode_k", report.decode_k.to_string());
    put("pruning_rate", format!("{:.6}", report.pruning));
    for (name, series) in [
        ("recall_b", &report.recall_b),
        ("recall_b_literal", &report.recall_b_literal),
        ("recall_h", &report.recall_h),
        ("recall_h_literal", &report.recall_h_literal),
    ] {
        for &(k, v) in series {
            put(&format!("{name}#{k}"), rate(v));
        }
    }
    for r in &report.recall_at {
        put(&format!("recall@{}", r.target), format!("{:.6}", r.mean_depth));
        put(&format!("recall@{}.unreachable", r.target), r.unreachable.to_string());
    }
    let conditions: [(&str, &DecodeScores); 3] = [("retrieval", &report.retrieval), ("no_bias", &report.no_bias), ("oracle", &report.oracle)];
    for (c, scores) in conditions {
        put(&format!("wer.{c}"), format!("{:.6}", scores.wer()));
        put(&format!("bwer.{c}"), rate(scores.bwer()));
        put(&format!("bias_ref_words.{c}"), scores.bias.ref_words.to_string());
        put(&format!("bias_sub.{c}"), scores.bias.sub.to_string());
        put(&format!("bias_del.{c}"), scores.bias.del.to_string());
        put(&format!("bias_ins.{c}"), scores.bias.ins.to_string());
    }
    s
}

/// Write `{stem}.txt` and `{stem}.details.jsonl` in `dir`.
pub fn write_report(dir: &Path, stem: &str, report: &EvalReport, header: &[(String, String)]) -> Result<()> {
    write_file(&dir.join(format!("{stem}.txt")), format_summary(report, header).as_bytes())?;
    write_jsonl(&dir.join(format!("{stem}.details.jsonl")), &report.details)
}

/// Parse a summary back into ordered pairs.
pub fn parse_summary(text: &str) -> Vec<(String, String)> {
    text.lines().filter_map(|l| l.split_once('=')).map(|(k, v)| (k.to_string(), v.to_string())).collect()
}
