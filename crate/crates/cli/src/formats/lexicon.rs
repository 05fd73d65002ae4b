//! Lexicon and homophone-graph text files.
//!
//! Lexicon: one `word<TAB>PH1 PH2 ...` entry per line; blank lines and lines
//! starting with `#` are skipped. When a lexicon stores a vocabulary, word
//! ids are the entry order.
//!
//! Homophone graph: a `# threshold=N` line, then one `id<TAB>id1,id2,...`
//! line per entry (the list may be empty).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use biasret_core::lexicon::{HomophoneGraph, PhonemeSeq};
use biasret_core::WordId;

use super::{read_text, write_file};
use crate::error::{CliError, Result};

pub fn format_lexicon<'a>(entries: impl IntoIterator<Item = (&'a str, &'a PhonemeSeq)>) -> String {
    let mut s = String::from("# word\tphonemes\n");
    for (w, p) in entries {
        writeln!(s, "{w}\t{p}").expect("string write");
    }
    s
}

pub fn write_lexicon<'a>(path: &Path, entries: impl IntoIterator<Item = (&'a str, &'a PhonemeSeq)>) -> Result<()> {
    write_file(path, format_lexicon(entries).as_bytes())
}

pub fn parse_lexicon(text: &str, path: &Path) -> Result<Vec<(String, PhonemeSeq)>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let bad = |msg: String| CliError::format(path, format!("line {}: {msg}", i + 1));
        let (word, phones) = line.split_once('\t').ok_or_else(|| bad("expected word<TAB>phonemes".into()))?;
        if word.trim().is_empty() {
            return Err(bad("empty word".into()));
        }
        let pron = PhonemeSeq::parse(phones).map_err(|e| bad(e.to_string()))?;
        if pron.is_empty() {
            return Err(bad(format!("no phonemes for {word:?}")));
        }
        out.push((word.trim().to_string(), pron));
    }
    Ok(out)
}

pub fn read_lexicon(path: &Path) -> Result<Vec<(String, PhonemeSeq)>> {
    parse_lexicon(&read_text(path)?, path)
}

pub fn format_graph(graph: &HomophoneGraph) -> String {
    let mut s = format!("# threshold={}\n", graph.threshold());
    for (id, hs) in graph.iter() {
        let list: Vec<String> = hs.iter().map(|h| h.to_string()).collect();
        writeln!(s, "{id}\t{}", list.join(",")).expect("string write");
    }
    s
}

pub fn write_graph(path: &Path, graph: &HomophoneGraph) -> Result<()> {
    write_file(path, format_graph(graph).as_bytes())
}

pub fn parse_graph(text: &str, path: &Path) -> Result<HomophoneGraph> {
    let mut threshold = None;
    let mut sets: BTreeMap<WordId, Vec<WordId>> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let bad = |msg: &str| CliError::format(path, format!("line {}: {msg}", i + 1));
        if let Some(rest) = line.strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("threshold=") {
                threshold = Some(v.trim().parse::<usize>().map_err(|_| bad("bad threshold"))?);
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let (id, list) = line.split_once('\t').ok_or_else(|| bad("expected id<TAB>ids"))?;
        let id: WordId = id.trim().parse().map_err(|_| bad("bad id"))?;
        let hs = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<WordId>().map_err(|_| bad("bad homophone id")))
            .collect::<Result<Vec<_>>>()?;
        if sets.insert(id, hs).is_some() {
            return Err(bad("duplicate id"));
        }
    }
    let threshold = threshold.ok_or_else(|| CliError::format(path, "missing `# threshold=N` line"))?;
    HomophoneGraph::from_sets(threshold, sets).map_err(|e| CliError::format(path, e.to_string()))
}

pub fn read_graph(path: &Path) -> Result<HomophoneGraph> {
    parse_graph(&read_text(path)?, path)
}
