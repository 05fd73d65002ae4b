//! Corpus directory.
//!
//! ```text
//! meta.json        generation config, seed, vocabulary metadata, prototypes
//! lexicon.tsv      the vocabulary; word id = entry order
//! homophones.tsv   homophone sets of the bias database
//! train.jsonl      one utterance per line
//! test.jsonl
//! frames/*.bin     per-utterance feature matrices
//! ```
//!
//! An utterance line holds `id`, `transcript` (word ids), `words`,
//! `oracle_bias` (the rare words of the transcript, sorted) and `frames`, a
//! path relative to the corpus directory. A frames file is the magic
//! `BRFM`, `F` and `T` as u32, then `T·F` f32 values, frame-major.

use std::path::{Path, PathBuf};

use biasret_core::lexicon::HomophoneGraph;
use biasret_core::synth::{AcousticPrototypes, Corpus, CorpusConfig, FrameSeq, Utterance, Vocabulary};
use biasret_core::WordId;
use serde::{Deserialize, Serialize};

use super::lexicon::{read_lexicon, write_graph, write_lexicon};
use super::{put_f32s, put_u32, read_file, read_json, read_text, write_file, write_json, write_jsonl, Reader};
use crate::error::{CliError, Result};

const FRAMES_MAGIC: &[u8; 4] = b"BRFM";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CorpusMeta {
    pub format: u32,
    /// Seed the corpus was generated from.
    pub seed: u64,
    pub config: CorpusConfig,
    pub n_common: usize,
    pub rare_skew: f64,
    pub rare_len: (usize, usize),
    pub feature_dim: usize,
    /// Phoneme-major prototype table.
    pub prototypes: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct UtteranceRecord {
    id: u32,
    transcript: Vec<WordId>,
    words: Vec<String>,
    oracle_bias: Vec<WordId>,
    frames: String,
}

pub fn write_frames(path: &Path, frames: &FrameSeq) -> Result<()> {
    let mut out = Vec::with_capacity(12 + 4 * frames.as_slice().len());
    out.extend_from_slice(FRAMES_MAGIC);
    put_u32(&mut out, frames.dim());
    put_u32(&mut out, frames.len());
    put_f32s(&mut out, frames.as_slice().iter().map(|&x| x as f32));
    write_file(path, &out)
}

pub fn read_frames(path: &Path) -> Result<FrameSeq> {
    let bytes = read_file(path)?;
    let mut r = Reader::new(path, &bytes);
    r.magic(FRAMES_MAGIC)?;
    let f = r.u32()? as usize;
    let t = r.u32()? as usize;
    let data = r.f32s(f.checked_mul(t).ok_or_else(|| r.err("size overflow"))?)?;
    r.finish()?;
    FrameSeq::new(f, data.into_iter().map(f64::from).collect()).map_err(|e| CliError::format(path, e.to_string()))
}

/// Write `corpus` under `dir`. `graph` is stored alongside for inspection.
pub fn write_corpus(dir: &Path, corpus: &Corpus, config: &CorpusConfig, seed: u64, graph: &HomophoneGraph) -> Result<()> {
    let vocab = &corpus.vocab;
    let meta = CorpusMeta {
        format: FORMAT_VERSION,
        seed,
        config: config.clone(),
        n_common: vocab.n_common(),
        rare_skew: vocab.rare_skew(),
        rare_len: vocab.rare_len(),
        feature_dim: vocab.prototypes().dim(),
        prototypes: vocab.prototypes().table().to_vec(),
    };
    write_json(&dir.join("meta.json"), &meta)?;
    let ids = 0..vocab.len() as WordId;
    write_lexicon(&dir.join("lexicon.tsv"), ids.map(|id| (vocab.word(id).expect("id in range"), vocab.pron(id).expect("id in range"))))?;
    write_graph(&dir.join("homophones.tsv"), graph)?;
    for (split, utts) in [("train", &corpus.train), ("test", &corpus.test)] {
        let mut records = Vec::with_capacity(utts.len());
        for u in utts.iter() {
            let rel = format!("frames/{split}-{:06}.bin", u.id);
            write_frames(&dir.join(&rel), &u.frames)?;
            records.push(UtteranceRecord {
                id: u.id,
                transcript: u.transcript.clone(),
                words: u.transcript_words(vocab).map(String::from).collect(),
                oracle_bias: u.oracle_bias.clone(),
                frames: rel,
            });
        }
        write_jsonl(&dir.join(format!("{split}.jsonl")), records)?;
    }
    Ok(())
}

/// A corpus read back from disk.
#[derive(Debug, Clone)]
pub struct StoredCorpus {
    pub corpus: Corpus,
    pub meta: CorpusMeta,
}

pub fn read_corpus(dir: &Path) -> Result<StoredCorpus> {
    let meta_path = dir.join("meta.json");
    let meta: CorpusMeta = read_json(&meta_path)?;
    if meta.format != FORMAT_VERSION {
        return Err(CliError::format(&meta_path, format!("unsupported corpus format {}", meta.format)));
    }
    let fmt = |e: biasret_core::Error| CliError::format(&meta_path, e.to_string());
    let prototypes = AcousticPrototypes::from_table(meta.feature_dim, meta.prototypes.clone()).map_err(fmt)?;
    let lex_path = dir.join("lexicon.tsv");
    let entries = read_lexicon(&lex_path)?;
    let vocab = Vocabulary::from_parts(entries, prototypes, meta.n_common, meta.rare_skew, meta.rare_len)
        .map_err(|e| CliError::format(&lex_path, e.to_string()))?;
    let db = vocab.bias_database(vocab.rare_ids())?;
    let train = read_split(dir, "train", &vocab)?;
    let test = read_split(dir, "test", &vocab)?;
    Ok(StoredCorpus { corpus: Corpus { vocab, db, train, test }, meta })
}

fn read_split(dir: &Path, split: &str, vocab: &Vocabulary) -> Result<Vec<Utterance>> {
    let path = dir.join(format!("{split}.jsonl"));
    let text = read_text(&path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| CliError::format(&path, format!("line {}: {msg}", i + 1));
        let rec: UtteranceRecord = serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        if rec.transcript.is_empty() || rec.transcript.iter().any(|&id| id as usize >= vocab.len()) {
            return Err(bad("transcript is empty or has unknown word ids".into()));
        }
        let mut oracle: Vec<WordId> = rec.transcript.iter().copied().filter(|&id| vocab.is_rare(id)).collect();
        oracle.sort_unstable();
        oracle.dedup();
        if oracle != rec.oracle_bias {
            return Err(bad("oracle_bias does not match the rare words of the transcript".into()));
        }
        let frames_path = frames_path(dir, &rec.frames).ok_or_else(|| bad("frames path must be relative".into()))?;
        let frames = read_frames(&frames_path)?;
        if frames.dim() != vocab.prototypes().dim() {
            return Err(CliError::format(&frames_path, "feature dimension differs from the corpus"));
        }
        out.push(Utterance { id: rec.id, transcript: rec.transcript, frames, oracle_bias: rec.oracle_bias });
    }
    Ok(out)
}

fn frames_path(dir: &Path, rel: &str) -> Option<PathBuf> {
    let p = Path::new(rel);
    (p.is_relative() && !p.components().any(|c| matches!(c, std::path::Component::ParentDir))).then(|| dir.join(p))
}
