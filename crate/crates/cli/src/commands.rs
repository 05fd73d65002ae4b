//! One function per subcommand. Every command reads and writes under the
//! configured output directory (see [`crate::config::Layout`]).

use std::path::PathBuf;

use biasret_core::contrastive::{train, TrainConfig};
use biasret_core::encoder::{embed_speech, BiasModality, EncoderParams, Pooling};
use biasret_core::index::RetrievalIndex;
use biasret_core::lexicon::HomophoneGraph;
use biasret_core::metrics::{build_bias_index, evaluate_rankings, rank_utterance, ConfusionTable, EvalOptions, EvalReport};
use biasret_core::rng::derive_seed;
use biasret_core::synth::{gen_corpus, Corpus, Utterance};
use biasret_core::WordId;
use rayon::prelude::*;
use serde::Serialize;

use crate::bench::{random_index, random_queries, time_queries, BenchRecord};
use crate::config::{config_hash, Layout, PipelineConfig};
use crate::error::{CliError, Result};
use crate::formats::corpus::{read_corpus, read_frames, write_corpus, StoredCorpus};
use crate::formats::index::{read_index, write_index};
use crate::formats::model::{read_checkpoint, read_params, write_checkpoint, write_history, write_params, Checkpoint};
use crate::formats::report::write_report;
use crate::formats::{write_json, write_jsonl};

#[derive(Debug, Clone, PartialEq)]
pub struct GenSummary {
    pub dir: PathBuf,
    pub n_words: usize,
    pub db_size: usize,
    pub n_train: usize,
    pub n_test: usize,
}

/// Generate the synthetic corpus and write it to `out/corpus`.
pub fn cmd_gen(config: &PipelineConfig) -> Result<GenSummary> {
    let root = config.require_seed()?;
    let seed = PipelineConfig::corpus_seed(root);
    let corpus = gen_corpus(&config.corpus, seed)?;
    let graph = HomophoneGraph::build(&corpus.db, config.train.homophone_threshold);
    let dir = config.layout().corpus_dir();
    write_corpus(&dir, &corpus, &config.corpus, seed, &graph)?;
    Ok(GenSummary { dir, n_words: corpus.vocab.len(), db_size: corpus.db.len(), n_train: corpus.train.len(), n_test: corpus.test.len() })
}

pub fn load_corpus(layout: &Layout) -> Result<StoredCorpus> {
    read_corpus(&layout.corpus_dir())
}

/// Train on the stored corpus; writes parameters, checkpoint metadata and
/// the per-step history.
pub fn cmd_train(config: &PipelineConfig) -> Result<Checkpoint> {
    let root = config.require_seed()?;
    let layout = config.layout();
    let stored = load_corpus(&layout)?;
    let tc = config.train_config(root);
    let out = train(&stored.corpus, &tc)?;
    write_params(&layout.params(), &out.params)?;
    write_history(&layout.history(), &out.history)?;
    let checkpoint = Checkpoint { config_hash: config_hash(&tc), step: out.history.len() as u64, root_seed: root, train: tc };
    write_checkpoint(&layout.checkpoint(), &checkpoint)?;
    Ok(checkpoint)
}

/// Trained model as stored by `train`.
pub struct Model {
    pub params: EncoderParams,
    pub checkpoint: Checkpoint,
}

impl Model {
    pub fn load(layout: &Layout) -> Result<Self> {
        Ok(Model { params: read_params(&layout.params())?, checkpoint: read_checkpoint(&layout.checkpoint())? })
    }

    pub fn pooling(&self) -> Pooling {
        self.checkpoint.train.encoder.pooling
    }

    pub fn modality(&self) -> BiasModality {
        self.checkpoint.train.encoder.modality
    }
}

/// Embed every bias database entry with the trained model and write the
/// index.
pub fn cmd_index(config: &PipelineConfig) -> Result<RetrievalIndex> {
    let layout = config.layout();
    let stored = load_corpus(&layout)?;
    let model = Model::load(&layout)?;
    let c = &stored.corpus;
    let index = build_bias_index(&model.params, &c.vocab, &c.db, model.modality(), model.pooling())?;
    write_index(&layout.index(), &index)?;
    Ok(index)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub enum QueryInput {
    Utterance { split: Split, id: u32 },
    Frames(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryHit {
    pub rank: usize,
    pub id: u64,
    pub word: String,
    pub score: f64,
}

/// Top-`k` bias words for one utterance of the corpus or a frames file.
pub fn cmd_query(config: &PipelineConfig, input: &QueryInput, k: Option<usize>) -> Result<Vec<QueryHit>> {
    let layout = config.layout();
    let stored = load_corpus(&layout)?;
    let model = Model::load(&layout)?;
    let index = read_index(&layout.index())?;
    let c = &stored.corpus;
    let frames = match input {
        QueryInput::Frames(path) => read_frames(path)?,
        QueryInput::Utterance { split, id } => {
            let pool = if *split == Split::Train { &c.train } else { &c.test };
            pool.iter().find(|u| u.id == *id).map(|u| u.frames.clone()).ok_or_else(|| CliError::config(format!("no utterance {id} in that split")))?
        }
    };
    let q = embed_speech(&model.params, &frames, model.pooling())?.to_f32();
    let hits = index.query(&q, k.unwrap_or(config.retrieval.k))?;
    Ok(hits
        .into_iter()
        .enumerate()
        .map(|(i, h)| QueryHit {
            rank: i + 1,
            id: h.id,
            word: u32::try_from(h.id).ok().and_then(|id| c.vocab.word(id)).unwrap_or("<unknown>").to_string(),
            score: h.score,
        })
        .collect())
}

/// Full rankings of `utterances`, computed in parallel; order is preserved.
pub fn rank_utterances(params: &EncoderParams, pooling: Pooling, index: &RetrievalIndex, utterances: &[Utterance]) -> Result<Vec<Vec<WordId>>> {
    Ok(utterances.par_iter().map(|u| rank_utterance(params, pooling, index, u)).collect::<biasret_core::Result<_>>()?)
}

/// Evaluate on the test split.
pub fn evaluate_model(
    corpus: &Corpus,
    params: &EncoderParams,
    pooling: Pooling,
    index: &RetrievalIndex,
    threshold: usize,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let index_ids: Vec<u64> = corpus.db.ids().map(u64::from).collect();
    if index.ids() != index_ids.as_slice() {
        return Err(CliError::config("index entries do not match the bias database"));
    }
    let graph = HomophoneGraph::build(&corpus.db, threshold);
    let rankings = rank_utterances(params, pooling, index, &corpus.test)?;
    let confusions = ConfusionTable::build(&corpus.vocab, corpus.db.ids());
    Ok(evaluate_rankings(&corpus.test, &rankings, &corpus.db, &graph, &confusions, options)?)
}

/// Evaluate the stored model and index on the test split; writes
/// `eval/report.txt` and `eval/report.details.jsonl`. The simulator seed
/// derives from the root seed, or from the one the model was trained with
/// when none is configured.
pub fn cmd_eval(config: &PipelineConfig) -> Result<EvalReport> {
    let layout = config.layout();
    let stored = load_corpus(&layout)?;
    let model = Model::load(&layout)?;
    let index = read_index(&layout.index())?;
    let root = config.seed.unwrap_or(model.checkpoint.root_seed);
    let options = config.eval_options(root);
    let report = evaluate_model(&stored.corpus, &model.params, model.pooling(), &index, model.checkpoint.train.homophone_threshold, &options)?;
    let header = vec![("config_hash".to_string(), model.checkpoint.config_hash.clone()), ("root_seed".to_string(), root.to_string())];
    write_report(&layout.eval_dir(), "report", &report, &header)?;
    Ok(report)
}

/// Scan-latency benchmark over the configured random cases; rewrites
/// `bench.jsonl`.
pub fn cmd_bench(config: &PipelineConfig) -> Result<Vec<BenchRecord>> {
    let seed = config.seed.unwrap_or(0);
    let b = &config.bench;
    let mut records = Vec::new();
    for (i, &(n, d)) in b.cases.iter().enumerate() {
        let case_seed = derive_seed(seed, "bench", i as u64);
        let index = random_index(n, d, case_seed)?;
        let queries = random_queries(b.queries, d, case_seed);
        // One untimed query to fault the matrix into memory.
        index.query(&queries[0], b.k)?;
        records.push(time_queries(&index, &queries, b.k, b.threads)?);
    }
    write_jsonl(&config.layout().bench(), &records)?;
    Ok(records)
}

/// One ablation cell.
#[derive(Debug, Clone)]
pub struct AblateCell {
    pub name: String,
    pub config_hash: String,
    pub train: TrainConfig,
    pub report: EvalReport,
}

pub fn cell_name(pooling: Pooling, modality: BiasModality, dcl: bool) -> String {
    format!("pool-{}_bias-{}_dcl-{}", pooling.name(), modality.name(), if dcl { "on" } else { "off" })
}

/// Train and evaluate every cell of pooling × bias modality × curriculum on
/// one corpus. The corpus is (re)generated when missing or produced from
/// other settings. Writes `{cell}.txt`, `{cell}.details.jsonl` and
/// `{cell}.config.json` under `out/ablate`.
pub fn cmd_ablate(config: &PipelineConfig) -> Result<Vec<AblateCell>> {
    let root = config.require_seed()?;
    let layout = config.layout();
    let stored = match load_corpus(&layout) {
        Ok(s) if s.meta.seed == PipelineConfig::corpus_seed(root) && s.meta.config == config.corpus => s,
        _ => {
            cmd_gen(config)?;
            load_corpus(&layout)?
        }
    };
    let corpus = &stored.corpus;
    let options = config.eval_options(root);
    let dir = layout.ablate_dir();
    let a = &config.ablate;
    let mut cells = Vec::new();
    for &pooling in &a.poolings {
        for &modality in &a.modalities {
            for &dcl in &a.dcl {
                let mut tc = config.train_config(root);
                tc.encoder.pooling = pooling;
                tc.encoder.modality = modality;
                tc.dcl_enabled = dcl;
                let name = cell_name(pooling, modality, dcl);
                let out = train(corpus, &tc)?;
                let index = build_bias_index(&out.params, &corpus.vocab, &corpus.db, modality, pooling)?;
                let report = evaluate_model(corpus, &out.params, pooling, &index, tc.homophone_threshold, &options)?;
                let hash = config_hash(&tc);
                let header = vec![("cell".to_string(), name.clone()), ("config_hash".to_string(), hash.clone())];
                write_report(&dir, &name, &report, &header)?;
                write_json(&dir.join(format!("{name}.config.json")), &tc)?;
                cells.push(AblateCell { name, config_hash: hash, train: tc, report });
            }
        }
    }
    Ok(cells)
}
