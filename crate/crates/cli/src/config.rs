//! Pipeline configuration.
//!
//! Values are resolved in three layers: built-in defaults, then the TOML
//! file given with `--config`, then command-line overrides (`--set
//! key=value` and the dedicated global flags). Unknown keys are rejected at
//! every layer so typos surface as configuration errors.

use std::path::{Path, PathBuf};

use biasret_core::contrastive::TrainConfig;
use biasret_core::encoder::{BiasModality, Pooling};
use biasret_core::metrics::EvalOptions;
use biasret_core::rng::derive_seed;
use biasret_core::synth::CorpusConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::error::{io_at, CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Root seed; every random stream is derived from it by name. Required
    /// by `gen`, `train` and `ablate`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Worker threads for parallel ranking; 0 lets the runtime decide.
    pub threads: usize,
    pub paths: Paths,
    pub corpus: CorpusConfig,
    /// `train.seed` is ignored: the training seed is derived from `seed`.
    pub train: TrainConfig,
    pub retrieval: Retrieval,
    pub eval: EvalSection,
    pub bench: BenchSection,
    pub ablate: AblateSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// Root of every artifact; see [`Layout`].
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Retrieval {
    /// Bias-list length handed to the decoder and default `query` depth.
    pub k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    /// Depths at which Recall_B / Recall_H are reported.
    pub ks: Vec<usize>,
    /// Recall targets in percent for the mean-minimal-depth metric.
    pub recall_targets: Vec<f64>,
    /// Probability that the simulated decoder garbles an unprotected bias
    /// word.
    pub corruption_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchSection {
    /// `[n, d]` pairs of random unit vectors to scan.
    pub cases: Vec<(usize, usize)>,
    pub k: usize,
    /// Timed queries per case.
    pub queries: usize,
    /// Threads answering queries; 1 measures single-query latency.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateSection {
    pub poolings: Vec<Pooling>,
    pub modalities: Vec<BiasModality>,
    pub dcl: Vec<bool>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            threads: 0,
            paths: Paths { out: PathBuf::from("run") },
            corpus: CorpusConfig::default(),
            train: TrainConfig::default(),
            retrieval: Retrieval::default(),
            eval: EvalSection::default(),
            bench: BenchSection::default(),
            ablate: AblateSection::default(),
        }
    }
}

impl Default for Paths {
    fn default() -> Self {
        Paths { out: PathBuf::from("run") }
    }
}

impl Default for Retrieval {
    fn default() -> Self {
        Retrieval { k: 50 }
    }
}

impl Default for EvalSection {
    fn default() -> Self {
        let d = EvalOptions::default();
        EvalSection { ks: d.ks, recall_targets: d.recall_targets, corruption_rate: d.corruption_rate }
    }
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection { cases: vec![(200_000, 4096), (200_000, 256)], k: 50, queries: 10, threads: 1 }
    }
}

impl Default for AblateSection {
    fn default() -> Self {
        AblateSection {
            poolings: vec![Pooling::Avg, Pooling::Attn],
            modalities: vec![BiasModality::Acoustic, BiasModality::Textual],
            dcl: vec![false, true],
        }
    }
}

/// Command-line overrides, applied after the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub out: Option<PathBuf>,
    /// `dotted.key=value`; the value is read as a TOML literal, or as a
    /// bare string when that fails.
    pub set: Vec<String>,
}

impl PipelineConfig {
    /// Resolve defaults, then `file`, then `overrides`.
    pub fn load(file: Option<&Path>, overrides: &Overrides) -> Result<Self> {
        let mut merged = Value::try_from(PipelineConfig::default()).map_err(|e| CliError::config(e.to_string()))?;
        if let Some(path) = file {
            let text = std::fs::read_to_string(path).map_err(io_at(path))?;
            let table: Table = text.parse().map_err(|e: toml::de::Error| CliError::config(format!("{}: {e}", path.display())))?;
            merge(&mut merged, Value::Table(table), "")?;
        }
        for item in &overrides.set {
            let (key, raw) = item.split_once('=').ok_or_else(|| CliError::config(format!("--set expects key=value, got {item:?}")))?;
            set_path(&mut merged, key.trim(), parse_literal(raw.trim()))?;
        }
        let mut config: PipelineConfig = merged.try_into().map_err(|e: toml::de::Error| CliError::config(e.to_string()))?;
        if let Some(seed) = overrides.seed {
            config.seed = Some(seed);
        }
        if let Some(t) = overrides.threads {
            config.threads = t;
        }
        if let Some(out) = &overrides.out {
            config.paths.out = out.clone();
        }
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.train.encoder.feature_dim != self.corpus.vocab.feature_dim {
            return Err(CliError::config("train.encoder.feature_dim must equal corpus.vocab.feature_dim"));
        }
        if self.retrieval.k == 0 {
            return Err(CliError::config("retrieval.k must be at least 1"));
        }
        if self.eval.ks.is_empty() || self.eval.ks.contains(&0) {
            return Err(CliError::config("eval.ks must be non-empty and positive"));
        }
        if !(0.0..=1.0).contains(&self.eval.corruption_rate) {
            return Err(CliError::config("eval.corruption_rate must lie in [0, 1]"));
        }
        if self.eval.recall_targets.iter().any(|t| !(0.0..=100.0).contains(t)) {
            return Err(CliError::config("eval.recall_targets must lie in [0, 100]"));
        }
        if self.bench.k == 0 || self.bench.queries == 0 || self.bench.threads == 0 {
            return Err(CliError::config("bench.k, bench.queries and bench.threads must be positive"));
        }
        if self.bench.cases.iter().any(|&(n, d)| n == 0 || d == 0) {
            return Err(CliError::config("bench cases need n > 0 and d > 0"));
        }
        if self.ablate.poolings.is_empty() || self.ablate.modalities.is_empty() || self.ablate.dcl.is_empty() {
            return Err(CliError::config("every ablate axis needs at least one value"));
        }
        Ok(())
    }

    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| CliError::config("a root seed is required (set `seed` or pass --seed)"))
    }

    /// Training configuration with its seed derived from the root seed.
    pub fn train_config(&self, root: u64) -> TrainConfig {
        TrainConfig { seed: derive_seed(root, "train", 0), ..self.train.clone() }
    }

    pub fn corpus_seed(root: u64) -> u64 {
        derive_seed(root, "corpus", 0)
    }

    pub fn eval_options(&self, root: u64) -> EvalOptions {
        EvalOptions {
            ks: self.eval.ks.clone(),
            decode_k: self.retrieval.k,
            recall_targets: self.eval.recall_targets.clone(),
            corruption_rate: self.eval.corruption_rate,
            seed: derive_seed(root, "simulator", 0),
        }
    }

    pub fn layout(&self) -> Layout {
        Layout { root: self.paths.out.clone() }
    }

    /// The resolved configuration as TOML.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

/// SHA-256 (hex) of the canonical JSON encoding of `value`.
pub fn config_hash<T: Serialize>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("configuration serializes");
    Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// File layout under `paths.out`.
#[derive(Debug, Clone)]
pub struct Layout {
    pub root: PathBuf,
}

impl Layout {
    pub fn corpus_dir(&self) -> PathBuf {
        self.root.join("corpus")
    }

    pub fn model_dir(&self) -> PathBuf {
        self.root.join("model")
    }

    pub fn params(&self) -> PathBuf {
        self.model_dir().join("params.bin")
    }

    pub fn history(&self) -> PathBuf {
        self.model_dir().join("history.jsonl")
    }

    pub fn checkpoint(&self) -> PathBuf {
        self.model_dir().join("checkpoint.json")
    }

    pub fn index(&self) -> PathBuf {
        self.root.join("index.bin")
    }

    pub fn eval_dir(&self) -> PathBuf {
        self.root.join("eval")
    }

    pub fn bench(&self) -> PathBuf {
        self.root.join("bench.jsonl")
    }

    pub fn ablate_dir(&self) -> PathBuf {
        self.root.join("ablate")
    }
}

/// Keys that may be absent from the defaults and still be set.
const OPTIONAL_KEYS: &[&str] = &["seed"];

fn merge(base: &mut Value, over: Value, prefix: &str) -> Result<()> {
    match (base, over) {
        (Value::Table(b), Value::Table(o)) => {
            for (k, v) in o {
                let path = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                match b.get_mut(&k) {
                    Some(slot @ Value::Table(_)) => merge(slot, v, &path)?,
                    Some(slot) => *slot = v,
                    None if OPTIONAL_KEYS.contains(&path.as_str()) => {
                        b.insert(k, v);
                    }
                    None => return Err(CliError::config(format!("unknown configuration key `{path}`"))),
                }
            }
            Ok(())
        }
        (_, _) => Err(CliError::config(format!("`{prefix}` must be a table"))),
    }
}

fn set_path(root: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut over = value;
    for part in key.rsplit('.') {
        if part.is_empty() {
            return Err(CliError::config(format!("malformed key {key:?}")));
        }
        let mut t = Table::new();
        t.insert(part.to_string(), over);
        over = Value::Table(t);
    }
    merge(root, over, "")
}

fn parse_literal(raw: &str) -> Value {
    match format!("v = {raw}").parse::<Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => Value::String(raw.to_string()),
    }
}
