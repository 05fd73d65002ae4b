//! WER, biased WER, retrieval recall metrics and the evaluation protocol.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::Rng as _;

use crate::db::{BiasDatabase, WordId};
use crate::encoder::{self, BiasModality, EncoderParams, Pooling};
use crate::error::{Error, Result};
use crate::index::{pruning_rate, RetrievalIndex};
use crate::lexicon::{phoneme_lev, HomophoneGraph};
use crate::rng::{self, Rng};
use crate::synth::{Utterance, Vocabulary};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EditOp {
    Match,
    Sub,
    Del,
    Ins,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignStep<T> {
    pub op: EditOp,
    pub reference: Option<T>,
    pub hypothesis: Option<T>,
}

/// Minimal unit-cost Levenshtein alignment. Among equal-cost paths the
/// backtrace from the end prefers match, then substitution, deletion,
/// insertion.
pub fn align<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> Vec<AlignStep<T>> {
    let (n, m) = (reference.len(), hypothesis.len());
    let w = m + 1;
    let mut d = alloc::vec![0usize; (n + 1) * w];
    for j in 0..=m {
        d[j] = j;
    }
    for i in 1..=n {
        d[i * w] = i;
        for j in 1..=m {
            let diag = d[(i - 1) * w + j - 1] + usize::from(reference[i - 1] != hypothesis[j - 1]);
            d[i * w + j] = diag.min(d[(i - 1) * w + j] + 1).min(d[i * w + j - 1] + 1);
        }
    }
    let mut steps = Vec::with_capacity(n.max(m));
    let (mut i, mut j) = (n, m);
    while i > 0 || j > 0 {
        let here = d[i * w + j];
        if i > 0 && j > 0 {
            let same = reference[i - 1] == hypothesis[j - 1];
            if same && here == d[(i - 1) * w + j - 1] {
                steps.push(AlignStep { op: EditOp::Match, reference: Some(reference[i - 1].clone()), hypothesis: Some(hypothesis[j - 1].clone()) });
                i -= 1;
                j -= 1;
                continue;
            }
            if !same && here == d[(i - 1) * w + j - 1] + 1 {
                steps.push(AlignStep { op: EditOp::Sub, reference: Some(reference[i - 1].clone()), hypothesis: Some(hypothesis[j - 1].clone()) });
                i -= 1;
                j -= 1;
                continue;
            }
        }
        if i > 0 && here == d[(i - 1) * w + j] + 1 {
            steps.push(AlignStep { op: EditOp::Del, reference: Some(reference[i - 1].clone()), hypothesis: None });
            i -= 1;
        } else {
            steps.push(AlignStep { op: EditOp::Ins, reference: None, hypothesis: Some(hypothesis[j - 1].clone()) });
            j -= 1;
        }
    }
    steps.reverse();
    steps
}

/// Error counts against `ref_words` reference tokens.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct ErrorCounts {
    pub ref_words: usize,
    pub sub: usize,
    pub del: usize,
    pub ins: usize,
}

impl ErrorCounts {
    pub fn errors(&self) -> usize {
        self.sub + self.del + self.ins
    }

    /// `100 · errors / ref_words`; `None` when there is nothing to score.
    pub fn rate(&self) -> Option<f64> {
        match (self.ref_words, self.errors()) {
            (0, 0) => None,
            (r, e) => Some(100.0 * e as f64 / r.max(1) as f64),
        }
    }

    pub fn add(&mut self, other: &ErrorCounts) {
        self.ref_words += other.ref_words;
        self.sub += other.sub;
        self.del += other.del;
        self.ins += other.ins;
    }
}

pub fn word_errors<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> ErrorCounts {
    bias_errors(reference, hypothesis, |_| true)
}

/// Errors attributed to bias words: substitutions and deletions of a bias
/// reference token, insertions of a bias hypothesis token.
pub fn bias_errors<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T], is_bias: impl Fn(&T) -> bool) -> ErrorCounts {
    let mut c = ErrorCounts { ref_words: reference.iter().filter(|t| is_bias(t)).count(), ..ErrorCounts::default() };
    for s in align(reference, hypothesis) {
        match s.op {
            EditOp::Match => {}
            EditOp::Sub if s.reference.as_ref().is_some_and(&is_bias) => c.sub += 1,
            EditOp::Del if s.reference.as_ref().is_some_and(&is_bias) => c.del += 1,
            EditOp::Ins if s.hypothesis.as_ref().is_some_and(&is_bias) => c.ins += 1,
            _ => {}
        }
    }
    c
}

/// Word error rate in percent. An empty reference scores 0 against an
/// empty hypothesis and `100 · |hyp|` otherwise.
pub fn wer<T: PartialEq + Clone>(reference: &[T], hypothesis: &[T]) -> f64 {
    word_errors(reference, hypothesis).rate().unwrap_or(0.0)
}

/// Biased WER in percent; `None` without bias words in the reference and
/// no inserted bias words.
pub fn bwer<T: Ord + Clone>(reference: &[T], hypothesis: &[T], bias_vocab: &BTreeSet<T>) -> Option<f64> {
    bias_errors(reference, hypothesis, |t| bias_vocab.contains(t)).rate()
}

fn count_in(set: &[WordId], of: &[WordId]) -> usize {
    of.iter().filter(|id| set.contains(id)).count()
}

/// `100 · Σ|B_sentence ∩ B_retrieval| / Σ|B_sentence|`.
pub fn recall_b(oracle: &[Vec<WordId>], retrieved: &[Vec<WordId>]) -> Option<f64> {
    let den: usize = oracle.iter().map(Vec::len).sum();
    let num: usize = oracle.iter().zip(retrieved).map(|(o, r)| count_in(r, o)).sum();
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// `100 · Σ|B_sentence| / Σ|B_retrieval|`, the ratio as literally written.
pub fn recall_b_literal(oracle: &[Vec<WordId>], retrieved: &[Vec<WordId>]) -> Option<f64> {
    let den: usize = retrieved.iter().map(Vec::len).sum();
    let num: usize = oracle.iter().map(Vec::len).sum();
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Union of the homophone sets of the oracle words, minus the oracle words.
pub fn h_sentence(oracle: &[WordId], graph: &HomophoneGraph) -> Vec<WordId> {
    let set: BTreeSet<WordId> =
        oracle.iter().flat_map(|&id| graph.homophones(id).iter().copied()).filter(|h| !oracle.contains(h)).collect();
    set.into_iter().collect()
}

/// `100 · Σ|H_sentence ∩ B_retrieval| / Σ|H_sentence|`.
pub fn recall_h(oracle: &[Vec<WordId>], retrieved: &[Vec<WordId>], graph: &HomophoneGraph) -> Option<f64> {
    let (mut num, mut den) = (0, 0);
    for (o, r) in oracle.iter().zip(retrieved) {
        let h = h_sentence(o, graph);
        den += h.len();
        num += count_in(r, &h);
    }
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// `100 · Σ|H_sentence ∩ B_retrieval| / Σ|B_retrieval|`.
pub fn recall_h_literal(oracle: &[Vec<WordId>], retrieved: &[Vec<WordId>], graph: &HomophoneGraph) -> Option<f64> {
    let (mut num, mut den) = (0, 0);
    for (o, r) in oracle.iter().zip(retrieved) {
        num += count_in(r, &h_sentence(o, graph));
        den += r.len();
    }
    (den > 0).then(|| 100.0 * num as f64 / den as f64)
}

/// Smallest `k` with `|oracle ∩ top-k| / |oracle| ≥ target/100`, or
/// `Err(ranking.len())` when the ranking never gets there.
pub fn depth_for_target(oracle: &[WordId], ranking: &[WordId], target: f64) -> core::result::Result<usize, usize> {
    let need = target / 100.0 * oracle.len() as f64;
    let mut hits = 0usize;
    if need <= 0.0 {
        return Ok(if ranking.is_empty() { 0 } else { 1 });
    }
    for (k, id) in ranking.iter().enumerate() {
        if oracle.contains(id) {
            hits += 1;
            if hits as f64 >= need - 1e-9 * oracle.len() as f64 {
                return Ok(k + 1);
            }
        }
    }
    Err(ranking.len())
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct RecallAtTarget {
    pub target: f64,
    /// Mean minimal depth over utterances with a non-empty oracle.
    pub mean_depth: f64,
    /// Utterances that never reached the target; counted at full depth.
    pub unreachable: usize,
}

pub fn recall_at_target(oracle: &[Vec<WordId>], rankings: &[Vec<WordId>], target: f64) -> Option<RecallAtTarget> {
    let (mut sum, mut n, mut unreachable) = (0usize, 0usize, 0usize);
    for (o, r) in oracle.iter().zip(rankings) {
        if o.is_empty() {
            continue;
        }
        n += 1;
        sum += match depth_for_target(o, r, target) {
            Ok(k) => k,
            Err(k) => {
                unreachable += 1;
                k
            }
        };
    }
    (n > 0).then(|| RecallAtTarget { target, mean_depth: sum as f64 / n as f64, unreachable })
}

/// For each bias word, the other vocabulary words closest to it in
/// phoneme edit distance (exact homophones first when they exist).
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionTable {
    map: BTreeMap<WordId, Vec<WordId>>,
}

impl ConfusionTable {
    pub fn build(vocab: &Vocabulary, bias_words: impl IntoIterator<Item = WordId>) -> Self {
        let all: Vec<WordId> = (0..vocab.len() as WordId).collect();
        let mut map = BTreeMap::new();
        for id in bias_words {
            let Some(p) = vocab.pron(id) else { continue };
            let mut best = usize::MAX;
            let mut near = Vec::new();
            for &other in &all {
                if other == id {
                    continue;
                }
                let d = phoneme_lev(p, vocab.pron(other).expect("in range"));
                if d < best {
                    best = d;
                    near.clear();
                }
                if d == best {
                    near.push(other);
                }
            }
            if !near.is_empty() {
                map.insert(id, near);
            }
        }
        ConfusionTable { map }
    }

    pub fn confusables(&self, id: WordId) -> Option<&[WordId]> {
        self.map.get(&id).map(Vec::as_slice)
    }

    pub fn is_bias(&self, id: WordId) -> bool {
        self.map.contains_key(&id)
    }
}

/// Stand-in for a contextual recognizer: every bias token of the transcript
/// is replaced by one of its confusables with probability `corruption_rate`,
/// unless it is in `bias_list`. Other tokens pass through.
///
/// Two uniform draws are made per bias token whether or not it is
/// protected, so runs with different bias lists and the same `rng` state
/// corrupt the same positions.
pub fn simulate_contextual_decode(
    transcript: &[WordId],
    table: &ConfusionTable,
    bias_list: &[WordId],
    corruption_rate: f64,
    rng: &mut Rng,
) -> Vec<WordId> {
    transcript
        .iter()
        .map(|&id| match table.confusables(id) {
            Some(conf) => {
                let corrupt = rng.random::<f64>() < corruption_rate;
                let pick = conf[rng.random_range(0..conf.len())];
                if corrupt && !bias_list.contains(&id) {
                    pick
                } else {
                    id
                }
            }
            None => id,
        })
        .collect()
}

/// Build the retrieval index over every database entry.
pub fn build_bias_index(
    params: &EncoderParams,
    vocab: &Vocabulary,
    db: &BiasDatabase,
    modality: BiasModality,
    pooling: Pooling,
) -> Result<RetrievalIndex> {
    let dim = params.embed_dim();
    let mut ids = Vec::with_capacity(db.len());
    let mut data = Vec::with_capacity(db.len() * dim);
    for e in db.entries() {
        let emb = encoder::embed_bias(params, &e.word, vocab, modality, pooling)?;
        ids.push(u64::from(e.id));
        data.extend(emb.to_f32());
    }
    RetrievalIndex::from_matrix(ids, dim, data)
}

/// Full ranking of the index for one utterance.
pub fn rank_utterance(params: &EncoderParams, pooling: Pooling, index: &RetrievalIndex, utt: &Utterance) -> Result<Vec<WordId>> {
    let q = encoder::embed_speech(params, &utt.frames, pooling)?.to_f32();
    Ok(index.rank_all(&q)?.into_iter().map(|h| h.id as WordId).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    /// Retrieval depths at which recall is reported.
    pub ks: Vec<usize>,
    /// Depth of the bias list handed to the decoder.
    pub decode_k: usize,
    /// Recall targets (percent) for mean minimal depth.
    pub recall_targets: Vec<f64>,
    pub corruption_rate: f64,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions { ks: alloc::vec![10, 50], decode_k: 50, recall_targets: alloc::vec![99.0], corruption_rate: 0.3, seed: 0 }
    }
}

/// WER and B-WER of one decoding condition.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct DecodeScores {
    pub words: ErrorCounts,
    pub bias: ErrorCounts,
}

impl DecodeScores {
    pub fn wer(&self) -> f64 {
        self.words.rate().unwrap_or(0.0)
    }

    pub fn bwer(&self) -> Option<f64> {
        self.bias.rate()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct UtteranceDetail {
    pub id: u32,
    pub oracle: Vec<WordId>,
    /// Top `decode_k` retrieved ids.
    pub retrieved: Vec<WordId>,
    /// 1-based rank of each oracle word, `None` when absent from the index.
    pub oracle_ranks: Vec<Option<usize>>,
    pub homophones: Vec<WordId>,
    pub homophones_retrieved: usize,
    pub hypothesis: Vec<WordId>,
    pub words: ErrorCounts,
    pub bias: ErrorCounts,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub n_utterances: usize,
    pub db_size: usize,
    pub decode_k: usize,
    pub recall_b: Vec<(usize, Option<f64>)>,
    pub recall_b_literal: Vec<(usize, Option<f64>)>,
    pub recall_h: Vec<(usize, Option<f64>)>,
    pub recall_h_literal: Vec<(usize, Option<f64>)>,
    pub recall_at: Vec<RecallAtTarget>,
    pub pruning: f64,
    /// Decoder given the retrieved top `decode_k`.
    pub retrieval: DecodeScores,
    /// Decoder given an empty bias list.
    pub no_bias: DecodeScores,
    /// Decoder given the oracle bias list.
    pub oracle: DecodeScores,
    pub details: Vec<UtteranceDetail>,
}

impl EvalReport {
    pub fn recall_b_at(&self, k: usize) -> Option<f64> {
        self.recall_b.iter().find(|e| e.0 == k).and_then(|e| e.1)
    }

    pub fn recall_h_at(&self, k: usize) -> Option<f64> {
        self.recall_h.iter().find(|e| e.0 == k).and_then(|e| e.1)
    }

    pub fn recall_at_target(&self, target: f64) -> Option<&RecallAtTarget> {
        self.recall_at.iter().find(|r| r.target == target)
    }
}

/// Score precomputed full rankings (one per utterance, best first).
pub fn evaluate_rankings(
    utterances: &[Utterance],
    rankings: &[Vec<WordId>],
    db: &BiasDatabase,
    graph: &HomophoneGraph,
    confusions: &ConfusionTable,
    options: &EvalOptions,
) -> Result<EvalReport> {
    if utterances.len() != rankings.len() {
        return Err(Error::invalid("one ranking per utterance required"));
    }
    if options.decode_k == 0 || options.ks.contains(&0) {
        return Err(Error::config("retrieval depth must be at least 1"));
    }
    if !(0.0..=1.0).contains(&options.corruption_rate) {
        return Err(Error::config("corruption_rate must lie in [0, 1]"));
    }
    let oracle: Vec<Vec<WordId>> =
        utterances.iter().map(|u| u.oracle_bias.iter().copied().filter(|&id| db.contains(id)).collect()).collect();
    let top = |k: usize| -> Vec<Vec<WordId>> { rankings.iter().map(|r| r[..k.min(r.len())].to_vec()).collect() };
    let mut report = EvalReport {
        n_utterances: utterances.len(),
        db_size: db.len(),
        decode_k: options.decode_k,
        recall_b: Vec::new(),
        recall_b_literal: Vec::new(),
        recall_h: Vec::new(),
        recall_h_literal: Vec::new(),
        recall_at: Vec::new(),
        pruning: pruning_rate(options.decode_k.min(db.len()), db.len()),
        retrieval: DecodeScores::default(),
        no_bias: DecodeScores::default(),
        oracle: DecodeScores::default(),
        details: Vec::with_capacity(utterances.len()),
    };
    for &k in &options.ks {
        let r = top(k);
        report.recall_b.push((k, recall_b(&oracle, &r)));
        report.recall_b_literal.push((k, recall_b_literal(&oracle, &r)));
        report.recall_h.push((k, recall_h(&oracle, &r, graph)));
        report.recall_h_literal.push((k, recall_h_literal(&oracle, &r, graph)));
    }
    for &x in &options.recall_targets {
        if let Some(r) = recall_at_target(&oracle, rankings, x) {
            report.recall_at.push(r);
        }
    }
    let retrieved = top(options.decode_k);
    for (i, u) in utterances.iter().enumerate() {
        let score = |list: &[WordId], acc: &mut DecodeScores| {
            let mut r = rng::indexed_stream(options.seed, "decode", u64::from(u.id));
            let hyp = simulate_contextual_decode(&u.transcript, confusions, list, options.corruption_rate, &mut r);
            let words = word_errors(&u.transcript, &hyp);
            let bias = bias_errors(&u.transcript, &hyp, |t| db.contains(*t));
            acc.words.add(&words);
            acc.bias.add(&bias);
            (hyp, words, bias)
        };
        let (hypothesis, words, bias) = score(&retrieved[i], &mut report.retrieval);
        score(&[], &mut report.no_bias);
        score(&oracle[i], &mut report.oracle);
        let homophones = h_sentence(&oracle[i], graph);
        report.details.push(UtteranceDetail {
            id: u.id,
            oracle: oracle[i].clone(),
            retrieved: retrieved[i].clone(),
            oracle_ranks: oracle[i].iter().map(|o| rankings[i].iter().position(|r| r == o).map(|p| p + 1)).collect(),
            homophones_retrieved: count_in(&retrieved[i], &homophones),
            homophones,
            hypothesis,
            words,
            bias,
        });
    }
    Ok(report)
}

/// Encode, retrieve and score every utterance.
#[allow(clippy::too_many_arguments)]
pub fn evaluate(
    utterances: &[Utterance],
    vocab: &Vocabulary,
    db: &BiasDatabase,
    graph: &HomophoneGraph,
    params: &EncoderParams,
    pooling: Pooling,
    index: &RetrievalIndex,
    options: &EvalOptions,
) -> Result<EvalReport> {
    let rankings: Vec<Vec<WordId>> =
        utterances.iter().map(|u| rank_utterance(params, pooling, index, u)).collect::<Result<_>>()?;
    let confusions = ConfusionTable::build(vocab, db.ids());
    evaluate_rankings(utterances, &rankings, db, graph, &confusions, options)
}
