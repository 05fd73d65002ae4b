use alloc::collections::{BTreeMap, BTreeSet};
use alloc::vec::Vec;

use rand::seq::SliceRandom;

use super::sampler::sample_negatives;
use crate::db::{BiasDatabase, WordId};
use crate::error::Result;
use crate::lexicon::HomophoneGraph;
use crate::rng::Rng;
use crate::synth::Utterance;

/// A training pair: an utterance and one of its oracle bias words.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    /// Index into the utterance slice the batch was built from.
    pub utterance: usize,
    pub target: WordId,
}

/// One pair per (utterance, oracle word in the database).
pub fn build_pairs(utterances: &[Utterance], db: &BiasDatabase) -> Vec<Pair> {
    utterances
        .iter()
        .enumerate()
        .flat_map(|(i, u)| u.oracle_bias.iter().filter(|id| db.contains(**id)).map(move |&target| Pair { utterance: i, target }))
        .collect()
}

/// Shuffle the pairs and cut them into batches of at most `batch_size`
/// in which no bias word is the target twice. A pair that would repeat a
/// target goes to the next batch that can take it.
pub fn plan_batches(pairs: &[Pair], batch_size: usize, rng: &mut Rng) -> Vec<Vec<Pair>> {
    let mut order = pairs.to_vec();
    order.shuffle(rng);
    let mut batches: Vec<(Vec<Pair>, BTreeSet<WordId>)> = Vec::new();
    let mut first_open = 0;
    for p in order {
        let slot = (first_open..batches.len()).find(|&b| batches[b].0.len() < batch_size && !batches[b].1.contains(&p.target));
        let b = match slot {
            Some(b) => b,
            None => {
                batches.push((Vec::new(), BTreeSet::new()));
                batches.len() - 1
            }
        };
        batches[b].0.push(p);
        batches[b].1.insert(p.target);
        while first_open < batches.len() && batches[first_open].0.len() == batch_size {
            first_open += 1;
        }
    }
    batches.into_iter().map(|(b, _)| b).collect()
}

/// A fully sampled batch: everything the loss needs except the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub rows: Vec<Pair>,
    /// Bias ids of the logit columns: the row targets first, in row order,
    /// then the extra negatives.
    pub columns: Vec<WordId>,
    /// Row-major `rows × columns`; `true` drops the logit because the column
    /// is another oracle word of the row's utterance.
    pub mask: Vec<bool>,
    /// `(i, j)` with `i` a batch target and `j ∈ H_i`.
    pub reg_pairs: Vec<(WordId, WordId)>,
    /// Homophone ratio used for sampling.
    pub alpha: f64,
    /// Negatives that came from homophone pools.
    pub forced: usize,
}

impl Batch {
    /// Sample negatives for every row and lay out the logit matrix.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        rows: Vec<Pair>,
        utterances: &[Utterance],
        db: &BiasDatabase,
        graph: &HomophoneGraph,
        n_neg: usize,
        alpha: f64,
        with_reg: bool,
        rng: &mut Rng,
    ) -> Result<Batch> {
        let mut columns: Vec<WordId> = rows.iter().map(|p| p.target).collect();
        let mut col_of: BTreeMap<WordId, usize> = columns.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut forced = 0;
        for p in &rows {
            let neg = sample_negatives(&utterances[p.utterance].oracle_bias, db, graph, n_neg, alpha, rng)?;
            forced += neg.forced;
            for id in neg.ids {
                col_of.entry(id).or_insert_with(|| {
                    columns.push(id);
                    columns.len() - 1
                });
            }
        }
        let m = columns.len();
        let mut mask = alloc::vec![false; rows.len() * m];
        for (i, p) in rows.iter().enumerate() {
            for &o in &utterances[p.utterance].oracle_bias {
                if let Some(&j) = col_of.get(&o) {
                    if j != i {
                        mask[i * m + j] = true;
                    }
                }
            }
        }
        let mut reg_pairs = Vec::new();
        if with_reg {
            for p in &rows {
                for &h in graph.homophones(p.target) {
                    if db.contains(h) {
                        reg_pairs.push((p.target, h));
                    }
                }
            }
        }
        Ok(Batch { rows, columns, mask, reg_pairs, alpha, forced })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Every bias id whose embedding the loss needs, columns first.
    pub fn bias_ids(&self) -> Vec<WordId> {
        let mut seen: BTreeSet<WordId> = self.columns.iter().copied().collect();
        let mut ids = self.columns.clone();
        for &(_, h) in &self.reg_pairs {
            if seen.insert(h) {
                ids.push(h);
            }
        }
        ids
    }
}
