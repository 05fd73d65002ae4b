//! Seeded synthetic corpora.
//!
//! Words are random phoneme strings with word-like spellings. Each phoneme
//! symbol owns an acoustic prototype vector; an utterance is the concatenation
//! of its phonemes' prototypes, each held for a random number of frames, plus
//! Gaussian noise. Words with identical pronunciations therefore produce
//! identically distributed frames.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::db::{BiasDatabase, BiasEntry, WordId};
use crate::error::{Error, Result};
use crate::lexicon::{Lexicon, Phoneme, PhonemeSeq, INVENTORY};
use crate::rng::{self, Rng};

/// Frames held per phoneme by the canonical (bias-word) rendering.
pub const CANONICAL_FRAMES_PER_PHONEME: usize = 2;

/// Spelling options per phoneme, aligned with [`INVENTORY`].
const GRAPHEMES: [&[&str]; 39] = [
    &["o", "a"],          // AA
    &["a"],               // AE
    &["u", "a"],          // AH
    &["aw", "o"],         // AO
    &["ow", "ou"],        // AW
    &["i", "y", "igh"],   // AY
    &["b", "bb"],         // B
    &["ch", "tch"],       // CH
    &["d", "dd"],         // D
    &["th"],              // DH
    &["e", "ea"],         // EH
    &["er", "ur", "ir"],  // ER
    &["ay", "ai", "ey"],  // EY
    &["f", "ph", "ff"],   // F
    &["g", "gg"],         // G
    &["h"],               // HH
    &["i"],               // IH
    &["ee", "ea", "ie"],  // IY
    &["j", "dge"],        // JH
    &["k", "c", "ck"],    // K
    &["l", "ll"],         // L
    &["m", "mm"],         // M
    &["n", "nn"],         // N
    &["ng"],              // NG
    &["o", "oa", "ow"],   // OW
    &["oy", "oi"],        // OY
    &["p", "pp"],         // P
    &["r", "rr", "wr"],   // R
    &["s", "ss", "c"],    // S
    &["sh"],              // SH
    &["t", "tt"],         // T
    &["th"],              // TH
    &["oo", "u"],         // UH
    &["oo", "ew", "ue"],  // UW
    &["v"],               // V
    &["w"],               // W
    &["y"],               // Y
    &["z", "s"],          // Z
    &["zh", "s"],         // ZH
];

/// Feature matrix of an utterance, stored frame-major: frame `t` occupies
/// `data[t*dim..(t+1)*dim]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSeq {
    dim: usize,
    data: Vec<f64>,
}

impl FrameSeq {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || data.is_empty() || !data.len().is_multiple_of(dim) {
            return Err(Error::invalid("frame data must hold at least one whole frame"));
        }
        if !data.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("non-finite frame value"));
        }
        Ok(FrameSeq { dim, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn frame(&self, t: usize) -> &[f64] {
        &self.data[t * self.dim..(t + 1) * self.dim]
    }

    pub fn frames(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// One prototype vector per phoneme symbol.
#[derive(Debug, Clone, PartialEq)]
pub struct AcousticPrototypes {
    dim: usize,
    table: Vec<f64>,
}

impl AcousticPrototypes {
    pub fn generate(dim: usize, rng: &mut Rng) -> Self {
        let table = (0..INVENTORY.len() * dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        AcousticPrototypes { dim, table }
    }

    /// Rebuild from a phoneme-major table of `INVENTORY.len() × dim` values.
    pub fn from_table(dim: usize, table: Vec<f64>) -> Result<Self> {
        if dim == 0 || table.len() != INVENTORY.len() * dim {
            return Err(Error::invalid("prototype table must hold one vector per phoneme"));
        }
        if !table.iter().all(|x| x.is_finite()) {
            return Err(Error::invalid("non-finite prototype value"));
        }
        Ok(AcousticPrototypes { dim, table })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn table(&self) -> &[f64] {
        &self.table
    }

    pub fn get(&self, p: Phoneme) -> &[f64] {
        &self.table[p.index() * self.dim..(p.index() + 1) * self.dim]
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct VocabConfig {
    pub n_words: usize,
    /// Pairs of rare words with identical pronunciations.
    pub n_homophone_pairs: usize,
    /// Pairs of rare words whose pronunciations differ in one substituted
    /// phoneme.
    pub n_near_pairs: usize,
    /// Frequency-rank cutoff: ids below it are common, the rest rare.
    pub n_common: usize,
    pub feature_dim: usize,
    pub common_len: (usize, usize),
    pub rare_len: (usize, usize),
    /// Zipf exponent of the phoneme distribution used for common words.
    pub common_phoneme_skew: f64,
    /// Zipf exponent of the phoneme distribution used for rare words.
    pub rare_phoneme_skew: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig {
            n_words: 300,
            n_homophone_pairs: 20,
            n_near_pairs: 60,
            n_common: 60,
            feature_dim: 16,
            common_len: (2, 3),
            rare_len: (3, 6),
            common_phoneme_skew: 1.5,
            rare_phoneme_skew: 0.3,
        }
    }
}

/// Generated vocabulary. Word ids are indices into `words`.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    words: Vec<String>,
    prons: Vec<PhonemeSeq>,
    lexicon: Lexicon,
    prototypes: AcousticPrototypes,
    n_common: usize,
    rare_skew: f64,
    rare_len: (usize, usize),
}

struct WordMaker<'a> {
    used_prons: BTreeSet<PhonemeSeq>,
    used_spellings: BTreeSet<String>,
    phoneme_order: &'a [usize],
}

impl WordMaker<'_> {
    fn phoneme_dist(&self, skew: f64) -> WeightedIndex<f64> {
        let w: Vec<f64> = (0..INVENTORY.len()).map(|r| libm::pow(r as f64 + 1.0, -skew)).collect();
        WeightedIndex::new(w).expect("positive weights")
    }

    fn pron(&self, rng: &mut Rng, len: (usize, usize), dist: &WeightedIndex<f64>) -> PhonemeSeq {
        let n = rng.random_range(len.0..=len.1);
        PhonemeSeq(
            (0..n)
                .map(|_| Phoneme::from_index(self.phoneme_order[dist.sample(rng)]).expect("in range"))
                .collect(),
        )
    }

    fn spell(rng: &mut Rng, pron: &PhonemeSeq) -> String {
        let mut s = String::new();
        for p in pron.iter() {
            let opts = GRAPHEMES[p.index()];
            s.push_str(opts[rng.random_range(0..opts.len())]);
        }
        s
    }

    /// A word with a pronunciation and spelling not used before.
    fn fresh(&mut self, rng: &mut Rng, len: (usize, usize), dist: &WeightedIndex<f64>) -> Result<(String, PhonemeSeq)> {
        for _ in 0..10_000 {
            let pron = self.pron(rng, len, dist);
            if self.used_prons.contains(&pron) {
                continue;
            }
            let spelling = Self::spell(rng, &pron);
            if self.used_spellings.contains(&spelling) {
                continue;
            }
            self.used_prons.insert(pron.clone());
            self.used_spellings.insert(spelling.clone());
            return Ok((spelling, pron));
        }
        Err(Error::config("could not generate enough distinct words; widen the word length range"))
    }

    /// An unused pronunciation one substitution away from `pron`, with a
    /// fresh spelling.
    fn substitute_one(&mut self, rng: &mut Rng, pron: &PhonemeSeq, dist: &WeightedIndex<f64>) -> Option<(String, PhonemeSeq)> {
        for _ in 0..200 {
            let mut p = pron.clone();
            let pos = rng.random_range(0..p.len());
            let q = Phoneme::from_index(self.phoneme_order[dist.sample(rng)]).expect("in range");
            if q == p.0[pos] || self.used_prons.contains(&{
                p.0[pos] = q;
                p.clone()
            }) {
                continue;
            }
            let spelling = Self::spell(rng, &p);
            if self.used_spellings.contains(&spelling) {
                continue;
            }
            self.used_prons.insert(p.clone());
            self.used_spellings.insert(spelling.clone());
            return Some((spelling, p));
        }
        None
    }

    /// A second spelling of an already registered pronunciation.
    fn respell(&mut self, rng: &mut Rng, pron: &PhonemeSeq) -> Option<String> {
        if pron.iter().all(|p| GRAPHEMES[p.index()].len() == 1) {
            return None;
        }
        for _ in 0..200 {
            let s = Self::spell(rng, pron);
            if !self.used_spellings.contains(&s) {
                self.used_spellings.insert(s.clone());
                return Some(s);
            }
        }
        None
    }
}

impl Vocabulary {
    pub fn generate(config: &VocabConfig, seed: u64) -> Result<Self> {
        let n_rare = config
            .n_words
            .checked_sub(config.n_common)
            .ok_or_else(|| Error::config("n_common exceeds n_words"))?;
        if 2 * (config.n_homophone_pairs + config.n_near_pairs) > n_rare {
            return Err(Error::config("too many homophone pairs for the rare vocabulary"));
        }
        for (lo, hi) in [config.common_len, config.rare_len] {
            if lo == 0 || lo > hi {
                return Err(Error::config("word length range must satisfy 1 <= min <= max"));
            }
        }
        if config.feature_dim == 0 {
            return Err(Error::config("feature_dim must be positive"));
        }
        let mut rng = rng::stream(seed, "vocabulary");
        let prototypes = AcousticPrototypes::generate(config.feature_dim, &mut rng);
        let mut order: Vec<usize> = (0..INVENTORY.len()).collect();
        order.shuffle(&mut rng);
        let mut maker = WordMaker { used_prons: BTreeSet::new(), used_spellings: BTreeSet::new(), phoneme_order: &order };
        let common_dist = maker.phoneme_dist(config.common_phoneme_skew);
        let rare_dist = maker.phoneme_dist(config.rare_phoneme_skew);

        let mut words = Vec::with_capacity(config.n_words);
        let mut prons = Vec::with_capacity(config.n_words);
        for _ in 0..config.n_common {
            let (w, p) = maker.fresh(&mut rng, config.common_len, &common_dist)?;
            words.push(w);
            prons.push(p);
        }
        let mut pairs = 0;
        while pairs < config.n_homophone_pairs {
            let (w, p) = maker.fresh(&mut rng, config.rare_len, &rare_dist)?;
            match maker.respell(&mut rng, &p) {
                Some(w2) => {
                    words.push(w);
                    prons.push(p.clone());
                    words.push(w2);
                    prons.push(p);
                    pairs += 1;
                }
                // Keep the pronunciation reserved so it cannot reappear as a
                // single word later; retry with another one.
                None => {
                    maker.used_spellings.remove(&w);
                }
            }
        }
        let mut near = 0;
        while near < config.n_near_pairs {
            let (w, p) = maker.fresh(&mut rng, config.rare_len, &rare_dist)?;
            if let Some((w2, p2)) = maker.substitute_one(&mut rng, &p, &rare_dist) {
                words.push(w);
                prons.push(p);
                words.push(w2);
                prons.push(p2);
                near += 1;
            }
        }
        while words.len() < config.n_words {
            let (w, p) = maker.fresh(&mut rng, config.rare_len, &rare_dist)?;
            words.push(w);
            prons.push(p);
        }

        let mut lexicon = Lexicon::new();
        for (w, p) in words.iter().zip(&prons) {
            lexicon.insert(w, p.clone())?;
        }
        Ok(Vocabulary {
            words,
            prons,
            lexicon,
            prototypes,
            n_common: config.n_common,
            rare_skew: config.rare_phoneme_skew,
            rare_len: config.rare_len,
        })
    }

    /// Reassemble a vocabulary from stored parts. Word `i` gets id `i`; the
    /// first `n_common` are common. `rare_skew` and `rare_len` only steer
    /// [`Vocabulary::add_distractors`].
    pub fn from_parts(
        entries: Vec<(String, PhonemeSeq)>,
        prototypes: AcousticPrototypes,
        n_common: usize,
        rare_skew: f64,
        rare_len: (usize, usize),
    ) -> Result<Self> {
        if n_common > entries.len() {
            return Err(Error::invalid("n_common exceeds the number of words"));
        }
        if rare_len.0 == 0 || rare_len.0 > rare_len.1 {
            return Err(Error::invalid("word length range must satisfy 1 <= min <= max"));
        }
        let mut lexicon = Lexicon::new();
        for (w, p) in &entries {
            lexicon.insert(w, p.clone())?;
        }
        let (words, prons) = entries.into_iter().map(|(w, p)| (w.trim().to_lowercase(), p)).unzip();
        Ok(Vocabulary { words, prons, lexicon, prototypes, n_common, rare_skew, rare_len })
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn rare_skew(&self) -> f64 {
        self.rare_skew
    }

    pub fn rare_len(&self) -> (usize, usize) {
        self.rare_len
    }

    pub fn word(&self, id: WordId) -> Option<&str> {
        self.words.get(id as usize).map(String::as_str)
    }

    pub fn pron(&self, id: WordId) -> Option<&PhonemeSeq> {
        self.prons.get(id as usize)
    }

    pub fn id_of(&self, word: &str) -> Option<WordId> {
        let w = word.trim().to_lowercase();
        self.words.iter().position(|x| *x == w).map(|i| i as WordId)
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }

    pub fn prototypes(&self) -> &AcousticPrototypes {
        &self.prototypes
    }

    pub fn n_common(&self) -> usize {
        self.n_common
    }

    pub fn is_rare(&self, id: WordId) -> bool {
        (id as usize) >= self.n_common && (id as usize) < self.words.len()
    }

    pub fn common_ids(&self) -> impl Iterator<Item = WordId> {
        0..self.n_common as WordId
    }

    pub fn rare_ids(&self) -> impl Iterator<Item = WordId> {
        self.n_common as WordId..self.words.len() as WordId
    }

    pub fn bias_entry(&self, id: WordId) -> Option<BiasEntry> {
        Some(BiasEntry::new(id, self.word(id)?.into(), self.pron(id)?.clone()))
    }

    /// Database of the given ids.
    pub fn bias_database(&self, ids: impl IntoIterator<Item = WordId>) -> Result<BiasDatabase> {
        let entries = ids
            .into_iter()
            .map(|id| self.bias_entry(id).ok_or_else(|| Error::invalid(alloc::format!("unknown word id {id}"))))
            .collect::<Result<Vec<_>>>()?;
        BiasDatabase::new(entries)
    }

    /// Append `n` rare words never used in any utterance. Their
    /// pronunciations and spellings are new. Returns the new ids.
    pub fn add_distractors(&mut self, n: usize, seed: u64) -> Result<Vec<WordId>> {
        let mut rng = rng::stream(seed, "distractors");
        let order: Vec<usize> = {
            // Same phoneme ranking as the rare words: recover it from nothing
            // but the skew, so distractors follow the rare-word distribution.
            let mut counts = [0usize; 39];
            for id in self.rare_ids() {
                for p in self.prons[id as usize].iter() {
                    counts[p.index()] += 1;
                }
            }
            let mut o: Vec<usize> = (0..INVENTORY.len()).collect();
            o.sort_by(|a, b| counts[*b].cmp(&counts[*a]).then(a.cmp(b)));
            o
        };
        let mut maker = WordMaker {
            used_prons: self.prons.iter().cloned().collect(),
            used_spellings: self.words.iter().cloned().collect(),
            phoneme_order: &order,
        };
        let dist = maker.phoneme_dist(self.rare_skew);
        let mut ids = Vec::with_capacity(n);
        for _ in 0..n {
            let (w, p) = maker.fresh(&mut rng, self.rare_len, &dist)?;
            self.lexicon.insert(&w, p.clone())?;
            ids.push(self.words.len() as WordId);
            self.words.push(w);
            self.prons.push(p);
        }
        Ok(ids)
    }

    /// Canonical noiseless rendering of a word: every phoneme's prototype
    /// held for [`CANONICAL_FRAMES_PER_PHONEME`] frames.
    pub fn synth_bias_frames(&self, word: &str) -> Result<FrameSeq> {
        let pron = self
            .lexicon
            .get(word)
            .ok_or_else(|| Error::invalid(alloc::format!("word {word:?} not in lexicon")))?;
        Ok(render_canonical(&self.prototypes, pron))
    }

    pub fn synth_bias_frames_by_id(&self, id: WordId) -> Result<FrameSeq> {
        let pron = self.pron(id).ok_or_else(|| Error::invalid(alloc::format!("unknown word id {id}")))?;
        Ok(render_canonical(&self.prototypes, pron))
    }
}

/// The noiseless two-frames-per-phoneme rendering of a pronunciation.
pub fn render_canonical(prototypes: &AcousticPrototypes, pron: &PhonemeSeq) -> FrameSeq {
    let mut data = Vec::with_capacity(pron.len() * CANONICAL_FRAMES_PER_PHONEME * prototypes.dim());
    for p in pron.iter() {
        for _ in 0..CANONICAL_FRAMES_PER_PHONEME {
            data.extend_from_slice(prototypes.get(p));
        }
    }
    FrameSeq { dim: prototypes.dim(), data }
}

/// Shorthand: `n_words` rare words, no common words and no near pairs.
pub fn gen_vocabulary(seed: u64, n_words: usize, n_homophone_pairs: usize) -> Result<Vocabulary> {
    let config = VocabConfig { n_words, n_homophone_pairs, n_near_pairs: 0, n_common: 0, ..VocabConfig::default() };
    Vocabulary::generate(&config, seed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Utterance {
    pub id: u32,
    pub transcript: Vec<WordId>,
    pub frames: FrameSeq,
    /// Rare words of the transcript, sorted and deduplicated.
    pub oracle_bias: Vec<WordId>,
}

impl Utterance {
    pub fn transcript_words<'a>(&'a self, vocab: &'a Vocabulary) -> impl Iterator<Item = &'a str> + 'a {
        self.transcript.iter().map(move |&id| vocab.word(id).unwrap_or("<unk>"))
    }
}

/// Render `word_ids` as speech: for each phoneme, its prototype repeated a
/// uniformly drawn number of frames in `duration`, plus i.i.d. Gaussian noise
/// of standard deviation `noise_sigma`.
///
/// Durations come from `rng::stream(seed, "durations")`, one draw per phoneme
/// in transcript order; noise from `rng::stream(seed, "noise")`, one draw per
/// value in frame-major order.
pub fn gen_utterance(
    vocab: &Vocabulary,
    word_ids: &[WordId],
    noise_sigma: f64,
    duration: (usize, usize),
    seed: u64,
) -> Result<Utterance> {
    if word_ids.is_empty() {
        return Err(Error::invalid("utterance needs at least one word"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(Error::invalid("noise_sigma must be finite and non-negative"));
    }
    if duration.0 == 0 || duration.0 > duration.1 {
        return Err(Error::invalid("duration range must satisfy 1 <= min <= max"));
    }
    let protos = vocab.prototypes();
    let mut dur_rng = rng::stream(seed, "durations");
    let mut data = Vec::new();
    for &id in word_ids {
        let pron = vocab.pron(id).ok_or_else(|| Error::invalid(alloc::format!("unknown word id {id}")))?;
        for p in pron.iter() {
            let k = dur_rng.random_range(duration.0..=duration.1);
            for _ in 0..k {
                data.extend_from_slice(protos.get(p));
            }
        }
    }
    if noise_sigma > 0.0 {
        let mut noise_rng = rng::stream(seed, "noise");
        for x in data.iter_mut() {
            *x += noise_sigma * noise_rng.sample::<f64, _>(StandardNormal);
        }
    }
    let oracle: BTreeSet<WordId> = word_ids.iter().copied().filter(|&id| vocab.is_rare(id)).collect();
    Ok(Utterance {
        id: 0,
        transcript: word_ids.to_vec(),
        frames: FrameSeq { dim: protos.dim(), data },
        oracle_bias: oracle.into_iter().collect(),
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct CorpusConfig {
    pub vocab: VocabConfig,
    pub n_train: usize,
    pub n_test: usize,
    /// Total words per sentence.
    pub sentence_len: (usize, usize),
    /// Rare words per sentence.
    pub rare_per_sentence: (usize, usize),
    /// Zipf exponent for drawing common words by frequency rank.
    pub common_word_skew: f64,
    pub noise_sigma: f64,
    /// Frames per phoneme.
    pub duration: (usize, usize),
    /// Probability that a rare word is preceded by its context word, a
    /// common word fixed per rare word. Members of a homophone pair get
    /// different context words, so context can tell them apart.
    pub context_prob: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig {
            vocab: VocabConfig::default(),
            n_train: 2000,
            n_test: 200,
            sentence_len: (3, 6),
            rare_per_sentence: (1, 1),
            common_word_skew: 1.0,
            noise_sigma: 0.3,
            duration: (1, 3),
            context_prob: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub vocab: Vocabulary,
    /// Bias database: exactly the rare words.
    pub db: BiasDatabase,
    pub train: Vec<Utterance>,
    pub test: Vec<Utterance>,
}

impl Corpus {
    pub fn common_words(&self) -> BTreeSet<WordId> {
        self.vocab.common_ids().collect()
    }

    pub fn rare_words(&self) -> BTreeSet<WordId> {
        self.db.ids().collect()
    }

    /// Grow the bias database with `n` unseen distractor words.
    pub fn add_distractors(&mut self, n: usize, seed: u64) -> Result<()> {
        let ids = self.vocab.add_distractors(n, seed)?;
        let extra = ids.into_iter().map(|id| self.vocab.bias_entry(id).expect("just added"));
        self.db = self.db.extended(extra)?;
        Ok(())
    }
}

fn sentence_counts(config: &CorpusConfig, n: usize, rng: &mut Rng) -> Vec<(usize, usize)> {
    (0..n)
        .map(|_| {
            let len = rng.random_range(config.sentence_len.0..=config.sentence_len.1);
            let rare = rng.random_range(config.rare_per_sentence.0..=config.rare_per_sentence.1).min(len);
            (rare, len - rare)
        })
        .collect()
}

/// Draws rare words from a reshuffled deck so every rare word is used before
/// any is repeated.
struct Deck {
    cards: Vec<WordId>,
    pos: usize,
    all: Vec<WordId>,
}

impl Deck {
    fn new(all: Vec<WordId>, rng: &mut Rng) -> Self {
        let mut cards = all.clone();
        cards.shuffle(rng);
        Deck { cards, pos: 0, all }
    }

    fn draw_distinct(&mut self, n: usize, rng: &mut Rng) -> Vec<WordId> {
        let mut out: Vec<WordId> = Vec::with_capacity(n);
        let mut skipped = Vec::new();
        while out.len() < n.min(self.all.len()) {
            if self.pos == self.cards.len() {
                self.cards = self.all.clone();
                self.cards.shuffle(rng);
                self.pos = 0;
                // Words skipped as duplicates go first in the new deck.
                for (i, w) in skipped.drain(..).enumerate() {
                    if let Some(j) = self.cards.iter().position(|c| *c == w) {
                        self.cards.swap(i, j);
                    }
                }
            }
            let c = self.cards[self.pos];
            self.pos += 1;
            if out.contains(&c) {
                skipped.push(c);
            } else {
                out.push(c);
            }
        }
        out
    }
}

/// Generate a full corpus. Every rare word appears in at least one training
/// utterance.
pub fn gen_corpus(config: &CorpusConfig, seed: u64) -> Result<Corpus> {
    let (lo, hi) = config.sentence_len;
    let (rlo, rhi) = config.rare_per_sentence;
    if lo == 0 || lo > hi || rlo > rhi || rhi == 0 {
        return Err(Error::config("invalid sentence length or rare-word range"));
    }
    let vocab = Vocabulary::generate(&config.vocab, rng::derive_seed(seed, "vocab", 0))?;
    let rare: Vec<WordId> = vocab.rare_ids().collect();
    let common: Vec<WordId> = vocab.common_ids().collect();
    if rare.is_empty() {
        return Err(Error::config("corpus needs at least one rare word"));
    }
    if common.is_empty() && lo > rhi {
        return Err(Error::config("sentences need common words but the vocabulary has none"));
    }
    if config.n_train * rhi.min(hi) < rare.len() {
        return Err(Error::config(alloc::format!(
            "{} rare words cannot all fit in {} training sentences",
            rare.len(),
            config.n_train
        )));
    }

    let mut rng = rng::stream(seed, "corpus");
    let mut train_counts = Vec::new();
    let mut covered = false;
    for _ in 0..1000 {
        train_counts = sentence_counts(config, config.n_train, &mut rng);
        if train_counts.iter().map(|c| c.0).sum::<usize>() >= rare.len() {
            covered = true;
            break;
        }
    }
    if !covered {
        return Err(Error::config("rare-word slots too few to cover the rare vocabulary"));
    }
    let test_counts = sentence_counts(config, config.n_test, &mut rng);

    let common_dist = if common.is_empty() {
        None
    } else {
        let w: Vec<f64> = (0..common.len()).map(|r| libm::pow(r as f64 + 1.0, -config.common_word_skew)).collect();
        Some(WeightedIndex::new(w).map_err(|_| Error::config("invalid common word skew"))?)
    };

    if !(0.0..=1.0).contains(&config.context_prob) {
        return Err(Error::config("context_prob must lie in [0, 1]"));
    }
    let context = if config.context_prob > 0.0 && !common.is_empty() {
        context_words(&vocab, &rare, &common, rng::derive_seed(seed, "context", 0))
    } else {
        BTreeMap::new()
    };
    let mut ctx_rng = rng::stream(seed, "context_draws");

    let make_split = |counts: &[(usize, usize)], first_id: u32, deck: &mut Deck, rng: &mut Rng, ctx_rng: &mut Rng| -> Result<Vec<Utterance>> {
        let mut out = Vec::with_capacity(counts.len());
        for (i, &(n_rare, mut n_common)) in counts.iter().enumerate() {
            let mut words = deck.draw_distinct(n_rare, rng);
            if common_dist.is_none() {
                n_common = 0;
            }
            if let Some(dist) = &common_dist {
                words.extend((0..n_common).map(|_| common[dist.sample(rng)]));
            }
            words.shuffle(rng);
            if !context.is_empty() {
                let mut with_ctx = Vec::with_capacity(words.len() * 2);
                for w in words {
                    if let Some(&c) = context.get(&w) {
                        if ctx_rng.random::<f64>() < config.context_prob {
                            with_ctx.push(c);
                        }
                    }
                    with_ctx.push(w);
                }
                words = with_ctx;
            }
            let id = first_id + i as u32;
            let mut u = gen_utterance(
                &vocab,
                &words,
                config.noise_sigma,
                config.duration,
                rng::derive_seed(seed, "utterance", u64::from(id)),
            )?;
            u.id = id;
            out.push(u);
        }
        Ok(out)
    };
    let mut deck = Deck::new(rare.clone(), &mut rng);
    let train = make_split(&train_counts, 0, &mut deck, &mut rng, &mut ctx_rng)?;
    let mut test_deck = Deck::new(rare.clone(), &mut rng);
    let test = make_split(&test_counts, config.n_train as u32, &mut test_deck, &mut rng, &mut ctx_rng)?;
    let db = vocab.bias_database(rare)?;
    Ok(Corpus { vocab, db, train, test })
}

/// A uniformly drawn common word per rare word; words sharing a
/// pronunciation get distinct context words when there are enough.
fn context_words(vocab: &Vocabulary, rare: &[WordId], common: &[WordId], seed: u64) -> BTreeMap<WordId, WordId> {
    let mut r = rng::stream(seed, "context");
    let mut by_pron: BTreeMap<&PhonemeSeq, BTreeSet<WordId>> = BTreeMap::new();
    let mut out = BTreeMap::new();
    for &w in rare {
        let pron = vocab.pron(w).expect("rare ids come from the vocabulary");
        let used = by_pron.entry(pron).or_default();
        let mut c = common[r.random_range(0..common.len())];
        for _ in 0..100 {
            if !used.contains(&c) {
                break;
            }
            c = common[r.random_range(0..common.len())];
        }
        used.insert(c);
        out.insert(w, c);
    }
    out
}

/// Per-word occurrence counts over a split.
pub fn word_counts(utterances: &[Utterance]) -> BTreeMap<WordId, usize> {
    let mut m = BTreeMap::new();
    for u in utterances {
        for &w in &u.transcript {
            *m.entry(w).or_insert(0) += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lexicon::{phoneme_lev, HomophoneGraph};

    #[test]
    fn vocabulary_has_forced_homophones() {
        let v = gen_vocabulary(1, 10, 2).unwrap();
        assert_eq!(v.len(), 10);
        assert_eq!(v.lexicon().len(), 10);
        let mut zero = 0;
        for a in 0..10u32 {
            for b in a + 1..10 {
                if phoneme_lev(v.pron(a).unwrap(), v.pron(b).unwrap()) == 0 {
                    zero += 1;
                    assert_ne!(v.word(a), v.word(b));
                }
            }
        }
        assert!(zero >= 2);
    }

    #[test]
    fn vocabulary_is_deterministic() {
        assert_eq!(gen_vocabulary(1, 50, 5).unwrap(), gen_vocabulary(1, 50, 5).unwrap());
        assert_ne!(gen_vocabulary(1, 50, 5).unwrap(), gen_vocabulary(2, 50, 5).unwrap());
    }

    #[test]
    fn exactly_the_requested_zero_distance_pairs() {
        let v = gen_vocabulary(1, 100, 10).unwrap();
        let db = v.bias_database(0..100).unwrap();
        let g = HomophoneGraph::build(&db, 0);
        assert_eq!(g.pair_count(), 10);
        assert!(g.iter().all(|(_, s)| s.len() <= 1));
    }

    #[test]
    fn too_many_pairs_is_config_error() {
        assert!(matches!(gen_vocabulary(1, 10, 6), Err(Error::Config(_))));
    }

    #[test]
    fn noiseless_unit_duration_is_concatenated_prototypes() {
        let v = gen_vocabulary(3, 20, 2).unwrap();
        let u = gen_utterance(&v, &[4, 7], 0.0, (1, 1), 9).unwrap();
        let mut expect = Vec::new();
        for id in [4, 7] {
            for p in v.pron(id).unwrap().iter() {
                expect.extend_from_slice(v.prototypes().get(p));
            }
        }
        assert_eq!(u.frames.as_slice(), &expect[..]);
        assert_eq!(u.oracle_bias, alloc::vec![4, 7]);
    }

    #[test]
    fn empty_or_unknown_words_rejected() {
        let v = gen_vocabulary(3, 20, 2).unwrap();
        assert!(matches!(gen_utterance(&v, &[], 0.0, (1, 1), 0), Err(Error::InvalidInput(_))));
        assert!(matches!(gen_utterance(&v, &[99], 0.0, (1, 1), 0), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn frame_count_replays_duration_stream() {
        let v = gen_vocabulary(5, 30, 3).unwrap();
        let ids = [1, 2, 3, 10];
        let u = gen_utterance(&v, &ids, 0.3, (1, 4), 1234).unwrap();
        let mut replay = rng::stream(1234, "durations");
        let total: usize = ids
            .iter()
            .flat_map(|&id| v.pron(id).unwrap().iter().collect::<Vec<_>>())
            .map(|_| replay.random_range(1..=4usize))
            .sum();
        assert_eq!(u.frames.len(), total);
    }

    #[test]
    fn canonical_rendering() {
        let v = gen_vocabulary(5, 30, 3).unwrap();
        let id = 7;
        let w = v.word(id).unwrap();
        let f = v.synth_bias_frames(w).unwrap();
        assert_eq!(f.len(), 2 * v.pron(id).unwrap().len());
        assert_eq!(f, v.synth_bias_frames(w).unwrap());
        let via_utt = gen_utterance(&v, &[id], 0.0, (2, 2), 77).unwrap();
        assert_eq!(f, via_utt.frames);
        assert!(v.synth_bias_frames("notaword").is_err());
    }

    #[test]
    fn homophones_render_identically() {
        let v = gen_vocabulary(11, 40, 5).unwrap();
        // pairs are generated as consecutive ids
        for a in 0..40u32 {
            for b in a + 1..40 {
                if v.pron(a) == v.pron(b) {
                    assert_eq!(v.synth_bias_frames_by_id(a).unwrap(), v.synth_bias_frames_by_id(b).unwrap());
                }
            }
        }
    }

    fn small_config() -> CorpusConfig {
        CorpusConfig {
            vocab: VocabConfig { n_words: 80, n_homophone_pairs: 5, n_near_pairs: 5, n_common: 20, ..VocabConfig::default() },
            n_train: 60,
            n_test: 20,
            ..CorpusConfig::default()
        }
    }

    #[test]
    fn corpus_covers_rare_words_and_oracles() {
        let c = gen_corpus(&small_config(), 3).unwrap();
        let counts = word_counts(&c.train);
        for id in c.db.ids() {
            assert!(counts.get(&id).copied().unwrap_or(0) >= 1, "rare word {id} unused");
        }
        let common = c.common_words();
        let rare = c.rare_words();
        assert!(common.is_disjoint(&rare));
        assert_eq!(common.len() + rare.len(), c.vocab.len());
        for u in c.train.iter().chain(&c.test) {
            let expect: BTreeSet<WordId> = u.transcript.iter().copied().filter(|w| rare.contains(w)).collect();
            assert_eq!(u.oracle_bias, expect.into_iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn corpus_is_deterministic() {
        assert_eq!(gen_corpus(&small_config(), 3).unwrap(), gen_corpus(&small_config(), 3).unwrap());
    }

    #[test]
    fn infeasible_corpus_is_config_error() {
        let mut cfg = small_config();
        cfg.n_train = 10;
        assert!(matches!(gen_corpus(&cfg, 1), Err(Error::Config(_))));
    }

    #[test]
    fn distractors_extend_database() {
        let mut c = gen_corpus(&small_config(), 3).unwrap();
        let before = c.db.len();
        c.add_distractors(40, 9).unwrap();
        assert_eq!(c.db.len(), before + 40);
        assert_eq!(c.vocab.len(), 120);
        assert!(c.vocab.is_rare(119));
    }
}
