//! Pronunciation lexicon, rule-based grapheme-to-phoneme fallback, phoneme
//! edit distance and homophone sets.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::db::{BiasDatabase, WordId};
use crate::error::{Error, Result};

/// ARPAbet without stress markers.
pub const INVENTORY: [&str; 39] = [
    "AA", "AE", "AH", "AO", "AW", "AY", "B", "CH", "D", "DH", "EH", "ER", "EY", "F", "G", "HH",
    "IH", "IY", "JH", "K", "L", "M", "N", "NG", "OW", "OY", "P", "R", "S", "SH", "T", "TH", "UH",
    "UW", "V", "W", "Y", "Z", "ZH",
];

/// Index into [`INVENTORY`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Phoneme(u8);

impl Phoneme {
    pub fn from_index(index: usize) -> Option<Phoneme> {
        (index < INVENTORY.len()).then_some(Phoneme(index as u8))
    }

    pub fn parse(symbol: &str) -> Result<Phoneme> {
        INVENTORY
            .iter()
            .position(|s| *s == symbol)
            .map(|i| Phoneme(i as u8))
            .ok_or_else(|| Error::invalid(alloc::format!("unknown phoneme symbol {symbol:?}")))
    }

    #[inline]
    pub fn index(self) -> usize {
        usize::from(self.0)
    }

    pub fn symbol(self) -> &'static str {
        INVENTORY[self.index()]
    }
}

impl fmt::Display for Phoneme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct PhonemeSeq(pub Vec<Phoneme>);

impl PhonemeSeq {
    /// Parse whitespace-separated symbols, e.g. `"DH EH R"`.
    pub fn parse(text: &str) -> Result<PhonemeSeq> {
        let seq = text.split_whitespace().map(Phoneme::parse).collect::<Result<Vec<_>>>()?;
        Ok(PhonemeSeq(seq))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = Phoneme> + '_ {
        self.0.iter().copied()
    }
}

impl fmt::Display for PhonemeSeq {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            f.write_str(p.symbol())?;
        }
        Ok(())
    }
}

/// Word → pronunciation map. Keys are lower-cased.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Lexicon {
    entries: BTreeMap<String, PhonemeSeq>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert a pronunciation. Fails when the case-folded word is already
    /// present or the pronunciation is empty.
    pub fn insert(&mut self, word: &str, phonemes: PhonemeSeq) -> Result<()> {
        let key = fold(word)?;
        if phonemes.is_empty() {
            return Err(Error::invalid(alloc::format!("empty pronunciation for {key:?}")));
        }
        if self.entries.contains_key(&key) {
            return Err(Error::invalid(alloc::format!("duplicate lexicon entry {key:?}")));
        }
        self.entries.insert(key, phonemes);
        Ok(())
    }

    pub fn get(&self, word: &str) -> Option<&PhonemeSeq> {
        self.entries.get(&word.trim().to_lowercase())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.get(word).is_some()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PhonemeSeq)> {
        self.entries.iter().map(|(w, p)| (w.as_str(), p))
    }

    /// Lexicon lookup with the rule-table fallback for unknown words.
    pub fn g2p(&self, word: &str) -> Result<PhonemeSeq> {
        let key = fold(word)?;
        match self.entries.get(&key) {
            Some(p) => Ok(p.clone()),
            None => rule_g2p(&key),
        }
    }
}

fn fold(word: &str) -> Result<String> {
    let w = word.trim();
    if w.is_empty() {
        return Err(Error::invalid("empty word"));
    }
    Ok(w.to_lowercase())
}

/// Letter-to-sound rules, matched greedily longest-first at each position.
/// Characters without a rule are skipped.
pub const G2P_RULES: &[(&str, &[&str])] = &[
    ("tch", &["CH"]),
    ("igh", &["AY"]),
    ("ch", &["CH"]),
    ("sh", &["SH"]),
    ("th", &["TH"]),
    ("ng", &["NG"]),
    ("ph", &["F"]),
    ("ck", &["K"]),
    ("wh", &["W"]),
    ("qu", &["K", "W"]),
    ("ee", &["IY"]),
    ("ea", &["IY"]),
    ("oo", &["UW"]),
    ("ou", &["AW"]),
    ("ow", &["OW"]),
    ("oa", &["OW"]),
    ("oi", &["OY"]),
    ("oy", &["OY"]),
    ("ai", &["EY"]),
    ("ay", &["EY"]),
    ("aw", &["AO"]),
    ("er", &["ER"]),
    ("ir", &["ER"]),
    ("ur", &["ER"]),
    ("a", &["AE"]),
    ("b", &["B"]),
    ("c", &["K"]),
    ("d", &["D"]),
    ("e", &["EH"]),
    ("f", &["F"]),
    ("g", &["G"]),
    ("h", &["HH"]),
    ("i", &["IH"]),
    ("j", &["JH"]),
    ("k", &["K"]),
    ("l", &["L"]),
    ("m", &["M"]),
    ("n", &["N"]),
    ("o", &["AA"]),
    ("p", &["P"]),
    ("q", &["K"]),
    ("r", &["R"]),
    ("s", &["S"]),
    ("t", &["T"]),
    ("u", &["AH"]),
    ("v", &["V"]),
    ("w", &["W"]),
    ("x", &["K", "S"]),
    ("y", &["Y"]),
    ("z", &["Z"]),
];

/// Rule-table pronunciation of an already case-folded word.
pub fn rule_g2p(word: &str) -> Result<PhonemeSeq> {
    let bytes = word.as_bytes();
    let mut out = Vec::new();
    let mut pos = 0;
    while pos < bytes.len() {
        let rule = (1..=3)
            .rev()
            .filter(|&n| pos + n <= bytes.len())
            .find_map(|n| {
                let chunk = &bytes[pos..pos + n];
                G2P_RULES.iter().find(|(g, _)| g.as_bytes() == chunk).map(|r| (n, r.1))
            });
        match rule {
            Some((n, phones)) => {
                for p in phones {
                    out.push(Phoneme::parse(p)?);
                }
                pos += n;
            }
            None => pos += 1,
        }
    }
    if out.is_empty() {
        return Err(Error::invalid(alloc::format!("no pronounceable letters in {word:?}")));
    }
    Ok(PhonemeSeq(out))
}

/// Unit-cost Levenshtein distance over phoneme symbols.
pub fn phoneme_lev(a: &PhonemeSeq, b: &PhonemeSeq) -> usize {
    let (a, b) = (&a.0, &b.0);
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, pa) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, pb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(pa != pb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `phoneme_lev(a, b) <= bound`, computed on a diagonal band with early exit.
pub fn lev_within(a: &[Phoneme], b: &[Phoneme], bound: usize) -> bool {
    if a.len().abs_diff(b.len()) > bound {
        return false;
    }
    let inf = usize::MAX / 2;
    let mut prev: Vec<usize> = (0..=b.len()).map(|j| if j <= bound { j } else { inf }).collect();
    let mut cur = vec![inf; b.len() + 1];
    for (i, pa) in a.iter().enumerate() {
        let row = i + 1;
        let lo = row.saturating_sub(bound);
        let hi = (row + bound).min(b.len());
        cur.iter_mut().for_each(|c| *c = inf);
        if lo == 0 {
            cur[0] = row;
        }
        let mut best = if lo == 0 { row } else { inf };
        for j in lo.max(1)..=hi {
            let sub = prev[j - 1] + usize::from(*pa != b[j - 1]);
            let v = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
            cur[j] = v;
            best = best.min(v);
        }
        if best > bound {
            return false;
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()] <= bound
}

/// Homophone sets: `j ∈ H_i ⇔ i ≠ j ∧ lev(p_i, p_j) ≤ θ`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct HomophoneGraph {
    threshold: usize,
    sets: BTreeMap<WordId, Vec<WordId>>,
}

impl HomophoneGraph {
    /// All-pairs construction. Pairs whose lengths differ by more than θ are
    /// never compared.
    pub fn build(db: &BiasDatabase, threshold: usize) -> HomophoneGraph {
        let entries = db.entries();
        let mut by_len: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, e) in entries.iter().enumerate() {
            by_len.entry(e.phonemes.len()).or_default().push(pos);
        }
        let mut sets: BTreeMap<WordId, Vec<WordId>> =
            entries.iter().map(|e| (e.id, Vec::new())).collect();
        let buckets: Vec<(usize, &Vec<usize>)> = by_len.iter().map(|(l, v)| (*l, v)).collect();
        for (bi, &(len_a, bucket_a)) in buckets.iter().enumerate() {
            for &(len_b, bucket_b) in &buckets[bi..] {
                if len_b - len_a > threshold {
                    break;
                }
                let same = len_a == len_b;
                for (ia, &a) in bucket_a.iter().enumerate() {
                    let others = if same { &bucket_b[ia + 1..] } else { &bucket_b[..] };
                    for &b in others {
                        let (ea, eb) = (&entries[a], &entries[b]);
                        if lev_within(&ea.phonemes.0, &eb.phonemes.0, threshold) {
                            sets.get_mut(&ea.id).expect("id present").push(eb.id);
                            sets.get_mut(&eb.id).expect("id present").push(ea.id);
                        }
                    }
                }
            }
        }
        for v in sets.values_mut() {
            v.sort_unstable();
        }
        HomophoneGraph { threshold, sets }
    }

    /// Build from explicit sets (e.g. read back from disk). Members are
    /// sorted; symmetry and irreflexivity are checked.
    pub fn from_sets(threshold: usize, sets: BTreeMap<WordId, Vec<WordId>>) -> Result<Self> {
        let mut sets = sets;
        for (id, members) in sets.iter_mut() {
            members.sort_unstable();
            members.dedup();
            if members.binary_search(id).is_ok() {
                return Err(Error::invalid(alloc::format!("entry {id} lists itself")));
            }
        }
        for (id, members) in &sets {
            for m in members {
                let back = sets.get(m).is_some_and(|s| s.binary_search(id).is_ok());
                if !back {
                    return Err(Error::invalid(alloc::format!("asymmetric pair {id} -> {m}")));
                }
            }
        }
        Ok(HomophoneGraph { threshold, sets })
    }

    pub fn threshold(&self) -> usize {
        self.threshold
    }

    /// `H_i`; empty for ids the graph does not know.
    pub fn homophones(&self, id: WordId) -> &[WordId] {
        self.sets.get(&id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn iter(&self) -> impl Iterator<Item = (WordId, &[WordId])> {
        self.sets.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// Number of unordered homophone pairs.
    pub fn pair_count(&self) -> usize {
        self.sets.values().map(Vec::len).sum::<usize>() / 2
    }
}

impl fmt::Display for HomophoneGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "HomophoneGraph(θ={}, entries={}, pairs={})", self.threshold, self.len(), self.pair_count())
    }
}

#[doc(hidden)]
pub fn symbols(seq: &PhonemeSeq) -> Vec<String> {
    seq.iter().map(|p| p.symbol().to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::BiasEntry;
    use proptest::prelude::*;

    fn seq(s: &str) -> PhonemeSeq {
        PhonemeSeq::parse(s).unwrap()
    }

    /// Textbook recursive definition, exponential but fine for length ≤ 6.
    fn lev_oracle(a: &[Phoneme], b: &[Phoneme]) -> usize {
        if a.is_empty() {
            return b.len();
        }
        if b.is_empty() {
            return a.len();
        }
        let cost = usize::from(a[0] != b[0]);
        (lev_oracle(&a[1..], &b[1..]) + cost)
            .min(lev_oracle(&a[1..], b) + 1)
            .min(lev_oracle(a, &b[1..]) + 1)
    }

    #[test]
    fn g2p_uses_lexicon_first() {
        let mut lex = Lexicon::new();
        lex.insert("there", seq("DH EH R")).unwrap();
        assert_eq!(lex.g2p("there").unwrap(), seq("DH EH R"));
        assert_eq!(lex.g2p("  There ").unwrap(), seq("DH EH R"));
    }

    #[test]
    fn g2p_rejects_empty() {
        let lex = Lexicon::new();
        assert!(matches!(lex.g2p(""), Err(Error::InvalidInput(_))));
        assert!(matches!(lex.g2p("   "), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn g2p_fallback_applies_rule_table() {
        // z → Z, z → Z, q → K (no two- or three-letter rule starts with "zz" or "zq")
        let lex = Lexicon::new();
        assert_eq!(lex.g2p("zzq").unwrap(), seq("Z Z K"));
        // th → TH, igh → AY
        assert_eq!(lex.g2p("thigh").unwrap(), seq("TH AY"));
        assert!(lex.g2p("123").is_err());
    }

    #[test]
    fn lexicon_rejects_case_folded_duplicates() {
        let mut lex = Lexicon::new();
        lex.insert("Their", seq("DH EH R")).unwrap();
        assert!(lex.insert("their", seq("DH EH R")).is_err());
        assert!(lex.insert("x", PhonemeSeq::default()).is_err());
    }

    #[test]
    fn lev_examples() {
        assert_eq!(phoneme_lev(&seq("DH EH R"), &seq("DH EH R")), 0);
        assert_eq!(phoneme_lev(&seq("DH EH R"), &seq("DH IY R")), 1);
        assert_eq!(phoneme_lev(&seq("DH EH R"), &seq("")), 3);
        assert_eq!(phoneme_lev(&seq("K AE T"), &seq("AE T S")), 2);
    }

    fn arb_seq(max: usize) -> impl Strategy<Value = PhonemeSeq> {
        // A small alphabet makes near matches common.
        proptest::collection::vec(0usize..5, 0..=max)
            .prop_map(|v| PhonemeSeq(v.into_iter().map(|i| Phoneme::from_index(i).unwrap()).collect()))
    }

    proptest! {
        #[test]
        fn lev_matches_recursive_oracle(a in arb_seq(6), b in arb_seq(6)) {
            prop_assert_eq!(phoneme_lev(&a, &b), lev_oracle(&a.0, &b.0));
        }

        #[test]
        fn lev_symmetric_and_triangle(a in arb_seq(6), b in arb_seq(6), c in arb_seq(6)) {
            prop_assert_eq!(phoneme_lev(&a, &a), 0);
            prop_assert_eq!(phoneme_lev(&a, &b), phoneme_lev(&b, &a));
            prop_assert!(phoneme_lev(&a, &c) <= phoneme_lev(&a, &b) + phoneme_lev(&b, &c));
        }

        #[test]
        fn banded_lev_agrees(a in arb_seq(7), b in arb_seq(7), bound in 0usize..4) {
            prop_assert_eq!(lev_within(&a.0, &b.0, bound), phoneme_lev(&a, &b) <= bound);
        }

        #[test]
        fn g2p_is_deterministic(word in "[a-z]{1,8}") {
            let lex = Lexicon::new();
            prop_assert_eq!(lex.g2p(&word).unwrap(), lex.g2p(&word).unwrap());
        }
    }

    fn db_of(prons: &[&str]) -> BiasDatabase {
        BiasDatabase::new(
            prons
                .iter()
                .enumerate()
                .map(|(i, p)| BiasEntry::new(i as WordId, alloc::format!("w{i}"), seq(p)))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn homophone_graph_identical_pronunciations() {
        let db = BiasDatabase::new(alloc::vec![
            BiasEntry::new(0, "their".into(), seq("DH EH R")),
            BiasEntry::new(1, "there".into(), seq("DH EH R")),
        ])
        .unwrap();
        let g = HomophoneGraph::build(&db, 2);
        assert_eq!(g.homophones(0), &[1]);
        assert_eq!(g.homophones(1), &[0]);
    }

    #[test]
    fn homophone_graph_theta_zero_distinct() {
        let db = db_of(&["DH EH R", "DH IY R", "K AE T", "K AE T S"]);
        let g = HomophoneGraph::build(&db, 0);
        assert!(g.iter().all(|(_, s)| s.is_empty()));
        assert_eq!(g.len(), 4);
    }

    #[test]
    fn homophone_graph_from_sets_validates() {
        let mut sets = BTreeMap::new();
        sets.insert(0, alloc::vec![1]);
        sets.insert(1, alloc::vec![]);
        assert!(HomophoneGraph::from_sets(2, sets.clone()).is_err());
        sets.insert(1, alloc::vec![0]);
        assert!(HomophoneGraph::from_sets(2, sets).is_ok());
    }
}
