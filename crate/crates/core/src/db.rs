//! The bias database (`B_total`).

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lexicon::PhonemeSeq;

/// Identifier of a vocabulary word. Bias entries reuse the id of their word.
pub type WordId = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BiasEntry {
    pub id: WordId,
    pub word: String,
    pub phonemes: PhonemeSeq,
}

impl BiasEntry {
    pub fn new(id: WordId, word: String, phonemes: PhonemeSeq) -> Self {
        BiasEntry { id, word, phonemes }
    }
}

/// Bias entries sorted by ascending id.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct BiasDatabase {
    entries: Vec<BiasEntry>,
    by_id: BTreeMap<WordId, usize>,
}

impl BiasDatabase {
    pub fn new(mut entries: Vec<BiasEntry>) -> Result<Self> {
        entries.sort_by_key(|e| e.id);
        let mut by_id = BTreeMap::new();
        for (pos, e) in entries.iter().enumerate() {
            if e.phonemes.is_empty() {
                return Err(Error::invalid(alloc::format!("bias entry {} has no phonemes", e.id)));
            }
            if by_id.insert(e.id, pos).is_some() {
                return Err(Error::invalid(alloc::format!("duplicate bias id {}", e.id)));
            }
        }
        Ok(BiasDatabase { entries, by_id })
    }

    pub fn entries(&self) -> &[BiasEntry] {
        &self.entries
    }

    pub fn get(&self, id: WordId) -> Option<&BiasEntry> {
        self.by_id.get(&id).map(|&p| &self.entries[p])
    }

    pub fn contains(&self, id: WordId) -> bool {
        self.by_id.contains_key(&id)
    }

    pub fn ids(&self) -> impl Iterator<Item = WordId> + '_ {
        self.entries.iter().map(|e| e.id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// A new database holding these entries plus `extra`.
    pub fn extended(&self, extra: impl IntoIterator<Item = BiasEntry>) -> Result<Self> {
        let mut all = self.entries.clone();
        all.extend(extra);
        BiasDatabase::new(all)
    }
}
