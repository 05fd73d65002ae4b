use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::index;
use rand::Rng as _;

use crate::db::{BiasDatabase, WordId};
use crate::error::{Error, Result};
use crate::lexicon::HomophoneGraph;
use crate::math::round_half_even;
use crate::rng::Rng;

/// Sampled negatives. The first `forced` ids came from the homophone pool.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Negatives {
    pub ids: Vec<WordId>,
    pub forced: usize,
}

/// Draw `n_neg` distinct negatives outside `oracle`.
///
/// `round(alpha·n_neg)` (half to even) of them are drawn uniformly without
/// replacement from the homophones of the oracle words; if that pool is
/// smaller the shortfall is filled from the random pool. The rest are drawn
/// uniformly from the database minus the oracle minus what was already
/// chosen.
pub fn sample_negatives(
    oracle: &[WordId],
    db: &BiasDatabase,
    graph: &HomophoneGraph,
    n_neg: usize,
    alpha: f64,
    rng: &mut Rng,
) -> Result<Negatives> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::config("alpha must lie in [0, 1]"));
    }
    let oracle_set: BTreeSet<WordId> = oracle.iter().copied().collect();
    let in_db = oracle_set.iter().filter(|id| db.contains(**id)).count();
    if n_neg > db.len() - in_db {
        return Err(Error::config(alloc::format!(
            "cannot draw {n_neg} negatives from {} non-oracle entries",
            db.len() - in_db
        )));
    }
    let quota = round_half_even(alpha * n_neg as f64) as usize;
    let mut chosen: Vec<WordId> = Vec::with_capacity(n_neg);
    let mut taken: BTreeSet<WordId> = BTreeSet::new();

    if quota > 0 {
        let pool: Vec<WordId> = oracle_set
            .iter()
            .flat_map(|&id| graph.homophones(id).iter().copied())
            .filter(|h| !oracle_set.contains(h) && db.contains(*h))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        let take = quota.min(pool.len());
        for i in index::sample(rng, pool.len(), take).into_iter() {
            chosen.push(pool[i]);
            taken.insert(pool[i]);
        }
    }
    let forced = chosen.len();

    let remaining = n_neg - forced;
    let entries = db.entries();
    let free = db.len() - in_db - forced;
    if remaining * 4 <= free {
        // Rejection sampling; the acceptance rate is at least 3/4.
        while chosen.len() < n_neg {
            let id = entries[rng.random_range(0..entries.len())].id;
            if !oracle_set.contains(&id) && taken.insert(id) {
                chosen.push(id);
            }
        }
    } else {
        let candidates: Vec<WordId> = entries.iter().map(|e| e.id).filter(|id| !oracle_set.contains(id) && !taken.contains(id)).collect();
        for i in index::sample(rng, candidates.len(), remaining).into_iter() {
            chosen.push(candidates[i]);
        }
    }
    Ok(Negatives { ids: chosen, forced })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::db::BiasEntry;
    use crate::lexicon::PhonemeSeq;
    use crate::rng;
    use alloc::collections::BTreeMap;

    /// Ids 0..n; homophone sets given explicitly.
    fn fixture(n: u32, pairs: &[(WordId, WordId)]) -> (BiasDatabase, HomophoneGraph) {
        let pron = PhonemeSeq::parse("AA").unwrap();
        let db = BiasDatabase::new((0..n).map(|i| BiasEntry::new(i, alloc::format!("w{i}"), pron.clone())).collect()).unwrap();
        let mut sets: BTreeMap<WordId, Vec<WordId>> = (0..n).map(|i| (i, Vec::new())).collect();
        for &(a, b) in pairs {
            sets.get_mut(&a).unwrap().push(b);
            sets.get_mut(&b).unwrap().push(a);
        }
        (db, HomophoneGraph::from_sets(2, sets).unwrap())
    }

    fn star(n: u32, center: WordId, leaves: core::ops::Range<WordId>) -> (BiasDatabase, HomophoneGraph) {
        let pairs: Vec<_> = leaves.map(|l| (center, l)).collect();
        fixture(n, &pairs)
    }

    #[test]
    fn alpha_zero_forces_nothing() {
        let (db, g) = star(50, 0, 1..20);
        let mut r = rng::stream(1, "t");
        let neg = sample_negatives(&[0], &db, &g, 10, 0.0, &mut r).unwrap();
        assert_eq!(neg.forced, 0);
        assert_eq!(neg.ids.len(), 10);
    }

    #[test]
    fn alpha_one_takes_only_homophones() {
        let (db, g) = star(50, 0, 1..20);
        let mut r = rng::stream(2, "t");
        let neg = sample_negatives(&[0], &db, &g, 10, 1.0, &mut r).unwrap();
        assert_eq!(neg.forced, 10);
        assert!(neg.ids.iter().all(|id| (1..20).contains(id)));
    }

    #[test]
    fn small_pool_is_backfilled() {
        let (db, g) = star(50, 0, 1..4);
        let mut r = rng::stream(3, "t");
        let neg = sample_negatives(&[0], &db, &g, 10, 1.0, &mut r).unwrap();
        assert_eq!(neg.forced, 3);
        assert_eq!(neg.ids.len(), 10);
    }

    #[test]
    fn infeasible_request_is_config_error() {
        let (db, g) = star(10, 0, 1..3);
        let mut r = rng::stream(4, "t");
        assert!(matches!(sample_negatives(&[0, 1], &db, &g, 9, 0.0, &mut r), Err(Error::Config(_))));
        assert!(sample_negatives(&[0, 1], &db, &g, 8, 0.5, &mut r).is_ok());
    }

    #[test]
    fn never_oracle_never_duplicate() {
        let (db, g) = fixture(40, &[(0, 1), (0, 2), (3, 4), (5, 6), (0, 6)]);
        for seed in 0..300 {
            let mut r = rng::indexed_stream(9, "t", seed);
            let oracle = [0, 3, (seed % 40) as WordId];
            let n_neg = 1 + (seed as usize % 36);
            let alpha = (seed % 11) as f64 / 10.0;
            let neg = sample_negatives(&oracle, &db, &g, n_neg, alpha, &mut r).unwrap();
            let set: BTreeSet<_> = neg.ids.iter().collect();
            assert_eq!(set.len(), n_neg);
            assert!(neg.ids.iter().all(|id| !oracle.contains(id)));
        }
    }

    #[test]
    fn homophone_share_matches_alpha() {
        // Pool of 30 homophones in a 1000-entry database. With n_neg = 10 and
        // alpha = 0.3 exactly 3 are forced; the other 7 come from the 996
        // remaining entries, 27 of which are homophones (hypergeometric).
        let (db, g) = star(1000, 0, 1..31);
        let (n_neg, alpha, draws) = (10usize, 0.3, 10_000usize);
        let mut r = rng::stream(5, "mc");
        let mut hom = 0usize;
        for _ in 0..draws {
            let neg = sample_negatives(&[0], &db, &g, n_neg, alpha, &mut r).unwrap();
            hom += neg.ids.iter().filter(|id| (1..31).contains(*id)).count();
        }
        let (pop, good, k) = (996.0, 27.0, 7.0);
        let mean = 3.0 + k * good / pop;
        let var = k * (good / pop) * (1.0 - good / pop) * (pop - k) / (pop - 1.0);
        let total_mean = mean * draws as f64;
        let sigma = libm::sqrt(var * draws as f64);
        assert!((hom as f64 - total_mean).abs() <= 3.0 * sigma, "{hom} vs {total_mean} ± {sigma}");
        let share = hom as f64 / (draws * n_neg) as f64;
        assert!((share - alpha).abs() < 0.03);
    }
}
