use biasret_core::contrastive::{train, TrainConfig};
use biasret_core::encoder::{EncoderParams, Pooling};
use biasret_core::lexicon::HomophoneGraph;
use biasret_core::metrics::{build_bias_index, evaluate, EvalOptions, EvalReport};
use biasret_core::synth::{gen_corpus, Corpus, CorpusConfig, VocabConfig};

fn corpus() -> Corpus {
    let cfg = CorpusConfig {
        vocab: VocabConfig { n_words: 80, n_common: 20, n_homophone_pairs: 6, n_near_pairs: 6, ..VocabConfig::default() },
        n_train: 300,
        n_test: 50,
        ..CorpusConfig::default()
    };
    gen_corpus(&cfg, 21).unwrap()
}

fn config() -> TrainConfig {
    let mut cfg = TrainConfig { epochs: 6, seed: 3, ..TrainConfig::default() };
    cfg.encoder.latent_dim = 32;
    cfg.encoder.embed_dim = 32;
    cfg
}

fn score(corpus: &Corpus, params: &EncoderParams, cfg: &TrainConfig, options: &EvalOptions) -> EvalReport {
    let graph = HomophoneGraph::build(&corpus.db, cfg.homophone_threshold);
    let index = build_bias_index(params, &corpus.vocab, &corpus.db, cfg.encoder.modality, cfg.encoder.pooling).unwrap();
    evaluate(&corpus.test, &corpus.vocab, &corpus.db, &graph, params, cfg.encoder.pooling, &index, options).unwrap()
}

#[test]
fn training_makes_retrieval_useful() {
    let corpus = corpus();
    let cfg = config();
    let options = EvalOptions { ks: vec![5], decode_k: 5, ..EvalOptions::default() };
    let mut enc = cfg.encoder.clone();
    enc.feature_dim = corpus.vocab.prototypes().dim();
    let before = score(&corpus, &EncoderParams::init(&enc, 0).unwrap(), &cfg, &options);
    let out = train(&corpus, &cfg).unwrap();
    let after = score(&corpus, &out.params, &cfg, &options);

    let (b0, b1) = (before.recall_b_at(5).unwrap(), after.recall_b_at(5).unwrap());
    assert!(b1 >= b0 + 30.0 && b1 >= 80.0, "Recall_B#5 {b0:.1} -> {b1:.1}");
    let depth = |r: &EvalReport| r.recall_at_target(99.0).unwrap().mean_depth;
    assert!(depth(&after) < depth(&before));
    assert_eq!(after.oracle.bwer(), Some(0.0));
    assert!(after.retrieval.bwer().unwrap() < after.no_bias.bwer().unwrap());
    // With the oracle list nothing is corrupted at all.
    assert_eq!(after.oracle.words.errors(), 0);
}

#[test]
fn full_database_bias_list_protects_every_word() {
    let corpus = corpus();
    let cfg = config();
    let mut enc = cfg.encoder.clone();
    enc.feature_dim = corpus.vocab.prototypes().dim();
    let params = EncoderParams::init(&enc, 1).unwrap();
    let options = EvalOptions { decode_k: corpus.db.len(), corruption_rate: 1.0, ..EvalOptions::default() };
    let report = score(&corpus, &params, &cfg, &options);
    assert_eq!(report.retrieval, report.oracle);
    assert_eq!(report.retrieval.bwer(), Some(0.0));
    assert_eq!(report.no_bias.bwer(), Some(100.0));
    assert_eq!(report.pruning, 0.0);
}

#[test]
fn distractors_leave_existing_entries_alone() {
    let corpus = corpus();
    let cfg = TrainConfig { encoder: { let mut e = config().encoder; e.pooling = Pooling::Avg; e }, ..config() };
    let mut enc = cfg.encoder.clone();
    enc.feature_dim = corpus.vocab.prototypes().dim();
    let params = EncoderParams::init(&enc, 2).unwrap();
    let small = build_bias_index(&params, &corpus.vocab, &corpus.db, enc.modality, enc.pooling).unwrap();

    let mut grown = corpus.clone();
    grown.add_distractors(corpus.db.len() * 3, 5).unwrap();
    assert_eq!(grown.db.len(), corpus.db.len() * 4);
    assert_eq!(grown.test, corpus.test);
    let big = build_bias_index(&params, &grown.vocab, &grown.db, enc.modality, enc.pooling).unwrap();
    for (i, &id) in small.ids().iter().enumerate() {
        let j = big.ids().iter().position(|&x| x == id).unwrap();
        assert_eq!(small.row(i), big.row(j));
    }
    // Distractors are new spellings.
    let originals: std::collections::BTreeSet<&str> = corpus.db.entries().iter().map(|e| e.word.as_str()).collect();
    assert!(grown.db.entries()[corpus.db.len()..].iter().all(|e| !originals.contains(e.word.as_str())));
}
