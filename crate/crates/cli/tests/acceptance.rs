//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::Instant;

use biasret::commands::cmd_bench;
use biasret::formats::report::parse_summary;
use biasret::PipelineConfig;
use biasret_core::contrastive::{alpha_schedule, build_pairs, grad_check, plan_batches, train, Batch, CurriculumParams, TrainConfig};
use biasret_core::encoder::{BiasModality, EncoderConfig, EncoderParams, Pooling};
use biasret_core::index::{pruning_rate, RetrievalIndex};
use biasret_core::lexicon::HomophoneGraph;
use biasret_core::metrics::{
    align, build_bias_index, bwer, evaluate, recall_at_target, recall_b, recall_h, simulate_contextual_decode, wer, ConfusionTable, EditOp,
    EvalOptions, EvalReport,
};
use biasret_core::rng;
use biasret_core::synth::{gen_corpus, gen_vocabulary, Corpus, CorpusConfig, VocabConfig};
use biasret_core::WordId;
use rand::Rng as _;

type Check = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Check);

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn scratch_dir(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn schedule() -> Check {
    let p = CurriculumParams { alpha_min: 0.01, alpha_max: 0.5, gamma: 0.05 };
    let a0 = alpha_schedule(&p.at(0));
    let mut prev = a0;
    let mut monotone = true;
    for n in 1..=20_000u64 {
        let a = alpha_schedule(&p.at(n));
        monotone &= a >= prev;
        prev = a;
    }
    let far = alpha_schedule(&p.at(1_000_000));
    ensure(a0 == 0.01 && monotone && (far - 0.5).abs() < 1e-9, format!("alpha_0={a0} monotone={monotone} |alpha_1e6-0.5|={:.1e}", (far - 0.5).abs()))
}

fn gradients() -> Check {
    let corpus = gen_corpus(
        &CorpusConfig {
            vocab: VocabConfig { n_words: 40, n_homophone_pairs: 6, n_near_pairs: 3, n_common: 15, feature_dim: 5, ..VocabConfig::default() },
            n_train: 25,
            n_test: 5,
            ..CorpusConfig::default()
        },
        11,
    )
    .map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    let mut cells = Vec::new();
    for pooling in [Pooling::Avg, Pooling::Attn] {
        for modality in [BiasModality::Acoustic, BiasModality::Textual] {
            for dcl in [false, true] {
                let config = TrainConfig {
                    encoder: EncoderConfig { feature_dim: 5, latent_dim: 6, embed_dim: 4, frame_layers: 1, pooling, modality, context: 1 },
                    dcl_enabled: dcl,
                    lambda: 0.3,
                    // Every homophone pair stays inside the hinge, away from its kink.
                    reg_margin: 2.5,
                    ..TrainConfig::default()
                };
                let mut params = EncoderParams::init(&config.encoder, 5).map_err(|e| e.to_string())?;
                // Below the clip, so the temperature gradient is live.
                params.log_inv_temp.data[0] = 5f64.ln();
                let graph = HomophoneGraph::build(&corpus.db, config.homophone_threshold);
                let pairs = build_pairs(&corpus.train, &corpus.db);
                let mut r = rng::stream(3, "acceptance-batch");
                let rows = plan_batches(&pairs[..6], 6, &mut r).remove(0);
                let alpha = if dcl { 0.5 } else { 0.0 };
                let batch = Batch::assemble(rows, &corpus.train, &corpus.db, &graph, 5, alpha, config.reg_active(), &mut r).map_err(|e| e.to_string())?;
                if dcl && batch.reg_pairs.is_empty() {
                    return Err("curriculum batch has no homophone pairs".into());
                }
                let rep = grad_check(&params, &batch, &corpus.train, &corpus.vocab, &config, 1e-3, 400, 1).map_err(|e| e.to_string())?;
                worst = worst.max(rep.max_rel_error);
                cells.push(format!("{}/{}/{}={:.1e}", pooling.name(), modality.name(), if dcl { "dcl" } else { "plain" }, rep.max_rel_error));
            }
        }
    }
    ensure(worst < 1e-4, format!("max rel error {worst:.2e} over 8 configs [{}]", cells.join(" ")))
}

fn index_exactness() -> Check {
    let (n, d) = (10_000, 64);
    let mut r = rng::stream(7, "acceptance-index");
    let rows: Vec<Vec<f32>> = (0..n).map(|_| (0..d).map(|_| r.random_range(-1.0f32..1.0)).collect()).collect();
    let index = RetrievalIndex::build(rows.iter().cloned().enumerate().map(|(i, v)| (i as u64, v))).map_err(|e| e.to_string())?;
    let unit: Vec<Vec<f64>> = rows
        .iter()
        .map(|v| {
            let norm = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
            v.iter().map(|&x| f64::from(x) / norm).collect()
        })
        .collect();
    let mut worst_score: f64 = 0.0;
    for qi in 0..100 {
        let q: Vec<f32> = (0..d).map(|_| r.random_range(-1.0f32..1.0)).collect();
        let qn = q.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        let mut oracle: Vec<(u64, f64)> =
            unit.iter().enumerate().map(|(i, row)| (i as u64, row.iter().zip(&q).map(|(a, &b)| a * f64::from(b) / qn).sum())).collect();
        oracle.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        for k in [1, 10, 50] {
            let hits = index.query(&q, k).map_err(|e| e.to_string())?;
            let ids: Vec<u64> = hits.iter().map(|h| h.id).collect();
            let want: Vec<u64> = oracle[..k].iter().map(|o| o.0).collect();
            if ids != want {
                return Err(format!("query {qi}, K={k}: ids differ from the full sort"));
            }
            for (h, o) in hits.iter().zip(&oracle) {
                worst_score = worst_score.max((h.score - o.1).abs());
            }
        }
    }
    ensure(worst_score <= 1e-6, format!("100 queries x K in {{1,10,50}} match the full sort; max score error {worst_score:.1e}"))
}

fn latency() -> Check {
    let dir = scratch_dir("bench");
    let mut config = PipelineConfig::default();
    config.paths.out = dir.clone();
    config.bench.threads = 1;
    let records = cmd_bench(&config).map_err(|e| e.to_string())?;
    let budget = |d: usize| if d == 4096 { 1000.0 } else { 100.0 };
    let mut ok = true;
    let mut parts = Vec::new();
    for r in &records {
        ok &= r.p95_ms <= budget(r.d);
        parts.push(format!("{}x{} p50 {:.1} ms p95 {:.1} ms (budget {} ms)", r.n, r.d, r.p50_ms, r.p95_ms, budget(r.d)));
    }
    parts.push(format!("report {}", dir.join("bench.jsonl").display()));
    ensure(ok && records.len() == 2, parts.join("; "))
}

/// Trained models shared by the curriculum, pooling and scaling checks.
struct SeedRun {
    seed: u64,
    exact_pairs: usize,
    attn_off: EvalReport,
    attn_on: EvalReport,
    avg_on: EvalReport,
}

struct Runs {
    seeds: Vec<SeedRun>,
    /// Seed 0 corpus and its attention, curriculum-on model.
    corpus0: Corpus,
    model0: EncoderParams,
}

const CURRICULUM_K: usize = 10;

fn eval_options() -> EvalOptions {
    EvalOptions { ks: vec![CURRICULUM_K, 50], ..EvalOptions::default() }
}

fn fit(corpus: &Corpus, seed: u64, pooling: Pooling, dcl: bool) -> (EncoderParams, EvalReport) {
    let mut config = TrainConfig { seed, dcl_enabled: dcl, ..TrainConfig::default() };
    config.encoder.pooling = pooling;
    let out = train(corpus, &config).expect("training succeeds");
    let index = build_bias_index(&out.params, &corpus.vocab, &corpus.db, config.encoder.modality, pooling).unwrap();
    let report = evaluate(&corpus.test, &corpus.vocab, &corpus.db, &out.graph, &out.params, pooling, &index, &eval_options()).unwrap();
    (out.params, report)
}

fn runs() -> &'static Runs {
    static RUNS: OnceLock<Runs> = OnceLock::new();
    RUNS.get_or_init(|| {
        let mut seeds = Vec::new();
        let mut first = None;
        for seed in 0..5u64 {
            let corpus = gen_corpus(&CorpusConfig::default(), seed).expect("corpus generates");
            let exact_pairs = HomophoneGraph::build(&corpus.db, 0).pair_count();
            let (_, attn_off) = fit(&corpus, seed, Pooling::Attn, false);
            let (model, attn_on) = fit(&corpus, seed, Pooling::Attn, true);
            let (_, avg_on) = fit(&corpus, seed, Pooling::Avg, true);
            eprintln!("  seed {seed} trained");
            seeds.push(SeedRun { seed, exact_pairs, attn_off, attn_on, avg_on });
            if first.is_none() {
                first = Some((corpus, model));
            }
        }
        let (corpus0, model0) = first.unwrap();
        Runs { seeds, corpus0, model0 }
    })
}

fn curriculum() -> Check {
    let k = CURRICULUM_K;
    let mut passed = 0;
    let mut parts = Vec::new();
    for s in &runs().seeds {
        let b = s.attn_on.recall_b_at(k).unwrap_or(0.0);
        let drop = s.attn_off.recall_h_at(k).unwrap_or(0.0) - s.attn_on.recall_h_at(k).unwrap_or(0.0);
        let ok = s.exact_pairs >= 20 && drop >= 15.0 && b >= 95.0;
        passed += usize::from(ok);
        parts.push(format!("seed {} [{} exact pairs, Recall_H#{k} -{drop:.1} pts, Recall_B#{k} {b:.1}]{}", s.seed, s.exact_pairs, if ok { "" } else { " x" }));
    }
    ensure(passed >= 4, format!("{passed}/5 seeds: {}", parts.join("; ")))
}

fn pooling() -> Check {
    let mut passed = 0;
    let mut parts = Vec::new();
    for s in &runs().seeds {
        let attn = s.attn_on.recall_at_target(99.0).map_or(f64::INFINITY, |r| r.mean_depth);
        let avg = s.avg_on.recall_at_target(99.0).map_or(f64::INFINITY, |r| r.mean_depth);
        passed += usize::from(attn <= avg);
        parts.push(format!("seed {} attn {attn:.2} avg {avg:.2}", s.seed));
    }
    ensure(passed >= 4, format!("{passed}/5 seeds with Recall@99 attn <= avg: {}", parts.join("; ")))
}

fn scaling() -> Check {
    let r = runs();
    let before = &r.seeds[0].attn_on;
    let mut corpus = r.corpus0.clone();
    let base = corpus.db.len();
    corpus.add_distractors(base * 9, 0).map_err(|e| e.to_string())?;
    let graph = HomophoneGraph::build(&corpus.db, TrainConfig::default().homophone_threshold);
    let (modality, pool) = (BiasModality::Acoustic, Pooling::Attn);
    let index = build_bias_index(&r.model0, &corpus.vocab, &corpus.db, modality, pool).map_err(|e| e.to_string())?;
    let after = evaluate(&corpus.test, &corpus.vocab, &corpus.db, &graph, &r.model0, pool, &index, &eval_options()).map_err(|e| e.to_string())?;
    let recall_drop = before.recall_b_at(50).unwrap_or(0.0) - after.recall_b_at(50).unwrap_or(0.0);
    let bwer_rise = after.retrieval.bwer().unwrap_or(100.0) - before.retrieval.bwer().unwrap_or(100.0);
    ensure(
        recall_drop <= 5.0 && bwer_rise <= 5.0,
        format!("db {base} -> {}: Recall_B#50 drop {recall_drop:.1} pts, B-WER rise {bwer_rise:.1} pts", corpus.db.len()),
    )
}

fn pruning() -> Check {
    let (a, b) = (pruning_rate(10, 200_000), pruning_rate(50, 200_000));
    ensure(a == 99.995 && b == 99.975, format!("pruning_rate(10, 200000) = {a}, pruning_rate(50, 200000) = {b}"))
}

fn toks(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

fn metric_goldens() -> Check {
    let mut failures = Vec::new();
    let mut total = 0;
    let mut check = |name: &str, ok: bool| {
        total += 1;
        if !ok {
            failures.push(name.to_string());
        }
    };
    let abc = toks("a b c");
    check("align identical", align(&abc, &abc).iter().all(|s| s.op == EditOp::Match));
    let ops: Vec<EditOp> = align(&abc, &toks("a x c")).iter().map(|s| s.op).collect();
    check("align one substitution", ops == [EditOp::Match, EditOp::Sub, EditOp::Match]);
    check("wer identical", wer(&abc, &abc) == 0.0);
    check("wer one sub", (wer(&abc, &toks("a x c")) - 100.0 / 3.0).abs() < 1e-12);
    check("wer empty hyp", wer(&toks("a b c d e"), &[]) == 100.0);

    let bias: BTreeSet<String> = ["xanadu".to_string()].into();
    check("bwer no bias words", bwer(&toks("go to town"), &toks("go to town"), &bias).is_none());
    check("bwer substitution", bwer(&toks("go to xanadu"), &toks("go to zanadu"), &bias) == Some(100.0));
    let (r, h) = (toks("go to xanadu"), toks("go to xanadu today"));
    check("bwer ignores non-bias insertion", bwer(&r, &h, &bias) == Some(0.0) && (wer(&r, &h) - 100.0 / 3.0).abs() < 1e-12);

    let oracle: Vec<Vec<WordId>> = vec![vec![1, 2], vec![3], vec![4, 5, 6]];
    check("recall_b superset", recall_b(&oracle, &[vec![1, 2, 9], vec![3, 8], vec![6, 5, 4]]) == Some(100.0));
    check("recall_b disjoint", recall_b(&oracle, &[vec![9], vec![8], vec![7]]) == Some(0.0));
    // 1 + 0 + 2 of 6.
    check("recall_b fixture", recall_b(&oracle, &[vec![2, 7], vec![8], vec![4, 6, 9]]).is_some_and(|v| (v - 50.0).abs() < 1e-12));

    let mut sets: BTreeMap<WordId, Vec<WordId>> = BTreeMap::new();
    check("recall_h without homophones", recall_h(&[vec![1]], &[vec![1, 2]], &HomophoneGraph::from_sets(0, sets.clone()).unwrap()).is_none());
    sets.insert(1, vec![10, 11]);
    sets.insert(10, vec![1]);
    sets.insert(11, vec![1]);
    let g = HomophoneGraph::from_sets(0, sets).unwrap();
    check("recall_h all retrieved", recall_h(&[vec![1]], &[vec![10, 11, 1]], &g) == Some(100.0));
    check("recall_h one of two", recall_h(&[vec![1]], &[vec![1, 10, 5]], &g) == Some(50.0));

    let rank: Vec<WordId> = (1..=20).collect();
    let depth = |o: Vec<Vec<WordId>>| recall_at_target(&o, &vec![rank.clone(); o.len()], 99.0).map(|r| r.mean_depth);
    check("recall@99 first", depth(vec![vec![1]]) == Some(1.0));
    check("recall@99 seventh", depth(vec![vec![7]]) == Some(7.0));
    // Depths 1, 7 and 12.
    check("recall@99 fixture", depth(vec![vec![1], vec![7], vec![3, 12]]).is_some_and(|v| (v - 20.0 / 3.0).abs() < 1e-12));

    let vocab = gen_vocabulary(1, 10, 2).unwrap();
    let ids: Vec<WordId> = (0..vocab.len() as WordId).collect();
    let table = ConfusionTable::build(&vocab, ids.iter().copied());
    let transcript: Vec<WordId> = vec![0, 3, 5, 3, 9];
    let mut r = rng::stream(1, "acceptance-sim");
    check("decode at rate 0", simulate_contextual_decode(&transcript, &table, &[], 0.0, &mut r) == transcript);
    check("decode protected", simulate_contextual_decode(&transcript, &table, &ids, 1.0, &mut r) == transcript);
    let hyp = simulate_contextual_decode(&transcript, &table, &[], 1.0, &mut r);
    check("decode all corrupted", hyp.iter().zip(&transcript).all(|(h, t)| h != t));

    let mut r = rng::stream(2, "acceptance-wer");
    let all: BTreeSet<u8> = (0..8).collect();
    let mut agree = 0;
    for _ in 0..100 {
        let a: Vec<u8> = (0..r.random_range(1..12)).map(|_| r.random_range(0..8)).collect();
        let b: Vec<u8> = (0..r.random_range(0..12)).map(|_| r.random_range(0..8)).collect();
        agree += usize::from(bwer(&a, &b, &all) == Some(wer(&a, &b)));
    }
    check("wer == bwer over the full vocabulary", agree == 100);
    let detail = if failures.is_empty() { format!("{total} checks; wer == bwer on 100/100 random pairs") } else { format!("failed: {}", failures.join(", ")) };
    ensure(failures.is_empty(), detail)
}

fn pipeline() -> Check {
    let dir = scratch_dir("pipeline");
    let out = dir.join("run");
    let mut timings = Vec::new();
    let start = Instant::now();
    for cmd in ["gen", "train", "index", "eval"] {
        let t = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_biasret"))
            .args([cmd, "--seed", "1", "--out", out.to_str().unwrap()])
            .output()
            .map_err(|e| e.to_string())?;
        if !status.status.success() {
            return Err(format!("{cmd} failed: {}", String::from_utf8_lossy(&status.stderr)));
        }
        timings.push(format!("{cmd} {:.1}s", t.elapsed().as_secs_f64()));
    }
    let total = start.elapsed().as_secs_f64();
    let text = std::fs::read_to_string(out.join("eval/report.txt")).map_err(|e| e.to_string())?;
    let kv: BTreeMap<String, String> = parse_summary(&text).into_iter().collect();
    let get = |k: &str| kv.get(k).and_then(|v| v.parse::<f64>().ok()).ok_or(format!("{k} missing from the report"));
    let (ret, none, oracle) = (get("bwer.retrieval")?, get("bwer.no_bias")?, get("bwer.oracle")?);
    ensure(
        ret < none && oracle == 0.0 && total < 600.0,
        format!("B-WER retrieval {ret:.2} < no bias {none:.2}, oracle {oracle:.2}; {} (total {total:.1}s)", timings.join(", ")),
    )
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        (1, "curriculum schedule", schedule),
        (2, "gradient check", gradients),
        (3, "index exactness", index_exactness),
        (4, "scan latency", latency),
        (5, "curriculum effect", curriculum),
        (6, "pooling ablation", pooling),
        (7, "database scaling", scaling),
        (8, "pruning arithmetic", pruning),
        (9, "metric goldens", metric_goldens),
        (10, "end-to-end pipeline", pipeline),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {n:>2} {name} ({secs:.1}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {n:>2} {name} ({secs:.1}s): {detail}");
            }
        }
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
