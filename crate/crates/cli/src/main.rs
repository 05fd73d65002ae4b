use std::path::PathBuf;
use std::process::ExitCode;

use biasret::commands::{self, QueryInput, Split};
use biasret::formats::report::format_summary;
use biasret::{Overrides, PipelineConfig, Result};
use clap::{Parser, Subcommand, ValueEnum};

/// Contrastive speech-to-bias-word retrieval on synthetic corpora.
///
/// Configuration precedence: command-line flags, then the --config file,
/// then built-in defaults. Artifacts go under --out (default `run`).
#[derive(Parser)]
#[command(name = "biasret", version)]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic corpus.
    Gen,
    /// Train the encoders on the corpus.
    Train,
    /// Embed the bias database and write the retrieval index.
    Index,
    /// Retrieve bias words for one utterance or frames file.
    Query {
        /// Utterance id within --split.
        #[arg(long, conflicts_with = "frames", required_unless_present = "frames")]
        utterance: Option<u32>,
        #[arg(long, value_enum, default_value_t = SplitArg::Test)]
        split: SplitArg,
        /// Binary frames file.
        #[arg(long, value_name = "PATH")]
        frames: Option<PathBuf>,
        /// Number of results (default: retrieval.k).
        #[arg(long)]
        k: Option<usize>,
    },
    /// Evaluate retrieval and simulated decoding on the test split.
    Eval,
    /// Measure exact-scan query latency on random vectors.
    Bench,
    /// Train and evaluate every pooling × bias modality × curriculum cell.
    Ablate,
    /// Print the resolved configuration.
    Config,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

fn run(cli: Cli) -> Result<()> {
    let overrides = Overrides { seed: cli.seed, threads: cli.threads, out: cli.out, set: cli.set };
    let config = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    if config.threads > 0 {
        // Fails only if the pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    match cli.command {
        Command::Gen => {
            let s = commands::cmd_gen(&config)?;
            eprintln!("gen: {} words ({} bias entries), {} train / {} test utterances in {}", s.n_words, s.db_size, s.n_train, s.n_test, s.dir.display());
        }
        Command::Train => {
            let c = commands::cmd_train(&config)?;
            eprintln!("train: {} steps, config {}", c.step, &c.config_hash[..12]);
        }
        Command::Index => {
            let index = commands::cmd_index(&config)?;
            eprintln!("index: {} entries of dim {}", index.len(), index.dim());
        }
        Command::Query { utterance, split, frames, k } => {
            let input = match (utterance, frames) {
                (_, Some(path)) => QueryInput::Frames(path),
                (Some(id), None) => QueryInput::Utterance { split: match split { SplitArg::Train => Split::Train, SplitArg::Test => Split::Test }, id },
                (None, None) => unreachable!("clap requires one of the two"),
            };
            for h in commands::cmd_query(&config, &input, k)? {
                println!("{}\t{}\t{}\t{:.6}", h.rank, h.id, h.word, h.score);
            }
        }
        Command::Eval => {
            let report = commands::cmd_eval(&config)?;
            print!("{}", format_summary(&report, &[]));
        }
        Command::Bench => {
            for r in commands::cmd_bench(&config)? {
                println!("{}", serde_json::to_string(&r).expect("record serializes"));
            }
        }
        Command::Ablate => {
            let k = config.eval.ks[0];
            println!("cell\trecall_b#{k}\trecall_h#{k}\tbwer");
            for c in commands::cmd_ablate(&config)? {
                let f = |x: Option<f64>| x.map_or("none".to_string(), |v| format!("{v:.2}"));
                println!("{}\t{}\t{}\t{}", c.name, f(c.report.recall_b_at(k)), f(c.report.recall_h_at(k)), f(c.report.retrieval.bwer()));
            }
        }
        Command::Config => print!("{}", config.to_toml()),
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
