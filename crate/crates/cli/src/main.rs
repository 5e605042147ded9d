//! `semsel`: build document graphs, train and run the selector, evaluate,
//! generate synthetic data, and inspect graphs interactively.

mod commands;
mod error;
mod inspect;
mod pipeline;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semsel::config::{LossMode, RunConfig};
use semsel::harness::SynthConfig;
use semsel::semgraph::Variant;

use error::CliError;

#[derive(Parser)]
#[command(name = "semsel", version, about = "Knowledge selection over document semantic graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build one graph JSON per document and print node/edge/merge stats.
    BuildGraph(RunArgs),
    /// Train the selector; writes the checkpoint, its manifest and the loss log.
    Train(TrainArgs),
    /// Rank every candidate of every dialog turn; writes selections.jsonl.
    Select(RunArgs),
    /// Score selections against dialog gold labels; writes report.json.
    Evaluate(EvaluateArgs),
    /// Generate a synthetic dataset directory with a ready-to-use config.json.
    Synth(SynthArgs),
    /// Interactive session over a graph dump, reading commands from stdin.
    Inspect(InspectArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Run configuration JSON; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Seed for initialization, sampling and hash encoders.
    #[arg(long)]
    seed: Option<u64>,
    /// Graph variant: full, sentence, coref or homogeneous.
    #[arg(long)]
    variant: Option<Variant>,
    /// Loss: joint (sentence plus concept) or sentence.
    #[arg(long)]
    loss: Option<LossMode>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// AMR corpus file.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Document manifest JSON.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Coreference clusters JSON.
    #[arg(long)]
    coref: Option<PathBuf>,
    /// Sentence embedding file; hash vectors are used when absent.
    #[arg(long)]
    embeddings: Option<PathBuf>,
    /// Context embedding file; the hash context encoder is used when absent.
    #[arg(long)]
    context_embeddings: Option<PathBuf>,
    /// Dialog turns JSONL.
    #[arg(long)]
    dialogs: Option<PathBuf>,
    /// Model checkpoint; its manifest sits beside it with a .json extension.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut cfg = pipeline::load_config(self.config.as_deref())?;
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(l) = self.loss {
            cfg.loss = l;
        }
        let p = &mut cfg.paths;
        for (slot, flag) in [
            (&mut p.out_dir, &self.out),
            (&mut p.corpus, &self.corpus),
            (&mut p.manifest, &self.manifest),
            (&mut p.coref, &self.coref),
            (&mut p.embeddings, &self.embeddings),
            (&mut p.context_embeddings, &self.context_embeddings),
            (&mut p.dialogs, &self.dialogs),
            (&mut p.checkpoint, &self.checkpoint),
        ] {
            if flag.is_some() {
                slot.clone_from(flag);
            }
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Number of passes over the training turns.
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Selections JSONL (default: <out>/selections.jsonl).
    #[arg(long)]
    selections: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Generator seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Number of documents.
    #[arg(long, default_value_t = SynthConfig::default().docs)]
    docs: usize,
    /// Entities per document.
    #[arg(long, default_value_t = SynthConfig::default().sentences_per_doc)]
    sentences_per_doc: usize,
    /// Size of the object word pool.
    #[arg(long, default_value_t = SynthConfig::default().vocab)]
    vocab: usize,
    /// Probability that an entity's mentions form a coreference cluster.
    #[arg(long, default_value_t = SynthConfig::default().coref_rate)]
    coref_rate: f64,
    /// Dialog turns per document.
    #[arg(long, default_value_t = SynthConfig::default().turns_per_doc)]
    turns_per_doc: usize,
    /// Trailing documents held out as the test split.
    #[arg(long, default_value_t = SynthConfig::default().test_docs)]
    test_docs: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = SynthConfig::default().dim)]
    dim: usize,
    /// Embedding magnitude (1.0 is roughly unit norm).
    #[arg(long, default_value_t = SynthConfig::default().scale)]
    scale: f64,
}

#[derive(Args)]
struct InspectArgs {
    /// Graph JSON written by build-graph.
    #[arg(long)]
    graph: PathBuf,
    /// Model checkpoint, needed by `score`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Run configuration naming the corpus, dialogs and embeddings, needed by `score`.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::BuildGraph(a) => commands::build_graph(&a.resolve()?),
        Command::Train(a) => {
            let mut cfg = a.run.resolve()?;
            if let Some(e) = a.epochs {
                cfg.train.epochs = e;
            }
            commands::train_cmd(&cfg)
        }
        Command::Select(a) => commands::select_cmd(&a.resolve()?),
        Command::Evaluate(a) => commands::evaluate_cmd(&a.run.resolve()?, a.selections.as_deref()),
        Command::Synth(a) => {
            let synth = SynthConfig {
                docs: a.docs,
                sentences_per_doc: a.sentences_per_doc,
                vocab: a.vocab,
                entities: SynthConfig::default().entities.max(a.sentences_per_doc),
                coref_rate: a.coref_rate,
                turns_per_doc: a.turns_per_doc,
                test_docs: a.test_docs.min(a.docs),
                dim: a.dim,
                noise: SynthConfig::default().noise,
                scale: a.scale,
            };
            commands::synth_cmd(a.seed, &synth, &a.out)
        }
        Command::Inspect(a) => {
            let stdin = std::io::stdin();
            inspect::run(&a.graph, a.checkpoint.as_deref(), a.config.as_deref(), stdin.lock(), std::io::stdout())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
