//! `gerkit`: rare-word error correction workflow. Subcommands: extract-words, build,
//! correct, score, sweep.

mod app;
mod commands;
mod config;
mod fail;

use std::path::PathBuf;

use clap::{ArgAction, Parser, Subcommand};

use crate::app::App;
use crate::config::{BackendKind, RunConfig};
use crate::fail::CmdFail;

#[derive(Parser)]
#[command(
    name = "gerkit",
    version,
    about = "Rare-word generative error correction toolkit",
    after_help = "Exit codes: 0 success, 1 usage/input error, 2 domain failure, 3 service failure."
)]
struct Cli {
    /// TOML run configuration; flags override file values.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Service backend: simulated (offline) or real.
    #[arg(long, global = true)]
    backend: Option<String>,

    /// Seed for generation, the noisy channel, and splits.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for run artifacts (data, reports, checkpoints, caches).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,

    /// Evaluation language (en or ja).
    #[arg(long, global = true)]
    language: Option<String>,

    /// More logging (-v info, -vv debug).
    #[arg(short, long, global = true, action = ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract a rare-word list from a corpus with LLM assistance, trimming
    /// it until coverage falls below the target.
    ExtractWords {
        /// Corpus text file (one utterance per line).
        #[arg(long)]
        corpus: PathBuf,
        /// Keep trimming until coverage is below this percentage.
        #[arg(long, default_value_t = 10.0)]
        target_coverage: f64,
        /// Output word-list file (default: <out-dir>/words.txt).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate synthetic error pairs for a word list and export
    /// fine-tuning data (train/val JSONL plus a manifest).
    Build {
        /// Rare-word list file.
        #[arg(long)]
        words: PathBuf,
        /// Transcripts per word (T).
        #[arg(long)]
        transcripts: Option<u32>,
        /// Speakers per transcript (S).
        #[arg(long)]
        speakers: Option<u32>,
        /// Hypotheses per utterance (N).
        #[arg(long)]
        nbest: Option<u32>,
        /// Phonetic context scheme: ipa, tts-phoneme, or lsp.
        #[arg(long)]
        scheme: Option<String>,
    },
    /// Correct an evaluation set from N-best hypothesis files.
    Correct {
        /// Evaluation set JSONL ({id, reference, language, audio_ref}).
        #[arg(long)]
        eval: PathBuf,
        /// Hypotheses JSONL ({utterance_id, hypotheses}); generated through
        /// the simulated channel when omitted.
        #[arg(long)]
        hyps: Option<PathBuf>,
        /// Input shape: prompt-only, nbest, or nbest-phonetic.
        #[arg(long)]
        mode: String,
        /// Phonetic scheme (only with --mode nbest-phonetic).
        #[arg(long)]
        scheme: Option<String>,
        /// Corrector model id (default: configured chat model).
        #[arg(long)]
        model: Option<String>,
        /// Output JSONL (default: <out-dir>/outputs.jsonl).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score correction outputs: WER/CER plus rare-word recall, precision,
    /// and F1. Emits markdown, CSV, and JSON reports.
    Score {
        /// Correction outputs JSONL (from `correct`).
        #[arg(long)]
        outputs: PathBuf,
        /// Evaluation set JSONL.
        #[arg(long)]
        eval: PathBuf,
        /// Rare-word list file.
        #[arg(long)]
        words: PathBuf,
        /// Dataset name for the report row.
        #[arg(long)]
        dataset: Option<String>,
        /// Condition label for the report row.
        #[arg(long)]
        condition: Option<String>,
    },
    /// Sweep transcripts-per-word or speakers-per-transcript and record
    /// rare-word F1 per point.
    Sweep {
        /// Rare-word list file.
        #[arg(long)]
        words: PathBuf,
        /// Evaluation set JSONL.
        #[arg(long)]
        eval: PathBuf,
        /// Swept axis: transcripts or speakers.
        #[arg(long)]
        axis: String,
        /// Comma-separated increasing values, e.g. 1,2,4.
        #[arg(long)]
        values: String,
        /// Value of the non-swept axis (default: configured T or S).
        #[arg(long)]
        fixed: Option<u32>,
        /// Optional hypotheses JSONL; generated via the simulated channel
        /// when omitted.
        #[arg(long)]
        hyps: Option<PathBuf>,
        /// Output CSV (default: <out-dir>/sweep.csv).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() {
    std::process::exit(real_main());
}

fn real_main() -> i32 {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).init();

    match run(cli) {
        Ok(()) => 0,
        Err(fail) => {
            eprintln!("error: {:#}", fail.err);
            fail.code
        }
    }
}

fn run(cli: Cli) -> Result<(), CmdFail> {
    let cfg = match &cli.config {
        Some(path) => RunConfig::load(path).map_err(CmdFail::usage)?,
        None => RunConfig::default(),
    };
    let backend = match cli.backend.as_deref() {
        Some(tag) => Some(tag.parse::<BackendKind>().map_err(CmdFail::usage)?),
        None => None,
    };
    let app = App::new(cfg, backend, cli.seed, cli.out_dir, cli.language.as_deref())
        .map_err(CmdFail::usage)?;

    match &cli.command {
        Command::ExtractWords { corpus, target_coverage, out } => {
            commands::extract_words(&app, corpus, *target_coverage, out.clone())
        }
        Command::Build { words, transcripts, speakers, nbest, scheme } => commands::build(
            &app,
            words,
            *transcripts,
            *speakers,
            *nbest,
            scheme.as_deref(),
        ),
        Command::Correct { eval, hyps, mode, scheme, model, out } => commands::correct(
            &app,
            eval,
            hyps.as_deref(),
            mode,
            scheme.as_deref(),
            model.as_deref(),
            out.clone(),
        ),
        Command::Score { outputs, eval, words, dataset, condition } => commands::score(
            &app,
            outputs,
            eval,
            words,
            dataset.as_deref(),
            condition.as_deref(),
        ),
        Command::Sweep { words, eval, axis, values, fixed, hyps, out } => commands::sweep(
            &app,
            words,
            eval,
            axis,
            values,
            *fixed,
            hyps.as_deref(),
            out.clone(),
        ),
    }
}
