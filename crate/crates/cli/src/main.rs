use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use signpose_core::eval::IntervalMode;

use signpose_cli::commands;

#[derive(Parser)]
#[command(
    name = "signpose",
    version,
    about = "Text-to-pose generation: corpus synthesis, staged training, generation, and FGD evaluation"
)]
struct Cli {
    /// Force single-threaded execution. Every command is already
    /// single-threaded, so this is an accepted no-op kept for
    /// reproducibility scripts.
    #[arg(long, global = true)]
    deterministic: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EvalMode {
    /// Whole sequences grouped into length bins.
    Bucket,
    /// Every pair truncated to each bin's upper edge.
    Prefix,
}

impl From<EvalMode> for IntervalMode {
    fn from(mode: EvalMode) -> IntervalMode {
        match mode {
            EvalMode::Bucket => IntervalMode::Bucket,
            EvalMode::Prefix => IntervalMode::Prefix,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus as train/dev/test splits.
    Synth {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the split files.
        #[arg(long)]
        out: PathBuf,
        /// Overrides train.seed from the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the frame autoencoder (the distillation teacher).
    TrainVae {
        #[arg(long)]
        config: PathBuf,
        /// Corpus directory produced by synth.
        #[arg(long)]
        corpus: PathBuf,
        /// Checkpoint path; the loss trace lands next to it.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue a finished-or-interrupted run from its checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the sequence autoencoder that supplies FGD features.
    TrainTae {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Train the text-to-latent sequence model against a frozen VAE.
    TrainLlm {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        corpus: PathBuf,
        /// VAE checkpoint; training refuses to start without it.
        #[arg(long)]
        vae: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Token embedding file (token<TAB>values); needs
        /// ablate.encoder_mode = embedding-file.
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
    /// Generate pose sequences for one sentence per input line.
    Generate {
        #[arg(long)]
        llm: PathBuf,
        #[arg(long)]
        vae: PathBuf,
        /// Text file, tokens separated by whitespace.
        #[arg(long)]
        text: PathBuf,
        /// Output corpus (JSON lines with predicted_len).
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a generated corpus against a real one.
    Eval {
        #[arg(long)]
        tae: PathBuf,
        #[arg(long)]
        real: PathBuf,
        #[arg(long)]
        generated: PathBuf,
        /// Report directory (summary.txt, intervals.csv).
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = EvalMode::Bucket)]
        mode: EvalMode,
    },
    /// Run the whole chain: synth, train all three networks,
    /// generate for the test split, evaluate.
    Pipeline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        embeddings: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> signpose_cli::Result<()> {
    match cli.command {
        Command::Synth { config, out, seed } => commands::cmd_synth(&config, &out, seed),
        Command::TrainVae {
            config,
            corpus,
            out,
            seed,
            resume,
        } => commands::cmd_train_vae(&config, &corpus, &out, seed, resume.as_deref()),
        Command::TrainTae {
            config,
            corpus,
            out,
            seed,
            resume,
        } => commands::cmd_train_tae(&config, &corpus, &out, seed, resume.as_deref()),
        Command::TrainLlm {
            config,
            corpus,
            vae,
            out,
            seed,
            resume,
            embeddings,
        } => commands::cmd_train_llm(
            &config,
            &corpus,
            &vae,
            &out,
            seed,
            resume.as_deref(),
            embeddings.as_deref(),
        ),
        Command::Generate {
            llm,
            vae,
            text,
            out,
        } => commands::cmd_generate(&llm, &vae, &text, &out),
        Command::Eval {
            tae,
            real,
            generated,
            out,
            mode,
        } => commands::cmd_eval(&tae, &real, &generated, &out, mode.into()),
        Command::Pipeline {
            config,
            out,
            seed,
            embeddings,
        } => commands::cmd_pipeline(&config, &out, seed, embeddings.as_deref()),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(err.exit_code())
        }
    }
}
