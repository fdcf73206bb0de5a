//! Subcommand implementations.
//!
//! Every command reads files at the edges and delegates the numerics
//! to the core library, so a CLI run and the equivalent sequence of
//! library calls produce the same bytes. An explicit `--seed`
//! overrides `train.seed` from the config; nothing else is stateful.

use std::fs;
use std::path::{Path, PathBuf};

use signpose_core::eval::{IntervalMode, TaeBundle};
use signpose_core::llm::{self, LlmBundle, LlmExample, LlmLossTerms};
use signpose_core::optim::ParamSet;
use signpose_core::pose::NormalizationParams;
use signpose_core::rng::{purpose, SeededRng};
use signpose_core::synth;
use signpose_core::vae::{self, VaeBundle};

use crate::checkpoint::{Checkpoint, CkptKind};
use crate::config::{EncoderMode, RunConfig};
use crate::corpus::{self, RecordJson, Split};
use crate::embeddings;
use crate::error::{CliError, Result};
use crate::report;

fn effective_seed(config: &RunConfig, seed: Option<u64>) -> u64 {
    seed.unwrap_or(config.train.seed)
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(CliError::io(format!("creating {}", parent.display())))?;
        }
    }
    Ok(())
}

/// `vae.json` gets its loss history next to it as `vae.trace.csv`.
pub fn trace_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_extension("trace.csv")
}

fn write_scalar_trace(path: &Path, start_epoch: usize, losses: &[f64]) -> Result<()> {
    let mut s = String::from("epoch,loss\n");
    for (i, loss) in losses.iter().enumerate() {
        s.push_str(&format!("{},{loss}\n", start_epoch + i));
    }
    fs::write(path, s).map_err(CliError::io(format!("writing {}", path.display())))
}

/// Inactive loss terms leave their cells empty, which is what makes
/// the ablation flags auditable from the trace alone.
fn write_llm_trace(path: &Path, start_epoch: usize, trace: &[LlmLossTerms]) -> Result<()> {
    let mut s = String::from("epoch,total,pose,distillation,length\n");
    for (i, t) in trace.iter().enumerate() {
        let pose = t.pose.map(|v| v.to_string()).unwrap_or_default();
        let distil = t.distillation.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!(
            "{},{},{pose},{distil},{}\n",
            start_epoch + i,
            t.total,
            t.length
        ));
    }
    fs::write(path, s).map_err(CliError::io(format!("writing {}", path.display())))
}

fn load_resume(path: &Path, kind: CkptKind) -> Result<(Checkpoint, Option<(ParamSet, usize)>)> {
    let ckpt = Checkpoint::load(path, kind)?;
    let params = ckpt.params()?;
    let step = ckpt.step;
    Ok((ckpt, Some((params, step))))
}

pub fn cmd_synth(config: &Path, out_dir: &Path, seed: Option<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
    }
    let records = synth::synth_corpus(&cfg.synth_config(), cfg.synth.n_records)?;
    let counts = corpus::write_splits(out_dir, &records)?;
    println!(
        "synth: {} records ({} train, {} dev, {} test) in {}",
        records.len(),
        counts[0],
        counts[1],
        counts[2],
        out_dir.display()
    );
    Ok(())
}

pub fn cmd_train_vae(
    config: &Path,
    corpus_dir: &Path,
    out: &Path,
    seed: Option<u64>,
    resume: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = effective_seed(&cfg, seed);
    let records = corpus::load_records(&corpus::split_path(corpus_dir, Split::Train), cfg.width())?;

    // Normalization is fitted once, on the training split; a resumed
    // run keeps the checkpoint's fit because the parameters were
    // trained against it.
    let (norm, resume_state) = match resume {
        Some(path) => {
            let (ckpt, state) = load_resume(path, CkptKind::Vae)?;
            (ckpt.norm()?, state)
        }
        None => (
            NormalizationParams::fit(records.iter().map(|r| &r.poses))?,
            None,
        ),
    };
    let sequences = corpus::normalized_sequences(&records, &norm)?;

    let (bundle, trace) =
        vae::train_vae(&sequences, &cfg.vae_config(), &cfg.train_config(), seed, resume_state)?;

    ensure_parent(out)?;
    Checkpoint::new(CkptKind::Vae, &cfg, cfg.train.epochs, seed, &bundle.params)
        .with_norm(&norm)
        .save(out)?;
    let start = cfg.train.epochs - trace.len();
    write_scalar_trace(&trace_path(out), start, &trace)?;
    println!(
        "train-vae: {} epochs on {} sequences, checkpoint {}",
        cfg.train.epochs,
        sequences.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_train_tae(
    config: &Path,
    corpus_dir: &Path,
    out: &Path,
    seed: Option<u64>,
    resume: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = effective_seed(&cfg, seed);
    let records = corpus::load_records(&corpus::split_path(corpus_dir, Split::Train), cfg.width())?;

    let (norm, resume_state) = match resume {
        Some(path) => {
            let (ckpt, state) = load_resume(path, CkptKind::Tae)?;
            (ckpt.norm()?, state)
        }
        None => (
            NormalizationParams::fit(records.iter().map(|r| &r.poses))?,
            None,
        ),
    };
    let sequences = corpus::normalized_sequences(&records, &norm)?;

    let (bundle, trace) = signpose_core::eval::train_tae(
        &sequences,
        &cfg.tae_config(),
        &cfg.train_config(),
        seed,
        resume_state,
    )?;

    ensure_parent(out)?;
    Checkpoint::new(CkptKind::Tae, &cfg, cfg.train.epochs, seed, &bundle.params)
        .with_norm(&norm)
        .save(out)?;
    let start = cfg.train.epochs - trace.len();
    write_scalar_trace(&trace_path(out), start, &trace)?;
    println!(
        "train-tae: {} epochs on {} sequences, checkpoint {}",
        cfg.train.epochs,
        sequences.len(),
        out.display()
    );
    Ok(())
}

/// Rebuilds the frozen pose autoencoder from its checkpoint, checking
/// that the current run's dims still match it.
fn vae_from_checkpoint(ckpt: &Checkpoint, cfg: &RunConfig) -> Result<(VaeBundle, NormalizationParams)> {
    let vae_config = ckpt.config.vae_config();
    if vae_config.input_dim != cfg.width() || vae_config.latent_dim != cfg.vae.latent_dim {
        return Err(CliError::config(format!(
            "vae checkpoint is {}-wide with latent {}, config expects {} and {}",
            vae_config.input_dim,
            vae_config.latent_dim,
            cfg.width(),
            cfg.vae.latent_dim
        )));
    }
    let bundle = VaeBundle {
        config: vae_config,
        params: ckpt.params()?,
    };
    let norm = ckpt.norm()?;
    Ok((bundle, norm))
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_train_llm(
    config: &Path,
    corpus_dir: &Path,
    vae_ckpt: &Path,
    out: &Path,
    seed: Option<u64>,
    resume: Option<&Path>,
    embedding_file: Option<&Path>,
) -> Result<()> {
    let cfg = RunConfig::load(config)?;
    let seed = effective_seed(&cfg, seed);

    // Stage order is part of the training scheme: the pose network
    // must exist before the sequence model can distill from it.
    let teacher = Checkpoint::load(vae_ckpt, CkptKind::Vae)?;
    let (vae_bundle, norm) = vae_from_checkpoint(&teacher, &cfg)?;

    let records = corpus::load_records(&corpus::split_path(corpus_dir, Split::Train), cfg.width())?;
    let vocab = corpus::build_vocab(&records);
    let llm_config = cfg.llm_config(vocab.len())?;

    let examples: Vec<LlmExample> = records
        .iter()
        .map(|r| {
            Ok(LlmExample {
                token_ids: vocab.ids(&r.tokens),
                poses: norm.normalize_sequence(&r.poses)?,
            })
        })
        .collect::<std::result::Result<_, signpose_core::CoreError>>()?;

    let resume_state = match (resume, embedding_file, cfg.ablate.encoder_mode) {
        (Some(_), Some(_), _) => {
            return Err(CliError::usage(
                "--resume and --embeddings are mutually exclusive; embeddings only seed a fresh run",
            ))
        }
        (Some(path), None, _) => {
            let (ckpt, state) = load_resume(path, CkptKind::Llm)?;
            if ckpt.vocab()?.tokens() != vocab.tokens() {
                return Err(CliError::config(
                    "resume checkpoint was trained on a different vocabulary",
                ));
            }
            state
        }
        (None, Some(path), EncoderMode::EmbeddingFile) => {
            // Same init stream as the trainer, so the only difference
            // from scratch training is the seeded embedding rows.
            let mut rng = SeededRng::new(seed, purpose::INIT);
            let mut init = llm::init_llm(&llm_config, &mut rng)?;
            let table = embeddings::load_table(path, llm_config.d_model)?;
            let seeded = embeddings::seed_embeddings(&mut init.params, &vocab, &table)?;
            println!("train-llm: seeded {seeded}/{} embedding rows", vocab.len());
            Some((init.params, 0))
        }
        (None, Some(_), EncoderMode::Scratch) => {
            return Err(CliError::usage(
                "--embeddings requires ablate.encoder_mode = embedding-file",
            ))
        }
        (None, None, EncoderMode::EmbeddingFile) => {
            return Err(CliError::usage(
                "ablate.encoder_mode = embedding-file needs --embeddings <file>",
            ))
        }
        (None, None, EncoderMode::Scratch) => None,
    };

    let (bundle, trace) = llm::train_llm(
        &examples,
        &vae_bundle,
        &llm_config,
        &cfg.train_config(),
        seed,
        resume_state,
    )?;

    ensure_parent(out)?;
    Checkpoint::new(CkptKind::Llm, &cfg, cfg.train.epochs, seed, &bundle.params)
        .with_vocab(&vocab)
        .save(out)?;
    let start = cfg.train.epochs - trace.len();
    write_llm_trace(&trace_path(out), start, &trace)?;
    println!(
        "train-llm: {} epochs on {} examples (vocab {}), checkpoint {}",
        cfg.train.epochs,
        examples.len(),
        vocab.len(),
        out.display()
    );
    Ok(())
}

pub fn cmd_generate(llm_ckpt: &Path, vae_ckpt: &Path, text: &Path, out: &Path) -> Result<()> {
    let lc = Checkpoint::load(llm_ckpt, CkptKind::Llm)?;
    let vc = Checkpoint::load(vae_ckpt, CkptKind::Vae)?;
    let (vae_bundle, norm) = vae_from_checkpoint(&vc, &lc.config)?;
    let vocab = lc.vocab()?;
    let llm_bundle = LlmBundle {
        config: lc.config.llm_config(vocab.len())?,
        params: lc.params()?,
    };

    let sentences = fs::read_to_string(text)
        .map_err(CliError::io(format!("reading text {}", text.display())))?;
    let mut records = Vec::new();
    for (i, line) in sentences.lines().enumerate() {
        let tokens: Vec<String> = line.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return Err(CliError::config(format!(
                "{} line {}: empty sentence",
                text.display(),
                i + 1
            )));
        }
        let ids = vocab.ids(&tokens);
        let (poses, predicted) = llm::generate(&ids, &llm_bundle, &vae_bundle)?;
        let denormalized = norm.denormalize_sequence(&poses)?;
        records.push(RecordJson {
            id: format!("gen-{i:05}"),
            tokens,
            frames: denormalized.frames().iter().map(|f| f.coords.clone()).collect(),
            predicted_len: Some(predicted),
        });
    }

    ensure_parent(out)?;
    corpus::save_jsonl(out, &records)?;
    println!("generate: {} sequences in {}", records.len(), out.display());
    Ok(())
}

pub fn cmd_eval(
    tae_ckpt: &Path,
    real_path: &Path,
    generated_path: &Path,
    out_dir: &Path,
    mode: IntervalMode,
) -> Result<()> {
    let tc = Checkpoint::load(tae_ckpt, CkptKind::Tae)?;
    let cfg = tc.config.clone();
    let tae = TaeBundle {
        config: cfg.tae_config(),
        params: tc.params()?,
    };
    let norm = tc.norm()?;

    let real = corpus::load_records(real_path, cfg.width())?;
    let generated = corpus::load_records(generated_path, cfg.width())?;
    if real.len() != generated.len() {
        return Err(CliError::usage(format!(
            "corpora must pair by position: {} real vs {} generated records",
            real.len(),
            generated.len()
        )));
    }
    let real_seqs = corpus::normalized_sequences(&real, &norm)?;
    let gen_seqs = corpus::normalized_sequences(&generated, &norm)?;

    let (summary, intervals) = report::evaluate(
        &real_seqs,
        &gen_seqs,
        &tae,
        cfg.eval.fps,
        &cfg.eval.interval_bins,
        mode,
    )?;

    fs::create_dir_all(out_dir).map_err(CliError::io(format!("creating {}", out_dir.display())))?;
    let summary_path = out_dir.join("summary.txt");
    fs::write(&summary_path, report::summary_text(&summary))
        .map_err(CliError::io(format!("writing {}", summary_path.display())))?;
    let csv_path = out_dir.join("intervals.csv");
    fs::write(&csv_path, report::intervals_csv(&intervals))
        .map_err(CliError::io(format!("writing {}", csv_path.display())))?;

    print!("{}", report::summary_text(&summary));
    Ok(())
}

/// End-to-end convenience: synth, both pretraining stages, the
/// sequence model, generation for the test split, and evaluation.
pub fn cmd_pipeline(
    config: &Path,
    out_dir: &Path,
    seed: Option<u64>,
    embedding_file: Option<&Path>,
) -> Result<()> {
    let corpus_dir = out_dir.join("corpus");
    let vae = out_dir.join("vae.json");
    let tae = out_dir.join("tae.json");
    let llm = out_dir.join("llm.json");
    let generated = out_dir.join("generated.jsonl");

    cmd_synth(config, &corpus_dir, seed)?;
    cmd_train_vae(config, &corpus_dir, &vae, seed, None)?;
    cmd_train_tae(config, &corpus_dir, &tae, seed, None)?;
    cmd_train_llm(config, &corpus_dir, &vae, &llm, seed, None, embedding_file)?;
    cmd_generate(&llm, &vae, &corpus_dir.join("test.txt"), &generated)?;
    cmd_eval(
        &tae,
        &corpus::split_path(&corpus_dir, Split::Test),
        &generated,
        &out_dir.join("report"),
        IntervalMode::Bucket,
    )?;
    Ok(())
}
