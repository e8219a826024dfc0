//! `radseg` — radical-aware Chinese word segmentation toolkit.
//!
//! Subcommands wire the library into reproducible pipelines: `decompose`
//! inspects radical sequences, `pretrain` learns joint character/radical
//! vectors, `train` fits a Bi-LSTM-CRF segmenter, `segment` tags raw text,
//! `eval` scores predictions word-by-word. Every file-producing command
//! writes a `<out>.manifest` capturing the resolved configuration and
//! input digests; with a fixed `--seed` and one worker, reruns are
//! byte-identical.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numeric failure.

mod manifest;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use radseg_core::corpus::{read_segmented, split_train_dev};
use radseg_core::embedding::{self, PretrainConfig};
use radseg_core::lexicon::{DecomposeMode, RadicalLexicon};
use radseg_core::scorer;
use radseg_core::segmenter::{
    load_model, save_model, Ablation, ModelConfig, ModelError, SegModel, TrainHyper,
};

use manifest::Manifest;

#[derive(Parser)]
#[command(name = "radseg", version, about = "Radical-aware Chinese word segmentation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the radical sequence of each input character, TSV to stdout.
    Decompose {
        /// Character→radical dictionary (TSV).
        #[arg(long)]
        lexicon: PathBuf,
        /// Decomposition mode: full, char_only or radicals_only.
        #[arg(long, default_value = "full")]
        mode: String,
        /// Characters to decompose.
        #[arg(conflicts_with = "stdin")]
        text: Option<String>,
        /// Read characters from standard input instead.
        #[arg(long)]
        stdin: bool,
    },
    /// Jointly pretrain character and radical vectors with SGNS.
    Pretrain {
        /// Training corpus, one sentence per line; whitespace is ignored.
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// Output embedding file (word2vec text format).
        #[arg(long)]
        out: PathBuf,
        /// Vector dimension.
        #[arg(long, default_value_t = 100)]
        dim: usize,
        /// Maximum context window.
        #[arg(long, default_value_t = 5)]
        window: usize,
        /// Negative samples per pair.
        #[arg(long, default_value_t = 5)]
        neg: usize,
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        /// Initial learning rate, decayed linearly to zero.
        #[arg(long, default_value_t = 0.025)]
        lr: f64,
        /// Drop characters rarer than this.
        #[arg(long, default_value_t = 1)]
        min_count: usize,
        /// Decomposition mode: full, char_only or radicals_only.
        #[arg(long, default_value = "full")]
        mode: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Training threads; more than one is faster but nondeterministic.
        #[arg(long, default_value_t = 1)]
        workers: usize,
    },
    /// Train a segmentation model; the last 10% of sentences become dev.
    Train {
        /// Segmented training corpus (single-space-joined words).
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        lexicon: PathBuf,
        /// One of: baseline, subchar, radical, radical_no_char,
        /// radical_tie, radical_tie_bigram.
        #[arg(long)]
        ablation: String,
        /// Output model file; a dev-F1 curve TSV is written beside it.
        #[arg(long)]
        out: PathBuf,
        /// Pretrained embedding file to initialize from.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// Embedding dimension k.
        #[arg(long, default_value_t = 100)]
        dim: usize,
        /// Context LSTM hidden size d.
        #[arg(long, default_value_t = 100)]
        hidden: usize,
        /// Bigram embedding dimension; defaults to --dim.
        #[arg(long)]
        bigram_dim: Option<usize>,
        /// Dropout rate on layer inputs.
        #[arg(long, default_value_t = 0.5)]
        dropout: f64,
        #[arg(long, default_value_t = 1e-3)]
        lr: f64,
        /// Sentences per batch.
        #[arg(long, default_value_t = 32)]
        batch: usize,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        /// Early-stop patience on dev F1.
        #[arg(long, default_value_t = 5)]
        patience: usize,
        /// Gradient clip (global norm).
        #[arg(long, default_value_t = 5.0)]
        clip: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Keep embedding tables fixed during training.
        #[arg(long)]
        freeze_embeddings: bool,
        /// Feed the radical composition instead of concatenating it to the
        /// character embedding.
        #[arg(long)]
        replace_char: bool,
    },
    /// Segment raw text, one sentence per line, words joined by spaces.
    Segment {
        #[arg(long)]
        model: PathBuf,
        /// Input file; defaults to standard input with --stdin.
        #[arg(conflicts_with = "stdin")]
        file: Option<PathBuf>,
        #[arg(long)]
        stdin: bool,
    },
    /// Score a segmented prediction file against a gold file.
    Eval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
    },
}

enum CliError {
    /// Usage or input problem → exit 2.
    Input(String),
    /// Numeric failure (non-finite loss) → exit 3.
    Numeric(String),
}

fn input(err: impl std::fmt::Display) -> CliError {
    CliError::Input(err.to_string())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn parse_mode(s: &str) -> Result<DecomposeMode, CliError> {
    DecomposeMode::parse(s).ok_or_else(|| {
        CliError::Input(format!(
            "unknown mode {s:?}; expected one of: full, char_only, radicals_only"
        ))
    })
}

fn load_lexicon(path: &Path) -> Result<RadicalLexicon, CliError> {
    let lex = RadicalLexicon::load(path).map_err(input)?;
    if lex.duplicate_lines > 0 {
        eprintln!(
            "warning: {}: {} duplicate character line(s), last entry wins",
            path.display(),
            lex.duplicate_lines
        );
    }
    Ok(lex)
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Decompose { lexicon, mode, text, stdin } => {
            cmd_decompose(&lexicon, &mode, text.as_deref(), stdin)
        }
        Command::Pretrain {
            corpus,
            lexicon,
            out,
            dim,
            window,
            neg,
            epochs,
            lr,
            min_count,
            mode,
            seed,
            workers,
        } => {
            let cfg = PretrainConfig {
                dim,
                window,
                negatives: neg,
                epochs,
                learning_rate: lr,
                min_count,
                seed,
                mode: parse_mode(&mode)?,
                workers,
            };
            cmd_pretrain(&corpus, &lexicon, &out, &cfg, &mode)
        }
        Command::Train {
            train,
            lexicon,
            ablation,
            out,
            embeddings,
            dim,
            hidden,
            bigram_dim,
            dropout,
            lr,
            batch,
            epochs,
            patience,
            clip,
            seed,
            freeze_embeddings,
            replace_char,
        } => {
            let ablation = Ablation::parse(&ablation).ok_or_else(|| {
                CliError::Input(format!(
                    "unknown ablation {ablation:?}; expected one of: {}",
                    Ablation::ALL.map(|a| a.name()).join(", ")
                ))
            })?;
            let config = ModelConfig {
                ablation,
                k: dim,
                d: hidden,
                bigram_dim: bigram_dim.unwrap_or(dim),
                dropout,
                replace_char_with_composition: replace_char,
                freeze_embeddings,
                seed,
            };
            let hyper = TrainHyper {
                learning_rate: lr,
                batch_size: batch,
                max_epochs: epochs,
                patience,
                clip_norm: clip,
                seed,
                ..TrainHyper::default()
            };
            cmd_train(&train, &lexicon, embeddings.as_deref(), &out, config, hyper)
        }
        Command::Segment { model, file, stdin } => cmd_segment(&model, file.as_deref(), stdin),
        Command::Eval { gold, pred } => cmd_eval(&gold, &pred),
    }
}

fn cmd_decompose(
    lexicon: &Path,
    mode: &str,
    text: Option<&str>,
    use_stdin: bool,
) -> Result<(), CliError> {
    let mode = parse_mode(mode)?;
    let lex = load_lexicon(lexicon)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut emit = |chars: &str| -> std::io::Result<()> {
        for c in chars.chars().filter(|c| !c.is_whitespace()) {
            let seq = lex.decompose(c, mode);
            let tokens: Vec<String> = seq.tokens.iter().map(|t| t.to_string()).collect();
            writeln!(out, "{c}\t{}", tokens.join(" "))?;
        }
        Ok(())
    };
    match (text, use_stdin) {
        (Some(text), _) => emit(text).map_err(input)?,
        (None, true) => {
            for line in std::io::stdin().lock().lines() {
                emit(&line.map_err(input)?).map_err(input)?;
            }
        }
        (None, false) => {
            return Err(CliError::Input("provide TEXT or --stdin".to_string()));
        }
    }
    Ok(())
}

fn cmd_pretrain(
    corpus: &Path,
    lexicon: &Path,
    out: &Path,
    cfg: &PretrainConfig,
    mode_name: &str,
) -> Result<(), CliError> {
    let lex = load_lexicon(lexicon)?;
    let set = embedding::pretrain(corpus, &lex, cfg).map_err(|e| match e {
        embedding::EmbeddingError::NonFinite { .. } => CliError::Numeric(e.to_string()),
        other => input(other),
    })?;
    embedding::save_embeddings(&set, out).map_err(input)?;

    let mut m = Manifest::new("pretrain");
    m.input("corpus", corpus).map_err(input)?;
    m.input("lexicon", lexicon).map_err(input)?;
    m.set("dim", cfg.dim);
    m.set("window", cfg.window);
    m.set("negatives", cfg.negatives);
    m.set("epochs", cfg.epochs);
    m.set("learning_rate", cfg.learning_rate);
    m.set("min_count", cfg.min_count);
    m.set("mode", mode_name);
    m.set("seed", cfg.seed);
    m.set("workers", cfg.workers);
    m.set("out", out.display());
    m.write_beside(out).map_err(input)?;
    Ok(())
}

fn cmd_train(
    train_path: &Path,
    lexicon: &Path,
    embeddings: Option<&Path>,
    out: &Path,
    config: ModelConfig,
    hyper: TrainHyper,
) -> Result<(), CliError> {
    let sentences = read_segmented(train_path).map_err(input)?;
    let (train, dev) = split_train_dev(&sentences).map_err(input)?;
    let lex = load_lexicon(lexicon)?;
    let pretrained = embeddings
        .map(embedding::load_embeddings)
        .transpose()
        .map_err(input)?;

    let mut manifest = Manifest::new("train");
    manifest.input("train", train_path).map_err(input)?;
    manifest.input("lexicon", lexicon).map_err(input)?;
    if let Some(path) = embeddings {
        manifest.input("embeddings", path).map_err(input)?;
    }
    manifest.set("ablation", config.ablation.name());
    manifest.set("dim", config.k);
    manifest.set("hidden", config.d);
    manifest.set("bigram_dim", config.bigram_dim);
    manifest.set("dropout", config.dropout);
    manifest.set("replace_char", config.replace_char_with_composition);
    manifest.set("freeze_embeddings", config.freeze_embeddings);
    manifest.set("learning_rate", hyper.learning_rate);
    manifest.set("batch_size", hyper.batch_size);
    manifest.set("max_epochs", hyper.max_epochs);
    manifest.set("patience", hyper.patience);
    manifest.set("clip_norm", hyper.clip_norm);
    manifest.set("seed", hyper.seed);
    manifest.set("train_sentences", train.len());
    manifest.set("dev_sentences", dev.len());
    manifest.set("out", out.display());

    let mut model =
        SegModel::build(config, lex, &train, pretrained.as_ref()).map_err(input)?;
    let outcome = model.train(&train, &dev, &hyper);

    let report = match &outcome {
        Ok(report) => Some(report),
        Err(ModelError::NonFinite { .. }) => None,
        Err(_) => None,
    };
    if let Some(report) = report {
        for (i, f1) in report.dev_f1.iter().enumerate() {
            println!("epoch\t{}\tdev_f1\t{f1:.4}", i + 1);
        }
        println!("best_epoch\t{}", report.best_epoch);
        println!("best_dev_f1\t{:.4}", report.best_f1);
        let mut curve = String::from("epoch\tdev_f1\n");
        for (i, f1) in report.dev_f1.iter().enumerate() {
            curve.push_str(&format!("{}\t{f1:.6}\n", i + 1));
        }
        let curve_path = suffixed(out, "curve.tsv");
        std::fs::write(&curve_path, curve).map_err(input)?;
        manifest.set("best_epoch", report.best_epoch);
        manifest.set("best_dev_f1", format!("{:.6}", report.best_f1));
    }

    match outcome {
        Ok(_) => {
            save_model(&model, out).map_err(input)?;
            manifest.write_beside(out).map_err(input)?;
            Ok(())
        }
        Err(err @ ModelError::NonFinite { .. }) => {
            // The model retains its best checkpoint; keep it on disk.
            save_model(&model, out).map_err(input)?;
            manifest.set("aborted", &err);
            manifest.write_beside(out).map_err(input)?;
            Err(CliError::Numeric(err.to_string()))
        }
        Err(err) => Err(input(err)),
    }
}

fn suffixed(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_os_string();
    name.push(".");
    name.push(suffix);
    PathBuf::from(name)
}

fn cmd_segment(model_path: &Path, file: Option<&Path>, use_stdin: bool) -> Result<(), CliError> {
    let model = load_model(model_path).map_err(input)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let mut emit = |line: &str| -> std::io::Result<()> {
        writeln!(out, "{}", model.segment(line).join(" "))
    };
    match (file, use_stdin) {
        (Some(path), _) => {
            let content = std::fs::read_to_string(path).map_err(input)?;
            for line in content.lines() {
                emit(line).map_err(input)?;
            }
        }
        (None, true) => {
            for line in std::io::stdin().lock().lines() {
                emit(&line.map_err(input)?).map_err(input)?;
            }
        }
        (None, false) => {
            return Err(CliError::Input("provide FILE or --stdin".to_string()));
        }
    }
    Ok(())
}

fn cmd_eval(gold: &Path, pred: &Path) -> Result<(), CliError> {
    let report = scorer::score_corpus(gold, pred).map_err(input)?;
    print!("{}", report.render());
    Ok(())
}
