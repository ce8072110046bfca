//! `wmlm`: command-line front end for vocabulary building, training,
//! evaluation, reranking, and benchmarking. Every command writes a run
//! manifest next to its primary output; `replay` re-executes a prior
//! run from its manifest.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 numeric failure.

mod manifest;

use std::fs::{self, File};
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use manifest::RunManifest;
use wmlm_core::error::Error;
use wmlm_core::eval::{
    bench_csv, corpus_bleu, load_messages_tsv, load_nbest_jsonl, load_pairs_tsv, rerank,
    runtime_bench, selections_csv, sms_eval, sts_eval, RerankConfig, STS_SUMMARY_HEADER,
};
use wmlm_core::model::{MaskRegime, ModelConfig};
use wmlm_core::repr::ReprLevel;
use wmlm_core::tokenizer::{encode, EncodedSentence, Vocabulary};
use wmlm_core::training::{
    load_checkpoint, save_checkpoint, train_loop, Checkpoint, TrainConfig,
};
use wmlm_core::Result;

#[derive(Parser)]
#[command(name = "wmlm", version, about = "window-masking language model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build a vocabulary file from a line-oriented text corpus.
    BuildVocab(BuildVocabArgs),
    /// Train a model and write a checkpoint plus a loss-log CSV.
    Train(TrainArgs),
    /// Sentence-similarity evaluation: Pearson r of pooled-vector cosines.
    EvalSts(EvalStsArgs),
    /// Spam-classification probe on pooled representations.
    EvalSms(EvalSmsArgs),
    /// Rerank n-best lists and report corpus BLEU.
    Rerank(RerankArgs),
    /// Time lm_score per regime and sentence length.
    Bench(BenchArgs),
    /// Re-run a prior command from its manifest.
    Replay(ReplayArgs),
}

#[derive(Args)]
struct BuildVocabArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 10_000)]
    max_size: usize,
    #[arg(long, default_value_t = 1)]
    min_freq: u64,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    /// Masking regime: causal, window, or mlm.
    #[arg(long, default_value = "window")]
    regime: String,
    #[arg(long, default_value_t = 5000)]
    steps: u64,
    #[arg(long, default_value_t = 64)]
    batch: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint output path.
    #[arg(long)]
    out: PathBuf,
    /// Loss-log CSV output path.
    #[arg(long)]
    log: PathBuf,
    #[arg(long, default_value_t = 10)]
    log_every: u64,
    // Architecture overrides; defaults follow the reference configuration.
    #[arg(long, default_value_t = 3)]
    layers: usize,
    #[arg(long, default_value_t = 64)]
    dim: usize,
    #[arg(long, default_value_t = 4)]
    heads: usize,
    #[arg(long, default_value_t = 2048)]
    ffn: usize,
    #[arg(long, default_value_t = 64)]
    max_len: usize,
    #[arg(long, default_value_t = 0.2)]
    dropout: f32,
    #[arg(long, default_value_t = 0.15)]
    mlm_prob: f32,
}

#[derive(Args)]
struct EvalStsArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// TSV file of gold<TAB>sentence_a<TAB>sentence_b rows.
    #[arg(long)]
    pairs: PathBuf,
    /// Representation levels, comma separated: embed, context, context:k, output.
    #[arg(long, default_value = "context,embed,output", value_delimiter = ',')]
    level: Vec<String>,
    /// Summary CSV: one row per level.
    #[arg(long)]
    out: PathBuf,
    /// Optional per-pair CSV.
    #[arg(long)]
    pairs_out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalSmsArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// TSV file of label<TAB>text rows, labels ham/spam.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "context")]
    level: String,
    #[arg(long, default_value_t = 42)]
    split_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RerankArgs {
    #[arg(long)]
    ckpt: PathBuf,
    /// JSON-lines file of n-best entries.
    #[arg(long)]
    nbest: PathBuf,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// Checkpoints to benchmark, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    ckpts: Vec<PathBuf>,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20, 40])]
    lengths: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    manifest: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}

/// 3 for numeric failures, 2 for everything else (usage/input).
fn exit_code(err: &Error) -> u8 {
    match err {
        Error::NonFiniteLoss { .. }
        | Error::ZeroVariance(_)
        | Error::ZeroVector
        | Error::DegenerateRow { .. }
        | Error::NoSignal
        | Error::NonScalarBackward { .. } => 3,
        _ => 2,
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::BuildVocab(args) => cmd_build_vocab(args),
        Command::Train(args) => cmd_train(args),
        Command::EvalSts(args) => cmd_eval_sts(args),
        Command::EvalSms(args) => cmd_eval_sms(args),
        Command::Rerank(args) => cmd_rerank(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Replay(args) => cmd_replay(args),
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))
}

fn arg(flag: &str, value: impl ToString) -> [String; 2] {
    [format!("--{flag}"), value.to_string()]
}

fn cmd_build_vocab(args: BuildVocabArgs) -> Result<()> {
    let vocab = Vocabulary::build(open(&args.corpus)?, args.max_size, args.min_freq)?;
    let config = json!({"max_size": args.max_size, "min_freq": args.min_freq});
    let argv = [
        arg("corpus", args.corpus.display()),
        arg("out", args.out.display()),
        arg("max-size", args.max_size),
        arg("min-freq", args.min_freq),
    ]
    .concat();
    let mut manifest = RunManifest::start("build-vocab", argv, config);
    manifest.add_input(&args.corpus)?;
    fs::write(&args.out, vocab.to_text())?;
    manifest.add_result("vocab_len", vocab.len());
    manifest.finish(&args.out)?;
    println!("vocabulary of {} tokens -> {}", vocab.len(), args.out.display());
    Ok(())
}

fn load_vocab(path: &Path) -> Result<Vocabulary> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))?;
    Vocabulary::from_text(&text)
}

/// Encode each nonblank corpus line; lines that tokenize to nothing are
/// skipped.
fn encode_corpus(path: &Path, vocab: &Vocabulary, max_len: usize) -> Result<Vec<EncodedSentence>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Parse(format!("cannot open {}: {e}", path.display())))?;
    let mut sentences = Vec::new();
    for line in text.lines() {
        match encode(vocab, line, max_len) {
            Ok(s) => sentences.push(s),
            Err(Error::EmptySentence) => continue,
            Err(e) => return Err(e),
        }
    }
    if sentences.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(sentences)
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let regime: MaskRegime = args.regime.parse()?;
    let vocab = load_vocab(&args.vocab)?;
    let model_cfg = ModelConfig {
        num_layers: args.layers,
        model_dim: args.dim,
        num_heads: args.heads,
        ffn_dim: args.ffn,
        vocab_size: vocab.len(),
        max_len: args.max_len,
        dropout_rate: args.dropout,
        regime,
        mlm_prob: args.mlm_prob,
    };
    model_cfg.validate()?;
    let train_cfg = TrainConfig {
        batch_size: args.batch,
        steps: args.steps,
        lr: args.lr,
        seed: args.seed,
        regime,
        log_every: args.log_every,
    };
    let corpus = encode_corpus(&args.corpus, &vocab, model_cfg.max_len)?;

    let config = json!({"model": model_cfg, "train": train_cfg});
    let argv = [
        arg("corpus", args.corpus.display()),
        arg("vocab", args.vocab.display()),
        arg("regime", &args.regime),
        arg("steps", args.steps),
        arg("batch", args.batch),
        arg("lr", args.lr),
        arg("seed", args.seed),
        arg("out", args.out.display()),
        arg("log", args.log.display()),
        arg("log-every", args.log_every),
        arg("layers", args.layers),
        arg("dim", args.dim),
        arg("heads", args.heads),
        arg("ffn", args.ffn),
        arg("max-len", args.max_len),
        arg("dropout", args.dropout),
        arg("mlm-prob", args.mlm_prob),
    ]
    .concat();
    let mut manifest = RunManifest::start("train", argv, config);
    manifest.seed = Some(args.seed);
    manifest.add_input(&args.corpus)?;
    manifest.add_input(&args.vocab)?;

    let (model, log) = train_loop(&corpus, model_cfg, train_cfg.clone())?;
    let ckpt = Checkpoint {
        model,
        vocab,
        train: train_cfg,
        completed_steps: args.steps,
    };
    save_checkpoint(&ckpt, &args.out)?;
    fs::write(&args.log, log.to_csv())?;
    if let Some(last) = log.rows.last() {
        manifest.add_result("final_loss", last.loss);
    }
    manifest.finish(&args.out)?;
    println!(
        "trained {} steps ({}) -> {}",
        args.steps,
        regime.as_str(),
        args.out.display()
    );
    Ok(())
}

fn cmd_eval_sts(args: EvalStsArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let pairs = load_pairs_tsv(open(&args.pairs)?)?;
    let levels: Vec<ReprLevel> = args
        .level
        .iter()
        .map(|s| ReprLevel::parse(s, ckpt.model.config.num_layers))
        .collect::<Result<_>>()?;

    let config = json!({"level": args.level});
    let mut argv = [
        arg("ckpt", args.ckpt.display()),
        arg("pairs", args.pairs.display()),
        arg("level", args.level.join(",")),
        arg("out", args.out.display()),
    ]
    .concat();
    if let Some(p) = &args.pairs_out {
        argv.extend(arg("pairs-out", p.display()));
    }
    let mut manifest = RunManifest::start("eval-sts", argv, config);
    manifest.add_input(&args.ckpt)?;
    manifest.add_input(&args.pairs)?;

    let mut summary = String::from(STS_SUMMARY_HEADER);
    let mut pair_rows = String::from("level,pair,gold,predicted\n");
    for level in levels {
        let report = sts_eval(&ckpt.model, &ckpt.vocab, &pairs, level)?;
        summary.push_str(&report.summary_row());
        for line in report.pairs_csv().lines().skip(1) {
            pair_rows.push_str(line);
            pair_rows.push('\n');
        }
        manifest.add_result(&format!("pearson_{}", level.label()), report.pearson);
        println!(
            "{}: pearson {:.4} over {} pairs ({} skipped)",
            level.label(),
            report.pearson,
            report.rows.len(),
            report.skipped
        );
    }
    fs::write(&args.out, summary)?;
    if let Some(p) = &args.pairs_out {
        fs::write(p, pair_rows)?;
    }
    manifest.finish(&args.out)?;
    Ok(())
}

fn cmd_eval_sms(args: EvalSmsArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let messages = load_messages_tsv(open(&args.data)?)?;
    let level = ReprLevel::parse(&args.level, ckpt.model.config.num_layers)?;

    let config = json!({"level": args.level, "split_seed": args.split_seed});
    let argv = [
        arg("ckpt", args.ckpt.display()),
        arg("data", args.data.display()),
        arg("level", &args.level),
        arg("split-seed", args.split_seed),
        arg("out", args.out.display()),
    ]
    .concat();
    let mut manifest = RunManifest::start("eval-sms", argv, config);
    manifest.seed = Some(args.split_seed);
    manifest.add_input(&args.ckpt)?;
    manifest.add_input(&args.data)?;

    let report = sms_eval(&ckpt.model, &ckpt.vocab, &messages, level, args.split_seed)?;
    fs::write(&args.out, report.to_csv())?;
    manifest.add_result("accuracy", report.accuracy);
    manifest.finish(&args.out)?;
    println!(
        "{}: accuracy {:.4} on {} test messages",
        level.label(),
        report.accuracy,
        report.test_size
    );
    Ok(())
}

fn cmd_rerank(args: RerankArgs) -> Result<()> {
    let ckpt = load_checkpoint(&args.ckpt)?;
    let entries = load_nbest_jsonl(open(&args.nbest)?)?;
    let cfg = RerankConfig { lambda: args.lambda };

    let config = json!({"lambda": args.lambda});
    let argv = [
        arg("ckpt", args.ckpt.display()),
        arg("nbest", args.nbest.display()),
        arg("lambda", args.lambda),
        arg("out", args.out.display()),
    ]
    .concat();
    let mut manifest = RunManifest::start("rerank", argv, config);
    manifest.add_input(&args.ckpt)?;
    manifest.add_input(&args.nbest)?;

    let selections = rerank(&ckpt.model, &ckpt.vocab, &entries, cfg)?;
    let selected: Vec<String> = selections.iter().map(|s| s.text.clone()).collect();
    let references: Vec<String> = entries.iter().map(|e| e.reference.clone()).collect();
    let bleu = corpus_bleu(&selected, &references)?;
    fs::write(&args.out, selections_csv(&selections))?;
    manifest.add_result("bleu", bleu);
    manifest.finish(&args.out)?;
    println!("reranked {} entries, corpus BLEU {:.4}", selections.len(), bleu);
    Ok(())
}

fn cmd_bench(args: BenchArgs) -> Result<()> {
    let ckpts: Vec<Checkpoint> = args
        .ckpts
        .iter()
        .map(|p| load_checkpoint(p))
        .collect::<Result<_>>()?;
    let models: Vec<_> = ckpts.iter().map(|c| &c.model).collect();

    let config = json!({"lengths": args.lengths, "trials": args.trials});
    let ckpt_list = args
        .ckpts
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(",");
    let lengths_list = args
        .lengths
        .iter()
        .map(|n| n.to_string())
        .collect::<Vec<_>>()
        .join(",");
    let argv = [
        arg("ckpts", ckpt_list),
        arg("lengths", lengths_list),
        arg("trials", args.trials),
        arg("out", args.out.display()),
    ]
    .concat();
    let mut manifest = RunManifest::start("bench", argv, config);
    for p in &args.ckpts {
        manifest.add_input(p)?;
    }

    let rows = runtime_bench(&models, &args.lengths, args.trials)?;
    fs::write(&args.out, bench_csv(&rows))?;
    manifest.finish(&args.out)?;
    println!("benchmarked {} (regime, length) cells", rows.len());
    Ok(())
}

fn cmd_replay(args: ReplayArgs) -> Result<()> {
    let manifest = RunManifest::load(&args.manifest)?;
    let mut argv = vec!["wmlm".to_string(), manifest.command.clone()];
    argv.extend(manifest.argv.clone());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| Error::Parse(format!("manifest argv does not parse: {e}")))?;
    if matches!(cli.command, Command::Replay(_)) {
        return Err(Error::Config("a replay manifest cannot name `replay`".into()));
    }
    println!("replaying `{}`", manifest.command);
    run(cli.command)
}
