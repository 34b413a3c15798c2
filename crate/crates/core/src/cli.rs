//! Command-line front end. [`run`] parses arguments, dispatches to the
//! library and maps outcomes to exit codes: 0 success, 1 domain error,
//! 2 usage error. Reports go to stdout as one JSON object; progress and
//! errors go to stderr.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use crate::bpe::{corpus_stats, train_bpe_with, TokenizerModel, TrainOptions, FORMAT_TAG};
use crate::config::PipelineConfig;
use crate::corpus::{ingest, load_records, IngestOptions};
use crate::data::{pack_corpus, pack_shard, SplitSpec, TokenShard, SHARD_MAGIC, TRAIN_SHARD};
use crate::gpt::CHECKPOINT_MAGIC;
use crate::instruct::{
    adapter_from_spec, load_dataset, pack_finetune, translate_file, FinetuneShard, FINETUNE_MAGIC, TEMPLATE_VERSION,
};
use crate::train::{read_log, render_loss_svg, train};

pub const EXIT_OK: i32 = 0;
pub const EXIT_DOMAIN: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "trgpt", about = "Turkish GPT pipeline: corpus, tokenizer, shards, training, instruction data")]
struct Cli {
    /// Pipeline config file (TOML). Flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Base seed replacing every seed in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Extract cleaned article records from a MediaWiki XML dump.
    Ingest {
        #[arg(long)]
        dump: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        min_chars: Option<usize>,
    },
    #[command(subcommand)]
    Tokenizer(TokenizerCommand),
    /// Split records into train/validation and write token shards.
    Pack {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        val_fraction: Option<f64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Train a model on packed shards.
    Train {
        #[arg(long)]
        data_dir: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Stop after this many updates in total.
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Render a loss log as SVG.
    PlotLoss {
        #[arg(long)]
        log: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    #[command(subcommand)]
    Instruct(InstructCommand),
    /// Token statistics of a record file under a tokenizer.
    Stats(StatsArgs),
    /// Print the crate version and file format identifiers.
    Version,
}

#[derive(Debug, Subcommand)]
enum TokenizerCommand {
    /// Learn BPE merges from a record file.
    Train {
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Do not reserve the highest id as document separator.
        #[arg(long)]
        no_separator: bool,
    },
    /// Encode every record of a file into one token shard.
    Encode {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long = "in")]
        input: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    Stats(StatsArgs),
}

#[derive(Debug, Args)]
struct StatsArgs {
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum InstructCommand {
    /// Translate an instruction dataset field by field; resumable.
    Translate {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        source: Option<String>,
        #[arg(long)]
        target: Option<String>,
        /// identity, uppercase, file:<mapping.json> or command:<program>
        #[arg(long)]
        adapter: Option<String>,
    },
    /// Render, tokenize and mask records into a fine-tuning shard.
    Pack {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        ctx: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
}

type Failure = Box<dyn std::error::Error + Send + Sync>;

fn emit<T: Serialize>(out: &mut dyn Write, report: &T) -> Result<(), Failure> {
    writeln!(out, "{}", serde_json::to_string(report)?)?;
    Ok(())
}

fn pick(flag: Option<PathBuf>, fallback: &Path) -> PathBuf {
    flag.unwrap_or_else(|| fallback.to_path_buf())
}

fn load_tokenizer(path: &Path) -> Result<TokenizerModel, Failure> {
    Ok(TokenizerModel::load(path)?)
}

fn dispatch(command: Command, cfg: &PipelineConfig, out: &mut dyn Write) -> Result<(), Failure> {
    let paths = &cfg.paths;
    match command {
        Command::Ingest { dump, out: dest, min_chars } => {
            let dump = pick(dump, &paths.dump);
            let dest = pick(dest, &paths.corpus);
            let opts = IngestOptions {
                min_chars: min_chars.unwrap_or(cfg.ingest.min_chars),
            };
            let report = ingest(&dump, &dest, opts)?;
            eprintln!("ingested {} of {} pages into {}", report.records_emitted, report.pages_seen, dest.display());
            emit(out, &report)
        }
        Command::Tokenizer(TokenizerCommand::Train {
            corpus,
            vocab,
            out: dest,
            no_separator,
        }) => {
            let corpus = pick(corpus, &paths.corpus);
            let dest = pick(dest, &paths.tokenizer);
            let records = load_records(&corpus)?;
            let options = TrainOptions {
                reserve_separator: cfg.tokenizer.reserve_separator && !no_separator,
            };
            let model = train_bpe_with(
                records.iter().map(|r| r.body.as_str()),
                vocab.unwrap_or(cfg.tokenizer.vocab_size),
                options,
            )?;
            model.save(&dest)?;
            eprintln!("learned {} merges into {}", model.merges().len(), dest.display());
            emit(
                out,
                &json!({
                    "vocab_size": model.vocab_size(),
                    "merges": model.merges().len(),
                    "separator": model.separator(),
                    "path": dest,
                }),
            )
        }
        Command::Tokenizer(TokenizerCommand::Encode { model, input, out: dest }) => {
            let model = load_tokenizer(&pick(model, &paths.tokenizer))?;
            let records = load_records(&pick(input, &paths.corpus))?;
            let summary = pack_shard(records.iter().map(|r| r.body.as_str()), &model, &dest)?;
            emit(out, &summary)
        }
        Command::Tokenizer(TokenizerCommand::Stats(args)) | Command::Stats(args) => {
            let model = load_tokenizer(&pick(args.model, &paths.tokenizer))?;
            let records = load_records(&pick(args.corpus, &paths.corpus))?;
            let stats = corpus_stats(&model, records.iter().map(|r| r.body.as_str()).collect::<Vec<_>>());
            emit(out, &stats)
        }
        Command::Pack {
            corpus,
            model,
            val_fraction,
            out_dir,
        } => {
            let model = load_tokenizer(&pick(model, &paths.tokenizer))?;
            let split = SplitSpec::new(val_fraction.unwrap_or(cfg.split.val_fraction), cfg.split.seed)?;
            let out_dir = pick(out_dir, &paths.shards);
            let report = pack_corpus(&pick(corpus, &paths.corpus), &model, &split, &out_dir)?;
            eprintln!(
                "packed {} train / {} val tokens into {}",
                report.train.count,
                report.val.count,
                out_dir.display()
            );
            emit(out, &report)
        }
        Command::Train {
            data_dir,
            out_dir,
            steps,
            resume,
        } => {
            let data_dir = pick(data_dir, &paths.shards);
            let out_dir = pick(out_dir, &paths.checkpoints);
            let shard = TokenShard::read(&data_dir.join(TRAIN_SHARD))?;
            let train_cfg = cfg.train_config(shard.vocab_size as usize);
            drop(shard);
            let steps = steps.unwrap_or(train_cfg.schedule.total_steps);
            let summary = train(&train_cfg, &data_dir, &out_dir, steps, resume.as_deref())?;
            eprintln!(
                "trained steps {}..{}; train loss {:.4}",
                summary.start_step, summary.end_step, summary.final_train_loss
            );
            emit(out, &summary)
        }
        Command::PlotLoss { log, out: dest } => {
            let rows = read_log(&log)?;
            std::fs::write(&dest, render_loss_svg(&rows)).map_err(|e| format!("{}: {e}", dest.display()))?;
            emit(out, &json!({ "rows": rows.len(), "svg": dest }))
        }
        Command::Instruct(InstructCommand::Translate {
            input,
            out: dest,
            source,
            target,
            adapter,
        }) => {
            let client = adapter_from_spec(adapter.as_deref().unwrap_or(&cfg.instruct.adapter))?;
            let report = translate_file(
                &input,
                &dest,
                client.as_ref(),
                source.as_deref().unwrap_or(&cfg.instruct.source_lang),
                target.as_deref().unwrap_or(&cfg.instruct.target_lang),
                &cfg.translate_options(),
            )?;
            eprintln!("translated {} records, {} failed", report.translated, report.failed);
            emit(out, &report)
        }
        Command::Instruct(InstructCommand::Pack {
            input,
            model,
            ctx,
            epochs,
            out: dest,
        }) => {
            let tokenizer = load_tokenizer(&pick(model, &paths.tokenizer))?;
            let dataset = load_dataset(&input)?;
            let mut opts = cfg.pack_options();
            opts.context_len = ctx.unwrap_or(opts.context_len);
            opts.epochs = epochs.unwrap_or(opts.epochs);
            let pack = pack_finetune(&dataset.records, &tokenizer, &opts)?;
            FinetuneShard {
                vocab_size: tokenizer.vocab_size() as u32,
                examples: pack.examples.clone(),
            }
            .write(&dest)?;
            emit(
                out,
                &json!({
                    "examples": pack.examples.len(),
                    "accepted": pack.accepted,
                    "rejects": pack.rejects,
                    "load_rejects": dataset.rejects,
                    "template": TEMPLATE_VERSION,
                    "path": dest,
                }),
            )
        }
        Command::Version => emit(
            out,
            &json!({
                "version": env!("CARGO_PKG_VERSION"),
                "formats": {
                    "tokenizer": FORMAT_TAG,
                    "shard": String::from_utf8_lossy(SHARD_MAGIC),
                    "checkpoint": String::from_utf8_lossy(CHECKPOINT_MAGIC),
                    "finetune": String::from_utf8_lossy(FINETUNE_MAGIC),
                    "template": TEMPLATE_VERSION,
                }
            }),
        ),
    }
}

/// Runs one invocation, writing the JSON report to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    let mut cfg = match cli.config.as_deref().map(PipelineConfig::load).transpose() {
        Ok(c) => c.unwrap_or_default(),
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    if let Some(seed) = cli.seed {
        cfg.reseed(seed);
    }
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_USAGE;
        }
    };
    let mut report = Vec::new();
    match pool.install(|| dispatch(cli.command, &cfg, &mut report)) {
        Ok(()) => match out.write_all(&report) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {e}");
                EXIT_DOMAIN
            }
        },
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_DOMAIN
        }
    }
}
