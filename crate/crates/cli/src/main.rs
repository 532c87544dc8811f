use clap::{Args, Parser, Subcommand, ValueEnum};
use robustqa::contrastive::Reduction;
use robustqa::corpus::{read_jsonl, write_jsonl};
use robustqa::eval::ReportFormat;
use robustqa::pipeline::{self, PipelineConfig, PipelineError, RunOptions};
use robustqa::scenarios::{export_review, import_review, read_review_tsv, write_review_tsv, Scenario, ScenarioSample};
use robustqa::synth::{write_workspace, SynthOptions};
use serde_json::json;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Build robustness-evaluation QA datasets, augment training data, build
/// preference pairs and score model outputs.
#[derive(Debug, Parser)]
#[command(name = "robustqa", version)]
struct Cli {
    /// Pipeline configuration file (TOML).
    #[arg(long, short, global = true, default_value = "robustqa.toml")]
    config: PathBuf,

    /// Overrides `output_dir` from the configuration.
    #[arg(long, global = true)]
    output_dir: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ClientFlags {
    /// Directory holding completions.jsonl / search.jsonl; replaces the
    /// configured HTTP clients with fixture-backed mocks.
    #[arg(long)]
    mock_fixtures: Option<PathBuf>,

    /// Append every prompt and reply to this JSONL file.
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl ClientFlags {
    fn options(&self) -> RunOptions {
        RunOptions { mock_fixtures: self.mock_fixtures.clone(), trace: self.trace.clone() }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ReductionArg {
    Sum,
    Mean,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Convert the configured datasets into record JSONL plus manifests.
    Ingest,
    /// Draw the seeded dev/test sample from every dataset.
    Split,
    /// Build the triple index from the configured triple file.
    Index,
    /// Build scenario samples for the dev and test splits.
    Build {
        /// Scenarios to build: `all` or a comma-separated list (SS, SSIncomp, MSCons, MSIncons, MSConf).
        #[arg(long, default_value = "all")]
        scenario: String,
        #[command(flatten)]
        clients: ClientFlags,
    },
    /// Mask and swap training contexts.
    Augment,
    /// Judge model outputs and write the evaluation report.
    Eval {
        /// JSONL of {sample_id, scenario, model_output}.
        #[arg(long)]
        outputs: PathBuf,
        #[command(flatten)]
        clients: ClientFlags,
    },
    /// Build chosen/rejected pairs from judged outputs.
    Pairs {
        /// Judged outputs; defaults to <output_dir>/eval/judged.jsonl.
        #[arg(long)]
        judged: Option<PathBuf>,
        /// Also write a word vocabulary and token-id pairs.
        #[arg(long)]
        tokenized: bool,
    },
    /// Compute the contrastive loss and gradients for a batch and compare
    /// them with finite differences.
    LossCheck {
        /// JSON array of {chosen_logps, rejected_logps}.
        #[arg(long)]
        batch: PathBuf,
        #[arg(long, value_enum, default_value = "sum")]
        reduction: ReductionArg,
    },
    /// Render a report from published per-scenario rates.
    Report {
        /// JSON rate table, or an array of them.
        #[arg(long)]
        from: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: FormatArg,
    },
    /// Print the configuration with all defaults resolved.
    Config,
    /// Write a synthetic corpus, triple file, mock fixtures and config.
    Synth {
        /// Target directory; created if missing.
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 600)]
        records: usize,
        /// Dev plus test size written into the generated config.
        #[arg(long, default_value_t = 500)]
        split_n: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Write simulated model outputs for every built sample.
    Simulate {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 11)]
        seed: u64,
    },
    /// Export or import a human-review sheet.
    #[command(subcommand)]
    Review(ReviewCommand),
}

#[derive(Debug, Subcommand)]
enum ReviewCommand {
    /// Write a seeded sample of scenario samples as TSV.
    Export {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Rows to export; defaults to review.n from the configuration.
        #[arg(long, short)]
        n: Option<usize>,
        /// Defaults to review.seed from the configuration.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Drop samples marked bad in a reviewed TSV.
    Import {
        #[arg(long)]
        samples: PathBuf,
        #[arg(long)]
        review: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<PipelineConfig, PipelineError> {
    let mut cfg = PipelineConfig::load(&cli.config)?;
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    Ok(cfg)
}

fn parse_scenarios(arg: &str) -> Result<Vec<Scenario>, PipelineError> {
    if arg.eq_ignore_ascii_case("all") {
        return Ok(Vec::new());
    }
    arg.split(',').map(|s| s.trim().parse::<Scenario>().map_err(PipelineError::Usage)).collect()
}

fn review_seed_and_n(cli: &Cli, n: Option<usize>, seed: Option<u64>) -> Result<(usize, u64), PipelineError> {
    match (n, seed) {
        (Some(n), Some(seed)) => Ok((n, seed)),
        _ => {
            let cfg = load_config(cli)?;
            Ok((n.unwrap_or(cfg.review.n), seed.unwrap_or(cfg.review.seed)))
        }
    }
}

fn read_samples(path: &Path) -> Result<Vec<ScenarioSample>, PipelineError> {
    read_jsonl(path).map_err(PipelineError::from)
}

fn run(cli: &Cli) -> Result<(), PipelineError> {
    let line = match &cli.command {
        Command::Ingest => pipeline::cmd_ingest(&load_config(cli)?)?,
        Command::Split => pipeline::cmd_split(&load_config(cli)?)?,
        Command::Index => pipeline::cmd_index(&load_config(cli)?)?,
        Command::Build { scenario, clients } => {
            let scenarios = parse_scenarios(scenario)?;
            pipeline::cmd_build(&load_config(cli)?, &scenarios, &clients.options())?
        }
        Command::Augment => pipeline::cmd_augment(&load_config(cli)?)?,
        Command::Eval { outputs, clients } => pipeline::cmd_eval(&load_config(cli)?, outputs, &clients.options())?,
        Command::Pairs { judged, tokenized } => pipeline::cmd_pairs(&load_config(cli)?, judged.as_deref(), *tokenized)?,
        Command::LossCheck { batch, reduction } => {
            let reduction = match reduction {
                ReductionArg::Sum => Reduction::Sum,
                ReductionArg::Mean => Reduction::Mean,
            };
            pipeline::cmd_loss_check(batch, reduction)?
        }
        Command::Report { from, format } => {
            let format = match format {
                FormatArg::Text => ReportFormat::Text,
                FormatArg::Json => ReportFormat::Json,
            };
            let (rendered, line) = pipeline::cmd_report(from, format)?;
            print!("{rendered}");
            line
        }
        Command::Config => {
            print!("{}", load_config(cli)?.echo());
            return Ok(());
        }
        Command::Synth { dir, records, split_n, seed } => {
            if *split_n > *records || split_n % 2 != 0 {
                return Err(PipelineError::Usage(format!(
                    "--split-n must be even and at most --records, got {split_n}"
                )));
            }
            let opts = SynthOptions { records: *records, split_n: *split_n, seed: *seed };
            let s = write_workspace(dir, &opts).map_err(|e| PipelineError::Data(e.to_string()))?;
            json!({
                "command": "synth",
                "config": s.config,
                "records": s.records,
                "triples": s.triples,
                "completion_fixtures": s.completion_fixtures,
                "search_fixtures": s.search_fixtures,
            })
        }
        Command::Simulate { out, seed } => pipeline::cmd_simulate(&load_config(cli)?, *seed, out)?,
        Command::Review(ReviewCommand::Export { samples, out, n, seed }) => {
            let (n, seed) = review_seed_and_n(cli, *n, *seed)?;
            let rows =
                export_review(&read_samples(samples)?, n, seed).map_err(|e| PipelineError::Data(e.to_string()))?;
            write_review_tsv(out, &rows).map_err(|e| PipelineError::Data(e.to_string()))?;
            json!({"command": "review-export", "rows": rows.len(), "seed": seed, "path": out})
        }
        Command::Review(ReviewCommand::Import { samples, review, out }) => {
            let samples = read_samples(samples)?;
            let rows = read_review_tsv(review).map_err(|e| PipelineError::Data(e.to_string()))?;
            let kept = import_review(&samples, &rows).map_err(|e| PipelineError::Data(e.to_string()))?;
            write_jsonl(out, &kept)?;
            json!({"command": "review-import", "input": samples.len(), "kept": kept.len(), "dropped": samples.len() - kept.len()})
        }
    };
    println!("{line}");
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
