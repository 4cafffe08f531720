use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use qinduct::dataset::{default_corpus, load_word_corpus};
use qinduct::runtime::{self, CommandSummary, RunConfig, Runner, RuntimeError};
use qinduct::Method;

#[derive(Parser)]
#[command(name = "qinduct", version, about = "Induce task instructions from unlabeled questions and evaluate them")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the strategy and induct stages for task-level methods.
    Induce(RunArgs),
    /// Run inference, inducing first where needed.
    Infer(RunArgs),
    /// Score inference records against the gold answers.
    Eval(RunArgs),
    /// Write reports from scored records.
    Report(RunArgs),
    /// Induce, infer, evaluate and report.
    Run(RunArgs),
    /// Repeat the strategy-induced method for several N and tabulate.
    Ablation {
        #[command(flatten)]
        run: RunArgs,
        /// Values of N to compare.
        #[arg(long = "ns", value_delimiter = ',', default_value = "1,3,5")]
        ns: Vec<usize>,
    },
    /// Generate shift-cipher task files.
    GenCipher {
        /// Word list, one seven-letter word per line. Defaults to the bundled list.
        #[arg(long)]
        words: Option<PathBuf>,
        /// Shifts, e.g. `1-25` or `3,7,13`.
        #[arg(long, default_value = "1-25")]
        ks: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replay win-tie-lose records from a published accuracy table.
    ReplayTable1 {
        /// CSV with columns model,dataset,method,accuracy. Defaults to the bundled table.
        #[arg(long)]
        fixture: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML or JSON run configuration; flags below override it.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[arg(long)]
    tasks: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    #[arg(long, value_delimiter = ',')]
    inducing_models: Option<Vec<String>>,
    #[arg(long, value_delimiter = ',')]
    inference_models: Option<Vec<String>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    sample_size: Option<usize>,
    /// Spend cap in dollars for this invocation.
    #[arg(long)]
    budget_cap: Option<f64>,
    #[arg(long)]
    cache_dir: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    providers: Option<PathBuf>,
    #[arg(long)]
    mock_script: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    extraction_retries: Option<u32>,
    #[arg(long)]
    templates_dir: Option<PathBuf>,
}

impl RunArgs {
    fn resolve(self) -> Result<RunConfig, RuntimeError> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = v; }
            )*};
        }
        macro_rules! set_opt {
            ($($field:ident),*) => {$(
                if let Some(v) = self.$field { cfg.$field = Some(v); }
            )*};
        }
        set!(tasks, methods, inducing_models, inference_models, n, seed, sample_size, cache_dir, out_dir, workers, extraction_retries);
        set_opt!(dataset, budget_cap, providers, mock_script, templates_dir);
        Ok(cfg)
    }
}

fn parse_ks(s: &str) -> anyhow::Result<Vec<i64>> {
    let mut ks = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (i64, i64) = (a.trim().parse()?, b.trim().parse()?);
                ks.extend(a..=b);
            }
            None => ks.push(part.parse()?),
        }
    }
    anyhow::ensure!(!ks.is_empty(), "no shifts given");
    Ok(ks)
}

enum Stage {
    Induce,
    Infer,
    Eval,
    Report,
    Run,
}

fn run_stage(args: RunArgs, stage: Stage) -> Result<CommandSummary, RuntimeError> {
    let mut runner = Runner::open(args.resolve()?)?;
    let result = match stage {
        Stage::Induce => runner.induce(),
        Stage::Infer => runner.infer(),
        Stage::Eval => runner.eval(),
        Stage::Report => runner.report().map(|r| print_report_summary(&r)),
        Stage::Run => runner.run().map(|r| {
            if let Some(r) = r {
                print_report_summary(&r)
            }
        }),
    };
    let summary = runner.finish()?;
    result?;
    eprintln!(
        "{} provider calls, {} failed entries; run directory {}",
        summary.provider_calls,
        summary.failures.len(),
        runner.root().display()
    );
    Ok(summary)
}

fn print_report_summary(report: &runtime::RunReport) {
    for row in &report.aggregates {
        println!(
            "{:<16} {:<24} {:<24} {:>7}  ({}/{})",
            row.method.label(),
            row.inducing_model.as_deref().unwrap_or("-"),
            row.inference_model,
            row.accuracy,
            row.correct,
            row.total
        );
    }
    for w in &report.win_tie_lose {
        println!("{} vs {}: {}", w.method.label(), w.baseline.label(), w.record);
    }
}

fn exit_for(result: Result<CommandSummary, RuntimeError>) -> ExitCode {
    match result {
        Ok(summary) => {
            for f in &summary.failures {
                eprintln!("failed [{}] {}: {}", f.stage, f.entry, f.error);
            }
            ExitCode::from(summary.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn gen_cipher(words: Option<&Path>, ks: &str, out: &Path) -> anyhow::Result<()> {
    let words = match words {
        Some(p) => load_word_corpus(p).with_context(|| format!("reading {}", p.display()))?,
        None => default_corpus(),
    };
    let ks = parse_ks(ks).context("parsing --ks")?;
    let paths = runtime::gen_cipher(&words, &ks, out)?;
    println!("wrote {} task files to {}", paths.len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into()),
        )
        .with_writer(std::io::stderr)
        .init();

    let cli = Cli::parse();
    match cli.command {
        Command::Induce(a) => exit_for(run_stage(a, Stage::Induce)),
        Command::Infer(a) => exit_for(run_stage(a, Stage::Infer)),
        Command::Eval(a) => exit_for(run_stage(a, Stage::Eval)),
        Command::Report(a) => exit_for(run_stage(a, Stage::Report)),
        Command::Run(a) => exit_for(run_stage(a, Stage::Run)),
        Command::Ablation { run, ns } => exit_for(run.resolve().and_then(|cfg| {
            let (table, summary) = runtime::ablation(&cfg, &ns)?;
            print!("{}", table.to_csv());
            Ok(summary)
        })),
        Command::GenCipher { words, ks, out } => match gen_cipher(words.as_deref(), &ks, &out) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e:#}");
                ExitCode::from(2)
            }
        },
        Command::ReplayTable1 { fixture } => match runtime::replay_table1(fixture.as_deref()) {
            Ok(lines) => {
                for line in lines {
                    println!("{line}");
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(e.exit_code() as u8)
            }
        },
    }
}
