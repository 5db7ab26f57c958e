use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eeg_plv::io::config::PipelineConfig;
use eeg_plv::io::pipeline::{self, RunOptions, THREADS_ENV};
use eeg_plv::{Error, Paradigm, Result};

/// Phase-locking-value connectivity of imagery versus rest.
#[derive(Parser)]
#[command(name = "eeg-plv", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML overrides merged over the bundled defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Restrict to these bands (repeat or comma-separate).
    #[arg(long, value_delimiter = ',')]
    band: Vec<String>,
    /// Restrict to these paradigms: imagined-speech, visual-imagery.
    #[arg(long, value_delimiter = ',')]
    paradigm: Vec<String>,
    /// Worker threads.
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
}

#[derive(Args)]
struct Input {
    /// Input directory (or results file for `report`).
    #[arg(long)]
    input: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic cohort as epoch containers.
    Synth {
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        common: Common,
    },
    /// Raw containers to band-filtered, screened epochs.
    Preprocess {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
    /// Preprocessed epochs to PLV matrices.
    Plv {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
    /// PLV matrices to paired imagery-versus-rest comparisons.
    Stats {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
    /// Comparison results to tables and inter-region matrices.
    Report {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
    /// Every stage, raw containers to reports.
    Run {
        #[command(flatten)]
        input: Input,
        #[command(flatten)]
        common: Common,
    },
}

struct Context {
    config: PipelineConfig,
    out: PathBuf,
    options: RunOptions,
}

fn context(common: Common) -> Result<Context> {
    let config = PipelineConfig::load(common.config.as_deref())?;
    let out = common
        .out
        .or_else(|| config.paths.output.clone())
        .ok_or_else(|| Error::InvalidArgument("no output directory (--out or paths.output)".into()))?;
    let paradigms = common
        .paradigm
        .iter()
        .map(|p| Paradigm::parse(p).ok_or_else(|| Error::InvalidArgument(format!("unknown paradigm `{p}`"))))
        .collect::<Result<Vec<_>>>()?;
    let options = RunOptions {
        bands: common.band,
        paradigms,
        threads: common.threads,
    };
    options.selected_bands(&config)?;
    Ok(Context { config, out, options })
}

fn input_dir(input: Input, ctx: &Context) -> Result<PathBuf> {
    input
        .input
        .or_else(|| ctx.config.paths.input.clone())
        .ok_or_else(|| Error::InvalidArgument("no input (--input or paths.input)".into()))
}

fn execute(cli: Cli) -> Result<String> {
    match cli.command {
        Command::Synth { seed, common } => {
            let ctx = context(common)?;
            let written = pipeline::run_synth(&ctx.config, seed, &ctx.out, ctx.options.threads)?;
            Ok(format!("wrote {} containers to {}", written.len(), ctx.out.display()))
        }
        Command::Preprocess { input, common } => {
            let ctx = context(common)?;
            let dir = input_dir(input, &ctx)?;
            let m = pipeline::run_preprocess(&ctx.config, &dir, &ctx.out, &ctx.options)?;
            let rejected: usize = m.rejections.iter().map(|r| r.n_rejected).sum();
            Ok(format!("preprocessed {} units ({rejected} trials rejected)", m.rejections.len()))
        }
        Command::Plv { input, common } => {
            let ctx = context(common)?;
            let dir = input_dir(input, &ctx)?;
            let m = pipeline::run_plv(&ctx.config, &dir, &ctx.out, &ctx.options)?;
            Ok(format!("wrote {} PLV matrices", m.outputs.len()))
        }
        Command::Stats { input, common } => {
            let ctx = context(common)?;
            let dir = input_dir(input, &ctx)?;
            let results = pipeline::run_stats(&ctx.config, &dir, &ctx.out, &ctx.options)?;
            let significant = results.iter().filter(|r| r.significant).count();
            Ok(format!("{} comparisons, {significant} significant", results.len()))
        }
        Command::Report { input, common } => {
            let ctx = context(common)?;
            let dir = input_dir(input, &ctx)?;
            let written = pipeline::run_report(&ctx.config, &dir, &ctx.out, &ctx.options)?;
            Ok(format!("wrote {} report files", written.len()))
        }
        Command::Run { input, common } => {
            let ctx = context(common)?;
            let dir = input_dir(input, &ctx)?;
            let s = pipeline::run_pipeline(&ctx.config, &dir, &ctx.out, &ctx.options)?;
            let significant = s.results.iter().filter(|r| r.significant).count();
            Ok(format!(
                "{} subjects, {} comparisons ({significant} significant) in {:.1} s; reports in {}",
                s.manifest.subjects.len(),
                s.results.len(),
                s.timings.total_s,
                ctx.out.display()
            ))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
