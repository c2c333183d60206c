//! `synopsis`: condense a long static-camera video into a short synopsis.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use commands::{
    CmdResult, ExtractArgs, Failure, RenderArgs, ResultExt, ScoreArgs, SweepArgs, SynopsizeArgs,
};

#[derive(Parser)]
#[command(name = "synopsis", version, about = "Video synopsis from object tubes")]
struct Cli {
    /// Pipeline configuration (see `synopsis init`).
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct MetaArg {
    /// Video metadata JSON written by `extract`; defaults to the config's [video].
    #[arg(long)]
    meta: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a config file holding every default.
    Init {
        #[arg(default_value = "synopsis.toml")]
        output: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Build tubes and background samples from frames and detections.
    Extract {
        /// Directory of numbered images or a raw RGB24 file.
        #[arg(long)]
        frames: PathBuf,
        /// MOT-style detection file.
        #[arg(long)]
        detections: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Group, schedule and score a tube file.
    Synopsize {
        #[arg(long)]
        tubes: PathBuf,
        #[command(flatten)]
        meta: MetaArg,
        /// `extraction.json` from `extract`, for the missed-object rate.
        #[arg(long)]
        extraction: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
        /// Instead of one schedule, report every listed collision threshold.
        #[arg(long, value_delimiter = ',')]
        sweep: Option<Vec<f64>>,
    },
    /// Render synopsis frames for a schedule.
    Render {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        tubes: PathBuf,
        #[arg(long)]
        frames: PathBuf,
        /// Background image, or a directory of background samples.
        #[arg(long)]
        background: PathBuf,
        #[command(flatten)]
        meta: MetaArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Score any schedule against its tubes.
    Score {
        #[arg(long)]
        schedule: PathBuf,
        #[arg(long)]
        tubes: PathBuf,
        #[command(flatten)]
        meta: MetaArg,
        #[arg(long)]
        extraction: Option<PathBuf>,
        /// Write the report as JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// FR and collision level across collision thresholds.
    Sweep {
        #[arg(long)]
        tubes: PathBuf,
        #[command(flatten)]
        meta: MetaArg,
        #[arg(long, value_delimiter = ',', required = true)]
        thresholds: Vec<f64>,
        /// Write all reports as JSON.
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
    /// Run the stages enabled in the config, using its [paths].
    Run,
}

fn execute(cli: Cli) -> CmdResult {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::Input(anyhow::anyhow!("--threads must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .internal(|| "thread pool".into())?;
    }
    if let Command::Init { output, force } = &cli.command {
        return commands::init(output, *force);
    }
    let cfg = commands::load_config(cli.config.as_deref())?;
    match &cli.command {
        Command::Init { .. } => unreachable!(),
        Command::Extract { frames, detections, out } => commands::extract(
            &cfg,
            &ExtractArgs {
                frames,
                detections,
                out,
            },
        )
        .map(drop),
        Command::Synopsize {
            tubes,
            meta,
            extraction,
            out,
            sweep: Some(thresholds),
        } => {
            if extraction.is_some() {
                log::warn!("--extraction is ignored with --sweep");
            }
            commands::sweep(
                &cfg,
                &SweepArgs {
                    tubes,
                    meta: meta.meta.as_deref(),
                    thresholds,
                    out: Some(&out.join("sweep.json")),
                },
            )
            .map(drop)
        }
        Command::Synopsize {
            tubes,
            meta,
            extraction,
            out,
            sweep: None,
        } => commands::synopsize(
            &cfg,
            &SynopsizeArgs {
                tubes,
                meta: meta.meta.as_deref(),
                extraction: extraction.as_deref(),
                out,
            },
        )
        .map(drop),
        Command::Render {
            schedule,
            tubes,
            frames,
            background,
            meta,
            out,
        } => commands::render(
            &cfg,
            &RenderArgs {
                schedule,
                tubes,
                frames,
                background,
                meta: meta.meta.as_deref(),
                out,
            },
        )
        .map(drop),
        Command::Score {
            schedule,
            tubes,
            meta,
            extraction,
            out,
        } => commands::score_schedule(
            &cfg,
            &ScoreArgs {
                schedule,
                tubes,
                meta: meta.meta.as_deref(),
                extraction: extraction.as_deref(),
                out: out.as_deref(),
            },
        )
        .map(drop),
        Command::Sweep {
            tubes,
            meta,
            thresholds,
            out,
        } => commands::sweep(
            &cfg,
            &SweepArgs {
                tubes,
                meta: meta.meta.as_deref(),
                thresholds,
                out: out.as_deref(),
            },
        )
        .map(drop),
        Command::Run => commands::run(&cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.exit_code() as u8)
        }
    }
}
