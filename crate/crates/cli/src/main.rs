use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod config;
mod failure;
mod output;

use config::{CommonArgs, RunConfig};
use failure::Failure;
use output::OutputDir;

/// Time-decayed implicit ratings and context-aware recommendation experiments.
#[derive(Parser)]
#[command(name = "playdecay", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Parse a play log, print a summary and write a normalized copy.
    Ingest(CommonArgs),
    /// Run the method x context x variant grid and write metric reports.
    Grid(CommonArgs),
    /// Evaluate rating predictions for the newest users only.
    ColdStart(ColdStartArgs),
    /// Write hour-of-day play histograms and each user's average play time.
    Habits(HabitsArgs),
}

#[derive(Args)]
struct ColdStartArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Number of newest users.
    #[arg(long)]
    m: Option<usize>,
}

#[derive(Args)]
struct HabitsArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Also report this user's histogram.
    #[arg(long)]
    user: Option<String>,
}

type Handler = fn(&RunConfig, &mut OutputDir) -> Result<(), Failure>;

fn run(command: Command) -> Result<(), Failure> {
    let (name, common, run): (_, _, Handler) = match &command {
        Command::Ingest(c) => ("ingest", c, commands::ingest),
        Command::Grid(c) => ("grid", c, commands::grid),
        Command::ColdStart(a) => ("cold-start", &a.common, commands::cold_start),
        Command::Habits(a) => ("habits", &a.common, commands::habits),
    };
    let mut cfg = RunConfig::resolve(common)?;
    match &command {
        Command::ColdStart(ColdStartArgs { m: Some(m), .. }) => cfg.m = *m,
        Command::Habits(HabitsArgs { user: Some(u), .. }) => cfg.user = Some(u.clone()),
        _ => {}
    }

    let mut pool = rayon::ThreadPoolBuilder::new();
    match common.jobs {
        Some(0) => return Err(Failure::Usage("--jobs must be at least 1".into())),
        Some(n) => pool = pool.num_threads(n),
        None => {}
    }
    let pool = pool.build().map_err(|e| Failure::Usage(e.to_string()))?;

    let mut out = OutputDir::create(&common.out, name, &cfg)?;
    pool.install(|| run(&cfg, &mut out))?;
    out.finish()
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
