mod args;
mod config;
mod stages;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command};
use config::Settings;
use stages::Ctx;

/// A bad invocation or configuration; exits with status 2.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn run(cli: Cli) -> anyhow::Result<()> {
    let settings = Settings::resolve(&cli.global)?;
    if let Some(n) = settings.workers {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let stage = match &cli.command {
        Command::Ingest(_) => "ingest",
        Command::Crop(_) => "crop",
        Command::Filter(_) => "filter",
        Command::Dedup(_) => "dedup",
        Command::Collisions(_) => "collisions",
        Command::Vote(_) => "vote",
        Command::Difficulty(_) => "difficulty",
        Command::Evaluate(_) => "evaluate",
        Command::Assemble(_) => "assemble",
        Command::MutateIncomplete(_) => "mutate-incomplete",
        Command::Stats(_) => "stats",
        Command::ReviewServe(_) => "review-serve",
        Command::Scope(_) => "scope",
    };
    let ctx = Ctx { settings, stage };
    match &cli.command {
        Command::Ingest(a) => stages::ingest(&ctx, a),
        Command::Crop(a) => stages::crop(&ctx, a),
        Command::Filter(a) => stages::filter(&ctx, a),
        Command::Dedup(a) => stages::dedup(&ctx, a),
        Command::Collisions(a) => stages::collisions(&ctx, a),
        Command::Vote(a) => stages::vote(&ctx, a),
        Command::Difficulty(a) => stages::difficulty(&ctx, a),
        Command::Evaluate(a) => stages::evaluate(&ctx, a),
        Command::Assemble(a) => stages::assemble(&ctx, a),
        Command::MutateIncomplete(a) => stages::mutate(&ctx, a),
        Command::Stats(a) => stages::stats(&ctx, a),
        Command::ReviewServe(a) => stages::review_serve(&ctx, a),
        Command::Scope(a) => stages::scope(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // sources already folded into a message are not repeated
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
