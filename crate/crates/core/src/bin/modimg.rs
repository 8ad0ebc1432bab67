use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;

use modimg::config::RunConfig;
use modimg::pipeline;

#[derive(Parser)]
#[command(name = "modimg", version, about = "Clinical records as images, classified by a late-fusion transformer")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config (for `synth`, the data directory).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic cohort with planted signals.
    Synth(Common),
    /// Ingest inputs, apply cohort rules and split.
    Cohort(Common),
    /// Render every modality of every cohort instance to PNG.
    Render(Common),
    /// Train the fusion model and write a checkpoint.
    Train(Common),
    /// Score the test split with the saved checkpoint.
    Eval(Common),
    /// Significance tests between two prediction files.
    Compare(Common),
    /// Attention overlays for test instances.
    Explain(Common),
}

fn emit<T: Serialize>(r: modimg::Result<T>) -> modimg::Result<String> {
    r.and_then(|v| Ok(serde_json::to_string_pretty(&v)?))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // clap prints usage and exits with 2 on unknown flags
    let cli = Cli::parse();
    let (Command::Synth(c) | Command::Cohort(c) | Command::Render(c) | Command::Train(c) | Command::Eval(c) | Command::Compare(c) | Command::Explain(c)) =
        &cli.command;
    let run = || -> modimg::Result<String> {
        pipeline::init_threads()?;
        let mut cfg = RunConfig::load(&c.config)?;
        if let Some(out) = &c.out {
            match cli.command {
                Command::Synth(_) => cfg.data_dir = out.clone(),
                _ => cfg.out_dir = out.clone(),
            }
        }
        match cli.command {
            Command::Synth(_) => emit(pipeline::run_synth(&cfg)),
            Command::Cohort(_) => emit(pipeline::run_cohort(&cfg)),
            Command::Render(_) => emit(pipeline::run_render(&cfg)),
            Command::Train(_) => emit(pipeline::run_train(&cfg)),
            Command::Eval(_) => emit(pipeline::run_eval(&cfg)),
            Command::Compare(_) => emit(pipeline::run_compare(&cfg)),
            Command::Explain(_) => emit(pipeline::run_explain(&cfg)),
        }
    };
    match run() {
        Ok(json) => {
            println!("{json}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
