use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ecpe_pipeline::{exit_code, load_config, Pipeline, RunOptions, Stage, VERSION};

/// Emotion-cause pair extraction for multi-party dialogs.
#[derive(Debug, Parser)]
#[command(name = "ecpe", version = VERSION)]
struct Cli {
    /// Stage to run; `all` chains every stage.
    #[arg(value_enum)]
    stage: Stage,
    /// TOML configuration file.
    #[arg(long)]
    config: PathBuf,
    /// Feed gold emotions to the cause model instead of classifier output.
    #[arg(long)]
    gold_emotions: bool,
    /// Overrides every training seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn run(cli: Cli) -> ecpe_core::Result<()> {
    let loaded = load_config(&cli.config)?;
    let pipeline = Pipeline::new(
        loaded,
        RunOptions {
            gold_emotions: cli.gold_emotions,
            seed: cli.seed,
            out: cli.out,
        },
    );
    for outcome in pipeline.run(cli.stage)? {
        println!("== {} ({})", outcome.stage.name(), outcome.dir.display());
        if let Some(summary) = outcome.summary {
            print!("{summary}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match std::panic::catch_unwind(|| run(cli)) {
        Ok(Ok(())) => ExitCode::SUCCESS,
        Ok(Err(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
        Err(_) => ExitCode::from(5),
    }
}
