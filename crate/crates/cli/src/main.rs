use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sentipanel::config::{self, PipelineConfig};
use sentipanel::{demo, pipeline, validate, CliError};

#[derive(Parser)]
#[command(name = "sentipanel", version, about = "Multitask sentiment classification and city-day panel regression")]
struct Cli {
    /// TOML configuration file; relative paths inside it resolve against its directory.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for embedding training, model initialization and batching.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides `out_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Override a config value, e.g. `--set train.epochs=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Train character embeddings on the corpus texts.
    Embed,
    /// Train the multitask classifier.
    Train,
    /// Score the checkpoint on the configured split.
    Eval,
    /// Label posts as pandemic-related and by emotion.
    Classify,
    /// Count classified posts per city-day and join the covariates.
    Aggregate,
    /// Run the panel specification tests and regressions.
    Regress,
    /// Generate a synthetic corpus and panel and run every stage.
    Demo,
    /// Check the configuration and input files without running anything.
    Validate,
}

fn load(cli: &Cli) -> Result<PipelineConfig, CliError> {
    let base = if cli.command == Command::Demo {
        PipelineConfig { tasks: demo::tasks(), ..PipelineConfig::demo_defaults() }
    } else {
        PipelineConfig::default()
    };
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides, base)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = load(cli)?;
    let (name, summary) = match cli.command {
        Command::Embed => ("embed", pipeline::embed(&cfg)?),
        Command::Train => ("train", pipeline::train(&cfg)?),
        Command::Eval => ("eval", pipeline::eval(&cfg)?),
        Command::Classify => ("classify", pipeline::classify(&cfg)?),
        Command::Aggregate => ("aggregate", pipeline::aggregate(&cfg)?),
        Command::Regress => ("regress", pipeline::regress(&cfg)?),
        Command::Demo => {
            print!("{}", sentipanel::run_demo(&cfg)?);
            return Ok(());
        }
        Command::Validate => {
            let problems = validate::validate(&cfg);
            if problems.is_empty() {
                println!("ok");
                return Ok(());
            }
            for p in &problems {
                eprintln!("{p}");
            }
            return Err(CliError::Input(format!("{} problem(s) found", problems.len())));
        }
    };
    pipeline::log_run(&cfg, name, &summary)?;
    print!("{summary}");
    if !summary.ends_with('\n') {
        println!();
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
