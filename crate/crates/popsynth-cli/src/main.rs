use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use popsynth::fixture::{generate_fixture, write_fixture};
use popsynth::pipeline::{run_pipeline, run_stage, PipelineConfig};

/// Synthesizes a joint population-and-mobility dataset: a conditional GAN
/// for tabular records, a recurrent model for location chains, a Hungarian
/// assignment to fuse the two, and an evaluation suite.
#[derive(Parser)]
#[command(name = "popsynth", version, about)]
struct Cli {
    /// Pipeline configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic survey fixture (persons/trips/zones CSVs plus
    /// ground truth) into --out.
    Fixture {
        /// Number of persons.
        #[arg(long, default_value_t = 5356)]
        persons: usize,
        /// Number of zones.
        #[arg(long, default_value_t = 25)]
        zones: usize,
    },
    /// Parse and filter the input CSVs into the ingest checkpoint.
    Ingest,
    /// Fit the column encodings (Gaussian mixtures, one-hot layouts).
    FitTransforms,
    /// Train the conditional tabular GAN.
    TrainTabular,
    /// Train the sequence model.
    TrainSeq,
    /// Sample synthetic population rows and trajectories.
    Sample,
    /// Match and merge the sampled datasets into the composite table.
    Merge,
    /// Score the composite against the real data.
    Evaluate,
    /// Run every stage in order.
    Run,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let path = cli
        .config
        .as_ref()
        .context("--config <path> is required for this command")?;
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let mut cfg = PipelineConfig::from_json(&text)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fixture { persons, zones } => {
            let out = cli
                .out
                .clone()
                .context("--out <dir> is required for `fixture`")?;
            let seed = cli.seed.unwrap_or(0);
            let fixture = generate_fixture(seed, *persons, *zones)?;
            let paths = write_fixture(&fixture, &out)?;
            for p in paths {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Run => {
            let cfg = load_config(&cli)?;
            let manifest = run_pipeline(&cfg)?;
            for stage in &manifest.stages {
                println!(
                    "{:<16} {:>8} ms  {} artifact(s)",
                    stage.stage,
                    stage.wall_ms,
                    stage.artifacts.len()
                );
            }
            println!("manifest: {}", cfg.out_dir.join("manifest.json").display());
            Ok(())
        }
        stage_cmd => {
            let stage = match stage_cmd {
                Command::Ingest => "ingest",
                Command::FitTransforms => "fit-transforms",
                Command::TrainTabular => "train-tabular",
                Command::TrainSeq => "train-seq",
                Command::Sample => "sample",
                Command::Merge => "merge",
                Command::Evaluate => "evaluate",
                Command::Fixture { .. } | Command::Run => unreachable!(),
            };
            let cfg = load_config(&cli)?;
            let record = run_stage(&cfg, stage)?;
            println!("{stage} finished in {} ms", record.wall_ms);
            for artifact in &record.artifacts {
                println!("wrote {} ({})", artifact.path, &artifact.sha256[..12]);
            }
            Ok(())
        }
    }
}
