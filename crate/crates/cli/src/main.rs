use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pastpose_cli::commands::{self, EvalMethod, ExitKind};
use pastpose_cli::config::RunConfig;

#[derive(Parser)]
#[command(name = "pastpose", version, about = "Infer where a person was three seconds ago from a thermal frame")]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set inference.m=10`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render synthetic clips into the dataset root.
    Synth,
    /// Cluster training past poses into pose types.
    BuildVocab,
    /// Train one module: goal, type, pose, semantic or heatmap-baseline.
    Train { module: String },
    /// Sample past-pose hypotheses for one frame.
    Infer {
        #[arg(long)]
        clip: String,
        #[arg(long)]
        frame: usize,
    },
    /// Evaluate a method on the test split: ours, knn, heatmap-baseline or oracle.
    Eval {
        #[arg(long, default_value = "ours")]
        method: String,
    },
    /// Expected goal-to-mark distance as the mark intensity is rescaled.
    IntensitySweep {
        #[arg(long)]
        clip: String,
        #[arg(long)]
        frame: usize,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75,1,1.25,1.5,1.75,2")]
        scales: Vec<f64>,
    },
}

fn run(cli: Cli) -> pastpose::Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    let manifest = match cli.command {
        Command::Synth => commands::cmd_synth(&cfg)?,
        Command::BuildVocab => commands::cmd_build_vocab(&cfg)?,
        Command::Train { module } => commands::cmd_train(&cfg, pastpose::models::ModuleKind::parse(&module)?)?,
        Command::Infer { clip, frame } => commands::cmd_infer(&cfg, &clip, frame)?,
        Command::Eval { method } => {
            let (report, m) = commands::cmd_eval(&cfg, EvalMethod::parse(&method)?)?;
            println!(
                "{}: top1 {:.2} top3 {:.2} top5 {:.2} over {} samples",
                report.method, report.mpjpe_top1, report.mpjpe_top3, report.mpjpe_top5, report.n_samples
            );
            m
        }
        Command::IntensitySweep { clip, frame, scales } => commands::cmd_intensity_sweep(&cfg, &clip, frame, &scales)?,
    };
    for out in &manifest.outputs {
        println!("{}", cfg.output.join(out).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(ExitKind::of(&e).code() as u8)
        }
    }
}
