use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context as _, Result};
use clap::{Args, Parser, Subcommand};
use coughnet_cli::commands::{self, Context, Inputs, SynthOptions, ThresholdSource};
use coughnet_cli::settings::Settings;

/// Cough classification pipeline: features, augmentation, cross-validated
/// training, prediction, evaluation and synthetic corpora.
#[derive(Parser)]
#[command(name = "coughnet", version)]
struct Cli {
    /// `key = value` settings file, applied before environment variables.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Root seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-file work.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override any setting, e.g. `--set features.clip_seconds=2`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct InputArgs {
    /// Audio files or directories of `.wav` files.
    paths: Vec<PathBuf>,
    /// Manifest CSV with `file,label` columns.
    #[arg(long)]
    manifest: Option<PathBuf>,
}

impl InputArgs {
    fn inputs(self) -> Inputs {
        match self.manifest {
            Some(m) => Inputs::Manifest(m),
            None => Inputs::Paths(self.paths),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Extract MFCCs into the content-addressed cache.
    Features(InputArgs),
    /// Upsample positives and write the augmented corpus.
    Augment {
        #[arg(long)]
        manifest: PathBuf,
    },
    /// Stratified k-fold training.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        /// best-fold or retrain-all.
        #[arg(long)]
        final_model: Option<String>,
    },
    /// Score clips with a checkpoint.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        input: InputArgs,
        /// Fixed decision threshold.
        #[arg(long, conflicts_with = "report")]
        threshold: Option<f64>,
        /// Training report whose 80%-sensitivity threshold decides.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Scores CSV path (default `<out>/scores.csv`).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Generate a synthetic two-class corpus.
    Synth {
        #[arg(long, default_value_t = SynthOptions::default().n_per_class)]
        n_per_class: usize,
        #[arg(long, default_value_t = SynthOptions::default().separation)]
        separation: f64,
        #[arg(long, default_value_t = SynthOptions::default().clip_seconds)]
        clip_seconds: f64,
    },
    /// Re-score a scores CSV against manifest labels.
    Evaluate {
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
    },
}

fn settings(cli: &Cli) -> Result<Settings> {
    let mut s = Settings::default();
    if let Some(path) = &cli.config {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        s.apply_text(&text).with_context(|| format!("in {}", path.display()))?;
    }
    s.apply_env(std::env::vars())?;
    if let Some(seed) = cli.seed {
        s.training.seed = seed;
    }
    for o in &cli.overrides {
        let (k, v) = o.split_once('=').with_context(|| format!("--set {o}: expected KEY=VALUE"))?;
        s.set(k.trim(), v.trim())?;
    }
    if let Command::Train { folds, epochs, learning_rate, batch_size, final_model, .. } = &cli.command {
        let flags = [
            ("folds", folds.map(|v| v.to_string())),
            ("epochs", epochs.map(|v| v.to_string())),
            ("learning_rate", learning_rate.map(|v| v.to_string())),
            ("batch_size", batch_size.map(|v| v.to_string())),
            ("final_model", final_model.clone()),
        ];
        for (k, v) in flags {
            if let Some(v) = v {
                s.set(k, &v)?;
            }
        }
    }
    Ok(s)
}

fn run(cli: Cli) -> Result<i32> {
    let mut ctx = Context::new(cli.out.clone(), settings(&cli)?);
    ctx.jobs = cli.jobs;
    let outcome = match cli.command {
        Command::Features(input) => commands::cmd_features(&ctx, &input.inputs())?,
        Command::Augment { manifest } => commands::cmd_augment(&ctx, &manifest)?,
        Command::Train { manifest, .. } => commands::cmd_train(&ctx, &manifest)?,
        Command::Predict { checkpoint, input, threshold, report, output } => {
            let source = match (threshold, report) {
                (Some(t), _) => ThresholdSource::Fixed(t),
                (None, Some(r)) => ThresholdSource::Report(r),
                (None, None) => ThresholdSource::None,
            };
            commands::cmd_predict(&ctx, &checkpoint, &input.inputs(), &source, output.as_deref())?
        }
        Command::Synth { n_per_class, separation, clip_seconds } => {
            commands::cmd_synth(&ctx, &SynthOptions { n_per_class, separation, clip_seconds })?
        }
        Command::Evaluate { scores, manifest } => commands::cmd_evaluate(&ctx, &scores, &manifest)?,
    };
    for note in &outcome.notes {
        println!("{note}");
    }
    for f in &outcome.failures {
        eprintln!("error: {}: {}", f.file, f.error);
    }
    Ok(outcome.exit_code())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
