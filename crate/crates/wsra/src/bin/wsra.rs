//! Command-line front end: dataset synthesis, training, evaluation,
//! grounding, and loss ablations.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use wsra::config::RunConfig;
use wsra::data::{load_manifest, write_synthetic_dataset, SyntheticSpec};
use wsra::grounding::write_predictions;
use wsra::trainer::{self, TrainArgs};
use wsra::Result;

#[derive(Parser)]
#[command(name = "wsra", about = "Weakly supervised temporal grounding", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Optional key=value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Individual config overrides, e.g. --set batch-size is not needed:
    /// keys use the config-file spelling, e.g. --set batch_size=12.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl ConfigArgs {
    fn build(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        apply_overrides(&mut cfg, &self.overrides)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn apply_overrides(cfg: &mut RunConfig, overrides: &[String]) -> Result<()> {
    for kv in overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| {
            wsra::WsraError::Config(format!("override '{}' is not key=value", kv))
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    Ok(())
}

fn default_out_dir() -> PathBuf {
    std::env::var_os("WSRA_OUT_DIR").map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"))
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with hidden planted spans.
    Synth {
        /// Output directory (train/ and eval/ are created inside).
        #[arg(long)]
        out: PathBuf,
        /// Optional key=value generator config file.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Generator overrides, e.g. --set num_videos=100.
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
        #[arg(long, default_value_t = 0.7)]
        train_frac: f64,
        #[arg(long, default_value_t = 0.15)]
        val_frac: f64,
        #[arg(long, default_value_t = 0.15)]
        test_frac: f64,
    },
    /// Train a model, optionally tracking a validation split.
    Train {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        val_manifest: Option<PathBuf>,
        /// Run directory; defaults to $WSRA_OUT_DIR or ./runs.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Resume from a previous last.ckpt.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score a checkpoint on an annotated manifest.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Also write ranked predictions to this file.
        #[arg(long)]
        predictions: Option<PathBuf>,
        /// Inference-time overrides (proposal_mode, top_k, ...).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Rank proposals for every query in a manifest (no spans required).
    Ground {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        manifest: PathBuf,
        /// Prediction output file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Train and score the standard loss/sampling ablation variants.
    Ablate {
        #[arg(long)]
        train_manifest: PathBuf,
        #[arg(long)]
        val_manifest: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn build_spec(config: &Option<PathBuf>, overrides: &[String]) -> Result<SyntheticSpec> {
    let mut text = match config {
        Some(path) => std::fs::read_to_string(path)?,
        None => String::new(),
    };
    for kv in overrides {
        text.push('\n');
        text.push_str(kv);
    }
    SyntheticSpec::parse(&text)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Synth { out, config, overrides, train_frac, val_frac, test_frac } => {
            let spec = build_spec(&config, &overrides)?;
            let truth = write_synthetic_dataset(&spec, (train_frac, val_frac, test_frac), &out)?;
            println!(
                "wrote {} videos ({} hidden spans) under {}",
                spec.num_videos,
                truth.entries.len(),
                out.display()
            );
        }
        Command::Train { train_manifest, val_manifest, out, resume, quiet, cfg } => {
            let cfg = cfg.build()?;
            let train_set = load_manifest(&train_manifest)?;
            let val_set = val_manifest.as_deref().map(load_manifest).transpose()?;
            let out_dir = out.unwrap_or_else(default_out_dir);
            let summary = trainer::train(&TrainArgs {
                cfg,
                train: &train_set,
                val: val_set.as_ref(),
                out_dir: &out_dir,
                resume,
                verbose: !quiet,
            })?;
            println!(
                "trained {} epochs ({} steps), final loss {:.6}",
                summary.epochs_run, summary.steps_run, summary.final_total_loss
            );
            if let Some(best) = &summary.best_checkpoint {
                println!(
                    "best val R@1 IoU>=0.70 {:.2}% at {}",
                    100.0 * summary.best_val,
                    best.display()
                );
            }
            println!("last checkpoint: {}", summary.last_checkpoint.display());
        }
        Command::Eval { checkpoint, manifest, predictions, overrides } => {
            let mut state = trainer::load_state(&checkpoint)?;
            apply_overrides(&mut state.cfg, &overrides)?;
            state.cfg.validate()?;
            let data = load_manifest(&manifest)?;
            let (report, results) = trainer::evaluate(&state.model, &state.cfg, &data)?;
            println!("{}", report);
            print!("{}", report.machine_format());
            if let Some(path) = predictions {
                let only: Vec<_> = results.into_iter().map(|(r, _)| r).collect();
                write_predictions(&path, &only)?;
                println!("predictions written to {}", path.display());
            }
        }
        Command::Ground { checkpoint, manifest, out, overrides } => {
            let mut state = trainer::load_state(&checkpoint)?;
            apply_overrides(&mut state.cfg, &overrides)?;
            state.cfg.validate()?;
            let data = load_manifest(&manifest)?;
            let results = trainer::ground_all(&state.model, &state.cfg, &data)?;
            write_predictions(&out, &results)?;
            println!("{} queries grounded; predictions at {}", results.len(), out.display());
        }
        Command::Ablate { train_manifest, val_manifest, out, cfg } => {
            let cfg = cfg.build()?;
            let train_set = load_manifest(&train_manifest)?;
            let val_set = load_manifest(&val_manifest)?;
            let out_dir = out.unwrap_or_else(default_out_dir);
            let rows = trainer::ablate(&cfg, &train_set, &val_set, &out_dir, true)?;
            let mut table = String::new();
            for row in &rows {
                table.push_str(&format!(
                    "{} recall_1_at_0.70={:.6} mean_iou={:.6}\n",
                    row.name, row.recall_1_at_07, row.mean_iou
                ));
            }
            std::fs::create_dir_all(&out_dir)?;
            std::fs::write(out_dir.join("ablation.txt"), table)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e);
            ExitCode::FAILURE
        }
    }
}
