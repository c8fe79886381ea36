use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use milscene::commands::{self, Scale};
use milscene::config::{parse_synth_spec, RunConfig};
use milscene::{checkpoint, Error, Result};
use milscene_core::data::SyntheticSpec;

#[derive(Parser)]
#[command(name = "milscene", version, about = "Multi-instance acoustic scene classification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute log-mel features for every clip listed in a meta file.
    Featurize {
        #[arg(long)]
        audio_root: PathBuf,
        #[arg(long)]
        meta: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Keep only clips whose file name contains this text.
        #[arg(long)]
        device_filter: Option<String>,
        #[arg(long, default_value_t = 44_100)]
        rate: u32,
    },
    /// Write a synthetic dataset with instance-level ground truth.
    Synth {
        /// `synth_*` key/value file; defaults apply when omitted.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train one model variant.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a checkpoint: accuracy, confusion matrix, per-class recall.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Meta file of the evaluation clips; the synthetic validation split
        /// is used when omitted for synthetic checkpoints.
        #[arg(long)]
        meta: Option<PathBuf>,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        out: PathBuf,
    },
    /// Finite-difference gradient check of every layer and network variant.
    Gradcheck {
        #[arg(long, default_value = "small")]
        scale: Scale,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the multi-detector variant for several detector counts.
    SweepK {
        #[arg(long)]
        config: PathBuf,
        /// `2..10`, `2..10:2` or `2,4,6`.
        #[arg(long, default_value = "1..10")]
        k_list: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Show per-class instance scores and the instance picked by the max.
    Inspect {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Feature-store clip id, synthetic clip id, or WAV path.
        #[arg(long)]
        clip: String,
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long)]
        svg: Option<PathBuf>,
    },
}

fn load_config(path: &PathBuf, out: Option<PathBuf>) -> Result<RunConfig> {
    let mut config = RunConfig::load(path)?;
    if let Some(out) = out {
        config.out = out;
    }
    Ok(config)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Featurize { audio_root, meta, out, device_filter, rate } => {
            let r = commands::featurize(&audio_root, &meta, &out, device_filter.as_deref(), rate)?;
            println!("computed {}, skipped {}, failed {}", r.computed, r.skipped, r.failed.len());
            for (path, e) in &r.failed {
                eprintln!("failed: {path}: {e}");
            }
            if !r.failed.is_empty() {
                return Err(Error::Format(format!("{} clips could not be featurized", r.failed.len())));
            }
        }
        Command::Synth { spec, out } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
                    parse_synth_spec(&text)?
                }
                None => SyntheticSpec::default(),
            };
            commands::synth(&spec, &out)?;
            println!("wrote {} + {} clips to {}", spec.train_clips, spec.val_clips, out.display());
        }
        Command::Train { config, out } => {
            let config = load_config(&config, out)?;
            let (config, outcome) = commands::train(&config)?;
            println!(
                "best validation accuracy {:.4} at epoch {}; checkpoint in {}",
                outcome.best_accuracy,
                outcome.best_epoch,
                config.out.join(commands::CHECKPOINT).display()
            );
        }
        Command::Evaluate { checkpoint: path, meta, features, out } => {
            let (config, model) = checkpoint::load(&path)?;
            let set = commands::evaluation_set(&config, meta.as_deref(), features.as_deref())?;
            let eval = commands::evaluate(&model, &config, &set, &out)?;
            println!("accuracy {:.4} ({} clips)", eval.accuracy, set.len());
            for (name, r) in set.class_names.iter().zip(eval.confusion.recalls()) {
                match r {
                    Some(r) => println!("  {name}\t{r:.4}"),
                    None => println!("  {name}\t-"),
                }
            }
        }
        Command::Gradcheck { scale, seed } => {
            let checks = commands::gradcheck(scale, seed)?;
            let mut failed = 0;
            for c in &checks {
                let ok = c.max_relative_error < commands::GRADCHECK_TOLERANCE;
                failed += usize::from(!ok);
                println!(
                    "{:<24} {:>6} coords ({} refined)  max rel err {:.3e}  {}",
                    c.name,
                    c.checked,
                    c.refined,
                    c.max_relative_error,
                    if ok { "ok" } else { "FAIL" }
                );
            }
            if failed > 0 {
                return Err(Error::Format(format!("{failed} gradient checks exceeded {:e}", commands::GRADCHECK_TOLERANCE)));
            }
        }
        Command::SweepK { config, k_list, out } => {
            let config = load_config(&config, out)?;
            let ks = commands::parse_k_list(&k_list)?;
            for (k, acc) in commands::sweep_k(&config, &ks)? {
                println!("K = {k:>2}  accuracy {acc:.4}");
            }
        }
        Command::Inspect { checkpoint: path, clip, features, svg } => {
            let (config, model) = checkpoint::load(&path)?;
            let report = commands::inspect(&model, &config, &clip, features.as_deref())?;
            print!("{}", report.render_text());
            if let Some(svg) = svg {
                std::fs::write(&svg, report.render_svg()).map_err(|e| Error::io(&svg, e))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
