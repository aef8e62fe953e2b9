use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use gestprop::cli::commands::describe_cv;
use gestprop::cli::{self, CvMode, ExperimentConfig};
use gestprop::corpus::synth::SynthSpec;
use gestprop::corpus::Property;
use gestprop::net::gradcheck::TOLERANCE;
use gestprop::training::Modality;

#[derive(Parser)]
#[command(
    name = "gestprop",
    version,
    about = "Gesture presence and property prediction from speech"
)]
struct Cli {
    /// Experiment config (JSON). Flags below override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Corpus manifest; repeat for several.
    #[arg(long = "manifest", global = true)]
    manifests: Vec<PathBuf>,
    #[arg(long, global = true)]
    embeddings: Option<PathBuf>,
    /// Read prosody from a directory written by `features`.
    #[arg(long, global = true)]
    features: Option<PathBuf>,
    /// Property to model; repeat for several.
    #[arg(long = "property", global = true)]
    properties: Vec<String>,
    /// audio, text, text_no_timing or both
    #[arg(long, global = true)]
    modality: Option<String>,
    /// within, within_id or between
    #[arg(long, global = true)]
    cv: Option<String>,
    #[arg(long, global = true)]
    folds: Option<usize>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Decision threshold for sigmoid outputs.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Combined,
    TextOnly,
    AudioOnly,
}

#[derive(Subcommand)]
enum Command {
    /// Extract prosody CSVs and text-window caches.
    Features,
    /// Train one model per property and fold.
    Train,
    /// Score saved checkpoints on their validation folds.
    Eval {
        /// Directory holding `checkpoints/`; defaults to the output directory.
        #[arg(long)]
        checkpoints: Option<PathBuf>,
    },
    /// Evaluate the four chance baselines.
    Baselines,
    /// Random hyperparameter search.
    Hpsearch {
        #[arg(long)]
        runs: Option<usize>,
    },
    /// Per-frame predictions for every recording.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Presence model gating the property decisions.
        #[arg(long)]
        presence: Option<PathBuf>,
    },
    /// Generate a synthetic corpus.
    Synth {
        /// SynthSpec JSON; overrides the preset.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "combined")]
        preset: Preset,
    },
    /// Compare analytic and numerical gradients.
    Gradcheck,
}

fn experiment_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if !cli.manifests.is_empty() {
        cfg.manifests = cli.manifests.clone();
    }
    if let Some(e) = &cli.embeddings {
        cfg.embeddings = Some(e.clone());
    }
    if let Some(f) = &cli.features {
        cfg.features = Some(f.clone());
    }
    if !cli.properties.is_empty() {
        cfg.properties = cli
            .properties
            .iter()
            .map(|p| p.parse::<Property>())
            .collect::<gestprop::Result<_>>()?;
    }
    if let Some(m) = &cli.modality {
        cfg.modality = m.parse::<Modality>()?;
    }
    if let Some(c) = &cli.cv {
        cfg.cv = c.parse::<CvMode>()?;
    }
    if let Some(k) = cli.folds {
        cfg.folds = k;
    }
    if let Some(s) = cli.steps {
        cfg.train.steps = s;
    }
    if let Some(t) = cli.threshold {
        cfg.train.threshold = t;
    }
    Ok(cfg)
}

fn finish(out: &Path, command: &str, files: &[PathBuf]) -> Result<()> {
    cli::record_outputs(out, command, files)?;
    println!(
        "{command}: wrote {} file(s) under {}",
        files.len(),
        out.display()
    );
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut cfg = experiment_config(&cli)?;
    match cli.command {
        Command::Features => {
            let files = cli::cmd_features(&cfg)?;
            finish(&cfg.out, "features", &files)?;
        }
        Command::Train => {
            log::info!("{}", describe_cv(cfg.cv, cfg.folds));
            let (report, files) = cli::cmd_train(&cfg)?;
            for (prop, r) in &report.properties {
                println!("{prop}: score {:.4} ± {:.4}", r.score.mean, r.score.std);
            }
            finish(&cfg.out, "train", &files)?;
        }
        Command::Eval { checkpoints } => {
            let (report, files) = cli::cmd_eval(&cfg, checkpoints.as_deref())?;
            for (prop, r) in &report.properties {
                println!("{prop}: score {:.4} ± {:.4}", r.score.mean, r.score.std);
            }
            finish(&cfg.out, "eval", &files)?;
        }
        Command::Baselines => {
            let (_, files) = cli::cmd_baselines(&cfg)?;
            finish(&cfg.out, "baselines", &files)?;
        }
        Command::Hpsearch { runs } => {
            if let Some(n) = runs {
                cfg.search.runs = n;
            }
            let files = cli::cmd_hpsearch(&cfg)?;
            finish(&cfg.out, "hpsearch", &files)?;
        }
        Command::Predict {
            checkpoint,
            presence,
        } => {
            let files = cli::cmd_predict(&cfg, &checkpoint, presence.as_deref())?;
            finish(&cfg.out, "predict", &files)?;
        }
        Command::Synth { spec, preset } => {
            let spec = match spec {
                Some(p) => {
                    let text = std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?;
                    serde_json::from_str(&text)
                        .with_context(|| format!("parsing {}", p.display()))?
                }
                None => match preset {
                    Preset::Combined => SynthSpec::default(),
                    Preset::TextOnly => SynthSpec::text_only(),
                    Preset::AudioOnly => SynthSpec::audio_only(),
                },
            };
            let files = cli::cmd_synth(&spec, cfg.seed, &cfg.out)?;
            finish(&cfg.out, "synth", &files)?;
        }
        Command::Gradcheck => {
            let reports = cli::cmd_gradcheck(cfg.seed);
            let mut worst: f64 = 0.0;
            for r in &reports {
                println!(
                    "{:<28} max rel error {:.3e} ({} checked, {} skipped at kinks)",
                    r.name, r.max_rel_error, r.checked, r.skipped
                );
                worst = worst.max(r.max_rel_error);
            }
            println!("max relative gradient error: {worst:.3e}");
            if !(worst < TOLERANCE) {
                eprintln!("gradient check failed: {worst:.3e} >= {TOLERANCE:e}");
                return Ok(ExitCode::FAILURE);
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            // Library errors already embed their source in the message.
            let mut msg = e.to_string();
            for cause in e.chain().skip(1) {
                let c = cause.to_string();
                if !msg.contains(&c) {
                    msg = format!("{msg}: {c}");
                }
            }
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
