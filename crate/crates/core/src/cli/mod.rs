//! Command-line front end: config loading, subcommands, artifacts and run
//! manifests.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::{load_detector, load_flows, rerun_manifest, run_command, Command};
pub use config::{PipelineConfig, CONFIG_ENV};
pub use manifest::{Manifest, Provenance, RunStatus, FORMAT_VERSION};

use crate::error::{Error, Result};
use crate::synthgen::Preset;

#[derive(Debug, Parser)]
#[command(name = "flowsage", version, about = "Flow-graph intrusion detection with explanations")]
pub struct Cli {
    /// TOML pipeline config; falls back to $FLOWSAGE_CONFIG, then built-in defaults.
    #[arg(long, global = true, env = CONFIG_ENV)]
    pub config: Option<PathBuf>,

    /// Rerun the command recorded in a manifest and verify its artifact hashes.
    #[arg(long, global = true, conflicts_with = "config")]
    pub from_manifest: Option<PathBuf>,

    #[command(flatten)]
    pub common: CommonFlags,

    #[command(subcommand)]
    pub command: Option<Sub>,
}

/// Flags shared by every subcommand; each overrides the config file.
#[derive(Debug, Args, Default)]
pub struct CommonFlags {
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub models_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub reports_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Sub {
    /// Generate a labelled synthetic flow CSV and its ground-truth sidecar.
    Synth {
        #[arg(long)]
        preset: Option<Preset>,
        /// Output directory; created if missing.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the encoder and classifier, then score the test split.
    Train {
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long)]
        sample_size: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        trees: Option<usize>,
        #[arg(long)]
        max_depth: Option<usize>,
        #[arg(long)]
        min_samples_split: Option<usize>,
        #[arg(long)]
        min_samples_leaf: Option<usize>,
        #[arg(long)]
        train_fraction: Option<f64>,
    },
    /// Explain test flows of one class with both explainers.
    Explain {
        #[arg(long)]
        target_class: Option<String>,
        #[arg(long)]
        sparsity: Option<f64>,
        #[arg(long)]
        max_targets: Option<usize>,
    },
    /// Fidelity+ sweep and important-set class shares.
    EvalXai {
        /// Comma-separated sparsity levels.
        #[arg(long, value_delimiter = ',')]
        levels: Option<Vec<f64>>,
        #[arg(long)]
        class_targets: Option<usize>,
    },
    /// Collect metrics and XAI results into report.md and report.json.
    Report,
}

impl Sub {
    pub fn command(&self) -> Command {
        match self {
            Sub::Synth { .. } => Command::Synth,
            Sub::Train { .. } => Command::Train,
            Sub::Explain { .. } => Command::Explain,
            Sub::EvalXai { .. } => Command::EvalXai,
            Sub::Report => Command::Report,
        }
    }
}

fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

impl Cli {
    /// Config file (or defaults) with every given flag applied on top.
    pub fn effective_config(&self) -> Result<PipelineConfig> {
        let mut c = match &self.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        let f = &self.common;
        set(&mut c.seed, f.seed);
        set(&mut c.paths.data, f.data_dir.clone());
        set(&mut c.paths.models, f.models_dir.clone());
        set(&mut c.paths.reports, f.reports_dir.clone());
        let Some(command) = &self.command else {
            return Err(Error::Config("a subcommand is required".into()));
        };
        match command {
            Sub::Synth { preset, out } => {
                set(&mut c.data.preset, *preset);
                set(&mut c.paths.data, out.clone());
            }
            Sub::Train {
                hidden,
                sample_size,
                epochs,
                lr,
                trees,
                max_depth,
                min_samples_split,
                min_samples_leaf,
                train_fraction,
            } => {
                set(&mut c.encoder.hidden, *hidden);
                set(&mut c.encoder.sample_size, *sample_size);
                set(&mut c.dgi.epochs, *epochs);
                set(&mut c.dgi.learning_rate, *lr);
                set(&mut c.gbdt.n_trees, *trees);
                set(&mut c.gbdt.max_depth, *max_depth);
                set(&mut c.gbdt.min_samples_split, *min_samples_split);
                set(&mut c.gbdt.min_samples_leaf, *min_samples_leaf);
                set(&mut c.data.train_fraction, *train_fraction);
            }
            Sub::Explain {
                target_class,
                sparsity,
                max_targets,
            } => {
                set(&mut c.explain.target_class, target_class.clone());
                set(&mut c.explain.sparsity, *sparsity);
                set(&mut c.explain.max_targets, *max_targets);
            }
            Sub::EvalXai { levels, class_targets } => {
                set(&mut c.xai.levels, levels.clone());
                set(&mut c.xai.class_targets, *class_targets);
            }
            Sub::Report => {}
        }
        let c = absolute_paths(c)?.resolved();
        c.validate()?;
        Ok(c)
    }
}

fn absolute_paths(mut c: PipelineConfig) -> Result<PipelineConfig> {
    let cwd = std::env::current_dir().map_err(|e| Error::io(".", e))?;
    for p in [&mut c.paths.data, &mut c.paths.models, &mut c.paths.reports] {
        if p.is_relative() {
            *p = cwd.join(&*p);
        }
    }
    Ok(c)
}

pub fn execute(cli: &Cli) -> Result<Manifest> {
    match &cli.from_manifest {
        Some(path) => {
            let m = rerun_manifest(path)?;
            println!("reproduced {} artifacts from {}", m.artifacts.len(), path.display());
            Ok(m)
        }
        None => match &cli.command {
            Some(sub) => run_command(sub.command(), &cli.effective_config()?),
            None => Err(Error::Config("a subcommand or --from-manifest is required (see --help)".into())),
        },
    }
}

/// Parses `args`, runs the command and returns the process exit code:
/// 0 success, 1 usage, 2 data error, 3 numeric failure.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(_) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
