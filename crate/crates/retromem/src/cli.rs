//! Command-line interface.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use retromem_core::decoder::Stage;

use crate::commands;
use crate::config::{Settings, TrainConfig};
use crate::error::{Error, Result};
use crate::manifest::SplitTag;

#[derive(Parser, Debug)]
#[command(
    name = "retromem",
    version,
    about = "Two-stage memory-guided camouflaged object segmentation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Config file in `[section]` / `key = value` form.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides `run.out`, the directory holding all run artifacts.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Overrides `clustering.backend`.
    #[arg(long, global = true, value_parser = ["hdbscan", "dbscan", "kmeans", "direct"])]
    pub backend: Option<String>,
    /// Any `section.key=value` override; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write a synthetic dataset and its manifest.
    GenData,
    /// Train adapters, taps and decoder with the backbone frozen.
    TrainStage1,
    /// Embed the training set with the stage-1 encoder and cluster it.
    BuildMemory,
    /// Train enhancer, reconstruction block and decoder against the memory.
    TrainStage2,
    /// Predict one image, or every test row of the manifest when no image
    /// is given.
    Infer {
        image: Option<PathBuf>,
        output: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        bank: Option<PathBuf>,
        /// Output directory in manifest mode.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Score predictions per split.
    Eval {
        #[arg(long)]
        predictions: Option<PathBuf>,
        #[arg(long)]
        manifest: Option<PathBuf>,
    },
}

fn path_str(p: &std::path::Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Settings from the config file with every flag applied on top.
pub fn settings(common: &Common) -> Result<Settings> {
    let mut s = match &common.config {
        Some(p) => Settings::read(p)?,
        None => Settings::default(),
    };
    for pair in &common.set {
        s.set_pair(pair)?;
    }
    if let Some(seed) = common.seed {
        s.set("run.seed", seed.to_string());
    }
    if let Some(out) = &common.out {
        s.set("run.out", path_str(out));
    }
    if let Some(b) = &common.backend {
        s.set("clustering.backend", b.clone());
    }
    Ok(s)
}

/// Run one command and return what it prints on success.
pub fn run(cli: Cli) -> Result<String> {
    let mut s = settings(&cli.common)?;
    let stage = match cli.command {
        Command::TrainStage2 | Command::Infer { .. } => Stage::Recall,
        _ => Stage::Learn,
    };
    let mut out = String::new();
    match cli.command {
        Command::GenData => {
            let cfg = TrainConfig::resolve(&s, stage)?;
            let m = commands::gen_data(&cfg)?;
            let _ = write!(
                out,
                "wrote {} rows to {}",
                m.records.len(),
                cfg.manifest.display()
            );
            for t in SplitTag::ALL {
                let _ = write!(out, "\n  {t}: {}", m.count(t));
            }
        }
        Command::TrainStage1 => {
            let cfg = TrainConfig::resolve(&s, stage)?;
            let r = commands::train_stage1(&cfg)?;
            let _ = write!(
                out,
                "trained on {} samples; checkpoint {}",
                r.samples,
                cfg.paths.stage1_checkpoint.display()
            );
            if let Some(l) = r.last {
                let _ = write!(
                    out,
                    "\nlast step: total {:.6}, segmentation {:.6}",
                    l.total,
                    l.seg_total()
                );
            }
        }
        Command::BuildMemory => {
            let cfg = TrainConfig::resolve(&s, stage)?;
            let b = commands::build_memory(&cfg)?;
            let _ = write!(
                out,
                "bank {}: N = {}, K = {}, backend {}",
                cfg.paths.bank.display(),
                b.n(),
                b.k(),
                b.backend().name()
            );
        }
        Command::TrainStage2 => {
            let cfg = TrainConfig::resolve(&s, stage)?;
            let r = commands::train_stage2(&cfg)?;
            let _ = write!(
                out,
                "checkpoint {}; bank {} with K = {}",
                cfg.paths.stage2_checkpoint.display(),
                cfg.paths.stage2_bank.display(),
                r.bank.k()
            );
            if let Some(l) = r.last {
                let _ = write!(
                    out,
                    "\nlast step: total {:.6}, segmentation {:.6}, consistency {:.6}",
                    l.total,
                    l.seg_total(),
                    l.l_c
                );
            }
        }
        Command::Infer {
            image,
            output,
            checkpoint,
            bank,
            predictions,
        } => {
            if let Some(p) = checkpoint {
                s.set("paths.stage2_checkpoint", path_str(&p));
            }
            if let Some(p) = bank {
                s.set("paths.stage2_bank", path_str(&p));
            }
            let cfg = TrainConfig::resolve(&s, stage)?;
            match (image, output) {
                (Some(image), Some(output)) => {
                    let inf = commands::infer(&cfg, &image, &output)?;
                    let _ = write!(
                        out,
                        "k* = {}\ns = {:.6}\nwrote {}",
                        inf.k,
                        inf.similarity,
                        output.display()
                    );
                }
                (None, None) => {
                    let dir = predictions.unwrap_or_else(|| cfg.paths.predictions.clone());
                    let preds = commands::infer_manifest(&cfg, &dir)?;
                    for (id, inf) in &preds {
                        let _ = writeln!(out, "{id}\tk* = {}\ts = {:.6}", inf.k, inf.similarity);
                    }
                    let _ = write!(
                        out,
                        "wrote {} predictions to {}",
                        preds.len(),
                        dir.display()
                    );
                }
                _ => {
                    return Err(Error::Usage(
                        "infer takes both IMAGE and OUTPUT, or neither".into(),
                    ))
                }
            }
        }
        Command::Eval {
            predictions,
            manifest,
        } => {
            if let Some(m) = manifest {
                s.set("data.manifest", path_str(&m));
            }
            let cfg = TrainConfig::resolve(&s, stage)?;
            let dir = predictions.unwrap_or_else(|| cfg.paths.predictions.clone());
            let ev = commands::eval(&cfg, &dir)?;
            let _ = write!(out, "{}report {}", ev.table(), cfg.paths.report.display());
        }
    }
    Ok(out)
}

pub fn main_with(args: impl IntoIterator<Item = OsString>) -> ExitCode {
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(text) => {
            println!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
