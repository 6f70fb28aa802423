//! The `voxgraph` command line: dataset generation, training, sampling,
//! evaluation, OBJ export and file inspection.

pub mod commands;
pub mod config;
pub mod error;
pub mod obj;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::commands::SampleArgs;
use crate::config::RunConfig;
pub use crate::error::{CliError, Result};

#[derive(Debug, Parser)]
#[command(
    name = "voxgraph",
    version,
    about = "Graph-conditioned volumetric design generation"
)]
pub struct Cli {
    /// Run configuration (`.toml`, otherwise JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set train.batch=4`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    GenData {
        #[arg(long)]
        n: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a generator and critic pair.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Continue from the newest checkpoint in the output directory.
        #[arg(long)]
        resume: bool,
    },
    /// Hard-sample designs for one program graph and voxel graph.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        program_graph: PathBuf,
        #[arg(long)]
        voxel_graph: PathBuf,
        #[arg(long, default_value_t = 1)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// Also write the mask and attention of every pointer call.
        #[arg(long)]
        dump_intermediate: bool,
    },
    /// Score a directory of designs, optionally against a reference set.
    Eval {
        #[arg(long)]
        designs: PathBuf,
        #[arg(long)]
        against: Option<PathBuf>,
        #[arg(long)]
        report: PathBuf,
    },
    /// Write the used voxels of a design as an OBJ mesh.
    ExportObj {
        #[arg(long)]
        design: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Describe a checkpoint, design, record or graph file.
    Inspect { file: PathBuf },
}

fn required(p: Option<PathBuf>, what: &str) -> Result<PathBuf> {
    p.ok_or_else(|| {
        CliError::Validation(format!("missing --{what} (or paths.{what} in the config)"))
    })
}

/// Runs one subcommand and returns the text to print on success.
pub fn run(cli: Cli) -> Result<String> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides)?;
    match cli.command {
        Command::GenData { n, seed, out } => {
            if let Some(s) = seed {
                cfg.synth.rng_seed = s;
            }
            let out = required(out.or(cfg.paths.out.clone()), "out")?;
            if n == 0 {
                return Err(CliError::Validation("--n must be at least 1".into()));
            }
            let written = commands::gen_data(&cfg, n, &out)?;
            Ok(format!("wrote {written} records to {}", out.display()))
        }
        Command::Train {
            data,
            out,
            seed,
            resume,
        } => {
            if let Some(s) = seed {
                cfg.train.seed = s;
            }
            let data = required(data.or(cfg.paths.data.clone()), "data")?;
            let out = required(out.or(cfg.paths.out.clone()), "out")?;
            let r = commands::train(&cfg, &data, &out, resume)?;
            let last = r.metrics.last().map_or(String::new(), |m| {
                format!(
                    ", con {:.4}, far distance {:.4}, tpr accuracy {:.4}",
                    m.con, m.far_dist, m.tpr_acc
                )
            });
            Ok(format!(
                "{} critic steps, {} generator steps, {} checkpoints{last}",
                r.critic_steps,
                r.generator_steps,
                r.checkpoints.len()
            ))
        }
        Command::Sample {
            checkpoint,
            program_graph,
            voxel_graph,
            n,
            seed,
            out,
            dump_intermediate,
        } => {
            let files = commands::sample(
                &cfg,
                &SampleArgs {
                    checkpoint: &checkpoint,
                    program_graph: &program_graph,
                    voxel_graph: &voxel_graph,
                    n,
                    seed,
                    out: &out,
                    dump_intermediate,
                },
            )?;
            Ok(format!(
                "wrote {} designs to {}",
                files.len(),
                out.display()
            ))
        }
        Command::Eval {
            designs,
            against,
            report,
        } => {
            let r = commands::eval(&cfg, &designs, against.as_deref(), &report)?;
            Ok(serde_json::to_string_pretty(&r).expect("report serialises"))
        }
        Command::ExportObj { design, out } => {
            let used = commands::export_obj(&design, &out)?;
            Ok(format!("wrote {used} cuboids to {}", out.display()))
        }
        Command::Inspect { file } => commands::inspect(&file),
    }
}
