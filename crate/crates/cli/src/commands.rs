use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use voxgraph_core::metrics::{evaluate, DescriptorNet, MetricsReport};
use voxgraph_core::synth::{load_dataset, MANIFEST_FILE};
use voxgraph_core::{generate_dataset, Design, JsonFormat, ProgramGraph, VoxelGraph};
use voxgraph_model::checkpoint::MAGIC;
use voxgraph_model::generator::snapshot_assignments;
use voxgraph_model::{Batch, Checkpoint, Prepared, TrainItem, TrainReport, Trainer};

use crate::config::{RunConfig, EFFECTIVE_CONFIG_FILE};
use crate::error::{CliError, Result};
use crate::obj::design_to_obj;

pub const INTERMEDIATE_PREFIX: &str = "intermediate_";

pub fn design_file_name(i: usize) -> String {
    format!("design_{i}.json")
}

pub fn intermediate_file_name(i: usize) -> String {
    format!("{INTERMEDIATE_PREFIX}{i}.json")
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn with_file<T>(path: &Path, r: voxgraph_core::Result<T>) -> Result<T> {
    r.map_err(|e| match CliError::from(e) {
        CliError::Validation(m) => CliError::Validation(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn gen_data(cfg: &RunConfig, n: usize, out: &Path) -> Result<usize> {
    let manifest = generate_dataset(n, &cfg.synth, out)?;
    cfg.echo(out)?;
    Ok(manifest.records.len())
}

fn load_items(cfg: &RunConfig, data: &Path) -> Result<Vec<TrainItem>> {
    if !data.is_dir() {
        return Err(CliError::io(
            data,
            std::io::Error::new(std::io::ErrorKind::NotFound, "dataset directory not found"),
        ));
    }
    load_dataset(data)?
        .into_iter()
        .map(|r| TrainItem::new(r, &cfg.model).map_err(CliError::from))
        .collect()
}

/// Trains from scratch, or from the newest checkpoint in `out` when resuming.
pub fn train(cfg: &RunConfig, data: &Path, out: &Path, resume: bool) -> Result<TrainReport> {
    let items = load_items(cfg, data)?;
    let mut trainer = match resume
        .then(|| Checkpoint::latest_in(out))
        .transpose()?
        .flatten()
    {
        Some(path) => {
            let ckpt = Checkpoint::load(&path)?;
            if ckpt.model != cfg.model {
                return Err(CliError::Compat(format!(
                    "{}: model config differs from the run config",
                    path.display()
                )));
            }
            let mut t = Trainer::from_checkpoint(&ckpt)?;
            // Schedule limits may be extended on resume.
            t.cfg = cfg.train;
            t
        }
        None => Trainer::new(cfg.model, cfg.train)?,
    };
    cfg.echo(out)?;
    Ok(trainer.train(&items, Some(out))?)
}

pub struct SampleArgs<'a> {
    pub checkpoint: &'a Path,
    pub program_graph: &'a Path,
    pub voxel_graph: &'a Path,
    pub n: usize,
    pub seed: u64,
    pub out: &'a Path,
    pub dump_intermediate: bool,
}

/// Pointer outputs at every call, one entry per snapshot.
fn intermediate_json(batch: &Batch, out: &voxgraph_model::GenOutput) -> serde_json::Value {
    let snaps: Vec<serde_json::Value> = out
        .snapshots
        .iter()
        .enumerate()
        .map(|(call, s)| {
            let a = snapshot_assignments(batch, s, out.hard).remove(0);
            json!({ "call": call, "mask": a.mask, "att": a.att })
        })
        .collect();
    json!({ "pointer_calls": snaps.len(), "snapshots": snaps })
}

/// Hard-samples `n` designs for one graph pair; returns the written files.
pub fn sample(cfg: &RunConfig, args: &SampleArgs) -> Result<Vec<PathBuf>> {
    let ckpt = Checkpoint::load(args.checkpoint)?;
    let trainer = Trainer::from_checkpoint(&ckpt)?;
    let gen = &trainer.generator;
    let pg = with_file(
        args.program_graph,
        ProgramGraph::from_json(&read_text(args.program_graph)?),
    )?;
    let vg = with_file(
        args.voxel_graph,
        VoxelGraph::from_json(&read_text(args.voxel_graph)?),
    )?;
    let vg = vg.unlabeled();
    let prepared = Prepared::new(&pg, &vg, &gen.cfg).map_err(|e| match CliError::from(e) {
        CliError::Validation(m) => {
            CliError::Compat(format!("graphs do not fit the checkpoint: {m}"))
        }
        other => other,
    })?;
    let batch = Batch::new(&[&prepared]);
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let mut files = Vec::with_capacity(args.n);
    for i in 0..args.n {
        let out = gen.sample(&batch, &mut rng, true);
        let a = out.assignments(&batch).remove(0);
        let design = Design::from_assignment(&vg, &pg, &a)?;
        let path = args.out.join(design_file_name(i));
        write_text(&path, &design.to_json())?;
        files.push(path);
        if args.dump_intermediate {
            let text = serde_json::to_string_pretty(&intermediate_json(&batch, &out))
                .expect("intermediate values serialise");
            write_text(&args.out.join(intermediate_file_name(i)), &(text + "\n"))?;
        }
    }
    cfg.echo(args.out)?;
    Ok(files)
}

fn is_design_file(path: &Path) -> bool {
    let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
        return false;
    };
    name.ends_with(".json")
        && name != MANIFEST_FILE
        && name != EFFECTIVE_CONFIG_FILE
        && !name.starts_with(INTERMEDIATE_PREFIX)
}

/// All design or record files in `dir`, sorted by name.
pub fn load_designs(dir: &Path) -> Result<Vec<Design>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| is_design_file(p))
        .collect();
    paths.sort();
    paths
        .iter()
        .map(|p| with_file(p, Design::from_json(&read_text(p)?)))
        .collect()
}

pub fn eval(
    cfg: &RunConfig,
    designs: &Path,
    against: Option<&Path>,
    report: &Path,
) -> Result<MetricsReport> {
    let set = load_designs(designs)?;
    let reference = against.map(load_designs).transpose()?;
    let net = DescriptorNet::new(cfg.metrics.descriptor_seed, cfg.metrics.resolution)?;
    let r = evaluate(&set, reference.as_deref(), &net)?;
    let text = serde_json::to_string_pretty(&r).expect("report serialises");
    write_text(report, &(text + "\n"))?;
    Ok(r)
}

pub fn export_obj(design: &Path, out: &Path) -> Result<usize> {
    let d = with_file(design, Design::from_json(&read_text(design)?))?;
    write_text(out, &design_to_obj(&d))?;
    Ok(d.used_count())
}

/// One-paragraph description of a checkpoint, design, record or graph file.
pub fn inspect(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| CliError::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        let c = Checkpoint::from_bytes(&bytes)
            .map_err(|m| CliError::Compat(format!("{}: {m}", path.display())))?;
        let params: usize = c.tensors.iter().map(|(_, t)| t.len()).sum();
        return Ok(format!(
            "checkpoint: critic steps {}, generator steps {}, epoch {}, {} tensors ({params} values)\nmodel: {}",
            c.critic_steps,
            c.generator_steps,
            c.epoch,
            c.tensors.len(),
            serde_json::to_string(&c.model).expect("config serialises"),
        ));
    }
    let text = String::from_utf8(bytes).map_err(|_| {
        CliError::Validation(format!("{}: not a checkpoint or JSON file", path.display()))
    })?;
    if let Ok(d) = Design::from_json(&text) {
        let s = voxgraph_core::metrics::score_design(&d)?;
        return Ok(format!(
            "design: {} program nodes, {} voxels ({} used), {} stories\ncon {:.4}, far distance {:.4}, tpr accuracy {:.4}",
            d.program_graph.nodes.len(),
            d.voxel_graph.len(),
            d.used_count(),
            d.voxel_graph.story_count(),
            s.con,
            s.far_dist,
            s.tpr_acc,
        ));
    }
    if let Ok(pg) = ProgramGraph::from_json(&text) {
        return Ok(format!(
            "program graph: {} nodes, {} edges, far limit {}",
            pg.nodes.len(),
            pg.edges.len(),
            pg.far_limit
        ));
    }
    let vg = with_file(path, VoxelGraph::from_json(&text))?;
    Ok(format!(
        "voxel graph: {} voxels, {} stories",
        vg.len(),
        vg.story_count()
    ))
}
