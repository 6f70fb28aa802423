//! Seeded rule-based generator of labelled volumetric designs.
//!
//! A footprint is cut into a non-uniform grid, stacked into stories and
//! labelled story by story:
//!
//! - a vertical core (stairs + elevator, optionally restroom / mechanical)
//!   occupies the same cells on every story;
//! - a lobby/corridor spine row crosses the footprint on every story, and the
//!   ground story adds an entrance wing;
//! - upper story groups may leave outermost cells unused to vary the massing;
//! - every other used cell is office.
//!
//! Rooms are the connected same-type clusters of a story. Door edges join
//! clusters that share a face; vertical edges join stacked stair or elevator
//! clusters. FAR and TPR are then read off the finished design.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{CoreError, Result};
use crate::json::JsonFormat;
use crate::program::{ProgramGraph, ProgramType, Tpr};
use crate::voxel::{build_voxel_graph, Cuboid, VoxelGraph};

pub const MAX_ATTEMPTS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorePattern {
    SingleCore,
    /// Two mirrored cores with elevators facing each other across the spine.
    TwinCore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    /// Site envelope (x, y, z) in meters.
    pub site_bounds: [f64; 3],
    /// Inclusive story-count interval.
    pub stories_range: [u32; 2],
    /// Inclusive interval for the number of cells along each horizontal axis.
    pub partition_counts: [u32; 2],
    /// Inclusive cell extent intervals per axis (x, y, story height), meters.
    pub voxel_dims_range: [[f64; 2]; 3],
    pub first_story_height_boost: f64,
    pub core_pattern: CorePattern,
    /// Inclusive setback interval between footprint and parcel edge, meters.
    pub setback_range: [f64; 2],
    /// Chance that an eligible outer cell of an upper story group is unused.
    pub unused_cell_prob: f64,
    pub rng_seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            site_bounds: [40.0, 40.0, 50.0],
            stories_range: [3, 7],
            partition_counts: [3, 5],
            voxel_dims_range: [[4.0, 8.0], [4.0, 8.0], [3.0, 4.5]],
            first_story_height_boost: 1.3,
            core_pattern: CorePattern::SingleCore,
            setback_range: [0.0, 4.0],
            unused_cell_prob: 0.5,
            rng_seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |field: &str, msg: &str| Err(CoreError::invalid(format!("synth.{field}"), msg));
        if !self.site_bounds.iter().all(|&b| b.is_finite() && b > 0.0) {
            return bad("site_bounds", "bounds must be positive");
        }
        let [s0, s1] = self.stories_range;
        if s0 == 0 || s0 > s1 {
            return bad("stories_range", "need 1 <= min <= max");
        }
        let [p0, p1] = self.partition_counts;
        if p0 < 2 || p0 > p1 {
            return bad("partition_counts", "need 2 <= min <= max");
        }
        for (ax, [lo, hi]) in self.voxel_dims_range.iter().enumerate() {
            if !(lo.is_finite() && *lo > 0.0 && lo <= hi) {
                return bad(
                    "voxel_dims_range",
                    "intervals must be positive and non-empty",
                );
            }
            if *hi > self.site_bounds[ax] {
                return bad("voxel_dims_range", "cell extent exceeds the site bounds");
            }
        }
        if self.first_story_height_boost.is_nan() || self.first_story_height_boost < 1.0 {
            return bad("first_story_height_boost", "boost must be >= 1");
        }
        let [b0, b1] = self.setback_range;
        if !(b0 >= 0.0 && b0 <= b1) {
            return bad("setback_range", "need 0 <= min <= max");
        }
        if !(0.0..=1.0).contains(&self.unused_cell_prob) {
            return bad("unused_cell_prob", "probability outside [0, 1]");
        }
        Ok(())
    }
}

/// Non-uniform grid over a parcel anchored at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Partition {
    /// Strictly increasing cut positions, `nx + 1` of them.
    pub x_cuts: Vec<f64>,
    pub y_cuts: Vec<f64>,
    /// Story heights from the ground up.
    pub story_heights: Vec<f64>,
    /// Parcel extent (x, y); site area is their product.
    pub parcel: [f64; 2],
}

impl Partition {
    pub fn nx(&self) -> usize {
        self.x_cuts.len() - 1
    }

    pub fn ny(&self) -> usize {
        self.y_cuts.len() - 1
    }

    pub fn stories(&self) -> usize {
        self.story_heights.len()
    }

    pub fn footprint_cells(&self) -> usize {
        self.nx() * self.ny()
    }

    pub fn site_area(&self) -> f64 {
        self.parcel[0] * self.parcel[1]
    }

    pub fn total_height(&self) -> f64 {
        self.story_heights.iter().sum()
    }
}

fn sample_extents(rng: &mut impl Rng, n: usize, range: [f64; 2], cap: f64) -> Vec<f64> {
    let mut w: Vec<f64> = (0..n)
        .map(|_| rng.random_range(range[0]..=range[1]))
        .collect();
    let total: f64 = w.iter().sum();
    if total > cap {
        let s = cap / total;
        w.iter_mut().for_each(|x| *x *= s);
    }
    w
}

pub fn sample_partition(rng: &mut impl Rng, cfg: &SynthConfig) -> Partition {
    let [bx, by, bz] = cfg.site_bounds;
    let nx = rng.random_range(cfg.partition_counts[0]..=cfg.partition_counts[1]) as usize;
    let ny = rng.random_range(cfg.partition_counts[0]..=cfg.partition_counts[1]) as usize;
    let stories = rng.random_range(cfg.stories_range[0]..=cfg.stories_range[1]) as usize;

    let wx = sample_extents(rng, nx, cfg.voxel_dims_range[0], bx);
    let wy = sample_extents(rng, ny, cfg.voxel_dims_range[1], by);
    let (fx, fy): (f64, f64) = (wx.iter().sum(), wy.iter().sum());
    let setback = rng.random_range(cfg.setback_range[0]..=cfg.setback_range[1]);
    let parcel = [(fx + 2.0 * setback).min(bx), (fy + 2.0 * setback).min(by)];
    let (ox, oy) = ((parcel[0] - fx) / 2.0, (parcel[1] - fy) / 2.0);
    let cuts = |origin: f64, w: &[f64]| {
        let mut c = Vec::with_capacity(w.len() + 1);
        c.push(origin);
        for x in w {
            c.push(c.last().unwrap() + x);
        }
        c
    };

    let zr = cfg.voxel_dims_range[2];
    let mut heights: Vec<f64> = (0..stories)
        .map(|_| rng.random_range(zr[0]..=zr[1]))
        .collect();
    let tallest_upper = heights[1..].iter().copied().fold(heights[0], f64::max);
    heights[0] = tallest_upper * cfg.first_story_height_boost;
    let total: f64 = heights.iter().sum();
    if total > bz {
        let s = bz / total;
        heights.iter_mut().for_each(|h| *h *= s);
    }

    Partition {
        x_cuts: cuts(ox, &wx),
        y_cuts: cuts(oy, &wy),
        story_heights: heights,
        parcel,
    }
}

/// A labelled synthetic design together with the conditions read off it.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecord {
    pub program_graph: ProgramGraph,
    /// Every voxel carries its label and room when used.
    pub voxel_graph: VoxelGraph,
    pub far_actual: f64,
    pub tpr_actual: Tpr,
}

impl SynthRecord {
    pub fn design(&self) -> Design {
        Design {
            program_graph: self.program_graph.clone(),
            voxel_graph: self.voxel_graph.clone(),
        }
    }
}

/// FAR and TPR of a labelled design.
pub fn compute_conditions(design: &Design) -> Result<(f64, Tpr)> {
    let c = design.conditions()?;
    Ok((c.far, c.tpr))
}

type Cell = (usize, usize);

/// Per-story cell labels over an `nx x ny` footprint.
struct Layout {
    nx: usize,
    ny: usize,
    /// `labels[story][iy * nx + ix]`.
    labels: Vec<Vec<Option<ProgramType>>>,
}

fn core_cells(
    rng: &mut impl Rng,
    cfg: &SynthConfig,
    nx: usize,
    ny: usize,
) -> Vec<(Cell, ProgramType)> {
    use ProgramType::*;
    let spine = ny / 2;
    let core_row = if spine + 1 < ny { spine + 1 } else { spine - 1 };
    let mirror_row = (2 * spine)
        .checked_sub(core_row)
        .filter(|&r| r < ny && r != spine);

    let mut cells: Vec<(Cell, ProgramType)> = Vec::new();
    let twin = cfg.core_pattern == CorePattern::TwinCore && (mirror_row.is_some() || nx >= 4);
    if twin {
        let c0 = rng.random_range(0..=(nx - 2).min(1));
        cells.push(((c0, core_row), Stairs));
        cells.push(((c0 + 1, core_row), Elevator));
        let (row_b, b_stairs, b_elev) = match mirror_row {
            Some(r) => (r, c0, c0 + 1),
            None => (core_row, nx - 1 - c0, nx - 2 - c0),
        };
        cells.push(((b_elev, row_b), Elevator));
        cells.push(((b_stairs, row_b), Stairs));
    } else {
        let c0 = rng.random_range(0..=nx - 2);
        cells.push(((c0, core_row), Stairs));
        cells.push(((c0 + 1, core_row), Elevator));
    }
    let taken: HashSet<Cell> = cells.iter().map(|(c, _)| *c).collect();
    let mut free: Vec<Cell> = (0..nx)
        .map(|x| (x, core_row))
        .filter(|c| !taken.contains(c))
        .collect();
    // Service rooms sit next to the core when the row has space.
    free.sort_by_key(|&(x, _)| {
        cells
            .iter()
            .map(|((cx, _), _)| cx.abs_diff(x))
            .min()
            .unwrap_or(usize::MAX)
    });
    let mut free = free.into_iter();
    if rng.random_bool(0.7) {
        if let Some(c) = free.next() {
            cells.push((c, Restroom));
        }
    }
    if rng.random_bool(0.4) {
        if let Some(c) = free.next() {
            cells.push((c, Mechanical));
        }
    }
    cells
}

fn layout(rng: &mut impl Rng, cfg: &SynthConfig, part: &Partition) -> Layout {
    use ProgramType::*;
    let (nx, ny, stories) = (part.nx(), part.ny(), part.stories());
    let spine = ny / 2;
    let core = core_cells(rng, cfg, nx, ny);
    let is_core: HashMap<Cell, ProgramType> = core.iter().copied().collect();

    // Entrance wing on the ground story runs from a front cell to the spine.
    let front_row = if spine > 0 && !core.iter().any(|((_, y), _)| *y < spine) {
        Some(0)
    } else if spine + 1 < ny && !core.iter().any(|((_, y), _)| *y > spine) {
        Some(ny - 1)
    } else {
        None
    };
    let entrance_col = rng.random_range(0..nx);

    // Stories at or above `group_split` form the upper group.
    let group_split = if stories > 1 {
        rng.random_range(1..=stories)
    } else {
        stories
    };
    let outer =
        |(x, y): Cell| (y == 0 || y == ny - 1) && y != spine && !is_core.contains_key(&(x, y));
    let upper_unused: HashSet<Cell> = (0..ny)
        .flat_map(|y| (0..nx).map(move |x| (x, y)))
        .filter(|&c| outer(c) && rng.random_bool(cfg.unused_cell_prob))
        .collect();

    let mut labels = Vec::with_capacity(stories);
    for s in 0..stories {
        let mut story = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                let cell = (x, y);
                let label = if let Some(&t) = is_core.get(&cell) {
                    Some(t)
                } else if y == spine
                    || (s == 0
                        && x == entrance_col
                        && front_row.is_some_and(|f| (f.min(spine)..=f.max(spine)).contains(&y)))
                {
                    Some(LobbyCorridor)
                } else if s >= group_split && upper_unused.contains(&cell) {
                    None
                } else {
                    Some(Office)
                };
                story.push(label);
            }
        }
        labels.push(story);
    }
    Layout { nx, ny, labels }
}

fn voxel_geometry(part: &Partition) -> Result<VoxelGraph> {
    let mut cuboids = Vec::with_capacity(part.footprint_cells() * part.stories());
    let mut z = 0.0;
    for (s, h) in part.story_heights.iter().enumerate() {
        for y in 0..part.ny() {
            for x in 0..part.nx() {
                cuboids.push(Cuboid {
                    position: [part.x_cuts[x], part.y_cuts[y], z],
                    dimension: [
                        part.x_cuts[x + 1] - part.x_cuts[x],
                        part.y_cuts[y + 1] - part.y_cuts[y],
                        *h,
                    ],
                    story: s as u32,
                });
            }
        }
        z += h;
    }
    build_voxel_graph(&cuboids, part.site_area())
}

/// Every used voxel can reach a lobby voxel of its story through used voxels.
fn circulation_connected(vg: &VoxelGraph) -> bool {
    let adj = vg.neighbors();
    let mut reached = vec![false; vg.len()];
    let mut stack: Vec<usize> = vg
        .nodes
        .iter()
        .filter(|n| n.label == Some(ProgramType::LobbyCorridor))
        .map(|n| n.id)
        .collect();
    for &s in &stack {
        reached[s] = true;
    }
    while let Some(k) = stack.pop() {
        for &l in &adj[k] {
            let same_story = vg.nodes[l].story() == vg.nodes[k].story();
            if same_story && vg.nodes[l].is_used() && !reached[l] {
                reached[l] = true;
                stack.push(l);
            }
        }
    }
    vg.nodes.iter().all(|n| !n.is_used() || reached[n.id])
}

/// Rooms as connected same-type clusters per story, plus their edges.
fn derive_program_graph(vg: &mut VoxelGraph) -> Result<ProgramGraph> {
    let adj = vg.neighbors();
    let mut room_of: Vec<Option<usize>> = vec![None; vg.len()];
    let mut instances: Vec<(u32, ProgramType)> = Vec::new();
    // Node order is story-major, so rooms come out story by story.
    for start in 0..vg.len() {
        let Some(t) = vg.nodes[start].label else {
            continue;
        };
        if room_of[start].is_some() {
            continue;
        }
        let room = instances.len();
        let story = vg.nodes[start].story();
        instances.push((story, t));
        room_of[start] = Some(room);
        let mut stack = vec![start];
        while let Some(k) = stack.pop() {
            for &l in &adj[k] {
                let n = &vg.nodes[l];
                if room_of[l].is_none() && n.label == Some(t) && n.story() == story {
                    room_of[l] = Some(room);
                    stack.push(l);
                }
            }
        }
    }
    let mut doors = Vec::new();
    let mut verticals = Vec::new();
    let mut seen = HashSet::new();
    for &(a, b) in &vg.edges {
        let (Some(ra), Some(rb)) = (room_of[a], room_of[b]) else {
            continue;
        };
        if ra == rb || !seen.insert((ra.min(rb), ra.max(rb))) {
            continue;
        }
        let (ta, tb) = (instances[ra].1, instances[rb].1);
        if vg.nodes[a].story() == vg.nodes[b].story() {
            doors.push((ra, rb));
        } else if ta == tb && ta.is_vertical() {
            verticals.push((ra, rb));
        } else {
            seen.remove(&(ra.min(rb), ra.max(rb)));
        }
    }
    for (k, n) in vg.nodes.iter_mut().enumerate() {
        n.assigned_program = room_of[k];
    }
    // Conditions are filled in by the caller once the design is complete.
    let tpr: Tpr = [(ProgramType::LobbyCorridor, 1.0)].into_iter().collect();
    ProgramGraph::from_parts(&instances, &doors, &verticals, 1.0, tpr)
}

fn attempt(rng: &mut impl Rng, cfg: &SynthConfig) -> Result<Option<SynthRecord>> {
    let part = sample_partition(rng, cfg);
    let plan = layout(rng, cfg, &part);
    let mut vg = voxel_geometry(&part)?;
    let per_story = plan.nx * plan.ny;
    for n in &mut vg.nodes {
        n.label = plan.labels[n.story() as usize][n.id % per_story];
    }
    if !circulation_connected(&vg) {
        return Ok(None);
    }
    let pg = derive_program_graph(&mut vg)?;
    let design = Design {
        program_graph: pg,
        voxel_graph: vg,
    };
    let (far, tpr) = compute_conditions(&design)?;
    let program_graph = design.program_graph.with_conditions(far, tpr.clone())?;
    let record = SynthRecord {
        program_graph,
        voxel_graph: design.voxel_graph,
        far_actual: far,
        tpr_actual: tpr,
    };
    record.design().validate()?;
    Ok(Some(record))
}

pub fn generate_design(rng: &mut impl Rng, cfg: &SynthConfig) -> Result<SynthRecord> {
    cfg.validate()?;
    for _ in 0..MAX_ATTEMPTS {
        if let Some(r) = attempt(rng, cfg)? {
            return Ok(r);
        }
    }
    Err(CoreError::GenerationFailed {
        attempts: MAX_ATTEMPTS,
        reason: "circulation is disconnected".into(),
    })
}

/// Record regenerated from its own seed; independent of any other record.
pub fn generate_record(seed: u64, cfg: &SynthConfig) -> Result<SynthRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    generate_design(&mut rng, cfg)
}

pub fn record_file_name(seed: u64) -> String {
    format!("record_{seed}.json")
}

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub seed: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub config: SynthConfig,
    pub records: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Manifest> {
        let text = fs::read_to_string(path).map_err(|e| CoreError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.display().to_string(),
            msg: e.to_string(),
        })
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| CoreError::io(path, e))
}

/// Writes `n` records seeded `cfg.rng_seed, cfg.rng_seed + 1, ...` and a manifest.
pub fn generate_dataset(n: usize, cfg: &SynthConfig, out_dir: &Path) -> Result<Manifest> {
    if n == 0 {
        return Err(CoreError::invalid("n", "dataset size must be at least 1"));
    }
    cfg.validate()?;
    let seeds: Vec<u64> = (0..n as u64)
        .map(|i| cfg.rng_seed.wrapping_add(i))
        .collect();
    let manifest = Manifest {
        version: 1,
        config: cfg.clone(),
        records: seeds
            .iter()
            .map(|&seed| ManifestEntry {
                seed,
                file: record_file_name(seed),
            })
            .collect(),
    };
    write_records(&manifest, out_dir)?;
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serialises") + "\n";
    write(&out_dir.join(MANIFEST_FILE), &text)?;
    Ok(manifest)
}

/// Rewrites every record listed in `manifest` into `out_dir`.
pub fn write_records(manifest: &Manifest, out_dir: &Path) -> Result<()> {
    fs::create_dir_all(out_dir).map_err(|e| CoreError::io(out_dir, e))?;
    for entry in &manifest.records {
        let record = generate_record(entry.seed, &manifest.config)?;
        write(&out_dir.join(&entry.file), &record.to_json())?;
    }
    Ok(())
}

/// Loads every record listed in `dir/manifest.json`, or every `record_*.json`.
pub fn load_dataset(dir: &Path) -> Result<Vec<SynthRecord>> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let files: Vec<PathBuf> = if manifest_path.exists() {
        Manifest::load(&manifest_path)?
            .records
            .into_iter()
            .map(|e| dir.join(e.file))
            .collect()
    } else {
        let mut v: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(|e| CoreError::io(dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.file_name()
                    .and_then(|n| n.to_str())
                    .is_some_and(|n| n.starts_with("record_") && n.ends_with(".json"))
            })
            .collect();
        v.sort();
        v
    };
    files
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).map_err(|e| CoreError::io(p, e))?;
            SynthRecord::from_json(&text).map_err(|e| match e {
                CoreError::Parse { path, msg } => CoreError::Parse {
                    path: format!("{}:{path}", p.display()),
                    msg,
                },
                other => other,
            })
        })
        .collect()
}

/// Per-type counts of rooms, used for quick dataset summaries.
pub fn room_histogram(pg: &ProgramGraph) -> BTreeMap<ProgramType, usize> {
    let mut h = BTreeMap::new();
    for n in pg.instances() {
        *h.entry(n.ptype).or_insert(0) += 1;
    }
    h
}
