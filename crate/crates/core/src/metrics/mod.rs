//! Design-quality metrics.

mod descriptor;
mod frechet;

use std::collections::HashSet;
use std::thread;

use serde::{Deserialize, Serialize};

use crate::design::{Assignment, Design};
use crate::error::{CoreError, Result};
use crate::program::{ProgramGraph, ProgramType, Tpr};
use crate::voxel::VoxelGraph;

pub use descriptor::{DescriptorNet, Embedder, DEFAULT_RESOLUTION, DESCRIPTOR_DIM, MAX_RESOLUTION};
pub use frechet::{frechet_distance, frechet_from_samples, gaussian_fit, NEGATIVE_EIGEN_TOLERANCE};

/// Unordered pairs of rooms that own face-adjacent voxels.
fn touching_rooms(vg: &VoxelGraph) -> HashSet<(usize, usize)> {
    let mut pairs = HashSet::new();
    for &(a, b) in &vg.edges {
        if let (Some(x), Some(y)) = (vg.nodes[a].assigned_program, vg.nodes[b].assigned_program) {
            if x != y {
                pairs.insert((x.min(y), x.max(y)));
            }
        }
    }
    pairs
}

/// Fraction of door and vertical program edges whose rooms touch in the
/// voxel graph. Master edges do not count; a graph with no room edges scores 1.
pub fn connectivity_accuracy(design: &Design) -> f64 {
    let pairs = touching_rooms(&design.voxel_graph);
    let (mut total, mut realized) = (0usize, 0usize);
    for e in design.program_graph.room_edges() {
        total += 1;
        if pairs.contains(&(e.a, e.b)) {
            realized += 1;
        }
    }
    if total == 0 {
        1.0
    } else {
        realized as f64 / total as f64
    }
}

/// Connectivity of a generator assignment; only hard samples are accepted.
pub fn assignment_connectivity(vg: &VoxelGraph, pg: &ProgramGraph, a: &Assignment) -> Result<f64> {
    if !a.hard {
        return Err(CoreError::SoftAssignment);
    }
    Ok(connectivity_accuracy(&Design::from_assignment(vg, pg, a)?))
}

fn realized(design: &Design) -> (f64, Tpr) {
    match design.conditions() {
        Ok(c) => (c.far, c.tpr),
        Err(_) => (0.0, Tpr::new()),
    }
}

/// Relative deviation of the realised FAR from `far_limit`.
pub fn far_distance(design: &Design, far_limit: f64) -> Result<f64> {
    if !(far_limit.is_finite() && far_limit > 0.0) {
        return Err(CoreError::invalid(
            "far_limit",
            "FAR limit must be positive",
        ));
    }
    let (far, _) = realized(design);
    Ok((far - far_limit).abs() / far_limit)
}

/// One minus the L1 gap between realised and target program ratios.
pub fn tpr_accuracy(design: &Design, target: &Tpr) -> f64 {
    let (_, actual) = realized(design);
    let gap: f64 = ProgramType::ALL
        .iter()
        .map(|t| {
            let a = actual.get(t).copied().unwrap_or(0.0);
            let b = target.get(t).copied().unwrap_or(0.0);
            (a - b).abs()
        })
        .sum();
    1.0 - gap
}

/// Con, FAR distance and TPR accuracy of one design against its own conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignScores {
    pub con: f64,
    pub far_dist: f64,
    pub tpr_acc: f64,
}

pub fn score_design(design: &Design) -> Result<DesignScores> {
    let pg = &design.program_graph;
    Ok(DesignScores {
        con: connectivity_accuracy(design),
        far_dist: far_distance(design, pg.far_limit)?,
        tpr_acc: tpr_accuracy(design, &pg.tpr),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub con: f64,
    pub far_dist: f64,
    pub tpr_acc: f64,
    /// Present only when a reference set was supplied.
    pub frechet: Option<f64>,
    pub sample_count: usize,
}

/// Applies `f` to every item, splitting the work across available cores.
fn par_map<T: Sync, R: Send>(items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let workers = thread::available_parallelism().map_or(1, |n| n.get());
    if workers <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(|| c.iter().map(&f).collect::<Vec<R>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("metrics worker panicked"))
            .collect()
    })
}

/// Averages per-design scores and, given a reference set, the Fréchet
/// distance between embedded samples.
pub fn evaluate(
    designs: &[Design],
    against: Option<&[Design]>,
    embedder: &(dyn Embedder + Sync),
) -> Result<MetricsReport> {
    if designs.is_empty() {
        return Err(CoreError::invalid("designs", "no designs to evaluate"));
    }
    let scores = par_map(designs, score_design)
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let n = scores.len() as f64;
    let mean = |f: fn(&DesignScores) -> f64| scores.iter().map(f).sum::<f64>() / n;
    let frechet = match against {
        None => None,
        Some(reference) => {
            let embed = |set: &[Design]| {
                par_map(set, |d| embedder.embed(d))
                    .into_iter()
                    .collect::<Result<Vec<_>>>()
            };
            Some(frechet_from_samples(&embed(designs)?, &embed(reference)?)?)
        }
    };
    Ok(MetricsReport {
        con: mean(|s| s.con),
        far_dist: mean(|s| s.far_dist),
        tpr_acc: mean(|s| s.tpr_acc),
        frechet,
        sample_count: designs.len(),
    })
}
