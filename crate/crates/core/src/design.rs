//! Volumetric designs: a voxel graph whose voxels point into a program graph.

use crate::error::{CoreError, Result};
use crate::program::{ProgramGraph, ProgramType, Tpr, NUM_TYPES};
use crate::voxel::VoxelGraph;

/// Width of a per-voxel label row: six type probabilities then "unused".
pub const LABEL_DIM: usize = NUM_TYPES + 1;
pub const UNUSED: usize = NUM_TYPES;
pub const ATT_TOLERANCE: f64 = 1e-5;

pub type LabelRow = [f64; LABEL_DIM];

/// Generator output over one voxel graph.
#[derive(Debug, Clone, PartialEq)]
pub struct Assignment {
    /// Probability that each voxel is used.
    pub mask: Vec<f64>,
    /// Per voxel: `(program node id, weight)` over same-story rooms.
    pub att: Vec<Vec<(usize, f64)>>,
    /// Rows are one-hot and the mask is binary.
    pub hard: bool,
}

impl Assignment {
    pub fn validate(&self, vg: &VoxelGraph, pg: &ProgramGraph) -> Result<()> {
        if self.mask.len() != vg.len() || self.att.len() != vg.len() {
            return Err(CoreError::invalid(
                "assignment",
                format!(
                    "{} mask / {} attention rows for {} voxels",
                    self.mask.len(),
                    self.att.len(),
                    vg.len()
                ),
            ));
        }
        for (k, (row, &m)) in self.att.iter().zip(&self.mask).enumerate() {
            let path = format!("assignment[{k}]");
            if !(0.0..=1.0).contains(&m) {
                return Err(CoreError::invalid(path, format!("mask {m} outside [0, 1]")));
            }
            let story = vg.nodes[k].story() as i32;
            if row.is_empty() {
                // Only a story without rooms may leave a voxel unattended.
                if m != 0.0 || pg.rooms_on_story(story as u32).next().is_some() {
                    return Err(CoreError::invalid(path, "empty attention row"));
                }
                continue;
            }
            let mut total = 0.0;
            for &(i, w) in row {
                let node = pg.nodes.get(i).ok_or_else(|| {
                    CoreError::invalid(path.clone(), format!("unknown program node {i}"))
                })?;
                if node.is_master || node.story != story {
                    return Err(CoreError::invalid(
                        path.clone(),
                        format!("attention on node {i} outside the voxel's story"),
                    ));
                }
                if w < 0.0 {
                    return Err(CoreError::invalid(path.clone(), "negative attention"));
                }
                total += w;
            }
            if (total - 1.0).abs() > ATT_TOLERANCE {
                return Err(CoreError::invalid(
                    path,
                    format!("attention sums to {total}"),
                ));
            }
            if self.hard {
                let ones = row.iter().filter(|(_, w)| *w == 1.0).count();
                let zeros = row.iter().filter(|(_, w)| *w == 0.0).count();
                if ones != 1 || ones + zeros != row.len() || (m != 0.0 && m != 1.0) {
                    return Err(CoreError::invalid(
                        path,
                        "hard assignment row is not one-hot",
                    ));
                }
            }
        }
        Ok(())
    }

    /// Program node with the largest weight; lowest id wins ties.
    pub fn argmax(&self, k: usize) -> Option<usize> {
        let mut best: Option<(usize, f64)> = None;
        for &(i, w) in &self.att[k] {
            match best {
                Some((bi, bw)) if bw > w || (bw == w && bi < i) => {}
                _ => best = Some((i, w)),
            }
        }
        best.map(|(i, _)| i)
    }
}

/// Per-voxel 7-vectors: `mask * sum_i att_i onehot(type_i)` then `1 - mask`.
pub fn assignment_to_labels(
    vg: &VoxelGraph,
    pg: &ProgramGraph,
    a: &Assignment,
) -> Result<Vec<LabelRow>> {
    a.validate(vg, pg)?;
    Ok(a.att
        .iter()
        .zip(&a.mask)
        .map(|(row, &m)| {
            let mut label = [0.0; LABEL_DIM];
            for &(i, w) in row {
                label[pg.nodes[i].ptype.index()] += m * w;
            }
            label[UNUSED] = 1.0 - m;
            label
        })
        .collect())
}

/// One-hot label row for a voxel's type, or the unused slot.
pub fn label_row(label: Option<ProgramType>) -> LabelRow {
    let mut row = [0.0; LABEL_DIM];
    match label {
        Some(t) => row[t.index()] = 1.0,
        None => row[UNUSED] = 1.0,
    }
    row
}

/// FAR and area-weighted program ratios realised by a design.
#[derive(Debug, Clone, PartialEq)]
pub struct Conditions {
    pub far: f64,
    pub tpr: Tpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Design {
    pub program_graph: ProgramGraph,
    pub voxel_graph: VoxelGraph,
}

impl Design {
    pub fn new(program_graph: ProgramGraph, voxel_graph: VoxelGraph) -> Result<Self> {
        let d = Design {
            program_graph,
            voxel_graph,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        self.program_graph.validate()?;
        self.voxel_graph.validate()?;
        let pg = &self.program_graph;
        for n in &self.voxel_graph.nodes {
            let Some(p) = n.assigned_program else {
                continue;
            };
            let path = format!("voxel_graph.nodes[{}].program", n.id);
            let node = pg.nodes.get(p).ok_or_else(|| {
                CoreError::invalid(path.clone(), format!("unknown program node {p}"))
            })?;
            if node.is_master {
                return Err(CoreError::invalid(
                    path,
                    format!("voxel cannot be assigned to master node {p}"),
                ));
            }
            if node.story != n.story() as i32 {
                return Err(CoreError::invalid(
                    path,
                    format!(
                        "program node {p} is on story {}, voxel on {}",
                        node.story,
                        n.story()
                    ),
                ));
            }
            if n.label != Some(node.ptype) {
                return Err(CoreError::invalid(
                    path,
                    format!("label disagrees with program node type {}", node.ptype),
                ));
            }
        }
        Ok(())
    }

    /// Materialises a hard assignment: used voxels take their argmax room.
    pub fn from_assignment(vg: &VoxelGraph, pg: &ProgramGraph, a: &Assignment) -> Result<Design> {
        if !a.hard {
            return Err(CoreError::SoftAssignment);
        }
        a.validate(vg, pg)?;
        let mut voxel_graph = vg.unlabeled();
        for (k, n) in voxel_graph.nodes.iter_mut().enumerate() {
            if a.mask[k] == 1.0 {
                let p = a.argmax(k).expect("validated row is non-empty");
                n.assigned_program = Some(p);
                n.label = Some(pg.nodes[p].ptype);
            }
        }
        Design::new(pg.clone(), voxel_graph)
    }

    pub fn used_count(&self) -> usize {
        self.voxel_graph
            .nodes
            .iter()
            .filter(|n| n.is_used())
            .count()
    }

    /// Realised FAR and TPR; errors when no voxel is used.
    pub fn conditions(&self) -> Result<Conditions> {
        let mut area = [0.0; NUM_TYPES];
        for n in &self.voxel_graph.nodes {
            if let Some(t) = n.label {
                area[t.index()] += n.cuboid.footprint_area();
            }
        }
        let total: f64 = area.iter().sum();
        if self.used_count() == 0 || total <= 0.0 {
            return Err(CoreError::NoUsedVoxels);
        }
        let tpr = ProgramType::ALL
            .into_iter()
            .filter(|t| area[t.index()] > 0.0)
            .map(|t| (t, area[t.index()] / total))
            .collect();
        Ok(Conditions {
            far: total / self.voxel_graph.site_area,
            tpr,
        })
    }

    /// One-hot label rows read from the voxel labels.
    pub fn label_rows(&self) -> Vec<LabelRow> {
        self.voxel_graph
            .nodes
            .iter()
            .map(|n| label_row(n.label))
            .collect()
    }
}
