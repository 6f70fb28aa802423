//! JSON schema for program graphs, voxel graphs, designs and synthetic records.
//!
//! ```text
//! program graph: {far, tpr: {type: ratio}, nodes: [{id, story, type, master}], edges: [{a, b, kind}]}
//! voxel graph:   {site_area, nodes: [{id, pos: [x,y,z], dim: [w,d,h], story, label?, program?}], edges: [{a, b}]}
//! design:        {program_graph, voxel_graph}
//! record:        {program_graph, voxel_graph, far_actual, tpr_actual}
//! ```

use std::collections::BTreeMap;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::design::Design;
use crate::error::{CoreError, Result};
use crate::program::{EdgeKind, ProgramEdge, ProgramGraph, ProgramNode, ProgramType, Tpr};
use crate::synth::SynthRecord;
use crate::voxel::{Cuboid, VoxelGraph, VoxelNode};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramNodeJson {
    pub id: usize,
    pub story: i32,
    #[serde(rename = "type")]
    pub ptype: ProgramType,
    pub master: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramEdgeJson {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProgramGraphJson {
    pub far: f64,
    pub tpr: BTreeMap<ProgramType, f64>,
    pub nodes: Vec<ProgramNodeJson>,
    pub edges: Vec<ProgramEdgeJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelNodeJson {
    pub id: usize,
    pub pos: [f64; 3],
    pub dim: [f64; 3],
    pub story: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<ProgramType>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub program: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelEdgeJson {
    pub a: usize,
    pub b: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VoxelGraphJson {
    pub site_area: f64,
    pub nodes: Vec<VoxelNodeJson>,
    pub edges: Vec<VoxelEdgeJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DesignJson {
    pub program_graph: ProgramGraphJson,
    pub voxel_graph: VoxelGraphJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub program_graph: ProgramGraphJson,
    pub voxel_graph: VoxelGraphJson,
    pub far_actual: f64,
    pub tpr_actual: BTreeMap<ProgramType, f64>,
}

impl From<&ProgramGraph> for ProgramGraphJson {
    fn from(g: &ProgramGraph) -> Self {
        ProgramGraphJson {
            far: g.far_limit,
            tpr: g.tpr.clone(),
            nodes: g
                .nodes
                .iter()
                .map(|n| ProgramNodeJson {
                    id: n.id,
                    story: n.story,
                    ptype: n.ptype,
                    master: n.is_master,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|e| ProgramEdgeJson {
                    a: e.a,
                    b: e.b,
                    kind: e.kind,
                })
                .collect(),
        }
    }
}

impl ProgramGraphJson {
    pub fn into_graph(self, prefix: &str) -> Result<ProgramGraph> {
        let g = ProgramGraph {
            nodes: self
                .nodes
                .into_iter()
                .map(|n| ProgramNode {
                    id: n.id,
                    story: n.story,
                    ptype: n.ptype,
                    is_master: n.master,
                })
                .collect(),
            edges: self
                .edges
                .into_iter()
                .map(|e| ProgramEdge::new(e.a, e.b, e.kind))
                .collect(),
            far_limit: self.far,
            tpr: self.tpr,
        };
        g.validate().map_err(|e| prefixed(prefix, e))?;
        Ok(g)
    }
}

impl From<&VoxelGraph> for VoxelGraphJson {
    fn from(g: &VoxelGraph) -> Self {
        VoxelGraphJson {
            site_area: g.site_area,
            nodes: g
                .nodes
                .iter()
                .map(|n| VoxelNodeJson {
                    id: n.id,
                    pos: n.cuboid.position,
                    dim: n.cuboid.dimension,
                    story: n.cuboid.story,
                    label: n.label,
                    program: n.assigned_program,
                })
                .collect(),
            edges: g
                .edges
                .iter()
                .map(|&(a, b)| VoxelEdgeJson { a, b })
                .collect(),
        }
    }
}

impl VoxelGraphJson {
    pub fn into_graph(self, prefix: &str) -> Result<VoxelGraph> {
        let g = VoxelGraph {
            nodes: self
                .nodes
                .into_iter()
                .map(|n| VoxelNode {
                    id: n.id,
                    cuboid: Cuboid {
                        position: n.pos,
                        dimension: n.dim,
                        story: n.story,
                    },
                    label: n.label,
                    assigned_program: n.program,
                })
                .collect(),
            edges: self
                .edges
                .into_iter()
                .map(|e| (e.a.min(e.b), e.a.max(e.b)))
                .collect(),
            site_area: self.site_area,
        };
        g.validate().map_err(|e| prefixed(prefix, e))?;
        Ok(g)
    }
}

fn prefixed(prefix: &str, e: CoreError) -> CoreError {
    match e {
        CoreError::Invalid { path, msg } if !prefix.is_empty() => CoreError::Invalid {
            path: format!("{prefix}.{path}"),
            msg,
        },
        other => other,
    }
}

fn parse<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        CoreError::Parse {
            path: if path.is_empty() { ".".into() } else { path },
            msg: e.into_inner().to_string(),
        }
    })
}

fn render<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("schema types always serialise");
    s.push('\n');
    s
}

/// Canonical JSON text for a domain object and its validating inverse.
pub trait JsonFormat: Sized {
    fn to_json(&self) -> String;
    fn from_json(text: &str) -> Result<Self>;
}

impl JsonFormat for ProgramGraph {
    fn to_json(&self) -> String {
        render(&ProgramGraphJson::from(self))
    }

    fn from_json(text: &str) -> Result<Self> {
        parse::<ProgramGraphJson>(text)?.into_graph("")
    }
}

impl JsonFormat for VoxelGraph {
    fn to_json(&self) -> String {
        render(&VoxelGraphJson::from(self))
    }

    fn from_json(text: &str) -> Result<Self> {
        parse::<VoxelGraphJson>(text)?.into_graph("")
    }
}

impl JsonFormat for Design {
    fn to_json(&self) -> String {
        render(&DesignJson {
            program_graph: (&self.program_graph).into(),
            voxel_graph: (&self.voxel_graph).into(),
        })
    }

    /// Accepts design files and synthetic record files alike.
    fn from_json(text: &str) -> Result<Self> {
        let raw: DesignJson = parse(text)?;
        let d = Design {
            program_graph: raw.program_graph.into_graph("program_graph")?,
            voxel_graph: raw.voxel_graph.into_graph("voxel_graph")?,
        };
        d.validate()?;
        Ok(d)
    }
}

impl JsonFormat for SynthRecord {
    fn to_json(&self) -> String {
        render(&RecordJson {
            program_graph: (&self.program_graph).into(),
            voxel_graph: (&self.voxel_graph).into(),
            far_actual: self.far_actual,
            tpr_actual: self.tpr_actual.clone(),
        })
    }

    fn from_json(text: &str) -> Result<Self> {
        let raw: RecordJson = parse(text)?;
        let design = Design {
            program_graph: raw.program_graph.into_graph("program_graph")?,
            voxel_graph: raw.voxel_graph.into_graph("voxel_graph")?,
        };
        design.validate()?;
        let tpr: Tpr = raw.tpr_actual;
        Ok(SynthRecord {
            program_graph: design.program_graph,
            voxel_graph: design.voxel_graph,
            far_actual: raw.far_actual,
            tpr_actual: tpr,
        })
    }
}
