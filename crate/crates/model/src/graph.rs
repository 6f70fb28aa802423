//! Network inputs: node features and index tables for one graph pair, and
//! their disjoint union over a batch.

use std::rc::Rc;

use ndarray::Array2;
use voxgraph_autodiff::{Index, Matrix};
use voxgraph_core::{ProgramGraph, VoxelGraph, NUM_TYPES};

use crate::config::GenConfig;
use crate::error::{ModelError, Result};

pub const PROGRAM_FEATURES: usize = NUM_TYPES + 1;
pub const VOXEL_FEATURES: usize = 4;
/// Program feature story slot for master nodes.
pub const MASTER_STORY_FEATURE: f64 = -1.0;

/// `[onehot(type), story / max_story]`, with −1 in the story slot for masters.
pub fn program_features(pg: &ProgramGraph) -> Matrix {
    let max_story = pg.max_story().max(1) as f64;
    let mut f = Array2::zeros((pg.nodes.len(), PROGRAM_FEATURES));
    for (i, n) in pg.nodes.iter().enumerate() {
        f[[i, n.ptype.index()]] = 1.0;
        f[[i, NUM_TYPES]] = if n.is_master {
            MASTER_STORY_FEATURE
        } else {
            n.story as f64 / max_story
        };
    }
    f
}

/// Sinusoidal story encoding: even slots sin, odd slots cos.
pub fn positional_encoding(story: u32, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|c| {
            let j = (c / 2) as f64;
            let angle = story as f64 / 10000f64.powf(2.0 * j / dim as f64);
            if c % 2 == 0 {
                angle.sin()
            } else {
                angle.cos()
            }
        })
        .collect()
}

/// Per-voxel `[w, d, h]` scaled by the site, plus story / max story; and
/// cuboid centres scaled the same way.
pub fn voxel_features(vg: &VoxelGraph, site_scale: [f64; 3]) -> (Matrix, Matrix) {
    let max_story = vg.max_story().max(1) as f64;
    let n = vg.len();
    let mut f = Array2::zeros((n, VOXEL_FEATURES));
    let mut p = Array2::zeros((n, 3));
    for (k, node) in vg.nodes.iter().enumerate() {
        let c = node.cuboid.center();
        for a in 0..3 {
            f[[k, a]] = node.cuboid.dimension[a] / site_scale[a];
            p[[k, a]] = c[a] / site_scale[a];
        }
        f[[k, 3]] = node.story() as f64 / max_story;
    }
    (f, p)
}

/// Inputs derived from one (program graph, voxel graph) pair.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub program_feats: Matrix,
    /// Directed message edges `(src, dst)` over program nodes, both directions.
    pub program_msgs: Vec<(usize, usize)>,
    /// Per program node: index of its type cluster in `0..NUM_TYPES`.
    pub program_type: Vec<usize>,
    pub program_is_master: Vec<bool>,
    pub program_story: Vec<i32>,
    /// Per program node: target ratio of its type.
    pub program_ratio: Vec<f64>,
    pub far: f64,
    pub voxel_feats: Matrix,
    pub voxel_pos: Matrix,
    pub voxel_msgs: Vec<(usize, usize)>,
    pub voxel_story: Vec<u32>,
    pub stories: usize,
    /// Candidate `(voxel, program node)` pairs: same story, non-master,
    /// sorted by voxel then program id.
    pub pairs: Vec<(usize, usize)>,
}

impl Prepared {
    pub fn new(pg: &ProgramGraph, vg: &VoxelGraph, cfg: &GenConfig) -> Result<Self> {
        let (voxel_feats, voxel_pos) = voxel_features(vg, cfg.site_scale);
        let mut by_story: Vec<Vec<usize>> = vec![Vec::new(); vg.story_count()];
        for n in pg.instances() {
            if let Some(s) = by_story.get_mut(n.story as usize) {
                s.push(n.id);
            }
        }
        let mut pairs = Vec::new();
        for v in &vg.nodes {
            let rooms = &by_story[v.story() as usize];
            if rooms.is_empty() {
                return Err(ModelError::config(
                    "program_graph",
                    format!("story {} has voxels but no program nodes", v.story()),
                ));
            }
            pairs.extend(rooms.iter().map(|&i| (v.id, i)));
        }
        let directed = |edges: &mut dyn Iterator<Item = (usize, usize)>| {
            let mut out = Vec::new();
            for (a, b) in edges {
                out.push((a, b));
                out.push((b, a));
            }
            out
        };
        Ok(Prepared {
            program_feats: program_features(pg),
            program_msgs: directed(&mut pg.edges.iter().map(|e| (e.a, e.b))),
            program_type: pg.nodes.iter().map(|n| n.ptype.index()).collect(),
            program_is_master: pg.nodes.iter().map(|n| n.is_master).collect(),
            program_story: pg.nodes.iter().map(|n| n.story).collect(),
            program_ratio: pg.nodes.iter().map(|n| pg.tpr_of(n.ptype)).collect(),
            far: pg.far_limit / cfg.far_scale,
            voxel_feats,
            voxel_pos,
            voxel_msgs: directed(&mut vg.edges.iter().copied()),
            voxel_story: vg.nodes.iter().map(|n| n.story()).collect(),
            stories: vg.story_count(),
            pairs,
        })
    }

    /// Voxel-side inputs only, for scoring labelled voxel graphs.
    pub fn voxel_only(vg: &VoxelGraph, site_scale: [f64; 3]) -> Self {
        let (voxel_feats, voxel_pos) = voxel_features(vg, site_scale);
        let mut voxel_msgs = Vec::with_capacity(2 * vg.edges.len());
        for &(a, b) in &vg.edges {
            voxel_msgs.push((a, b));
            voxel_msgs.push((b, a));
        }
        Prepared {
            program_feats: Array2::zeros((0, PROGRAM_FEATURES)),
            program_msgs: Vec::new(),
            program_type: Vec::new(),
            program_is_master: Vec::new(),
            program_story: Vec::new(),
            program_ratio: Vec::new(),
            far: 0.0,
            voxel_feats,
            voxel_pos,
            voxel_msgs,
            voxel_story: vg.nodes.iter().map(|n| n.story()).collect(),
            stories: vg.story_count(),
            pairs: Vec::new(),
        }
    }

    pub fn program_len(&self) -> usize {
        self.program_feats.nrows()
    }

    pub fn voxel_len(&self) -> usize {
        self.voxel_feats.nrows()
    }
}

fn index(v: Vec<usize>) -> Index {
    Rc::from(v)
}

fn stack(parts: &[&Matrix], cols: usize) -> Matrix {
    let rows: usize = parts.iter().map(|m| m.nrows()).sum();
    let mut out = Array2::zeros((rows, cols));
    let mut r = 0;
    for m in parts {
        out.slice_mut(ndarray::s![r..r + m.nrows(), ..]).assign(m);
        r += m.nrows();
    }
    out
}

fn column(v: impl IntoIterator<Item = f64>) -> Matrix {
    let v: Vec<f64> = v.into_iter().collect();
    let n = v.len();
    Array2::from_shape_vec((n, 1), v).expect("column shape")
}

/// Disjoint union of prepared graphs with global index tables.
#[derive(Debug, Clone)]
pub struct Batch {
    pub graphs: usize,
    pub program_offsets: Vec<usize>,
    pub voxel_offsets: Vec<usize>,
    pub pair_offsets: Vec<usize>,

    pub program_feats: Matrix,
    pub program_src: Index,
    pub program_dst: Index,
    /// Per program node: (graph, type) cluster id.
    pub cluster: Index,
    pub clusters: usize,
    /// Non-master program nodes and their cluster ids, for cluster means.
    pub member_nodes: Index,
    pub member_cluster: Index,
    pub program_ratio: Matrix,
    pub program_far: Matrix,
    pub program_type: Vec<usize>,
    pub program_graph: Index,

    pub voxel_feats: Matrix,
    pub voxel_pos: Matrix,
    pub voxel_src: Index,
    pub voxel_dst: Index,
    /// `pos[dst] − pos[src]` per directed voxel edge.
    pub voxel_disp: Matrix,
    pub voxel_story: Vec<u32>,
    pub voxel_graph: Index,
    /// Per voxel: (graph, story) group id.
    pub voxel_group: Index,
    pub groups: usize,
    pub group_graph: Index,

    pub pair_voxel: Index,
    pub pair_program: Index,
    /// One-hot program type of each pair's program node (pairs × types).
    pub pair_type: Matrix,
}

impl Batch {
    pub fn new(items: &[&Prepared]) -> Batch {
        let mut program_offsets = vec![0];
        let mut voxel_offsets = vec![0];
        let mut pair_offsets = vec![0];
        for p in items {
            program_offsets.push(program_offsets.last().unwrap() + p.program_len());
            voxel_offsets.push(voxel_offsets.last().unwrap() + p.voxel_len());
            pair_offsets.push(pair_offsets.last().unwrap() + p.pairs.len());
        }
        let (mut psrc, mut pdst, mut cluster, mut members, mut member_cluster) =
            (vec![], vec![], vec![], vec![], vec![]);
        let (mut ratio, mut far, mut ptype, mut pgraph) = (vec![], vec![], vec![], vec![]);
        let (mut vsrc, mut vdst, mut vstory, mut vgraph, mut vgroup, mut group_graph) =
            (vec![], vec![], vec![], vec![], vec![], vec![]);
        let (mut pv, mut pp) = (vec![], vec![]);
        let mut disp_rows: Vec<[f64; 3]> = vec![];
        let mut group_base = 0;
        for (g, p) in items.iter().enumerate() {
            let (po, vo) = (program_offsets[g], voxel_offsets[g]);
            for &(a, b) in &p.program_msgs {
                psrc.push(po + a);
                pdst.push(po + b);
            }
            for i in 0..p.program_len() {
                let c = g * NUM_TYPES + p.program_type[i];
                cluster.push(c);
                if !p.program_is_master[i] {
                    members.push(po + i);
                    member_cluster.push(c);
                }
                ratio.push(p.program_ratio[i]);
                far.push(p.far);
                ptype.push(p.program_type[i]);
                pgraph.push(g);
            }
            for &(a, b) in &p.voxel_msgs {
                vsrc.push(vo + a);
                vdst.push(vo + b);
                disp_rows.push(std::array::from_fn(|ax| {
                    p.voxel_pos[[b, ax]] - p.voxel_pos[[a, ax]]
                }));
            }
            for k in 0..p.voxel_len() {
                vstory.push(p.voxel_story[k]);
                vgraph.push(g);
                vgroup.push(group_base + p.voxel_story[k] as usize);
            }
            group_graph.extend(std::iter::repeat_n(g, p.stories));
            group_base += p.stories;
            for &(k, i) in &p.pairs {
                pv.push(vo + k);
                pp.push(po + i);
            }
        }
        let mut pair_type = Array2::zeros((pp.len(), NUM_TYPES));
        for (r, &i) in pp.iter().enumerate() {
            pair_type[[r, ptype[i]]] = 1.0;
        }
        let disp = Array2::from_shape_fn((disp_rows.len(), 3), |(r, c)| disp_rows[r][c]);
        let pf: Vec<&Matrix> = items.iter().map(|p| &p.program_feats).collect();
        let vf: Vec<&Matrix> = items.iter().map(|p| &p.voxel_feats).collect();
        let vp: Vec<&Matrix> = items.iter().map(|p| &p.voxel_pos).collect();
        Batch {
            graphs: items.len(),
            program_feats: stack(&pf, crate::graph::PROGRAM_FEATURES),
            program_src: index(psrc),
            program_dst: index(pdst),
            cluster: index(cluster),
            clusters: items.len() * NUM_TYPES,
            member_nodes: index(members),
            member_cluster: index(member_cluster),
            program_ratio: column(ratio),
            program_far: column(far),
            program_type: ptype,
            program_graph: index(pgraph),
            voxel_feats: stack(&vf, VOXEL_FEATURES),
            voxel_pos: stack(&vp, 3),
            voxel_src: index(vsrc),
            voxel_dst: index(vdst),
            voxel_disp: disp,
            voxel_story: vstory,
            voxel_graph: index(vgraph),
            voxel_group: index(vgroup),
            groups: group_base,
            group_graph: index(group_graph),
            pair_voxel: index(pv),
            pair_program: index(pp),
            pair_type,
            program_offsets,
            voxel_offsets,
            pair_offsets,
        }
    }

    pub fn voxels_only(vg: &VoxelGraph, site_scale: [f64; 3]) -> Batch {
        Batch::new(&[&Prepared::voxel_only(vg, site_scale)])
    }

    pub fn program_len(&self) -> usize {
        self.program_feats.nrows()
    }

    pub fn voxel_len(&self) -> usize {
        self.voxel_feats.nrows()
    }

    pub fn pair_len(&self) -> usize {
        self.pair_voxel.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use voxgraph_core::{build_program_graph, build_voxel_graph, Cuboid, ProgramType};

    #[test]
    fn program_feature_examples() {
        let pg = build_program_graph(&[vec![ProgramType::Stairs]], &[]).unwrap();
        let f = program_features(&pg);
        assert_eq!(f.row(0).to_vec(), vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0]);
        let pg = build_program_graph(&[vec![ProgramType::Office]], &[]).unwrap();
        let f = program_features(&pg);
        assert_eq!(f.row(1).to_vec(), vec![0.0, 0.0, 0.0, 0.0, 1.0, 0.0, -1.0]);
    }

    #[test]
    fn positional_encoding_examples() {
        let pe0 = positional_encoding(0, 8);
        assert_eq!(pe0, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
        assert_eq!(positional_encoding(3, 128)[0], 3f64.sin());
        assert_ne!(positional_encoding(1, 128), positional_encoding(2, 128));
    }

    #[test]
    fn voxel_features_ignore_translation() {
        let cube = |x: f64, y: f64| Cuboid {
            position: [x, y, 0.0],
            dimension: [1.0, 1.0, 1.0],
            story: 0,
        };
        let a = build_voxel_graph(&[cube(0.0, 0.0), cube(1.0, 0.0)], 2.0).unwrap();
        let b = build_voxel_graph(&[cube(5.0, 7.0), cube(6.0, 7.0)], 2.0).unwrap();
        let scale = [10.0, 10.0, 10.0];
        let (fa, pa) = voxel_features(&a, scale);
        let (fb, _) = voxel_features(&b, scale);
        assert_eq!(fa, fb);
        assert_eq!(fa.row(0).to_vec(), vec![0.1, 0.1, 0.1, 0.0]);
        for (ax, want) in [0.1, 0.0, 0.0].into_iter().enumerate() {
            assert!((pa[[1, ax]] - pa[[0, ax]] - want).abs() < 1e-12);
        }
    }
}
