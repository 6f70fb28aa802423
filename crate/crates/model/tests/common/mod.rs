#![allow(dead_code)]

use voxgraph_core::synth::SynthConfig;
use voxgraph_core::*;
use voxgraph_model::{ModelConfig, ModelDims, TrainItem};

/// Shrunken widths so finite differences and short runs stay cheap.
pub fn tiny_model() -> ModelConfig {
    ModelConfig {
        dims: ModelDims {
            latent: 8,
            noise: 4,
            mask_hidden: 8,
            critic_encoder: 4,
            decoder_hidden: 8,
        },
        ..ModelConfig::default()
    }
}

/// Two-story sites with few partitions.
pub fn small_synth() -> SynthConfig {
    SynthConfig {
        stories_range: [2, 2],
        partition_counts: [2, 3],
        ..SynthConfig::default()
    }
}

pub fn records(n: usize, seed: u64) -> Vec<SynthRecord> {
    let cfg = SynthConfig {
        rng_seed: seed,
        ..small_synth()
    };
    (0..n as u64)
        .map(|i| generate_record(seed + i, &cfg).unwrap())
        .collect()
}

pub fn items(n: usize, seed: u64, model: &ModelConfig) -> Vec<TrainItem> {
    records(n, seed)
        .into_iter()
        .map(|r| TrainItem::new(r, model).unwrap())
        .collect()
}

/// `nx x ny` cells of 4 m per story.
pub fn grid(nx: usize, ny: usize, stories: usize) -> VoxelGraph {
    let mut cubes = Vec::new();
    for s in 0..stories {
        for y in 0..ny {
            for x in 0..nx {
                cubes.push(Cuboid {
                    position: [4.0 * x as f64, 4.0 * y as f64, 3.5 * s as f64],
                    dimension: [4.0, 4.0, 3.5],
                    story: s as u32,
                });
            }
        }
    }
    build_voxel_graph(&cubes, (16 * nx * ny) as f64).unwrap()
}

/// Eight voxels over two stories with three rooms each.
pub fn tiny_instance() -> (ProgramGraph, VoxelGraph) {
    use ProgramType::*;
    let pg = build_program_graph(
        &[
            vec![LobbyCorridor, Office, Stairs],
            vec![LobbyCorridor, Office, Stairs],
        ],
        &[(0, 1), (0, 2), (3, 4), (3, 5)],
    )
    .unwrap();
    (pg, grid(2, 2, 2))
}

/// Program graph with node `i` moved to `perm[i]`.
pub fn permute_program(pg: &ProgramGraph, perm: &[usize]) -> ProgramGraph {
    let mut nodes = pg.nodes.clone();
    for n in &pg.nodes {
        nodes[perm[n.id]] = ProgramNode {
            id: perm[n.id],
            ..*n
        };
    }
    let edges = pg
        .edges
        .iter()
        .map(|e| ProgramEdge::new(perm[e.a], perm[e.b], e.kind))
        .collect();
    let out = ProgramGraph {
        nodes,
        edges,
        far_limit: pg.far_limit,
        tpr: pg.tpr.clone(),
    };
    out.validate().unwrap();
    out
}

/// Voxel graph with voxel `k` moved to `perm[k]`, rooms relabelled by `rooms`.
pub fn permute_voxels(vg: &VoxelGraph, perm: &[usize], rooms: &[usize]) -> VoxelGraph {
    let mut nodes = vg.nodes.clone();
    for n in &vg.nodes {
        nodes[perm[n.id]] = VoxelNode {
            id: perm[n.id],
            assigned_program: n.assigned_program.map(|p| rooms[p]),
            ..*n
        };
    }
    let mut edges: Vec<(usize, usize)> = vg
        .edges
        .iter()
        .map(|&(a, b)| {
            let (a, b) = (perm[a], perm[b]);
            (a.min(b), a.max(b))
        })
        .collect();
    edges.sort_unstable();
    VoxelGraph {
        nodes,
        edges,
        site_area: vg.site_area,
    }
}

/// Seeded random permutation of `0..n`.
pub fn shuffled(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut v: Vec<usize> = (0..n).collect();
    v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    v
}
