#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxgraph_core::synth::CorePattern;
use voxgraph_core::*;

/// Face contact test written independently of the library predicate.
pub fn faces_touch(a: &Cuboid, b: &Cuboid) -> bool {
    let eps = 1e-6;
    let lo = |c: &Cuboid, i: usize| c.position[i];
    let hi = |c: &Cuboid, i: usize| c.position[i] + c.dimension[i];
    let mut contact_axes = 0;
    let mut overlap_axes = 0;
    for i in 0..3 {
        let overlap = hi(a, i).min(hi(b, i)) - lo(a, i).max(lo(b, i));
        if overlap > eps {
            overlap_axes += 1;
        } else if overlap.abs() <= eps {
            contact_axes += 1;
        }
    }
    contact_axes == 1 && overlap_axes == 2
}

/// O(V²E) connectivity: every program edge scans every ordered voxel pair.
pub fn brute_force_con(d: &Design) -> f64 {
    let nodes = &d.voxel_graph.nodes;
    let edges: Vec<&ProgramEdge> = d
        .program_graph
        .edges
        .iter()
        .filter(|e| e.kind != EdgeKind::Master)
        .collect();
    if edges.is_empty() {
        return 1.0;
    }
    let mut hit = 0;
    for e in &edges {
        let mut found = false;
        for a in nodes {
            for b in nodes {
                if a.assigned_program == Some(e.a)
                    && b.assigned_program == Some(e.b)
                    && faces_touch(&a.cuboid, &b.cuboid)
                {
                    found = true;
                }
            }
        }
        if found {
            hit += 1;
        }
    }
    hit as f64 / edges.len() as f64
}

/// `nx x ny` grid of 2 m cells per story, ids story-major then row-major.
pub fn grid(nx: usize, ny: usize, stories: usize) -> VoxelGraph {
    let mut cubes = Vec::new();
    for s in 0..stories {
        for y in 0..ny {
            for x in 0..nx {
                cubes.push(Cuboid {
                    position: [2.0 * x as f64, 2.0 * y as f64, 3.0 * s as f64],
                    dimension: [2.0, 2.0, 3.0],
                    story: s as u32,
                });
            }
        }
    }
    build_voxel_graph(&cubes, (4 * nx * ny) as f64).unwrap()
}

pub fn paint(vg: &mut VoxelGraph, pg: &ProgramGraph, rooms: &[Option<usize>]) {
    assert_eq!(vg.nodes.len(), rooms.len());
    for (n, r) in vg.nodes.iter_mut().zip(rooms) {
        n.assigned_program = *r;
        n.label = r.map(|r| pg.nodes[r].ptype);
    }
}

pub struct Fixture {
    pub name: &'static str,
    pub design: Design,
    pub expected: f64,
}

/// Hand-built designs with known connectivity, all at most 30 voxels.
pub fn fixtures() -> Vec<Fixture> {
    use ProgramType::*;
    let mut out = Vec::new();
    let mut add =
        |name, pg: ProgramGraph, mut vg: VoxelGraph, rooms: &[Option<usize>], expected| {
            paint(&mut vg, &pg, rooms);
            out.push(Fixture {
                name,
                design: Design::new(pg, vg).unwrap(),
                expected,
            });
        };

    // 3x2 grid: office {0,1}, restroom {2}, lobby {3,4}; restroom never meets lobby.
    let pg = build_program_graph(
        &[vec![Office, Restroom, LobbyCorridor]],
        &[(0, 1), (0, 2), (1, 2)],
    )
    .unwrap();
    add(
        "two_of_three",
        pg,
        grid(3, 2, 1),
        &[Some(0), Some(0), Some(1), Some(2), Some(2), None],
        2.0 / 3.0,
    );

    // Every program edge realised.
    let pg = build_program_graph(&[vec![Office, LobbyCorridor]], &[(0, 1)]).unwrap();
    add("all_realised", pg, grid(2, 1, 1), &[Some(0), Some(1)], 1.0);

    // Rooms placed apart with an unused voxel between them.
    let pg = build_program_graph(&[vec![Office, Restroom]], &[(0, 1)]).unwrap();
    add("apart", pg, grid(3, 1, 1), &[Some(0), None, Some(1)], 0.0);

    // Missing node: the restroom receives no voxel at all.
    let pg =
        build_program_graph(&[vec![Office, LobbyCorridor, Restroom]], &[(0, 1), (1, 2)]).unwrap();
    add(
        "missing_node",
        pg,
        grid(2, 2, 1),
        &[Some(0), Some(1), Some(1), Some(0)],
        0.5,
    );

    // Missing edge: office and mechanical touch nowhere although linked.
    let pg = build_program_graph(
        &[vec![LobbyCorridor, Office, Mechanical]],
        &[(0, 1), (0, 2), (1, 2)],
    )
    .unwrap();
    add(
        "missing_edge",
        pg,
        grid(5, 1, 1),
        &[Some(1), Some(1), Some(0), Some(2), Some(2)],
        2.0 / 3.0,
    );

    // Disconnected room: the office is split and neither part meets the stairs.
    let pg = build_program_graph(
        &[vec![LobbyCorridor, Office, Stairs]],
        &[(0, 1), (0, 2), (1, 2)],
    )
    .unwrap();
    add(
        "disconnected_room",
        pg,
        grid(3, 3, 1),
        &[
            Some(1),
            Some(0),
            Some(2),
            None,
            Some(0),
            Some(0),
            Some(1),
            Some(0),
            None,
        ],
        2.0 / 3.0,
    );

    // Stairs stacked over two stories: the vertical edge is realised.
    let pg = build_program_graph(
        &[vec![LobbyCorridor, Stairs], vec![LobbyCorridor, Stairs]],
        &[(0, 1), (2, 3)],
    )
    .unwrap();
    add(
        "stacked_stairs",
        pg,
        grid(2, 1, 2),
        &[Some(0), Some(1), Some(2), Some(3)],
        1.0,
    );

    // Stairs shifted between stories: the vertical edge is not realised.
    let pg = build_program_graph(
        &[vec![LobbyCorridor, Stairs], vec![LobbyCorridor, Stairs]],
        &[(0, 1), (2, 3)],
    )
    .unwrap();
    add(
        "shifted_stairs",
        pg,
        grid(3, 1, 2),
        &[Some(0), Some(0), Some(1), Some(3), Some(2), Some(2)],
        2.0 / 3.0,
    );

    // Largest fixture: 5x3x2 = 30 voxels, office rooms on both stories.
    let pg = build_program_graph(
        &[
            vec![LobbyCorridor, Office, Office, Elevator],
            vec![LobbyCorridor, Office, Elevator],
        ],
        &[(0, 1), (0, 2), (0, 3), (1, 2), (4, 5), (4, 6)],
    )
    .unwrap();
    let mut rooms = Vec::new();
    // story 0
    rooms.extend([Some(1), Some(1), Some(3), Some(2), Some(2)]);
    rooms.extend([Some(0); 5]);
    rooms.extend([None, Some(1), None, Some(2), None]);
    // story 1
    rooms.extend([Some(5), Some(5), Some(6), None, None]);
    rooms.extend([Some(4); 5]);
    rooms.extend([None; 5]);
    // edges: 6 doors, elevator chain 3-6, and 1-2 is not realised.
    add("thirty_voxels", pg, grid(5, 3, 2), &rooms, 6.0 / 7.0);
    out
}

/// Randomised synth configuration covering both core patterns.
pub fn random_config(rng: &mut impl Rng) -> SynthConfig {
    let lo = rng.random_range(2..=4);
    let s0 = rng.random_range(1..=3);
    SynthConfig {
        stories_range: [s0, s0 + rng.random_range(0..=4)],
        partition_counts: [lo, lo + rng.random_range(0..=2)],
        core_pattern: if rng.random_bool(0.5) {
            CorePattern::SingleCore
        } else {
            CorePattern::TwinCore
        },
        rng_seed: rng.random(),
        ..SynthConfig::default()
    }
}

pub fn random_record(seed: u64) -> SynthRecord {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = random_config(&mut rng);
    generate_design(&mut rng, &cfg).unwrap()
}

/// Random design: a synthetic record with some voxels cleared.
pub fn random_design(seed: u64) -> Design {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut d = random_record(seed).design();
    for n in &mut d.voxel_graph.nodes {
        if rng.random_bool(0.2) {
            n.label = None;
            n.assigned_program = None;
        }
    }
    d
}
