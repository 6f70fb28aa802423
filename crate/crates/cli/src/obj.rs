//! Wavefront OBJ export of used voxels as cuboids grouped by program type.

use std::fmt::Write;

use voxgraph_core::{Cuboid, Design, ProgramType};

/// Lower-case snake name of a type, as used in JSON files and OBJ groups.
pub fn type_name(t: ProgramType) -> String {
    match serde_json::to_value(t) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("program types serialise as strings"),
    }
}

// Corner bits: x is bit 0, y bit 1, z bit 2.
const FACES: [[usize; 3]; 12] = [
    [0, 2, 3],
    [0, 3, 1], // bottom
    [4, 5, 7],
    [4, 7, 6], // top
    [0, 1, 5],
    [0, 5, 4], // y min
    [2, 6, 7],
    [2, 7, 3], // y max
    [0, 4, 6],
    [0, 6, 2], // x min
    [1, 3, 7],
    [1, 7, 5], // x max
];

fn corners(c: &Cuboid) -> [[f64; 3]; 8] {
    std::array::from_fn(|bits| {
        std::array::from_fn(|axis| {
            let far = (bits >> axis) & 1 == 1;
            c.position[axis] + if far { c.dimension[axis] } else { 0.0 }
        })
    })
}

/// Renders `design` as OBJ text. Vertices are in meters with z up; faces wind
/// outward. A design with no used voxels yields only the header.
pub fn design_to_obj(design: &Design) -> String {
    let used = design.used_count();
    let mut out = String::new();
    writeln!(out, "# voxgraph design export").unwrap();
    writeln!(
        out,
        "# {used} used voxels, {} vertices, {} faces",
        used * 8,
        used * 12
    )
    .unwrap();
    let mut next = 1;
    for t in ProgramType::ALL {
        let cubes: Vec<&Cuboid> = design
            .voxel_graph
            .nodes
            .iter()
            .filter(|n| n.label == Some(t))
            .map(|n| &n.cuboid)
            .collect();
        if cubes.is_empty() {
            continue;
        }
        writeln!(out, "g {}", type_name(t)).unwrap();
        for c in cubes {
            for [x, y, z] in corners(c) {
                writeln!(out, "v {x} {y} {z}").unwrap();
            }
            for [a, b, c] in FACES {
                writeln!(out, "f {} {} {}", next + a, next + b, next + c).unwrap();
            }
            next += 8;
        }
    }
    out
}
