//! Voxel graphs: irregular lattices of axis-aligned cuboids joined by shared faces.

use std::collections::HashSet;

use crate::error::{CoreError, Result};
use crate::program::ProgramType;

/// Coplanarity tolerance for face contact, in meters.
pub const FACE_TOLERANCE: f64 = 1e-6;
/// Intersection volumes above this count as overlap, in cubic meters.
pub const OVERLAP_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cuboid {
    /// Minimum corner in meters.
    pub position: [f64; 3],
    /// Extent along x, y, z in meters.
    pub dimension: [f64; 3],
    pub story: u32,
}

impl Cuboid {
    pub fn max_corner(&self) -> [f64; 3] {
        [
            self.position[0] + self.dimension[0],
            self.position[1] + self.dimension[1],
            self.position[2] + self.dimension[2],
        ]
    }

    pub fn center(&self) -> [f64; 3] {
        [
            self.position[0] + 0.5 * self.dimension[0],
            self.position[1] + 0.5 * self.dimension[1],
            self.position[2] + 0.5 * self.dimension[2],
        ]
    }

    pub fn footprint_area(&self) -> f64 {
        self.dimension[0] * self.dimension[1]
    }

    fn overlap_1d(&self, other: &Cuboid, axis: usize) -> f64 {
        let lo = self.position[axis].max(other.position[axis]);
        let hi = (self.position[axis] + self.dimension[axis])
            .min(other.position[axis] + other.dimension[axis]);
        hi - lo
    }

    pub fn intersection_volume(&self, other: &Cuboid) -> f64 {
        (0..3)
            .map(|ax| self.overlap_1d(other, ax).max(0.0))
            .product()
    }

    /// True when the two cuboids touch along a plane with positive shared area.
    pub fn shares_face(&self, other: &Cuboid) -> bool {
        let (a_max, b_max) = (self.max_corner(), other.max_corner());
        (0..3).any(|ax| {
            let touching = (a_max[ax] - other.position[ax]).abs() <= FACE_TOLERANCE
                || (b_max[ax] - self.position[ax]).abs() <= FACE_TOLERANCE;
            touching
                && (0..3)
                    .filter(|&o| o != ax)
                    .all(|o| self.overlap_1d(other, o) > FACE_TOLERANCE)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelNode {
    pub id: usize,
    pub cuboid: Cuboid,
    /// Ground-truth or assigned program type; `None` marks an unused voxel.
    pub label: Option<ProgramType>,
    /// Program node this voxel belongs to.
    pub assigned_program: Option<usize>,
}

impl VoxelNode {
    pub fn story(&self) -> u32 {
        self.cuboid.story
    }

    pub fn is_used(&self) -> bool {
        self.label.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGraph {
    pub nodes: Vec<VoxelNode>,
    /// Undirected, smaller id first.
    pub edges: Vec<(usize, usize)>,
    pub site_area: f64,
}

/// Builds the face-adjacency graph over `cuboids`, keeping input order as ids.
pub fn build_voxel_graph(cuboids: &[Cuboid], site_area: f64) -> Result<VoxelGraph> {
    if cuboids.is_empty() {
        return Err(CoreError::invalid("nodes", "graph must be non-empty"));
    }
    check_site_area(site_area)?;
    for (i, c) in cuboids.iter().enumerate() {
        check_cuboid(i, c)?;
    }
    let mut edges = Vec::new();
    for i in 0..cuboids.len() {
        for j in i + 1..cuboids.len() {
            let volume = cuboids[i].intersection_volume(&cuboids[j]);
            if volume > OVERLAP_TOLERANCE {
                return Err(CoreError::Overlap { a: i, b: j, volume });
            }
            if cuboids[i].shares_face(&cuboids[j]) {
                edges.push((i, j));
            }
        }
    }
    let nodes = cuboids
        .iter()
        .enumerate()
        .map(|(id, &cuboid)| VoxelNode {
            id,
            cuboid,
            label: None,
            assigned_program: None,
        })
        .collect();
    Ok(VoxelGraph {
        nodes,
        edges,
        site_area,
    })
}

fn check_site_area(site_area: f64) -> Result<()> {
    if site_area.is_finite() && site_area > 0.0 {
        Ok(())
    } else {
        Err(CoreError::invalid(
            "site_area",
            "site area must be positive",
        ))
    }
}

fn check_cuboid(i: usize, c: &Cuboid) -> Result<()> {
    if !c.position.iter().all(|x| x.is_finite()) {
        return Err(CoreError::invalid(
            format!("nodes[{i}].pos"),
            "non-finite position",
        ));
    }
    if !c.dimension.iter().all(|&d| d.is_finite() && d > 0.0) {
        return Err(CoreError::invalid(
            format!("nodes[{i}].dim"),
            "dimensions must be positive",
        ));
    }
    Ok(())
}

impl VoxelGraph {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(CoreError::invalid("nodes", "graph must be non-empty"));
        }
        check_site_area(self.site_area)?;
        for (i, n) in self.nodes.iter().enumerate() {
            if n.id != i {
                return Err(CoreError::invalid(
                    format!("nodes[{i}].id"),
                    format!("ids must be dense 0..N-1, found {} at position {i}", n.id),
                ));
            }
            check_cuboid(i, &n.cuboid)?;
            if n.assigned_program.is_some() && n.label.is_none() {
                return Err(CoreError::invalid(
                    format!("nodes[{i}].program"),
                    "voxel has a program but no label",
                ));
            }
        }
        for i in 0..self.nodes.len() {
            for j in i + 1..self.nodes.len() {
                let volume = self.nodes[i]
                    .cuboid
                    .intersection_volume(&self.nodes[j].cuboid);
                if volume > OVERLAP_TOLERANCE {
                    return Err(CoreError::Overlap { a: i, b: j, volume });
                }
            }
        }
        let mut seen = HashSet::new();
        for (k, &(a, b)) in self.edges.iter().enumerate() {
            let path = format!("edges[{k}]");
            let n = self.nodes.len();
            if a >= n || b >= n {
                return Err(CoreError::invalid(
                    path,
                    format!("dangling edge ({a}, {b}) with {n} nodes"),
                ));
            }
            if a >= b {
                return Err(CoreError::invalid(
                    path,
                    "edges join distinct nodes, smaller id first",
                ));
            }
            if !seen.insert((a, b)) {
                return Err(CoreError::invalid(
                    path,
                    format!("duplicate edge ({a}, {b})"),
                ));
            }
            if !self.nodes[a].cuboid.shares_face(&self.nodes[b].cuboid) {
                return Err(CoreError::invalid(
                    path,
                    format!("voxels {a} and {b} do not share a face"),
                ));
            }
        }
        Ok(())
    }

    pub fn story_count(&self) -> usize {
        self.nodes
            .iter()
            .map(|n| n.story() as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn max_story(&self) -> u32 {
        self.nodes.iter().map(|n| n.story()).max().unwrap_or(0)
    }

    /// Adjacency lists, both directions.
    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }

    /// Clears labels and program assignments, keeping geometry.
    pub fn unlabeled(&self) -> VoxelGraph {
        let mut g = self.clone();
        for n in &mut g.nodes {
            n.label = None;
            n.assigned_program = None;
        }
        g
    }

    pub fn cuboids(&self) -> Vec<Cuboid> {
        self.nodes.iter().map(|n| n.cuboid).collect()
    }
}
