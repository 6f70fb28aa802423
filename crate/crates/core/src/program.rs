//! Hierarchical program graphs (bubble diagrams with per-type master nodes).

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

pub const NUM_TYPES: usize = 6;
/// Story value carried by master nodes.
pub const MASTER_STORY: i32 = -1;
pub const TPR_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProgramType {
    LobbyCorridor,
    Restroom,
    Stairs,
    Elevator,
    Office,
    Mechanical,
}

impl ProgramType {
    pub const ALL: [ProgramType; NUM_TYPES] = [
        ProgramType::LobbyCorridor,
        ProgramType::Restroom,
        ProgramType::Stairs,
        ProgramType::Elevator,
        ProgramType::Office,
        ProgramType::Mechanical,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn one_hot(self) -> [f64; NUM_TYPES] {
        let mut v = [0.0; NUM_TYPES];
        v[self.index()] = 1.0;
        v
    }

    /// Stairs and elevators: the only types chained across stories.
    pub fn is_vertical(self) -> bool {
        matches!(self, ProgramType::Stairs | ProgramType::Elevator)
    }

    pub fn name(self) -> &'static str {
        match self {
            ProgramType::LobbyCorridor => "lobby_corridor",
            ProgramType::Restroom => "restroom",
            ProgramType::Stairs => "stairs",
            ProgramType::Elevator => "elevator",
            ProgramType::Office => "office",
            ProgramType::Mechanical => "mechanical",
        }
    }
}

impl fmt::Display for ProgramType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProgramType {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ProgramType::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| format!("unknown program type {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProgramNode {
    pub id: usize,
    /// [`MASTER_STORY`] for master nodes.
    pub story: i32,
    pub ptype: ProgramType,
    pub is_master: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Door or opening between rooms on one story.
    Door,
    /// Stair or elevator chain between adjacent stories.
    Vertical,
    /// Master node to one of its instances.
    Master,
}

impl EdgeKind {
    pub fn name(self) -> &'static str {
        match self {
            EdgeKind::Door => "door",
            EdgeKind::Vertical => "vertical",
            EdgeKind::Master => "master",
        }
    }
}

impl FromStr for EdgeKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "door" => Ok(EdgeKind::Door),
            "vertical" => Ok(EdgeKind::Vertical),
            "master" => Ok(EdgeKind::Master),
            _ => Err(format!("unknown edge kind {s:?}")),
        }
    }
}

/// Undirected edge stored with `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ProgramEdge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

impl ProgramEdge {
    pub fn new(a: usize, b: usize, kind: EdgeKind) -> Self {
        ProgramEdge {
            a: a.min(b),
            b: a.max(b),
            kind,
        }
    }
}

pub type Tpr = BTreeMap<ProgramType, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct ProgramGraph {
    pub nodes: Vec<ProgramNode>,
    pub edges: Vec<ProgramEdge>,
    pub far_limit: f64,
    pub tpr: Tpr,
}

impl ProgramGraph {
    /// Assembles a graph from per-room `(story, type)` instances plus explicit
    /// door and vertical edges over instance ids. Master nodes are appended
    /// after the instances, one per occurring type in type order, each joined
    /// to all of its instances.
    pub fn from_parts(
        instances: &[(u32, ProgramType)],
        doors: &[(usize, usize)],
        verticals: &[(usize, usize)],
        far_limit: f64,
        tpr: Tpr,
    ) -> Result<Self> {
        let mut nodes: Vec<ProgramNode> = instances
            .iter()
            .enumerate()
            .map(|(id, &(story, ptype))| ProgramNode {
                id,
                story: story as i32,
                ptype,
                is_master: false,
            })
            .collect();
        let mut edges = Vec::with_capacity(doors.len() + verticals.len() + instances.len());
        for &(a, b) in doors {
            edges.push(ProgramEdge::new(a, b, EdgeKind::Door));
        }
        for &(a, b) in verticals {
            edges.push(ProgramEdge::new(a, b, EdgeKind::Vertical));
        }
        for t in ProgramType::ALL {
            let members: Vec<usize> = instances
                .iter()
                .enumerate()
                .filter(|(_, (_, pt))| *pt == t)
                .map(|(i, _)| i)
                .collect();
            if members.is_empty() {
                continue;
            }
            let master = nodes.len();
            nodes.push(ProgramNode {
                id: master,
                story: MASTER_STORY,
                ptype: t,
                is_master: true,
            });
            for m in members {
                edges.push(ProgramEdge::new(m, master, EdgeKind::Master));
            }
        }
        for &(a, b) in doors.iter().chain(verticals) {
            if a >= instances.len() || b >= instances.len() {
                return Err(CoreError::invalid(
                    "edges",
                    format!("edge ({a}, {b}) references an unknown room"),
                ));
            }
        }
        let graph = ProgramGraph {
            nodes,
            edges,
            far_limit,
            tpr,
        };
        graph.validate()?;
        Ok(graph)
    }

    pub fn validate(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(CoreError::invalid("nodes", "graph must be non-empty"));
        }
        for (i, n) in self.nodes.iter().enumerate() {
            let path = format!("nodes[{i}]");
            if n.id != i {
                return Err(CoreError::invalid(
                    format!("{path}.id"),
                    format!("ids must be dense 0..N-1, found {} at position {i}", n.id),
                ));
            }
            if n.is_master && n.story != MASTER_STORY {
                return Err(CoreError::invalid(
                    format!("{path}.story"),
                    format!("master nodes carry story {MASTER_STORY}"),
                ));
            }
            if !n.is_master && n.story < 0 {
                return Err(CoreError::invalid(
                    format!("{path}.story"),
                    "story must be >= 0",
                ));
            }
        }

        let mut masters: BTreeMap<ProgramType, usize> = BTreeMap::new();
        let mut present: HashSet<ProgramType> = HashSet::new();
        for n in &self.nodes {
            if n.is_master {
                if masters.insert(n.ptype, n.id).is_some() {
                    return Err(CoreError::invalid(
                        format!("nodes[{}]", n.id),
                        format!("duplicate master node for {}", n.ptype),
                    ));
                }
            } else {
                present.insert(n.ptype);
            }
        }
        for t in &present {
            if !masters.contains_key(t) {
                return Err(CoreError::invalid(
                    "nodes",
                    format!("missing master node for {t}"),
                ));
            }
        }
        for (t, id) in &masters {
            if !present.contains(t) {
                return Err(CoreError::invalid(
                    format!("nodes[{id}]"),
                    format!("master node for absent type {t}"),
                ));
            }
        }

        if !(self.far_limit.is_finite() && self.far_limit > 0.0) {
            return Err(CoreError::invalid("far", "FAR limit must be positive"));
        }
        let mut total = 0.0;
        for (t, &r) in &self.tpr {
            if !(0.0..=1.0).contains(&r) {
                return Err(CoreError::invalid(
                    format!("tpr.{t}"),
                    "ratio must lie in [0, 1]",
                ));
            }
            total += r;
        }
        if (total - 1.0).abs() > TPR_TOLERANCE {
            return Err(CoreError::invalid(
                "tpr",
                format!("ratios sum to {total}, expected 1"),
            ));
        }

        let mut seen = HashSet::new();
        for (i, e) in self.edges.iter().enumerate() {
            let path = format!("edges[{i}]");
            let n = self.nodes.len();
            if e.a >= n || e.b >= n {
                return Err(CoreError::invalid(
                    path,
                    format!("dangling edge ({}, {}) with {n} nodes", e.a, e.b),
                ));
            }
            if e.a == e.b {
                return Err(CoreError::invalid(path, "self-loop"));
            }
            if e.a > e.b {
                return Err(CoreError::invalid(
                    path,
                    "edges are stored with the smaller id first",
                ));
            }
            if !seen.insert((e.a, e.b)) {
                return Err(CoreError::invalid(
                    path,
                    format!("duplicate edge ({}, {})", e.a, e.b),
                ));
            }
            let (na, nb) = (&self.nodes[e.a], &self.nodes[e.b]);
            match e.kind {
                EdgeKind::Door => {
                    if na.is_master || nb.is_master {
                        return Err(CoreError::invalid(path, "door edge touches a master node"));
                    }
                    if na.story != nb.story {
                        return Err(CoreError::invalid(
                            path,
                            format!("door edge across stories {} and {}", na.story, nb.story),
                        ));
                    }
                }
                EdgeKind::Vertical => {
                    if na.is_master || nb.is_master {
                        return Err(CoreError::invalid(
                            path,
                            "vertical edge touches a master node",
                        ));
                    }
                    if (na.story - nb.story).abs() != 1 {
                        return Err(CoreError::invalid(
                            path,
                            "vertical edges join adjacent stories only",
                        ));
                    }
                    if na.ptype != nb.ptype || !na.ptype.is_vertical() {
                        return Err(CoreError::invalid(
                            path,
                            "vertical edges chain stairs to stairs or elevator to elevator",
                        ));
                    }
                }
                EdgeKind::Master => {
                    if na.is_master == nb.is_master {
                        return Err(CoreError::invalid(
                            path,
                            "master edge must join a master node to an instance",
                        ));
                    }
                    if na.ptype != nb.ptype {
                        return Err(CoreError::invalid(
                            path,
                            "master edge joins nodes of different types",
                        ));
                    }
                }
            }
        }
        Ok(())
    }

    /// Replaces the FAR limit and target program ratios, revalidating.
    pub fn with_conditions(mut self, far_limit: f64, tpr: Tpr) -> Result<Self> {
        self.far_limit = far_limit;
        self.tpr = tpr;
        self.validate()?;
        Ok(self)
    }

    pub fn instances(&self) -> impl Iterator<Item = &ProgramNode> {
        self.nodes.iter().filter(|n| !n.is_master)
    }

    pub fn masters(&self) -> impl Iterator<Item = &ProgramNode> {
        self.nodes.iter().filter(|n| n.is_master)
    }

    pub fn master_of(&self, t: ProgramType) -> Option<usize> {
        self.masters().find(|n| n.ptype == t).map(|n| n.id)
    }

    /// Number of stories spanned by instance nodes (max story + 1).
    pub fn story_count(&self) -> usize {
        self.instances()
            .map(|n| n.story as usize + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn max_story(&self) -> u32 {
        self.instances().map(|n| n.story as u32).max().unwrap_or(0)
    }

    /// Non-master nodes on `story`, in id order.
    pub fn rooms_on_story(&self, story: u32) -> impl Iterator<Item = &ProgramNode> {
        self.instances().filter(move |n| n.story == story as i32)
    }

    /// Door and vertical edges, i.e. everything except master edges.
    pub fn room_edges(&self) -> impl Iterator<Item = &ProgramEdge> {
        self.edges.iter().filter(|e| e.kind != EdgeKind::Master)
    }

    pub fn tpr_of(&self, t: ProgramType) -> f64 {
        self.tpr.get(&t).copied().unwrap_or(0.0)
    }
}

/// Stacks per-story room lists into a hierarchical program graph.
///
/// Rooms get ids story by story in list order. Every stairs (elevator) room is
/// chained to each stairs (elevator) room on the next story up. FAR and TPR are
/// placeholders (FAR 1, TPR uniform over the occurring types); set them with
/// [`ProgramGraph::with_conditions`].
pub fn build_program_graph(
    rooms_per_story: &[Vec<ProgramType>],
    door_edges: &[(usize, usize)],
) -> Result<ProgramGraph> {
    if rooms_per_story.is_empty() {
        return Err(CoreError::invalid(
            "rooms",
            "at least one story is required",
        ));
    }
    let mut instances = Vec::new();
    for (s, rooms) in rooms_per_story.iter().enumerate() {
        if rooms.is_empty() {
            return Err(CoreError::invalid(
                format!("rooms[{s}]"),
                "story has no rooms",
            ));
        }
        instances.extend(rooms.iter().map(|&t| (s as u32, t)));
    }
    let mut seen = HashSet::new();
    for (i, &(a, b)) in door_edges.iter().enumerate() {
        let path = format!("door_edges[{i}]");
        if a >= instances.len() || b >= instances.len() {
            return Err(CoreError::invalid(
                path,
                format!("unknown room id in ({a}, {b})"),
            ));
        }
        if a == b {
            return Err(CoreError::invalid(path, "self-loop"));
        }
        if !seen.insert((a.min(b), a.max(b))) {
            return Err(CoreError::invalid(
                path,
                format!("duplicate door edge ({a}, {b})"),
            ));
        }
        if instances[a].0 != instances[b].0 {
            return Err(CoreError::invalid(
                path,
                format!(
                    "door edge across stories {} and {}",
                    instances[a].0, instances[b].0
                ),
            ));
        }
    }
    let mut verticals = Vec::new();
    for (i, &(si, ti)) in instances.iter().enumerate() {
        if !ti.is_vertical() {
            continue;
        }
        for (j, &(sj, tj)) in instances.iter().enumerate() {
            if tj == ti && sj == si + 1 {
                verticals.push((i, j));
            }
        }
    }
    let present: Vec<ProgramType> = ProgramType::ALL
        .into_iter()
        .filter(|t| instances.iter().any(|(_, pt)| pt == t))
        .collect();
    let share = 1.0 / present.len() as f64;
    let tpr = present.into_iter().map(|t| (t, share)).collect();
    ProgramGraph::from_parts(&instances, door_edges, &verticals, 1.0, tpr)
}
