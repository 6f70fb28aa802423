//! Data model, synthetic dataset and metrics for graph-conditioned
//! volumetric building design.

pub mod design;
pub mod error;
pub mod json;
pub mod metrics;
pub mod program;
pub mod synth;
pub mod voxel;

pub use design::{
    assignment_to_labels, label_row, Assignment, Conditions, Design, LabelRow, LABEL_DIM, UNUSED,
};
pub use error::{CoreError, Result};
pub use json::JsonFormat;
pub use program::{
    build_program_graph, EdgeKind, ProgramEdge, ProgramGraph, ProgramNode, ProgramType, Tpr,
    NUM_TYPES,
};
pub use synth::{generate_dataset, generate_design, generate_record, SynthConfig, SynthRecord};
pub use voxel::{build_voxel_graph, Cuboid, VoxelGraph, VoxelNode};
