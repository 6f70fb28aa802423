//! Graph-conditioned volumetric design generator and WGAN-GP critic.
//!
//! The generator encodes a program graph and a voxel graph with message
//! passing, then repeatedly points each voxel at a same-story program node.
//! The critic scores labelled voxel graphs at building and story level.

pub mod checkpoint;
pub mod config;
pub mod critic;
pub mod error;
pub mod generator;
pub mod graph;
pub mod train;

pub use checkpoint::Checkpoint;
pub use config::{CriticConfig, GenConfig, ModelConfig, ModelDims, Pooling, TrainConfig};
pub use critic::{critic_forward, Critic, CriticParams};
pub use error::{ModelError, Result};
pub use generator::{generator_forward, GenOutput, GeneratorParams, Noise};
pub use graph::{Batch, Prepared};
pub use train::{gradient_penalty, real_labels, TrainItem, TrainReport, Trainer};
