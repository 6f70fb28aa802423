use rand::Rng;
use voxgraph_autodiff::{
    no_grad, segment_max, segment_mean, segment_sum, Activation, Bound, Dense, Matrix, Mlp2,
    ParamStore, Var,
};
use voxgraph_core::{VoxelGraph, NUM_TYPES};

use crate::config::{CriticConfig, ModelConfig, ModelDims, Pooling};
use crate::error::{ModelError, Result};
use crate::graph::{voxel_features, Batch, VOXEL_FEATURES};

/// Largest tolerated deviation of a label row from the probability simplex.
pub const SIMPLEX_TOLERANCE: f64 = 1e-4;

/// Anything that scores labelled voxel graphs, batched.
pub trait Critic {
    /// Building-level and story-level outputs, one row per graph.
    fn score(&self, p: &Bound, batch: &Batch, labels: &Var) -> (Var, Var);
}

#[derive(Debug, Clone)]
pub struct CriticParams {
    pub store: ParamStore,
    pub dims: ModelDims,
    pub cfg: CriticConfig,
    feature_encoder: Dense,
    label_encoder: Dense,
    message: Dense,
    update: Dense,
    global_decoder: Mlp2,
    story_decoder: Mlp2,
}

impl CriticParams {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.dims;
        let (e, w) = (d.critic_encoder, d.critic_width());
        let id = Activation::Identity;
        let leaky = Activation::LeakyRelu;
        let out = if cfg.critic.sigmoid {
            Activation::Sigmoid
        } else {
            Activation::Identity
        };
        let mut s = ParamStore::new();
        let feature_encoder =
            Dense::new(&mut s, rng, "critic.feature_encoder", VOXEL_FEATURES, e, id);
        let label_encoder = Dense::new(&mut s, rng, "critic.label_encoder", NUM_TYPES, e, id);
        let message = Dense::new(&mut s, rng, "critic.message", 2 * w + 3, w, id);
        let update = Dense::new(&mut s, rng, "critic.update", 2 * w, w, leaky);
        crate::generator::shrink(&mut s, update, cfg.critic.steps);
        let dec = (w, d.decoder_hidden, 1);
        let global_decoder = Mlp2::new(&mut s, rng, "critic.global_decoder", dec, leaky, out);
        let story_decoder = Mlp2::new(&mut s, rng, "critic.story_decoder", dec, leaky, out);
        CriticParams {
            store: s,
            dims: d,
            cfg: cfg.critic,
            feature_encoder,
            label_encoder,
            message,
            update,
            global_decoder,
            story_decoder,
        }
    }

    /// Layers whose zeroing reduces message passing to the identity.
    pub fn residual_layers(&self) -> [Dense; 2] {
        [self.message, self.update]
    }

    pub fn zero_layer(&mut self, layer: Dense) {
        self.store.get_mut(layer.weight).fill(0.0);
        self.store.get_mut(layer.bias).fill(0.0);
    }

    /// Node states after encoding and message passing.
    pub fn embed(&self, p: &Bound, batch: &Batch, labels: &Var) -> Var {
        let n = batch.voxel_len();
        let w = self.dims.critic_width();
        let feats = Var::constant(batch.voxel_feats.clone());
        let mut h = Var::concat_cols(&[
            self.feature_encoder.forward(p, &feats),
            self.label_encoder
                .forward(p, &labels.slice_cols(0, NUM_TYPES)),
        ]);
        let disp = Var::constant(batch.voxel_disp.clone());
        for _ in 0..self.cfg.steps {
            let msgs = if batch.voxel_src.is_empty() {
                Var::zeros(n, w)
            } else {
                let m = &self.message;
                let pre = m
                    .project_rows(p, &h, 0)
                    .gather_rows(&batch.voxel_dst)
                    .add(&m.project_rows(p, &h, w).gather_rows(&batch.voxel_src))
                    .add(&m.project_rows(p, &disp, 2 * w));
                segment_sum(&m.finish(p, &pre), &batch.voxel_dst, n)
            };
            h = h.add(&self.update.forward_parts(p, &[&h, &msgs]));
        }
        h
    }

    fn pool(&self, h: &Var, seg: &voxgraph_autodiff::Index, n: usize) -> Var {
        match self.cfg.pooling {
            Pooling::Sum => segment_sum(h, seg, n),
            Pooling::Max => segment_max(h, seg, n),
        }
    }
}

impl Critic for CriticParams {
    fn score(&self, p: &Bound, batch: &Batch, labels: &Var) -> (Var, Var) {
        let h = self.embed(p, batch, labels);
        let global = self
            .global_decoder
            .forward(p, &self.pool(&h, &batch.voxel_graph, batch.graphs));
        let per_story = self
            .story_decoder
            .forward(p, &self.pool(&h, &batch.voxel_group, batch.groups));
        let story = segment_mean(&per_story, &batch.group_graph, batch.graphs);
        (global, story)
    }
}

/// Rejects label rows that are off the simplex by more than the tolerance.
pub fn check_labels(labels: &Matrix) -> Result<()> {
    for (k, row) in labels.rows().into_iter().enumerate() {
        let total: f64 = row.sum();
        let inside = row
            .iter()
            .all(|&v| v.is_finite() && (-SIMPLEX_TOLERANCE..=1.0 + SIMPLEX_TOLERANCE).contains(&v));
        if !inside || (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(ModelError::Shape(format!(
                "label row {k} is not a distribution (sum {total})"
            )));
        }
    }
    Ok(())
}

/// Critic outputs `(o_global, o_story)` for one labelled voxel graph.
pub fn critic_forward(
    vg: &VoxelGraph,
    labels: &Matrix,
    params: &CriticParams,
    site_scale: [f64; 3],
) -> Result<(f64, f64)> {
    if labels.nrows() != vg.len() || labels.ncols() != voxgraph_core::LABEL_DIM {
        return Err(ModelError::Shape(format!(
            "labels are {:?} for {} voxels",
            labels.dim(),
            vg.len()
        )));
    }
    check_labels(labels)?;
    let batch = Batch::voxels_only(vg, site_scale);
    let _g = no_grad();
    let (g, s) = params.score(
        &params.store.bind_frozen(),
        &batch,
        &Var::constant(labels.clone()),
    );
    Ok((g.scalar(), s.scalar()))
}

/// Voxel features in the critic's layout, exposed for inspection.
pub fn critic_inputs(vg: &VoxelGraph, site_scale: [f64; 3]) -> Matrix {
    voxel_features(vg, site_scale).0
}
