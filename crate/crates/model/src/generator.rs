use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Gumbel, StandardNormal};
use voxgraph_autodiff::{
    no_grad, segment_mean, segment_softmax, segment_sum, Activation, Bound, Dense, Matrix, Mlp2,
    ParamId, ParamStore, Var,
};
use voxgraph_core::{Assignment, ProgramGraph, VoxelGraph, LABEL_DIM};

use crate::config::{GenConfig, ModelConfig, ModelDims};
use crate::error::Result;
use crate::graph::{positional_encoding, Batch, Prepared, PROGRAM_FEATURES, VOXEL_FEATURES};

/// Learnable generator weights and the layer layout over them.
#[derive(Debug, Clone)]
pub struct GeneratorParams {
    pub store: ParamStore,
    pub dims: ModelDims,
    pub cfg: GenConfig,
    program_encoder: Dense,
    program_message: Dense,
    program_update: Dense,
    voxel_encoder: Dense,
    voxel_message: Dense,
    voxel_update: Dense,
    mask: Mlp2,
    w_x: Dense,
    w_v: Dense,
    theta: ParamId,
}

impl GeneratorParams {
    pub fn new(cfg: &ModelConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.dims;
        let l = d.latent;
        let mut s = ParamStore::new();
        let id = Activation::Identity;
        let leaky = Activation::LeakyRelu;
        let program_encoder = Dense::new(
            &mut s,
            rng,
            "gen.program.encoder",
            PROGRAM_FEATURES + d.noise + 1,
            l,
            id,
        );
        let program_message = Dense::new(&mut s, rng, "gen.program.message", 2 * l, l, id);
        let program_update = Dense::new(&mut s, rng, "gen.program.update", 3 * l + 1, l, leaky);
        let voxel_encoder = Dense::new(
            &mut s,
            rng,
            "gen.voxel.encoder",
            VOXEL_FEATURES + d.noise,
            l,
            id,
        );
        let voxel_message = Dense::new(&mut s, rng, "gen.voxel.message", 2 * l + 3, l, id);
        let voxel_update = Dense::new(&mut s, rng, "gen.voxel.update", 2 * l, l, leaky);
        let mask = Mlp2::new(
            &mut s,
            rng,
            "gen.pointer.mask",
            (l, d.mask_hidden, 2),
            leaky,
            id,
        );
        let w_x = Dense::new(&mut s, rng, "gen.pointer.w_x", l, l, id);
        let w_v = Dense::new(&mut s, rng, "gen.pointer.w_v", l, l, id);
        shrink(&mut s, program_update, cfg.generator.program_steps);
        shrink(&mut s, voxel_update, cfg.generator.voxel_steps);
        let theta = s.insert(
            "gen.pointer.theta",
            voxgraph_autodiff::params::uniform_fan_in(rng, l, (l, 1)),
        );
        GeneratorParams {
            store: s,
            dims: d,
            cfg: cfg.generator,
            program_encoder,
            program_message,
            program_update,
            voxel_encoder,
            voxel_message,
            voxel_update,
            mask,
            w_x,
            w_v,
            theta,
        }
    }

    /// Dense layers whose zeroing leaves only residual paths in each GNN:
    /// (program message, program update, voxel message, voxel update).
    pub fn residual_layers(&self) -> [Dense; 4] {
        [
            self.program_message,
            self.program_update,
            self.voxel_message,
            self.voxel_update,
        ]
    }

    pub fn zero_layer(&mut self, layer: Dense) {
        self.store.get_mut(layer.weight).fill(0.0);
        self.store.get_mut(layer.bias).fill(0.0);
    }
}

/// Scales a residual branch's initial weights by `1 / steps` so that repeated
/// residual updates keep embeddings at their encoder scale.
pub(crate) fn shrink(s: &mut ParamStore, layer: Dense, steps: usize) {
    let k = 1.0 / steps.max(1) as f64;
    s.get_mut(layer.weight).mapv_inplace(|w| w * k);
}

/// Random inputs of one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct Noise {
    pub z_program: Matrix,
    pub z_voxel: Matrix,
    /// Gumbel noise per candidate pair, one column per pointer call.
    pub gumbel: Vec<Matrix>,
}

impl Noise {
    pub fn sample(rng: &mut impl Rng, batch: &Batch, dims: &ModelDims, cfg: &GenConfig) -> Self {
        let z_program = Array2::from_shape_fn((batch.program_len(), dims.noise), |_| {
            StandardNormal.sample(rng)
        });
        let z_voxel = Array2::from_shape_fn((batch.voxel_len(), dims.noise), |_| {
            StandardNormal.sample(rng)
        });
        let g = Gumbel::new(0.0, 1.0).expect("standard gumbel");
        let gumbel = (0..cfg.pointer_calls())
            .map(|_| Array2::from_shape_fn((batch.pair_len(), 1), |_| g.sample(rng)))
            .collect();
        Noise {
            z_program,
            z_voxel,
            gumbel,
        }
    }

    /// Standard-normal latent noise without Gumbel perturbation.
    pub fn without_gumbel(mut self) -> Self {
        for g in &mut self.gumbel {
            g.fill(0.0);
        }
        self
    }
}

/// Output of a single pointer call.
#[derive(Debug, Clone)]
pub struct PointerOut {
    /// Probability that each voxel is used (voxels × 1).
    pub mask: Var,
    /// Attention weight of every candidate pair (pairs × 1).
    pub att: Var,
    pub v_next: Var,
}

/// Mask and attention values recorded at one pointer call.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub mask: Matrix,
    pub att: Matrix,
}

#[derive(Debug, Clone)]
pub struct GenOutput {
    pub mask: Var,
    pub att: Var,
    pub program_embedding: Var,
    pub voxel_embedding: Var,
    pub snapshots: Vec<Snapshot>,
    pub hard: bool,
}

impl GenOutput {
    pub fn pointer_calls(&self) -> usize {
        self.snapshots.len()
    }

    /// Per-voxel 7-vectors: mask-weighted type probabilities then `1 − mask`.
    pub fn labels(&self, batch: &Batch) -> Var {
        label_var(batch, &self.mask, &self.att)
    }

    /// Splits the final pointer output into per-graph assignments.
    pub fn assignments(&self, batch: &Batch) -> Vec<Assignment> {
        snapshot_assignments(
            batch,
            &Snapshot {
                mask: self.mask.value().clone(),
                att: self.att.value().clone(),
            },
            self.hard,
        )
    }
}

pub fn label_var(batch: &Batch, mask: &Var, att: &Var) -> Var {
    let n = batch.voxel_len();
    let types = Var::constant(batch.pair_type.clone())
        .mul_col(att)
        .scatter_rows(&batch.pair_voxel, n)
        .mul_col(mask);
    let unused = mask.neg().add_scalar(1.0);
    let labels = Var::concat_cols(&[types, unused]);
    debug_assert_eq!(labels.cols(), LABEL_DIM);
    labels
}

/// Per-graph assignments read from recorded pointer values.
pub fn snapshot_assignments(batch: &Batch, snap: &Snapshot, hard: bool) -> Vec<Assignment> {
    (0..batch.graphs)
        .map(|g| {
            let (vo, v1) = (batch.voxel_offsets[g], batch.voxel_offsets[g + 1]);
            let po = batch.program_offsets[g];
            let mut att = vec![Vec::new(); v1 - vo];
            for r in batch.pair_offsets[g]..batch.pair_offsets[g + 1] {
                let k = batch.pair_voxel[r] - vo;
                att[k].push((batch.pair_program[r] - po, snap.att[[r, 0]]));
            }
            Assignment {
                mask: (vo..v1).map(|k| snap.mask[[k, 0]]).collect(),
                att,
                hard,
            }
        })
        .collect()
}

/// First row index of each voxel's highest weight (ties go to the lower program id).
fn segment_argmax_onehot(att: &Matrix, seg: &[usize], n: usize) -> Matrix {
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (r, &k) in seg.iter().enumerate() {
        match best[k] {
            Some(b) if att[[b, 0]] >= att[[r, 0]] => {}
            _ => best[k] = Some(r),
        }
    }
    let mut hard = Array2::zeros(att.raw_dim());
    for b in best.into_iter().flatten() {
        hard[[b, 0]] = 1.0;
    }
    hard
}

impl GeneratorParams {
    /// Program GNN: encoder then residual message passing with cluster means.
    pub fn program_gnn(&self, p: &Bound, batch: &Batch, z: &Matrix) -> Var {
        let n = batch.program_len();
        let l = self.dims.latent;
        let feats = Var::constant(batch.program_feats.clone());
        let far = Var::constant(batch.program_far.clone());
        let ratio = Var::constant(batch.program_ratio.clone());
        let mut x = self
            .program_encoder
            .forward_parts(p, &[&feats, &Var::constant(z.clone()), &far]);
        for _ in 0..self.cfg.program_steps {
            let m = if batch.program_src.is_empty() {
                Var::zeros(n, l)
            } else {
                let msg = &self.program_message;
                let pre = msg
                    .project_rows(p, &x, 0)
                    .gather_rows(&batch.program_dst)
                    .add(&msg.project_rows(p, &x, l).gather_rows(&batch.program_src));
                segment_mean(&msg.finish(p, &pre), &batch.program_dst, n)
            };
            let c = segment_mean(
                &x.gather_rows(&batch.member_nodes),
                &batch.member_cluster,
                batch.clusters,
            )
            .gather_rows(&batch.cluster)
            .mul_col(&ratio);
            x = x.add(&self.program_update.forward_parts(p, &[&x, &m, &c, &far]));
        }
        x
    }

    pub fn voxel_encoder(&self, p: &Bound, batch: &Batch, z: &Matrix) -> Var {
        let l = self.dims.latent;
        let feats = Var::constant(batch.voxel_feats.clone());
        let mut pe = Array2::zeros((batch.voxel_len(), l));
        for (k, &s) in batch.voxel_story.iter().enumerate() {
            for (c, v) in positional_encoding(s, l).into_iter().enumerate() {
                pe[[k, c]] = v;
            }
        }
        self.voxel_encoder
            .forward_parts(p, &[&feats, &Var::constant(z.clone())])
            .add(&Var::constant(pe))
    }

    /// One voxel message-passing step with relative displacements.
    pub fn voxel_step(&self, p: &Bound, batch: &Batch, v: &Var) -> Var {
        let n = batch.voxel_len();
        let l = self.dims.latent;
        let msgs = if batch.voxel_src.is_empty() {
            Var::zeros(n, l)
        } else {
            let msg = &self.voxel_message;
            let disp = Var::constant(batch.voxel_disp.clone());
            let pre = msg
                .project_rows(p, v, 0)
                .gather_rows(&batch.voxel_dst)
                .add(&msg.project_rows(p, v, l).gather_rows(&batch.voxel_src))
                .add(&msg.project_rows(p, &disp, 2 * l));
            segment_sum(&msg.finish(p, &pre), &batch.voxel_dst, n)
        };
        v.add(&self.voxel_update.forward_parts(p, &[v, &msgs]))
    }

    pub fn pointer(
        &self,
        p: &Bound,
        batch: &Batch,
        v: &Var,
        x: &Var,
        gumbel: &Matrix,
        hard: bool,
    ) -> PointerOut {
        let n = batch.voxel_len();
        let logits = self.mask.forward(p, v);
        let mut mask = logits
            .slice_cols(0, 1)
            .sub(&logits.slice_cols(1, 2))
            .sigmoid();
        let hx = self.w_x.forward(p, x).gather_rows(&batch.pair_program);
        let hv = self.w_v.forward(p, v).gather_rows(&batch.pair_voxel);
        let e = hx.add(&hv).tanh().matmul(p.var(self.theta));
        let perturbed = e
            .add(&Var::constant(gumbel.clone()))
            .scale(1.0 / self.cfg.temperature);
        let mut att = segment_softmax(&perturbed, &batch.pair_voxel, n);
        if hard {
            let onehot = segment_argmax_onehot(att.value(), &batch.pair_voxel, n);
            att = att.straight_through(onehot);
            let binary = mask.value().mapv(|m| if m >= 0.5 { 1.0 } else { 0.0 });
            mask = mask.straight_through(binary);
        }
        let ctx = x
            .gather_rows(&batch.pair_program)
            .mul_col(&att)
            .scatter_rows(&batch.pair_voxel, n);
        let v_next = v.add(&ctx.mul_col(&mask));
        PointerOut { mask, att, v_next }
    }

    /// Full generator pass: program GNN, voxel encoder, then voxel steps with
    /// pointer calls before the loop, after every `pointer_every` steps except
    /// the last, and once at the end.
    pub fn forward(&self, p: &Bound, batch: &Batch, noise: &Noise, hard: bool) -> GenOutput {
        assert_eq!(
            noise.gumbel.len(),
            self.cfg.pointer_calls(),
            "gumbel columns"
        );
        let x = self.program_gnn(p, batch, &noise.z_program);
        let mut v = self.voxel_encoder(p, batch, &noise.z_voxel);
        let mut snapshots = Vec::with_capacity(self.cfg.pointer_calls());
        let call = |v: &Var, snapshots: &mut Vec<Snapshot>| {
            let out = self.pointer(p, batch, v, &x, &noise.gumbel[snapshots.len()], hard);
            snapshots.push(Snapshot {
                mask: out.mask.value().clone(),
                att: out.att.value().clone(),
            });
            out
        };
        v = call(&v, &mut snapshots).v_next;
        for t in 0..self.cfg.voxel_steps {
            v = self.voxel_step(p, batch, &v);
            if self.cfg.pointer_after_step(t) {
                v = call(&v, &mut snapshots).v_next;
            }
        }
        let last = call(&v, &mut snapshots);
        GenOutput {
            mask: last.mask,
            att: last.att,
            program_embedding: x,
            voxel_embedding: last.v_next,
            snapshots,
            hard,
        }
    }

    /// Inference pass with frozen weights and freshly drawn noise.
    pub fn sample(&self, batch: &Batch, rng: &mut impl Rng, hard: bool) -> GenOutput {
        let _g = no_grad();
        let noise = Noise::sample(rng, batch, &self.dims, &self.cfg);
        self.forward(&self.store.bind_frozen(), batch, &noise, hard)
    }
}

/// Single-graph generator pass returning the final assignment.
pub fn generator_forward(
    pg: &ProgramGraph,
    vg: &VoxelGraph,
    params: &GeneratorParams,
    rng: &mut impl Rng,
    hard: bool,
) -> Result<Assignment> {
    let prepared = Prepared::new(pg, vg, &params.cfg)?;
    let batch = Batch::new(&[&prepared]);
    let out = params.sample(&batch, rng, hard);
    Ok(out.assignments(&batch).remove(0))
}
