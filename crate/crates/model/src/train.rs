//! WGAN-GP training: gradient penalty, alternating updates, logs and
//! checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use voxgraph_autodiff::{grad, no_grad, segment_sum, Adam, AdamConfig, Bound, Matrix, Var};
use voxgraph_core::metrics::score_design;
use voxgraph_core::{Design, SynthRecord, LABEL_DIM};

use crate::checkpoint::Checkpoint;
use crate::config::{ModelConfig, TrainConfig};
use crate::critic::{Critic, CriticParams};
use crate::error::{ModelError, Result};
use crate::generator::{GeneratorParams, Noise};
use crate::graph::{Batch, Prepared};

/// One-hot label rows of a labelled record.
pub fn real_labels(record: &SynthRecord) -> Matrix {
    let rows = record.design().label_rows();
    Array2::from_shape_fn((rows.len(), LABEL_DIM), |(i, j)| rows[i][j])
}

/// `λ · mean_g (‖∇_x D(x̂_g)‖ − 1)²` with `x̂ = ε·real + (1 − ε)·fake`, one ε
/// per graph. The result stays differentiable in the critic parameters.
pub fn gradient_penalty<C: Critic>(
    critic: &C,
    p: &Bound,
    batch: &Batch,
    real: &Matrix,
    fake: &Matrix,
    eps: &[f64],
    lambda: f64,
) -> Result<(Var, Vec<f64>)> {
    if real.dim() != fake.dim() || real.nrows() != batch.voxel_len() {
        return Err(ModelError::Shape(format!(
            "real {:?} and fake {:?} labels for {} voxels",
            real.dim(),
            fake.dim(),
            batch.voxel_len()
        )));
    }
    if eps.len() != batch.graphs {
        return Err(ModelError::Shape(format!(
            "{} interpolation weights for {} graphs",
            eps.len(),
            batch.graphs
        )));
    }
    let mut interp = fake.clone();
    for (k, mut row) in interp.rows_mut().into_iter().enumerate() {
        let e = eps[batch.voxel_graph[k]];
        row.zip_mut_with(&real.row(k), |f, &r| *f = e * r + (1.0 - e) * *f);
    }
    let x = Var::param(interp);
    let (g, s) = critic.score(p, batch, &x);
    let out = g.add(&s).scale(0.5).sum();
    let dx = grad(&out, std::slice::from_ref(&x), true).remove(0);
    let norms = segment_sum(&dx.square().sum_cols(), &batch.voxel_graph, batch.graphs).sqrt();
    let values: Vec<f64> = norms.value().iter().copied().collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(ModelError::NonFinite {
            what: "gradient norm".into(),
            step: 0,
        });
    }
    let penalty = norms.add_scalar(-1.0).square().mean().scale(lambda);
    Ok((penalty, values))
}

/// Mean of `(o_global + o_story) / 2` over the batch.
fn critic_value<C: Critic>(critic: &C, p: &Bound, batch: &Batch, labels: &Var) -> Var {
    let (g, s) = critic.score(p, batch, labels);
    g.add(&s).scale(0.5).mean()
}

/// A training record with its network inputs and real labels.
#[derive(Debug, Clone)]
pub struct TrainItem {
    pub record: SynthRecord,
    pub prepared: Prepared,
    pub real: Matrix,
}

impl TrainItem {
    pub fn new(record: SynthRecord, cfg: &ModelConfig) -> Result<Self> {
        let prepared = Prepared::new(&record.program_graph, &record.voxel_graph, &cfg.generator)?;
        let real = real_labels(&record);
        Ok(TrainItem {
            record,
            prepared,
            real,
        })
    }
}

pub fn batch_of(items: &[&TrainItem]) -> Batch {
    let prepared: Vec<&Prepared> = items.iter().map(|i| &i.prepared).collect();
    Batch::new(&prepared)
}

fn stack_real(items: &[&TrainItem]) -> Matrix {
    let rows: usize = items.iter().map(|i| i.real.nrows()).sum();
    let mut out = Array2::zeros((rows, LABEL_DIM));
    let mut r = 0;
    for i in items {
        let n = i.real.nrows();
        out.slice_mut(ndarray::s![r..r + n, ..]).assign(&i.real);
        r += n;
    }
    out
}

/// Hard samples for each item, `per_item` times, in order.
pub fn sample_designs(
    gen: &GeneratorParams,
    items: &[&TrainItem],
    per_item: usize,
    rng: &mut impl Rng,
) -> Result<Vec<Design>> {
    let batch = batch_of(items);
    let mut designs = Vec::with_capacity(items.len() * per_item);
    for _ in 0..per_item {
        let out = gen.sample(&batch, rng, true);
        for (item, a) in items.iter().zip(out.assignments(&batch)) {
            let rec = &item.record;
            designs.push(Design::from_assignment(
                &rec.voxel_graph,
                &rec.program_graph,
                &a,
            )?);
        }
    }
    Ok(designs)
}

/// Mean (Con, FAR distance, TPR accuracy) over designs, each against its own
/// program graph.
pub fn mean_scores(designs: &[Design]) -> Result<(f64, f64, f64)> {
    let n = designs.len().max(1) as f64;
    let (mut con, mut far, mut tpr) = (0.0, 0.0, 0.0);
    for d in designs {
        let s = score_design(d)?;
        con += s.con;
        far += s.far_dist;
        tpr += s.tpr_acc;
    }
    Ok((con / n, far / n, tpr / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Critic,
    Generator,
}

impl StepKind {
    pub fn as_str(self) -> &'static str {
        match self {
            StepKind::Critic => "critic",
            StepKind::Generator => "generator",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossRow {
    /// Critic steps completed when the row was written.
    pub step: u64,
    pub epoch: usize,
    pub kind: StepKind,
    pub loss: f64,
    /// Gradient penalty; zero for generator rows.
    pub gp: f64,
    /// `E[D(real)] − E[D(fake)]`; zero for generator rows.
    pub wasserstein: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub critic_steps: u64,
    pub generator_steps: u64,
    pub con: f64,
    pub far_dist: f64,
    pub tpr_acc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub losses: Vec<LossRow>,
    pub metrics: Vec<MetricsRow>,
    pub checkpoints: Vec<PathBuf>,
    pub critic_steps: u64,
    pub generator_steps: u64,
}

/// Number of records evaluated per epoch when no holdout is configured.
pub const EVAL_FALLBACK: usize = 8;

const EPOCH_STREAM: u64 = 1 << 40;
const EVAL_STREAM: u64 = 1 << 41;

/// Generator, critic and optimiser state with step counters.
#[derive(Debug, Clone)]
pub struct Trainer {
    pub model: ModelConfig,
    pub cfg: TrainConfig,
    pub generator: GeneratorParams,
    pub critic: CriticParams,
    pub adam_g: Adam,
    pub adam_d: Adam,
    pub critic_steps: u64,
    pub generator_steps: u64,
    pub epoch: usize,
}

impl Trainer {
    pub fn new(model: ModelConfig, cfg: TrainConfig) -> Result<Self> {
        model.validate()?;
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let generator = GeneratorParams::new(&model, &mut rng);
        let critic = CriticParams::new(&model, &mut rng);
        let adam_g = Adam::new(adam_config(&cfg, cfg.lr_g), &generator.store);
        let adam_d = Adam::new(adam_config(&cfg, cfg.lr_d), &critic.store);
        Ok(Trainer {
            model,
            cfg,
            generator,
            critic,
            adam_g,
            adam_d,
            critic_steps: 0,
            generator_steps: 0,
            epoch: 0,
        })
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let mut t = Trainer::new(ckpt.model, ckpt.train)?;
        ckpt.restore(&mut t)?;
        Ok(t)
    }

    pub fn snapshot(&self) -> Checkpoint {
        Checkpoint::capture(self)
    }

    /// Randomness of critic step `step` (and the generator step following it).
    fn step_rng(&self, step: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(step);
        rng
    }

    /// One critic update on `items`; the generator runs with soft Gumbel
    /// samples and frozen weights.
    pub fn critic_step(&mut self, items: &[&TrainItem]) -> Result<LossRow> {
        let step = self.critic_steps;
        let mut rng = self.step_rng(step);
        let batch = batch_of(items);
        let fake = {
            let _g = no_grad();
            let noise = Noise::sample(&mut rng, &batch, &self.generator.dims, &self.generator.cfg);
            let p = self.generator.store.bind_frozen();
            let out = self.generator.forward(&p, &batch, &noise, false);
            out.labels(&batch).value().clone()
        };
        let real = stack_real(items);
        let eps: Vec<f64> = (0..batch.graphs).map(|_| rng.random::<f64>()).collect();

        let p = self.critic.store.bind();
        let d_real = critic_value(&self.critic, &p, &batch, &Var::constant(real.clone()));
        let d_fake = critic_value(&self.critic, &p, &batch, &Var::constant(fake.clone()));
        let (gp, _) = gradient_penalty(
            &self.critic,
            &p,
            &batch,
            &real,
            &fake,
            &eps,
            self.cfg.lambda_gp,
        )
        .map_err(|e| at_step(e, step))?;
        let loss = d_fake.sub(&d_real).add(&gp);
        let row = LossRow {
            step: step + 1,
            epoch: self.epoch,
            kind: StepKind::Critic,
            loss: loss.scalar(),
            gp: gp.scalar(),
            wasserstein: d_real.scalar() - d_fake.scalar(),
        };
        if !row.loss.is_finite() || !row.gp.is_finite() {
            return Err(ModelError::NonFinite {
                what: "critic loss".into(),
                step,
            });
        }
        let grads = gradients(&loss, &p);
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite {
                what: "critic gradient".into(),
                step,
            });
        }
        self.adam_d.update(&mut self.critic.store, &grads);
        self.critic_steps += 1;
        Ok(row)
    }

    /// One generator update against the current critic.
    pub fn generator_step(&mut self, items: &[&TrainItem]) -> Result<LossRow> {
        let step = self.critic_steps;
        let mut rng = self.step_rng(step);
        // Skip the critic step's draws so generator noise is fresh.
        rng.set_word_pos(1 << 32);
        let batch = batch_of(items);
        let noise = Noise::sample(&mut rng, &batch, &self.generator.dims, &self.generator.cfg);
        let p = self.generator.store.bind();
        let out = self.generator.forward(&p, &batch, &noise, false);
        let labels = out.labels(&batch);
        let frozen = self.critic.store.bind_frozen();
        let loss = critic_value(&self.critic, &frozen, &batch, &labels).neg();
        let value = loss.scalar();
        if !value.is_finite() {
            return Err(ModelError::NonFinite {
                what: "generator loss".into(),
                step,
            });
        }
        let grads = gradients(&loss, &p);
        if grads.iter().flatten().any(|g| !g.is_finite()) {
            return Err(ModelError::NonFinite {
                what: "generator gradient".into(),
                step,
            });
        }
        self.adam_g.update(&mut self.generator.store, &grads);
        self.generator_steps += 1;
        Ok(LossRow {
            step,
            epoch: self.epoch,
            kind: StepKind::Generator,
            loss: value,
            gp: 0.0,
            wasserstein: 0.0,
        })
    }

    /// Critic step, plus a generator step after every `n_critic` critic steps.
    pub fn step(&mut self, items: &[&TrainItem]) -> Result<Vec<LossRow>> {
        let mut rows = vec![self.critic_step(items)?];
        if self.critic_steps.is_multiple_of(self.cfg.n_critic as u64) {
            rows.push(self.generator_step(items)?);
        }
        Ok(rows)
    }

    /// Con, FAR distance and TPR accuracy of hard samples, one per item.
    pub fn evaluate(&self, items: &[&TrainItem]) -> Result<(f64, f64, f64)> {
        let mut rng = self.step_rng(EVAL_STREAM + self.epoch as u64);
        let designs = sample_designs(&self.generator, items, 1, &mut rng)?;
        mean_scores(&designs)
    }

    fn done(&self) -> bool {
        self.cfg
            .max_critic_steps
            .is_some_and(|m| self.critic_steps >= m)
    }

    /// Runs the configured epochs from the current counters. With `out`, writes
    /// `losses.csv`, `metrics.csv` and checkpoints there. On a non-finite loss
    /// training stops with an error and earlier checkpoints are kept.
    pub fn train(&mut self, data: &[TrainItem], out: Option<&Path>) -> Result<TrainReport> {
        if data.is_empty() {
            return Err(ModelError::config("data", "no training records"));
        }
        let holdout = self.cfg.holdout.min(data.len().saturating_sub(1));
        let (eval, train) = data.split_at(holdout);
        let eval: Vec<&TrainItem> = if eval.is_empty() {
            train.iter().take(EVAL_FALLBACK).collect()
        } else {
            eval.iter().collect()
        };
        let mut logs = match out {
            Some(dir) => Some(Logs::open(dir, self.critic_steps > 0)?),
            None => None,
        };
        let mut report = TrainReport {
            losses: Vec::new(),
            metrics: Vec::new(),
            checkpoints: Vec::new(),
            critic_steps: self.critic_steps,
            generator_steps: self.generator_steps,
        };
        let batch = self.cfg.batch.min(train.len());
        let per_epoch = train.len().div_ceil(batch) as u64;
        // Resume mid-epoch by skipping the batches already done.
        let mut skip = self
            .critic_steps
            .saturating_sub(self.epoch as u64 * per_epoch);
        while self.epoch < self.cfg.epochs && !self.done() {
            let mut order: Vec<usize> = (0..train.len()).collect();
            let mut rng = self.step_rng(EPOCH_STREAM + self.epoch as u64);
            order.shuffle(&mut rng);
            for chunk in order.chunks(batch) {
                if skip > 0 {
                    skip -= 1;
                    continue;
                }
                if self.done() {
                    break;
                }
                let items: Vec<&TrainItem> = chunk.iter().map(|&i| &train[i]).collect();
                let rows = self.step(&items)?;
                if let Some(l) = logs.as_mut() {
                    for r in &rows {
                        l.loss(r)?;
                    }
                }
                report.losses.extend(rows);
                if let Some(dir) = out {
                    if self.critic_steps.is_multiple_of(self.cfg.checkpoint_every) {
                        report.checkpoints.push(self.snapshot().save_in(dir)?);
                    }
                }
            }
            if self.done() && !self.critic_steps.is_multiple_of(per_epoch) {
                break;
            }
            let (con, far_dist, tpr_acc) = self.evaluate(&eval)?;
            let row = MetricsRow {
                epoch: self.epoch,
                critic_steps: self.critic_steps,
                generator_steps: self.generator_steps,
                con,
                far_dist,
                tpr_acc,
            };
            if let Some(l) = logs.as_mut() {
                l.metrics(&row)?;
            }
            report.metrics.push(row);
            self.epoch += 1;
        }
        if let Some(dir) = out {
            let last = Checkpoint::path_in(dir, self.critic_steps);
            if report.checkpoints.last() != Some(&last) {
                report.checkpoints.push(self.snapshot().save_in(dir)?);
            }
        }
        report.critic_steps = self.critic_steps;
        report.generator_steps = self.generator_steps;
        Ok(report)
    }
}

fn adam_config(cfg: &TrainConfig, lr: f64) -> AdamConfig {
    AdamConfig {
        lr,
        beta1: cfg.beta1,
        beta2: cfg.beta2,
        ..AdamConfig::default()
    }
}

fn gradients(loss: &Var, p: &Bound) -> Vec<Matrix> {
    grad(loss, p.vars(), false)
        .into_iter()
        .map(|g| g.value().clone())
        .collect()
}

fn at_step(e: ModelError, step: u64) -> ModelError {
    match e {
        ModelError::NonFinite { what, .. } => ModelError::NonFinite { what, step },
        other => other,
    }
}

pub const LOSSES_FILE: &str = "losses.csv";
pub const METRICS_FILE: &str = "metrics.csv";

struct Logs {
    losses: (PathBuf, fs::File),
    metrics: (PathBuf, fs::File),
}

impl Logs {
    fn open(dir: &Path, append: bool) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| ModelError::io(dir, e))?;
        let open = |name: &str, header: &str| -> Result<(PathBuf, fs::File)> {
            let path = dir.join(name);
            let fresh = !append || !path.exists();
            let mut f = fs::OpenOptions::new()
                .create(true)
                .append(!fresh)
                .write(true)
                .truncate(fresh)
                .open(&path)
                .map_err(|e| ModelError::io(&path, e))?;
            if fresh {
                writeln!(f, "{header}").map_err(|e| ModelError::io(&path, e))?;
            }
            Ok((path, f))
        };
        Ok(Logs {
            losses: open(LOSSES_FILE, "step,epoch,kind,loss,gp,wasserstein")?,
            metrics: open(
                METRICS_FILE,
                "epoch,critic_steps,generator_steps,con,far_dist,tpr_acc",
            )?,
        })
    }

    fn loss(&mut self, r: &LossRow) -> Result<()> {
        let (path, f) = &mut self.losses;
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.step,
            r.epoch,
            r.kind.as_str(),
            r.loss,
            r.gp,
            r.wasserstein
        )
        .map_err(|e| ModelError::io(&*path, e))
    }

    fn metrics(&mut self, r: &MetricsRow) -> Result<()> {
        let (path, f) = &mut self.metrics;
        writeln!(
            f,
            "{},{},{},{},{},{}",
            r.epoch, r.critic_steps, r.generator_steps, r.con, r.far_dist, r.tpr_acc
        )
        .map_err(|e| ModelError::io(&*path, e))
    }
}
