//! Binary checkpoints: a JSON header followed by little-endian `f64` tensors.
//!
//! Layout: 8-byte magic, `u32` version, `u64` header length, header JSON,
//! then every tensor listed in the header in order, row-major.

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use voxgraph_autodiff::{Adam, Matrix, ParamStore};

use crate::config::{ModelConfig, TrainConfig};
use crate::error::{ModelError, Result};
use crate::train::Trainer;

pub const MAGIC: &[u8; 8] = b"VOXGCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorInfo {
    pub name: String,
    pub shape: [usize; 2],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Header {
    model: ModelConfig,
    train: TrainConfig,
    critic_steps: u64,
    generator_steps: u64,
    epoch: usize,
    adam_g_step: u64,
    adam_d_step: u64,
    tensors: Vec<TensorInfo>,
}

/// Full training state: weights, optimiser moments and counters.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub critic_steps: u64,
    pub generator_steps: u64,
    pub epoch: usize,
    pub adam_g_step: u64,
    pub adam_d_step: u64,
    pub tensors: Vec<(String, Matrix)>,
}

fn push_store(out: &mut Vec<(String, Matrix)>, store: &ParamStore) {
    for (name, m) in store.iter() {
        out.push((name.to_string(), m.clone()));
    }
}

fn push_adam(out: &mut Vec<(String, Matrix)>, prefix: &str, adam: &Adam, store: &ParamStore) {
    for ((name, _), m) in store.iter().zip(&adam.m) {
        out.push((format!("{prefix}.m.{name}"), m.clone()));
    }
    for ((name, _), v) in store.iter().zip(&adam.v) {
        out.push((format!("{prefix}.v.{name}"), v.clone()));
    }
}

impl Checkpoint {
    pub fn capture(t: &Trainer) -> Self {
        let mut tensors = Vec::new();
        push_store(&mut tensors, &t.generator.store);
        push_store(&mut tensors, &t.critic.store);
        push_adam(&mut tensors, "adam_g", &t.adam_g, &t.generator.store);
        push_adam(&mut tensors, "adam_d", &t.adam_d, &t.critic.store);
        Checkpoint {
            model: t.model,
            train: t.cfg,
            critic_steps: t.critic_steps,
            generator_steps: t.generator_steps,
            epoch: t.epoch,
            adam_g_step: t.adam_g.step,
            adam_d_step: t.adam_d.step,
            tensors,
        }
    }

    fn tensor(&self, name: &str) -> Result<&Matrix> {
        self.tensors
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| ModelError::Shape(format!("checkpoint has no tensor {name}")))
    }

    fn fill(&self, name: &str, dst: &mut Matrix) -> Result<()> {
        let src = self.tensor(name)?;
        if src.dim() != dst.dim() {
            return Err(ModelError::Shape(format!(
                "tensor {name} is {:?}, model expects {:?}",
                src.dim(),
                dst.dim()
            )));
        }
        dst.assign(src);
        Ok(())
    }

    fn restore_store(&self, store: &mut ParamStore) -> Result<()> {
        let names: Vec<String> = store.iter().map(|(n, _)| n.to_string()).collect();
        for (name, dst) in names.iter().zip(store.tensors_mut()) {
            self.fill(name, dst)?;
        }
        Ok(())
    }

    fn restore_adam(&self, prefix: &str, adam: &mut Adam, store: &ParamStore) -> Result<()> {
        for (((name, _), m), v) in store.iter().zip(&mut adam.m).zip(&mut adam.v) {
            self.fill(&format!("{prefix}.m.{name}"), m)?;
            self.fill(&format!("{prefix}.v.{name}"), v)?;
        }
        Ok(())
    }

    /// Copies weights, moments and counters into a trainer of the same layout.
    pub fn restore(&self, t: &mut Trainer) -> Result<()> {
        self.restore_store(&mut t.generator.store)?;
        self.restore_store(&mut t.critic.store)?;
        self.restore_adam("adam_g", &mut t.adam_g, &t.generator.store)?;
        self.restore_adam("adam_d", &mut t.adam_d, &t.critic.store)?;
        t.adam_g.step = self.adam_g_step;
        t.adam_d.step = self.adam_d_step;
        t.critic_steps = self.critic_steps;
        t.generator_steps = self.generator_steps;
        t.epoch = self.epoch;
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            model: self.model,
            train: self.train,
            critic_steps: self.critic_steps,
            generator_steps: self.generator_steps,
            epoch: self.epoch,
            adam_g_step: self.adam_g_step,
            adam_d_step: self.adam_d_step,
            tensors: self
                .tensors
                .iter()
                .map(|(name, m)| TensorInfo {
                    name: name.clone(),
                    shape: [m.nrows(), m.ncols()],
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header).expect("header serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        for (_, m) in &self.tensors {
            for v in m.iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err("not a checkpoint file".into());
        }
        let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if version != VERSION {
            return Err(format!("unsupported checkpoint version {version}"));
        }
        let len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
        let header: Header =
            serde_json::from_slice(r.take(len)?).map_err(|e| format!("bad header: {e}"))?;
        let mut tensors = Vec::with_capacity(header.tensors.len());
        for info in header.tensors {
            let [rows, cols] = info.shape;
            let n = rows.checked_mul(cols).ok_or("tensor too large")?;
            let raw = r.take(n.checked_mul(8).ok_or("tensor too large")?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let m = Array2::from_shape_vec((rows, cols), data).map_err(|e| e.to_string())?;
            tensors.push((info.name, m));
        }
        if r.pos != bytes.len() {
            return Err("trailing bytes after tensors".into());
        }
        Ok(Checkpoint {
            model: header.model,
            train: header.train,
            critic_steps: header.critic_steps,
            generator_steps: header.generator_steps,
            epoch: header.epoch,
            adam_g_step: header.adam_g_step,
            adam_d_step: header.adam_d_step,
            tensors,
        })
    }

    pub fn file_name(step: u64) -> String {
        format!("ckpt_{step}.bin")
    }

    pub fn path_in(dir: &Path, step: u64) -> PathBuf {
        dir.join(Self::file_name(step))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| ModelError::io(parent, e))?;
        }
        fs::write(path, self.to_bytes()).map_err(|e| ModelError::io(path, e))
    }

    /// Saves as `ckpt_{critic_steps}.bin` inside `dir`.
    pub fn save_in(&self, dir: &Path) -> Result<PathBuf> {
        let path = Self::path_in(dir, self.critic_steps);
        self.save(&path)?;
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| ModelError::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|msg| ModelError::Checkpoint {
            path: path.to_path_buf(),
            msg,
        })
    }

    /// Checkpoint with the most critic steps in `dir`, if any.
    pub fn latest_in(dir: &Path) -> Result<Option<PathBuf>> {
        let entries = match fs::read_dir(dir) {
            Ok(e) => e,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(ModelError::io(dir, e)),
        };
        let mut best: Option<(u64, PathBuf)> = None;
        for entry in entries {
            let path = entry.map_err(|e| ModelError::io(dir, e))?.path();
            let step = path.file_name().and_then(|n| n.to_str()).and_then(|n| {
                n.strip_prefix("ckpt_")?
                    .strip_suffix(".bin")?
                    .parse::<u64>()
                    .ok()
            });
            if let Some(s) = step {
                if best.as_ref().is_none_or(|(b, _)| s > *b) {
                    best = Some((s, path));
                }
            }
        }
        Ok(best.map(|(_, p)| p))
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| "truncated checkpoint".to_string())?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }
}
