use serde::{Deserialize, Serialize};

use crate::error::{ModelError, Result};

/// Layer widths. Defaults follow the published model; tests shrink them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelDims {
    pub latent: usize,
    pub noise: usize,
    pub mask_hidden: usize,
    /// Width of each critic encoder; the critic state is twice this.
    pub critic_encoder: usize,
    pub decoder_hidden: usize,
}

impl Default for ModelDims {
    fn default() -> Self {
        ModelDims {
            latent: 128,
            noise: 32,
            mask_hidden: 64,
            critic_encoder: 128,
            decoder_hidden: 128,
        }
    }
}

impl ModelDims {
    pub fn critic_width(&self) -> usize {
        2 * self.critic_encoder
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("latent", self.latent),
            ("noise", self.noise),
            ("mask_hidden", self.mask_hidden),
            ("critic_encoder", self.critic_encoder),
            ("decoder_hidden", self.decoder_hidden),
        ] {
            if v == 0 {
                return Err(ModelError::config(
                    format!("dims.{name}"),
                    "must be positive",
                ));
            }
        }
        if !self.latent.is_multiple_of(2) {
            return Err(ModelError::config(
                "dims.latent",
                "positional encoding needs an even width",
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenConfig {
    pub program_steps: usize,
    pub voxel_steps: usize,
    pub pointer_every: usize,
    pub temperature: f64,
    pub hard_inference: bool,
    /// FAR inputs are divided by this before entering the network.
    pub far_scale: f64,
    /// Per-axis normalisation of voxel sizes and positions, meters.
    pub site_scale: [f64; 3],
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            program_steps: 4,
            voxel_steps: 12,
            pointer_every: 2,
            temperature: 1.0,
            hard_inference: true,
            far_scale: 10.0,
            site_scale: [40.0, 40.0, 50.0],
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.voxel_steps == 0 {
            return Err(ModelError::config(
                "generator.voxel_steps",
                "must be positive",
            ));
        }
        if self.pointer_every == 0 || self.pointer_every > self.voxel_steps {
            return Err(ModelError::config(
                "generator.pointer_every",
                "must lie in [1, voxel_steps]",
            ));
        }
        if !(self.temperature.is_finite() && self.temperature > 0.0) {
            return Err(ModelError::config(
                "generator.temperature",
                "must be positive",
            ));
        }
        if !(self.far_scale.is_finite() && self.far_scale > 0.0) {
            return Err(ModelError::config(
                "generator.far_scale",
                "must be positive",
            ));
        }
        if !self.site_scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(ModelError::config(
                "generator.site_scale",
                "must be positive",
            ));
        }
        Ok(())
    }

    /// Whether a pointer call follows voxel message step `t` (0-based).
    pub fn pointer_after_step(&self, t: usize) -> bool {
        (t + 1).is_multiple_of(self.pointer_every) && t + 1 < self.voxel_steps
    }

    /// Pointer calls per forward pass: one before the loop, the in-loop
    /// calls, and the final one.
    pub fn pointer_calls(&self) -> usize {
        2 + (0..self.voxel_steps)
            .filter(|&t| self.pointer_after_step(t))
            .count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Sum,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CriticConfig {
    pub steps: usize,
    pub pooling: Pooling,
    /// Squash decoder outputs with a sigmoid.
    pub sigmoid: bool,
}

impl Default for CriticConfig {
    fn default() -> Self {
        CriticConfig {
            steps: 12,
            pooling: Pooling::Sum,
            sigmoid: false,
        }
    }
}

/// Everything needed to rebuild the networks from a checkpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub dims: ModelDims,
    pub generator: GenConfig,
    pub critic: CriticConfig,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        self.dims.validate()?;
        self.generator.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lambda_gp: f64,
    pub lr_g: f64,
    pub lr_d: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub batch: usize,
    pub n_critic: usize,
    pub epochs: usize,
    /// Stop after this many critic steps even if epochs remain.
    pub max_critic_steps: Option<u64>,
    /// Write a checkpoint every this many critic steps (and always at the end).
    pub checkpoint_every: u64,
    /// Records kept out of training and scored after every epoch.
    pub holdout: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda_gp: 10.0,
            lr_g: 1e-4,
            lr_d: 1e-4,
            beta1: 0.5,
            beta2: 0.999,
            batch: 8,
            n_critic: 5,
            epochs: 50,
            max_critic_steps: None,
            checkpoint_every: 500,
            holdout: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda_gp", self.lambda_gp),
            ("lr_g", self.lr_g),
            ("lr_d", self.lr_d),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::config(
                    format!("train.{name}"),
                    "must be positive",
                ));
            }
        }
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(ModelError::config(
                    format!("train.{name}"),
                    "must lie in [0, 1)",
                ));
            }
        }
        if self.batch == 0 || self.n_critic == 0 || self.epochs == 0 || self.checkpoint_every == 0 {
            return Err(ModelError::config(
                "train",
                "batch, n_critic, epochs and checkpoint_every must be positive",
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_schedule_calls_pointer_seven_times() {
        assert_eq!(GenConfig::default().pointer_calls(), 7);
        let every_step = GenConfig {
            pointer_every: 1,
            ..GenConfig::default()
        };
        assert_eq!(every_step.pointer_calls(), 13);
        let once = GenConfig {
            pointer_every: 12,
            ..GenConfig::default()
        };
        assert_eq!(once.pointer_calls(), 2);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let bad = GenConfig {
            temperature: 0.0,
            ..GenConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            n_critic: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = ModelDims {
            latent: 7,
            ..ModelDims::default()
        };
        assert!(bad.validate().is_err());
    }
}
