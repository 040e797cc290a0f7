use serde::{Deserialize, Serialize};
use zsgan_numeric::{AdamConfig, StepDecay};

use crate::error::{Error, Result};
use crate::models::ModelDims;

/// Hyperparameters of adversarial training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Weight of semantic inference (inference loss and the feature-level game).
    pub lambda1: f64,
    /// Weight of the matched/mismatched correlation loss.
    pub lambda2: f64,
    /// Weight of the category log-likelihood terms.
    pub lambda_cat: f64,
    /// Outlier threshold slack: keep cosines `>= max - mu * (max - min)`.
    pub mu: f64,
    /// Noise draws per condition.
    pub noise_set_size: usize,
    pub z_dim: usize,
    pub epochs: usize,
    /// Optional cap on total optimizer steps.
    pub max_steps: Option<u64>,
    pub base_lr: f64,
    pub lr_decay_every: usize,
    pub lr_decay_factor: f64,
    pub batch_size: usize,
    /// Mismatched embeddings scored per real row.
    pub mismatch_set_size: usize,
    pub g_hidden: usize,
    pub r_hidden: usize,
    pub d_hidden1: usize,
    pub d_hidden2: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    /// Epochs between checkpoints; 0 keeps only the final one.
    pub checkpoint_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            lambda2: 1.0,
            lambda_cat: 1.0,
            mu: 0.5,
            noise_set_size: 30,
            z_dim: 100,
            epochs: 300,
            max_steps: None,
            base_lr: 0.01,
            lr_decay_every: 50,
            lr_decay_factor: 0.5,
            batch_size: 64,
            mismatch_set_size: 4,
            g_hidden: 256,
            r_hidden: 256,
            d_hidden1: 256,
            d_hidden2: 128,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            checkpoint_every: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2), ("lambda_cat", self.lambda_cat), ("mu", self.mu)] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} must be a finite value >= 0, got {v}"));
            }
        }
        if self.noise_set_size < 2 {
            return bad(format!(
                "noise_set_size must be >= 2 for the cosine range, got {}",
                self.noise_set_size
            ));
        }
        if !(self.base_lr > 0.0) || !self.base_lr.is_finite() {
            return bad(format!("base_lr must be positive, got {}", self.base_lr));
        }
        if self.lr_decay_every == 0 || !(self.lr_decay_factor > 0.0 && self.lr_decay_factor <= 1.0) {
            return bad("lr_decay_every must be >= 1 and lr_decay_factor in (0, 1]".into());
        }
        for (name, v) in [
            ("z_dim", self.z_dim),
            ("batch_size", self.batch_size),
            ("mismatch_set_size", self.mismatch_set_size),
            ("g_hidden", self.g_hidden),
            ("r_hidden", self.r_hidden),
            ("d_hidden1", self.d_hidden1),
            ("d_hidden2", self.d_hidden2),
        ] {
            if v == 0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) || !(self.adam_eps > 0.0) {
            return bad("adam betas must lie in [0, 1) and eps must be positive".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }

    pub fn schedule(&self) -> StepDecay {
        StepDecay {
            base_lr: self.base_lr,
            every: self.lr_decay_every,
            factor: self.lr_decay_factor,
        }
    }

    pub fn model_dims(&self, d_v: usize, d_e: usize, num_seen: usize) -> ModelDims {
        ModelDims {
            z_dim: self.z_dim,
            d_e,
            d_v,
            num_seen,
            g_hidden: self.g_hidden,
            r_hidden: self.r_hidden,
            d_hidden1: self.d_hidden1,
            d_hidden2: self.d_hidden2,
        }
    }
}

/// Loss-weight settings of the ablation grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    /// Plain matching-aware conditional GAN.
    CganBaseline,
    /// Semantic inference and category terms only.
    PlusInf,
    /// Correlation term only.
    PlusCo,
    Full,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [Ablation::CganBaseline, Ablation::PlusInf, Ablation::PlusCo, Ablation::Full];

    pub fn tag(self) -> &'static str {
        match self {
            Ablation::CganBaseline => "cgan-baseline",
            Ablation::PlusInf => "+inf",
            Ablation::PlusCo => "+co",
            Ablation::Full => "full",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.tag() == s || serde_plain(a) == s)
            .ok_or_else(|| Error::Config(format!("unknown ablation `{s}`")))
    }

    /// Sets the loss weights for this row of the grid, starting from `base`.
    /// Enabled weights keep their configured value.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        let mut cfg = base.clone();
        let (inf, co) = match self {
            Ablation::CganBaseline => (false, false),
            Ablation::PlusInf => (true, false),
            Ablation::PlusCo => (false, true),
            Ablation::Full => (true, true),
        };
        if !inf {
            cfg.lambda1 = 0.0;
            cfg.lambda_cat = 0.0;
        }
        if !co {
            cfg.lambda2 = 0.0;
        }
        cfg
    }
}

fn serde_plain(a: &Ablation) -> &'static str {
    match a {
        Ablation::CganBaseline => "cgan-baseline",
        Ablation::PlusInf => "plus-inf",
        Ablation::PlusCo => "plus-co",
        Ablation::Full => "full",
    }
}
