use std::fmt::Write as _;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub batch_size: usize,
    pub max_steps: usize,
    /// Multiplicative learning-rate factor applied once per epoch.
    pub lr_decay: f64,
    pub seed: u64,
    /// Evaluate on the training set every this many steps (0 = never).
    pub eval_every: usize,
    /// Global L2 gradient-norm cap.
    pub clip_norm: f64,
    /// Stop once a periodic evaluation reaches this pooled F1.
    pub target_f1: Option<f64>,
    /// Write a checkpoint every this many steps (0 = only at the end).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: 0.03,
            momentum: 0.9,
            weight_decay: 1e-4,
            batch_size: 8,
            max_steps: 2000,
            lr_decay: 0.95,
            seed: 0,
            eval_every: 100,
            clip_norm: 5.0,
            target_f1: None,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    /// Defaults for laptop-sized corpora. With a few dozen sequences an epoch
    /// is only a handful of steps, so the per-epoch decay is much gentler.
    pub fn desk() -> Self {
        TrainConfig {
            lr_decay: 0.995,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config(format!("lr0 must be positive, got {}", self.lr0)));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::config(format!("momentum must be in [0, 1), got {}", self.momentum)));
        }
        if !(self.weight_decay >= 0.0) || !(self.lr_decay > 0.0) || !(self.clip_norm > 0.0) {
            return Err(Error::config("weight_decay must be >= 0, lr_decay and clip_norm > 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        Ok(())
    }

    /// Learning rate during `epoch` (0-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.lr0 * self.lr_decay.powi(epoch as i32)
    }

    /// Applies one `key = value` setting; `Ok(false)` for keys this type does
    /// not own.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let float = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::config(format!("{key} expects a number, got {v:?}")))
        };
        let int = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::config(format!("{key} expects a non-negative integer, got {v:?}")))
        };
        match key {
            "lr0" | "lr" => self.lr0 = float(value)?,
            "momentum" => self.momentum = float(value)?,
            "weight_decay" => self.weight_decay = float(value)?,
            "batch_size" => self.batch_size = int(value)?,
            "max_steps" => self.max_steps = int(value)?,
            "lr_decay" => self.lr_decay = float(value)?,
            "train_seed" => {
                self.seed = value
                    .parse()
                    .map_err(|_| Error::config(format!("train_seed expects an unsigned integer, got {value:?}")))?
            }
            "eval_every" => self.eval_every = int(value)?,
            "clip_norm" => self.clip_norm = float(value)?,
            "target_f1" => self.target_f1 = if value == "none" { None } else { Some(float(value)?) },
            "checkpoint_every" => self.checkpoint_every = int(value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "lr0 = {}", self.lr0);
        let _ = writeln!(s, "momentum = {}", self.momentum);
        let _ = writeln!(s, "weight_decay = {}", self.weight_decay);
        let _ = writeln!(s, "batch_size = {}", self.batch_size);
        let _ = writeln!(s, "max_steps = {}", self.max_steps);
        let _ = writeln!(s, "lr_decay = {}", self.lr_decay);
        let _ = writeln!(s, "train_seed = {}", self.seed);
        let _ = writeln!(s, "eval_every = {}", self.eval_every);
        let _ = writeln!(s, "clip_norm = {}", self.clip_norm);
        let _ = writeln!(s, "target_f1 = {}", self.target_f1.map_or("none".into(), |f| f.to_string()));
        let _ = writeln!(s, "checkpoint_every = {}", self.checkpoint_every);
        s
    }
}
