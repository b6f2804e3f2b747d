use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::loss::LossConfig;
use crate::model::{CtaMode, ModelConfig, VariableBranch};

/// Everything that determines a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: ModelConfig,
    pub loss: LossConfig,
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub poly_power: f64,
    pub seed: u64,
    /// Training resolution; samples are resized to it.
    pub height: usize,
    pub width: usize,
    /// Random flip and rescale of every training sample.
    pub augment: bool,
    /// Stop after this many optimiser steps; 0 runs every epoch. The learning
    /// rate schedule always spans every epoch.
    pub max_steps: usize,
    /// Write a checkpoint every this many epochs; 0 only at the end.
    pub checkpoint_every: usize,
    /// Rescale gradients whose global L2 norm exceeds this; 0 disables.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            model: ModelConfig {
                channels: 16,
                ..ModelConfig::default()
            },
            loss: LossConfig::default(),
            epochs: 200,
            batch_size: 4,
            base_lr: 0.001,
            momentum: 0.9,
            weight_decay: 5e-4,
            poly_power: 0.9,
            seed: 0,
            height: 64,
            width: 64,
            augment: true,
            max_steps: 0,
            checkpoint_every: 0,
            clip_norm: 0.0,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean `{value}` for `{key}`"))),
    }
}

impl TrainConfig {
    /// Keys accepted by [`TrainConfig::set`], in serialisation order.
    pub const KEYS: &'static [&'static str] = &[
        "epochs",
        "batch_size",
        "base_lr",
        "momentum",
        "weight_decay",
        "poly_power",
        "seed",
        "height",
        "width",
        "augment",
        "max_steps",
        "checkpoint_every",
        "clip_norm",
        "in_channels",
        "channels",
        "lambda",
        "depth",
        "n_cus",
        "cta_mode",
        "variable",
        "keep_thresh",
        "min_kept",
        "bc_off",
        "am_off",
    ];

    /// Sets one field from its textual form. Also accepts the switches
    /// `cta_off`, `ca_mode` and `fcc_off` as shorthands for `cta_mode = off`,
    /// `cta_mode = plain` and `variable = scc`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "epochs" => self.epochs = parse(key, v)?,
            "batch_size" => self.batch_size = parse(key, v)?,
            "base_lr" => self.base_lr = parse(key, v)?,
            "momentum" => self.momentum = parse(key, v)?,
            "weight_decay" => self.weight_decay = parse(key, v)?,
            "poly_power" => self.poly_power = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "height" => self.height = parse(key, v)?,
            "width" => self.width = parse(key, v)?,
            "augment" => self.augment = parse_bool(key, v)?,
            "max_steps" => self.max_steps = parse(key, v)?,
            "checkpoint_every" => self.checkpoint_every = parse(key, v)?,
            "clip_norm" => self.clip_norm = parse(key, v)?,
            "in_channels" => self.model.in_channels = parse(key, v)?,
            "channels" => self.model.channels = parse(key, v)?,
            "lambda" => self.model.lambda = parse(key, v)?,
            "depth" => self.model.depth = parse(key, v)?,
            "n_cus" => self.model.n_cus = parse(key, v)?,
            "cta_mode" => {
                self.model.cta_mode = CtaMode::parse(v)
                    .ok_or_else(|| Error::Config(format!("unknown cta_mode `{v}`")))?
            }
            "variable" => {
                self.model.variable = VariableBranch::parse(v)
                    .ok_or_else(|| Error::Config(format!("unknown variable branch `{v}`")))?
            }
            "keep_thresh" => self.loss.keep_thresh = parse(key, v)?,
            "min_kept" => {
                let n: usize = parse(key, v)?;
                self.loss.min_kept = (n > 0).then_some(n);
            }
            "bc_off" => self.loss.bc_off = parse_bool(key, v)?,
            "am_off" => self.loss.am_off = parse_bool(key, v)?,
            "cta_off" => {
                if parse_bool(key, v)? {
                    self.model.cta_mode = CtaMode::Off;
                }
            }
            "ca_mode" => {
                if parse_bool(key, v)? {
                    self.model.cta_mode = CtaMode::Plain;
                }
            }
            "fcc_off" => {
                if parse_bool(key, v)? {
                    self.model.variable = VariableBranch::StandardConv;
                }
            }
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    /// Canonical `key = value` text; [`TrainConfig::from_text`] reads it back
    /// to an equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for key in Self::KEYS {
            let _ = writeln!(s, "{key} = {}", self.get(key));
        }
        s
    }

    fn get(&self, key: &str) -> String {
        match key {
            "epochs" => self.epochs.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "base_lr" => self.base_lr.to_string(),
            "momentum" => self.momentum.to_string(),
            "weight_decay" => self.weight_decay.to_string(),
            "poly_power" => self.poly_power.to_string(),
            "seed" => self.seed.to_string(),
            "height" => self.height.to_string(),
            "width" => self.width.to_string(),
            "augment" => self.augment.to_string(),
            "max_steps" => self.max_steps.to_string(),
            "checkpoint_every" => self.checkpoint_every.to_string(),
            "clip_norm" => self.clip_norm.to_string(),
            "in_channels" => self.model.in_channels.to_string(),
            "channels" => self.model.channels.to_string(),
            "lambda" => self.model.lambda.to_string(),
            "depth" => self.model.depth.to_string(),
            "n_cus" => self.model.n_cus.to_string(),
            "cta_mode" => self.model.cta_mode.name().to_string(),
            "variable" => self.model.variable.name().to_string(),
            "keep_thresh" => self.loss.keep_thresh.to_string(),
            "min_kept" => self.loss.min_kept.unwrap_or(0).to_string(),
            "bc_off" => self.loss.bc_off.to_string(),
            "am_off" => self.loss.am_off.to_string(),
            _ => unreachable!("every listed key has a getter"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        let positive = [
            ("base_lr", self.base_lr),
            ("poly_power", self.poly_power),
            ("keep_thresh", self.loss.keep_thresh),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!("momentum must lie in [0, 1), got {}", self.momentum)));
        }
        if !(self.clip_norm >= 0.0 && self.clip_norm.is_finite()) {
            return Err(Error::Config("clip_norm must be non-negative".into()));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config("weight_decay must be non-negative".into()));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config("epochs and batch_size must be at least 1".into()));
        }
        let m = self.model.size_multiple();
        if self.height % m != 0 || self.width % m != 0 || self.height == 0 || self.width == 0 {
            return Err(Error::Config(format!(
                "training size {}x{} must be a positive multiple of {m}",
                self.height, self.width
            )));
        }
        Ok(())
    }
}
