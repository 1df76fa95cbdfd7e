//! Flat `key = value` configuration shared by config files and checkpoints.
//!
//! One pair per line, `#` starts a comment, unknown keys are rejected.
//! Missing keys keep their defaults.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::backbone::{BackboneConfig, EncodingMode};
use crate::error::{Error, Result};
use crate::losses::LossWeights;
use crate::resample::{output_size, Direction, ResampleMethod, ScalePair};

/// Smallest LR side a training patch may shrink to.
pub const MIN_LR_SIDE: usize = 8;

/// What replaces the discarded latent when inverting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LatentMode {
    Zero,
    Gaussian,
}

impl LatentMode {
    pub fn name(self) -> &'static str {
        match self {
            Self::Zero => "zero",
            Self::Gaussian => "gaussian",
        }
    }
}

impl FromStr for LatentMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "zero" => Ok(Self::Zero),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(Error::Config(format!("unknown latent mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub backbone: BackboneConfig,
    pub batch_size: usize,
    pub patch_size: usize,
    pub iterations: u64,
    pub base_lr: f64,
    pub lr_halving_period: u64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Independent horizontal and vertical scale draws.
    pub asymmetric: bool,
    pub seed: u64,
    pub weights: LossWeights,
    /// Used for channel splitting and for the LR round trip alike.
    pub method: ResampleMethod,
    pub channel_split: bool,
    pub latent: LatentMode,
    pub hflip: bool,
    /// Global L2 norm bound on gradients; 0 disables clipping.
    pub grad_clip: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            backbone: BackboneConfig::default(),
            batch_size: 4,
            patch_size: 48,
            iterations: 1000,
            base_lr: 2e-4,
            lr_halving_period: 500,
            scale_min: 1.0,
            scale_max: 4.0,
            asymmetric: false,
            seed: 0,
            weights: LossWeights::default(),
            method: ResampleMethod::Nearest,
            channel_split: true,
            latent: LatentMode::Zero,
            hflip: true,
            grad_clip: 5.0,
        }
    }
}

pub const KEYS: &[&str] = &[
    "num_blocks",
    "atrous_layers",
    "feature_width",
    "clamp",
    "use_atrous",
    "encoding_mode",
    "leaky_slope",
    "batch_size",
    "patch_size",
    "iterations",
    "base_lr",
    "lr_halving_period",
    "scale_min",
    "scale_max",
    "asymmetric",
    "seed",
    "weight_r",
    "weight_g",
    "weight_d",
    "weight_i",
    "method",
    "channel_split",
    "latent",
    "hflip",
    "grad_clip",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let b = &mut self.backbone;
        match key {
            "num_blocks" => b.num_blocks = parse(key, value)?,
            "atrous_layers" => b.atrous_layers = parse(key, value)?,
            "feature_width" => b.feature_width = parse(key, value)?,
            "clamp" => b.clamp = parse(key, value)?,
            "use_atrous" => b.use_atrous = parse_bool(key, value)?,
            "encoding_mode" => b.encoding_mode = value.parse::<EncodingMode>()?,
            "leaky_slope" => b.leaky_slope = parse(key, value)?,
            "batch_size" => self.batch_size = parse(key, value)?,
            "patch_size" => self.patch_size = parse(key, value)?,
            "iterations" => self.iterations = parse(key, value)?,
            "base_lr" => self.base_lr = parse(key, value)?,
            "lr_halving_period" => self.lr_halving_period = parse(key, value)?,
            "scale_min" => self.scale_min = parse(key, value)?,
            "scale_max" => self.scale_max = parse(key, value)?,
            "asymmetric" => self.asymmetric = parse_bool(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "weight_r" => self.weights.reconstruction = parse(key, value)?,
            "weight_g" => self.weights.guidance = parse(key, value)?,
            "weight_d" => self.weights.distribution = parse(key, value)?,
            "weight_i" => self.weights.invertibility = parse(key, value)?,
            "method" => self.method = value.parse()?,
            "channel_split" => self.channel_split = parse_bool(key, value)?,
            "latent" => self.latent = value.parse()?,
            "hflip" => self.hflip = parse_bool(key, value)?,
            "grad_clip" => self.grad_clip = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> Option<String> {
        let b = &self.backbone;
        let w = &self.weights;
        Some(match key {
            "num_blocks" => b.num_blocks.to_string(),
            "atrous_layers" => b.atrous_layers.to_string(),
            "feature_width" => b.feature_width.to_string(),
            "clamp" => b.clamp.to_string(),
            "use_atrous" => b.use_atrous.to_string(),
            "encoding_mode" => b.encoding_mode.to_string(),
            "leaky_slope" => b.leaky_slope.to_string(),
            "batch_size" => self.batch_size.to_string(),
            "patch_size" => self.patch_size.to_string(),
            "iterations" => self.iterations.to_string(),
            "base_lr" => self.base_lr.to_string(),
            "lr_halving_period" => self.lr_halving_period.to_string(),
            "scale_min" => self.scale_min.to_string(),
            "scale_max" => self.scale_max.to_string(),
            "asymmetric" => self.asymmetric.to_string(),
            "seed" => self.seed.to_string(),
            "weight_r" => w.reconstruction.to_string(),
            "weight_g" => w.guidance.to_string(),
            "weight_d" => w.distribution.to_string(),
            "weight_i" => w.invertibility.to_string(),
            "method" => self.method.to_string(),
            "channel_split" => self.channel_split.to_string(),
            "latent" => self.latent.name().to_string(),
            "hflip" => self.hflip.to_string(),
            "grad_clip" => self.grad_clip.to_string(),
            _ => return None,
        })
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }

    /// Every key, in [`KEYS`] order; floats use shortest round-trip formatting.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).expect("listed key"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        self.backbone.validate()?;
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.scale_min >= 1.0 && self.scale_min <= self.scale_max && self.scale_max.is_finite()) {
            return Err(Error::Config(format!(
                "scale range [{}, {}] must satisfy 1 <= min <= max",
                self.scale_min, self.scale_max
            )));
        }
        let worst = ScalePair::uniform(self.scale_max)?;
        let (lr, _) = output_size(self.patch_size, self.patch_size, worst, Direction::Down);
        if self.patch_size == 0 || lr < MIN_LR_SIDE {
            return Err(Error::Config(format!(
                "patch_size {} at scale {} leaves an LR side of {lr} (< {MIN_LR_SIDE})",
                self.patch_size, self.scale_max
            )));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config("base_lr must be positive".into()));
        }
        if self.lr_halving_period == 0 {
            return Err(Error::Config("lr_halving_period must be positive".into()));
        }
        let w = &self.weights;
        if [w.reconstruction, w.guidance, w.distribution, w.invertibility]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.grad_clip.is_finite() && self.grad_clip >= 0.0) {
            return Err(Error::Config("grad_clip must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn text_round_trip_is_exact() {
        let mut cfg = TrainConfig::default();
        cfg.base_lr = 1.0 / 3.0;
        cfg.backbone.encoding_mode = EncodingMode::HfOnly;
        cfg.method = ResampleMethod::Bicubic;
        cfg.seed = u64::MAX;
        assert_eq!(TrainConfig::from_text(&cfg.to_text()).unwrap(), cfg);
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = TrainConfig::from_text("# toy\n\nnum_blocks = 2 # small\n  method=bilinear\n").unwrap();
        assert_eq!(cfg.backbone.num_blocks, 2);
        assert_eq!(cfg.method, ResampleMethod::Bilinear);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = TrainConfig::from_text("num_block = 2").unwrap_err();
        assert!(err.to_string().contains("unknown key"), "{err}");
        assert!(TrainConfig::from_text("num_blocks 2").is_err());
        assert!(TrainConfig::from_text("use_atrous = maybe").is_err());
    }

    #[test]
    fn patch_must_leave_room_at_max_scale() {
        assert!(TrainConfig::from_text("patch_size = 24").is_err());
        assert!(TrainConfig::from_text("patch_size = 32").is_ok());
    }

    #[test]
    fn every_key_has_a_getter() {
        let cfg = TrainConfig::default();
        for key in KEYS {
            let v = cfg.get(key).unwrap();
            let mut copy = cfg.clone();
            copy.set(key, &v).unwrap();
            assert_eq!(copy, cfg, "{key}");
        }
    }
}
