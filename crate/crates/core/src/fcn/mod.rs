//! The configurable patch-classifier FCN: architecture planning from a
//! config, label-map generation, patch sampling, training with early
//! stopping, dense full-image inference, NMS, and the checkpoint codec.
//!
//! The network applies 3x3 valid convolutions to an odd-sized input patch
//! until a single value remains, so a patch of size `s` yields `(s-1)/2`
//! spatial reductions. Optional stride-1 3x3 max-pooling replaces every
//! second reduction, optional residual skips wrap internal conv pairs, and
//! training targets come from hard or soft circular labels around each pore.

mod checkpoint;
mod infer;
mod label;
mod model;
mod sample;
mod train;

pub use checkpoint::{decode_checkpoint, encode_checkpoint, Checkpoint, CHECKPOINT_VERSION};
pub use infer::{detect, infer_map, nms, IntensityMap, RidgeFilterParams};
pub use label::{make_label_map, LabelMap};
pub use model::{plan_architecture, Architecture, Model, OpSpec};
pub use sample::{sample_batches, BatchStream};
pub use train::{train, EpochStats, TrainOutcome};

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::filters::FilterError;
use crate::nn::NnError;

#[derive(Debug, Error, PartialEq)]
pub enum FcnError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config text line {line}: {reason}")]
    ConfigText { line: usize, reason: String },
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error("training requires at least one training and one validation image")]
    MissingImages,
    #[error("training set has no positive labels")]
    NoPositiveLabels,
    #[error("image {width}x{height} smaller than the {patch}x{patch} patch")]
    ImageSmallerThanPatch { width: usize, height: usize, patch: usize },
    #[error("non-finite loss at epoch {epoch}: training diverged")]
    Diverged { epoch: usize },
    #[error("bad checkpoint magic")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated or trailing bytes")]
    Truncated,
    #[error("checkpoint layer {index}: {reason}")]
    LayerShape { index: usize, reason: String },
}

/// Training loss selection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Bce,
    Focal { gamma: f64, alpha: f64 },
}

/// The full design space of the baseline network plus its training and
/// post-processing knobs. Serializes to `key = value` lines (see
/// [`FcnConfig::to_config_text`]).
#[derive(Debug, Clone, PartialEq)]
pub struct FcnConfig {
    /// Input patch side, odd, at least 9. The grid explored here is
    /// 13/15/17/19.
    pub patch_size: usize,
    /// Label radius `r` in pixels.
    pub pore_radius: u32,
    /// Replace every second reduction with a stride-1 3x3 max-pool.
    pub use_pooling: bool,
    /// Wrap internal same-width conv pairs with identity skips.
    pub use_residual: bool,
    /// Soft labels `(r-d)/r` instead of hard 0/1 labels.
    pub soft_labels: bool,
    pub loss: LossKind,
    /// Hidden conv widths; trainable layer `i` uses
    /// `channels[min(i, len-1)]`, so a single entry means constant width.
    pub channels: Vec<usize>,
    pub lr: f64,
    pub batch: usize,
    /// Early stopping: stop after this many epochs without validation
    /// improvement.
    pub patience: usize,
    /// Hard cap on the number of epochs.
    pub max_epochs: usize,
    /// Negatives sampled per positive each epoch.
    pub neg_pos_ratio: f64,
    pub seed: u64,
    /// Minimum separation between detections, pixels.
    pub nms_radius: f64,
    /// Intensity-map threshold feeding NMS.
    pub prob_threshold: f64,
    /// After training, grid-search the threshold on validation F-score over
    /// 0.30..=0.90 (step 0.05).
    pub tune_threshold: bool,
}

impl Default for FcnConfig {
    /// The suggested configuration: 17x17 patches, pore radius 5, no
    /// pooling, no residuals, soft labels.
    fn default() -> Self {
        Self {
            patch_size: 17,
            pore_radius: 5,
            use_pooling: false,
            use_residual: false,
            soft_labels: true,
            loss: LossKind::Bce,
            channels: vec![16],
            lr: 0.001,
            batch: 128,
            patience: 10,
            max_epochs: 100,
            neg_pos_ratio: 1.0,
            seed: 1,
            nms_radius: 5.0,
            prob_threshold: 0.5,
            tune_threshold: false,
        }
    }
}

impl FcnConfig {
    pub fn validate(&self) -> Result<(), FcnError> {
        let err = |m: &str| Err(FcnError::Config(m.to_string()));
        if self.patch_size < 9 || self.patch_size % 2 == 0 {
            return err("patch_size must be odd and >= 9");
        }
        if self.pore_radius < 1 || 2 * self.pore_radius as usize + 1 > self.patch_size {
            return err("pore_radius must satisfy 1 <= r and 2r+1 <= patch_size");
        }
        if self.channels.is_empty() || self.channels.iter().any(|&c| c == 0) {
            return err("channels must be a non-empty list of positive widths");
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return err("lr must be non-negative and finite");
        }
        if self.batch == 0 {
            return err("batch must be >= 1");
        }
        if self.patience == 0 {
            return err("patience must be >= 1");
        }
        if self.max_epochs == 0 {
            return err("max_epochs must be >= 1");
        }
        if !(self.neg_pos_ratio >= 0.0 && self.neg_pos_ratio.is_finite()) {
            return err("neg_pos_ratio must be >= 0");
        }
        if !(self.nms_radius >= 1.0) {
            return err("nms_radius must be >= 1");
        }
        if !(self.prob_threshold > 0.0 && self.prob_threshold < 1.0) {
            return err("prob_threshold must lie in (0, 1)");
        }
        if let LossKind::Focal { gamma, alpha } = self.loss {
            if !(gamma >= 0.0) {
                return err("focal gamma must be >= 0");
            }
            if !(0.0..=1.0).contains(&alpha) {
                return err("focal alpha must lie in [0, 1]");
            }
        }
        Ok(())
    }

    /// Hidden width of trainable conv `i` (the final layer always has one
    /// output channel and is not looked up here).
    pub fn hidden_width(&self, i: usize) -> usize {
        self.channels[i.min(self.channels.len() - 1)]
    }

    /// `key = value` serialization, one line per field, LF line endings.
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("patch_size", self.patch_size.to_string());
        kv("pore_radius", self.pore_radius.to_string());
        kv("use_pooling", self.use_pooling.to_string());
        kv("use_residual", self.use_residual.to_string());
        kv("soft_labels", self.soft_labels.to_string());
        let loss = match self.loss {
            LossKind::Bce => "bce".to_string(),
            LossKind::Focal { gamma, alpha } => alloc::format!("focal:{gamma}:{alpha}"),
        };
        kv("loss", loss);
        let channels: Vec<String> = self.channels.iter().map(|c| c.to_string()).collect();
        kv("channels", channels.join(","));
        kv("lr", self.lr.to_string());
        kv("batch", self.batch.to_string());
        kv("patience", self.patience.to_string());
        kv("max_epochs", self.max_epochs.to_string());
        kv("neg_pos_ratio", self.neg_pos_ratio.to_string());
        kv("seed", self.seed.to_string());
        kv("nms_radius", self.nms_radius.to_string());
        kv("prob_threshold", self.prob_threshold.to_string());
        kv("tune_threshold", self.tune_threshold.to_string());
        s
    }

    /// Applies one `key = value` pair; `Ok(false)` means the key is not an
    /// FCN key (callers layering their own keys use this to fall through).
    pub fn apply_key_value(&mut self, key: &str, value: &str) -> Result<bool, String> {
        fn parse<T: core::str::FromStr>(key: &str, value: &str) -> Result<T, String> {
            value.parse().map_err(|_| alloc::format!("invalid value {value:?} for {key}"))
        }
        match key {
            "patch_size" => self.patch_size = parse(key, value)?,
            "pore_radius" => self.pore_radius = parse(key, value)?,
            "use_pooling" => self.use_pooling = parse(key, value)?,
            "use_residual" => self.use_residual = parse(key, value)?,
            "soft_labels" => self.soft_labels = parse(key, value)?,
            "loss" => {
                self.loss = if value == "bce" {
                    LossKind::Bce
                } else if let Some(rest) = value.strip_prefix("focal:") {
                    let mut it = rest.splitn(2, ':');
                    let gamma = parse("focal gamma", it.next().unwrap_or(""))?;
                    let alpha = parse("focal alpha", it.next().unwrap_or(""))?;
                    LossKind::Focal { gamma, alpha }
                } else {
                    return Err(alloc::format!(
                        "loss must be `bce` or `focal:<gamma>:<alpha>`, got {value:?}"
                    ));
                };
            }
            "channels" => {
                let parsed: Result<Vec<usize>, _> =
                    value.split(',').map(|v| parse("channels", v.trim())).collect();
                self.channels = parsed?;
            }
            "lr" => self.lr = parse(key, value)?,
            "batch" => self.batch = parse(key, value)?,
            "patience" => self.patience = parse(key, value)?,
            "max_epochs" => self.max_epochs = parse(key, value)?,
            "neg_pos_ratio" => self.neg_pos_ratio = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "nms_radius" => self.nms_radius = parse(key, value)?,
            "prob_threshold" => self.prob_threshold = parse(key, value)?,
            "tune_threshold" => self.tune_threshold = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Parses `key = value` lines (`#` comments and blank lines ignored);
    /// unknown keys are rejected.
    pub fn from_config_text(text: &str) -> Result<Self, FcnError> {
        let mut cfg = Self::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(FcnError::ConfigText {
                    line: i + 1,
                    reason: alloc::format!("expected `key = value`, got {line:?}"),
                });
            };
            let (key, value) = (key.trim(), value.trim());
            match cfg.apply_key_value(key, value) {
                Ok(true) => {}
                Ok(false) => {
                    return Err(FcnError::ConfigText {
                        line: i + 1,
                        reason: alloc::format!("unknown key {key:?}"),
                    })
                }
                Err(reason) => return Err(FcnError::ConfigText { line: i + 1, reason }),
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
