//! Run configuration and its `key=value` file format.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::geometry::DEFAULT_RESAMPLE_POINTS;
use crate::losses::{LossWeights, SmoothnessNorm};
use crate::metrics::DEFAULT_ECE_BINS;

pub const DEFAULT_SEED: u64 = 42;

/// Training and evaluation settings. Defaults are the baseline configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    /// Expected mask side length in pixels; used to validate mask dimensions.
    pub image_size: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub min_lr: f64,
    pub weight_decay: f64,
    pub warmup_epochs: usize,
    pub total_epochs: usize,
    pub dropout_rate: f64,
    pub hidden_width: usize,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub loss_weights: LossWeights,
    pub smoothness_norm: SmoothnessNorm,
    /// Monte Carlo dropout passes per subject.
    pub mc_samples: usize,
    pub seg_threshold: f64,
    /// Variance above which a prediction is flagged for review.
    pub review_tau: f64,
    pub resample_points: usize,
    pub ece_bins: usize,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            image_size: 384,
            batch_size: 8,
            base_lr: 3e-4,
            min_lr: 1e-6,
            weight_decay: 1e-4,
            warmup_epochs: 5,
            total_epochs: 60,
            dropout_rate: 0.2,
            hidden_width: 16,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            loss_weights: LossWeights::default(),
            smoothness_norm: SmoothnessNorm::Sum,
            mc_samples: 20,
            seg_threshold: 0.5,
            review_tau: 0.002,
            resample_points: DEFAULT_RESAMPLE_POINTS,
            ece_bins: DEFAULT_ECE_BINS,
            seed: DEFAULT_SEED,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str, line: usize) -> Result<T> {
    value.parse().map_err(|_| Error::MalformedLine {
        line,
        reason: format!("bad value {value:?} for {key}"),
    })
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("image_size", self.image_size as f64),
            ("batch_size", self.batch_size as f64),
            ("base_lr", self.base_lr),
            ("min_lr", self.min_lr),
            ("total_epochs", self.total_epochs as f64),
            ("hidden_width", self.hidden_width as f64),
            ("adam_eps", self.adam_eps),
            ("mc_samples", self.mc_samples as f64),
            ("resample_points", self.resample_points as f64),
            ("ece_bins", self.ece_bins as f64),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.min_lr > self.base_lr {
            return Err(Error::invalid("min_lr must not exceed base_lr"));
        }
        if self.warmup_epochs > self.total_epochs {
            return Err(Error::invalid("warmup_epochs must not exceed total_epochs"));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::BadDropout(self.dropout_rate));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(Error::invalid("Adam betas must lie in [0, 1)"));
        }
        if !(self.weight_decay >= 0.0 && self.review_tau >= 0.0) {
            return Err(Error::invalid("weight_decay and review_tau must be >= 0"));
        }
        if !(self.seg_threshold > 0.0 && self.seg_threshold < 1.0) {
            return Err(Error::OutOfRange(format!(
                "seg_threshold {} not in (0, 1)",
                self.seg_threshold
            )));
        }
        if self.resample_points < 2 {
            return Err(Error::invalid("resample_points must be at least 2"));
        }
        self.loss_weights.validate()
    }

    /// Applies `key=value` lines on top of the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MalformedLine {
                line: line_no,
                reason: "expected key=value".into(),
            })?;
            cfg.set(key.trim(), value.trim(), line_no)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        match key {
            "image_size" => self.image_size = parse_value(key, value, line)?,
            "batch_size" => self.batch_size = parse_value(key, value, line)?,
            "base_lr" => self.base_lr = parse_value(key, value, line)?,
            "min_lr" => self.min_lr = parse_value(key, value, line)?,
            "weight_decay" => self.weight_decay = parse_value(key, value, line)?,
            "warmup_epochs" => self.warmup_epochs = parse_value(key, value, line)?,
            "total_epochs" => self.total_epochs = parse_value(key, value, line)?,
            "dropout_rate" => self.dropout_rate = parse_value(key, value, line)?,
            "hidden_width" => self.hidden_width = parse_value(key, value, line)?,
            "adam_beta1" => self.adam_beta1 = parse_value(key, value, line)?,
            "adam_beta2" => self.adam_beta2 = parse_value(key, value, line)?,
            "adam_eps" => self.adam_eps = parse_value(key, value, line)?,
            "lambda_seg" => self.loss_weights.lambda_seg = parse_value(key, value, line)?,
            "lambda_risk" => self.loss_weights.lambda_risk = parse_value(key, value, line)?,
            "lambda_smooth" => self.loss_weights.lambda_smooth = parse_value(key, value, line)?,
            "lambda_phys" => self.loss_weights.lambda_phys = parse_value(key, value, line)?,
            "lambda_div" => self.loss_weights.lambda_div = parse_value(key, value, line)?,
            "lambda_bc" => self.loss_weights.lambda_bc = parse_value(key, value, line)?,
            "lambda_wss" => self.loss_weights.lambda_wss = parse_value(key, value, line)?,
            "smoothness_norm" => {
                self.smoothness_norm = match value {
                    "sum" => SmoothnessNorm::Sum,
                    "mean" => SmoothnessNorm::Mean,
                    _ => {
                        return Err(Error::MalformedLine {
                            line,
                            reason: format!("smoothness_norm must be sum or mean, got {value:?}"),
                        })
                    }
                }
            }
            "mc_samples" => self.mc_samples = parse_value(key, value, line)?,
            "seg_threshold" => self.seg_threshold = parse_value(key, value, line)?,
            "review_tau" => self.review_tau = parse_value(key, value, line)?,
            "resample_points" => self.resample_points = parse_value(key, value, line)?,
            "ece_bins" => self.ece_bins = parse_value(key, value, line)?,
            "seed" => self.seed = parse_value(key, value, line)?,
            _ => {
                return Err(Error::MalformedLine {
                    line,
                    reason: format!("unknown key {key:?}"),
                })
            }
        }
        Ok(())
    }

    /// Full configuration in the same format [`RunConfig::parse`] reads.
    pub fn to_text(&self) -> String {
        let w = &self.loss_weights;
        let mut s = String::new();
        let norm = match self.smoothness_norm {
            SmoothnessNorm::Sum => "sum",
            SmoothnessNorm::Mean => "mean",
        };
        let entries = [
            ("image_size", self.image_size.to_string()),
            ("batch_size", self.batch_size.to_string()),
            ("base_lr", self.base_lr.to_string()),
            ("min_lr", self.min_lr.to_string()),
            ("weight_decay", self.weight_decay.to_string()),
            ("warmup_epochs", self.warmup_epochs.to_string()),
            ("total_epochs", self.total_epochs.to_string()),
            ("dropout_rate", self.dropout_rate.to_string()),
            ("hidden_width", self.hidden_width.to_string()),
            ("adam_beta1", self.adam_beta1.to_string()),
            ("adam_beta2", self.adam_beta2.to_string()),
            ("adam_eps", self.adam_eps.to_string()),
            ("lambda_seg", w.lambda_seg.to_string()),
            ("lambda_risk", w.lambda_risk.to_string()),
            ("lambda_smooth", w.lambda_smooth.to_string()),
            ("lambda_phys", w.lambda_phys.to_string()),
            ("lambda_div", w.lambda_div.to_string()),
            ("lambda_bc", w.lambda_bc.to_string()),
            ("lambda_wss", w.lambda_wss.to_string()),
            ("smoothness_norm", norm.to_string()),
            ("mc_samples", self.mc_samples.to_string()),
            ("seg_threshold", self.seg_threshold.to_string()),
            ("review_tau", self.review_tau.to_string()),
            ("resample_points", self.resample_points.to_string()),
            ("ece_bins", self.ece_bins.to_string()),
            ("seed", self.seed.to_string()),
        ];
        for (k, v) in entries {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }
}
